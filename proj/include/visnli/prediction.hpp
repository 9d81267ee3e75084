#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "visnli/label.hpp"

namespace visnli {

enum class Method : std::uint8_t { CSS, VQA, BLEU, NSP, EmbCos, ExternalNLI };

std::string_view method_name(Method method);
Method parse_method(std::string_view text);
bool is_ranking_method(Method method);
bool is_image_method(Method method);

enum class RecordStatus : std::uint8_t {
  Ok,
  ParseFailure,  // VQA answer could not be parsed after the re-query budget
  Error,         // backend or scorer failure
};

std::string_view status_name(RecordStatus status);

struct SlotPrediction {
  Label slot = Label::Entailment;  // gold label of the hypothesis this row is about
  std::optional<Label> predicted;
  std::optional<double> raw_score;

  bool operator==(const SlotPrediction&) const = default;
};

struct PredictionRecord {
  std::string instance_id;
  std::optional<int> image_index;  // absent for text-only baselines
  Method method = Method::CSS;
  Task task = Task::ThreeWay;
  std::vector<SlotPrediction> per_hypothesis;
  std::string timestamp;
  std::string backend_id;
  RecordStatus status = RecordStatus::Ok;
  std::string error;
  std::string template_id;           // VQA only
  std::vector<int> statement_order;  // VQA only: slot shown as Statement i+1
  int attempts = 1;

  bool ok() const { return status == RecordStatus::Ok; }
  std::optional<Label> predicted_for(Label slot) const;

  bool operator==(const PredictionRecord&) const = default;
};

// Ranking records must carry a score per slot and a label permutation
// consistent with score order. Throws DomainError otherwise.
void validate_record(const PredictionRecord& record, int image_count = -1);

std::string utc_timestamp();

void to_json(nlohmann::json& j, const PredictionRecord& record);
void from_json(const nlohmann::json& j, PredictionRecord& record);

}  // namespace visnli
