#include "visnli/prediction.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>

#include <nlohmann/json.hpp>

#include "visnli/errors.hpp"
#include "visnli/text.hpp"

namespace visnli {

std::string_view method_name(Method method) {
  switch (method) {
    case Method::CSS: return "CSS";
    case Method::VQA: return "VQA";
    case Method::BLEU: return "BLEU";
    case Method::NSP: return "NSP";
    case Method::EmbCos: return "EmbCos";
    case Method::ExternalNLI: return "ExternalNLI";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  std::string key = to_lower(text);
  key.erase(std::remove(key.begin(), key.end(), '_'), key.end());
  for (Method m : {Method::CSS, Method::VQA, Method::BLEU, Method::NSP, Method::EmbCos, Method::ExternalNLI}) {
    if (to_lower(method_name(m)) == key) return m;
  }
  throw DomainError("unknown method '" + std::string(text) + "'");
}

bool is_ranking_method(Method method) {
  return method != Method::VQA && method != Method::ExternalNLI;
}

bool is_image_method(Method method) { return method == Method::CSS || method == Method::VQA; }

std::string_view status_name(RecordStatus status) {
  switch (status) {
    case RecordStatus::Ok: return "ok";
    case RecordStatus::ParseFailure: return "parse_failure";
    case RecordStatus::Error: return "error";
  }
  return "error";
}

std::optional<Label> PredictionRecord::predicted_for(Label slot) const {
  for (const auto& p : per_hypothesis) {
    if (p.slot == slot) return p.predicted;
  }
  return std::nullopt;
}

void validate_record(const PredictionRecord& record, int image_count) {
  const std::string where = "record " + record.instance_id + "/" + std::string(method_name(record.method)) + ": ";
  if (record.image_index) {
    if (*record.image_index < 0 || (image_count >= 0 && *record.image_index >= image_count)) {
      throw DomainError(where + "image_index out of range");
    }
  }
  if (!record.ok() || !is_ranking_method(record.method)) return;
  std::vector<double> scores;
  std::vector<Label> predicted;
  for (const auto& p : record.per_hypothesis) {
    if (!p.raw_score || !p.predicted) throw DomainError(where + "ranking record without score or label");
    scores.push_back(*p.raw_score);
    predicted.push_back(*p.predicted);
  }
  if (labels_from_ranking(scores, record.task) != predicted) {
    throw DomainError(where + "labels do not follow score order");
  }
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void to_json(nlohmann::json& j, const PredictionRecord& record) {
  nlohmann::json slots = nlohmann::json::array();
  for (const auto& p : record.per_hypothesis) {
    nlohmann::json js = {{"slot", label_name(p.slot)}};
    js["predicted"] = p.predicted ? nlohmann::json(label_name(*p.predicted)) : nlohmann::json(nullptr);
    js["raw_score"] = p.raw_score ? nlohmann::json(*p.raw_score) : nlohmann::json(nullptr);
    slots.push_back(std::move(js));
  }
  j = {{"instance_id", record.instance_id},
       {"image_index", record.image_index ? nlohmann::json(*record.image_index) : nlohmann::json(nullptr)},
       {"method", method_name(record.method)},
       {"task", task_name(record.task)},
       {"per_hypothesis", std::move(slots)},
       {"timestamp", record.timestamp},
       {"backend_id", record.backend_id},
       {"status", status_name(record.status)},
       {"attempts", record.attempts}};
  if (!record.error.empty()) j["error"] = record.error;
  if (!record.template_id.empty()) j["template_id"] = record.template_id;
  if (!record.statement_order.empty()) j["statement_order"] = record.statement_order;
}

void from_json(const nlohmann::json& j, PredictionRecord& record) {
  record.instance_id = j.at("instance_id").get<std::string>();
  const auto& idx = j.at("image_index");
  record.image_index = idx.is_null() ? std::nullopt : std::optional<int>(idx.get<int>());
  record.method = parse_method(j.at("method").get<std::string>());
  record.task = parse_task(j.at("task").get<std::string>());
  record.per_hypothesis.clear();
  for (const auto& js : j.at("per_hypothesis")) {
    SlotPrediction p;
    p.slot = parse_label(js.at("slot").get<std::string>());
    if (!js.at("predicted").is_null()) p.predicted = parse_label(js.at("predicted").get<std::string>());
    if (!js.at("raw_score").is_null()) p.raw_score = js.at("raw_score").get<double>();
    record.per_hypothesis.push_back(p);
  }
  record.timestamp = j.value("timestamp", "");
  record.backend_id = j.value("backend_id", "");
  const std::string status = j.value("status", "ok");
  record.status = status == "ok"              ? RecordStatus::Ok
                  : status == "parse_failure" ? RecordStatus::ParseFailure
                                              : RecordStatus::Error;
  record.attempts = j.value("attempts", 1);
  record.error = j.value("error", "");
  record.template_id = j.value("template_id", "");
  record.statement_order = j.value("statement_order", std::vector<int>{});
}

}  // namespace visnli
