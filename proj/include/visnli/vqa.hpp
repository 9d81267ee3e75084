#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "visnli/concurrency.hpp"
#include "visnli/instance.hpp"
#include "visnli/prediction.hpp"

namespace visnli {

// A prompt template plus the natural-language answer words it asks for.
struct VqaTemplate {
  std::string id;
  Task task = Task::ThreeWay;
  std::string text;  // contains {{statements}} and {{answers}}
  std::vector<std::pair<std::string, Label>> vocabulary;  // in the order the options are listed

  std::string options() const;  // "accurate/contradicting/neither"
  std::optional<Label> label_for(std::string_view word) const;
  std::string_view word_for(Label label) const;
};

// Templates compiled from templates/vqa/*.txt.
const VqaTemplate& builtin_template(std::string_view id);
const VqaTemplate& default_template(Task task);

struct VqaPrompt {
  std::string template_id;
  std::string rendered_text;
  std::vector<std::string> statements;  // in presentation order
  std::vector<int> order;               // order[i] = slot index shown as Statement i+1
};

// Seeded permutation of slot indices used to present the statements.
std::vector<int> statement_order(std::size_t n, std::uint64_t seed);

VqaPrompt build_prompt(const NLIInstance& instance, const VqaTemplate& tmpl, const std::vector<int>& order);
VqaPrompt build_prompt(const NLIInstance& instance, const VqaTemplate& tmpl, std::uint64_t shuffle_seed);

struct ParseResult {
  std::vector<Label> labels;  // presentation order; empty on failure
  std::string error;

  bool ok() const { return error.empty(); }
};

// Reads the first n angle-bracketed tokens, case-insensitively, and maps
// them through the template vocabulary.
ParseResult parse_response(std::string_view raw_text, std::size_t n_statements, const VqaTemplate& tmpl);

// chat(image, prompt) -> response text.
class VqaBackend {
 public:
  virtual ~VqaBackend() = default;

  virtual std::string id() const = 0;
  virtual std::string chat(std::span<const std::uint8_t> image, std::string_view prompt) = 0;
  virtual bool is_network() const { return false; }
};

// Statements found in a rendered prompt, in presentation order.
std::vector<std::string> prompt_statements(std::string_view prompt);

// Answers every statement with its gold label, looked up by hypothesis text.
class GoldEchoVqaBackend : public VqaBackend {
 public:
  GoldEchoVqaBackend(std::string id, std::map<std::string, Label> gold_by_text);
  explicit GoldEchoVqaBackend(const std::vector<NLIInstance>& instances, std::string id = "mock-vqa-gold");

  std::string id() const override { return id_; }
  std::string chat(std::span<const std::uint8_t> image, std::string_view prompt) override;

 private:
  std::string id_;
  std::map<std::string, Label> gold_;
};

// Answers the same word for every statement.
class ConstantVqaBackend : public VqaBackend {
 public:
  ConstantVqaBackend(std::string id, std::string word) : id_(std::move(id)), word_(std::move(word)) {}

  std::string id() const override { return id_; }
  std::string chat(std::span<const std::uint8_t> image, std::string_view prompt) override;

 private:
  std::string id_;
  std::string word_;
};

// Picks each answer uniformly from the prompt's vocabulary; deterministic
// per (seed, image, prompt).
class UniformRandomVqaBackend : public VqaBackend {
 public:
  UniformRandomVqaBackend(std::string id, std::uint64_t seed) : id_(std::move(id)), seed_(seed) {}

  std::string id() const override { return id_; }
  std::string chat(std::span<const std::uint8_t> image, std::string_view prompt) override;

 private:
  std::string id_;
  std::uint64_t seed_;
};

// Formats answers the way the template asks for them.
std::string format_answers(const std::vector<std::string>& words, const VqaTemplate& tmpl);

// Append-only JSONL log of every backend exchange.
class Transcript {
 public:
  explicit Transcript(const std::filesystem::path& path);

  void log(const nlohmann::json& entry);

 private:
  std::mutex mu_;
  std::ofstream out_;
};

struct VqaOptions {
  const VqaTemplate* tmpl = nullptr;  // defaults to the task's builtin template
  std::uint64_t shuffle_seed = 0;     // run seed; combined with instance id
  bool shuffle = true;
  int max_parse_retries = 1;
  RetryPolicy retry;
  RateLimiter* limiter = nullptr;
  Transcript* transcript = nullptr;
};

// One backend call per (image, instance) with all hypotheses; labels are
// mapped back to dataset slots through the recorded statement order.
PredictionRecord vqa_infer(std::span<const std::uint8_t> image, int image_index, const NLIInstance& instance,
                           VqaBackend& backend, const VqaOptions& options = {});

}  // namespace visnli
