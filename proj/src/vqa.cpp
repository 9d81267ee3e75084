#include "visnli/vqa.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "visnli/errors.hpp"
#include "visnli/hashing.hpp"
#include "visnli/rng.hpp"
#include "visnli/text.hpp"
#include "visnli/vqa_templates.hpp"

namespace visnli {
namespace {

constexpr std::string_view kStatementsSlot = "{{statements}}";
constexpr std::string_view kAnswersSlot = "{{answers}}";

std::string strip_trailing_newlines(std::string_view text) {
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.remove_suffix(1);
  return std::string(text);
}

std::vector<VqaTemplate> make_builtin_templates() {
  return {
      {"three_way_v1",
       Task::ThreeWay,
       strip_trailing_newlines(generated::kThreeWayV1),
       {{"accurate", Label::Entailment}, {"contradicting", Label::Contradiction}, {"neither", Label::Neutral}}},
      {"two_way_v1",
       Task::TwoWay,
       strip_trailing_newlines(generated::kTwoWayV1),
       {{"entailment", Label::Entailment}, {"non-entailment", Label::NonEntailment}}},
  };
}

const std::vector<VqaTemplate>& builtin_templates() {
  static const std::vector<VqaTemplate> templates = make_builtin_templates();
  return templates;
}

void replace_once(std::string& text, std::string_view slot, const std::string& value) {
  const auto pos = text.find(slot);
  if (pos == std::string::npos) throw DomainError("template lacks " + std::string(slot));
  text.replace(pos, slot.size(), value);
}

// The builtin template whose fixed header starts the prompt.
const VqaTemplate* template_for_prompt(std::string_view prompt) {
  for (const auto& t : builtin_templates()) {
    const auto header = std::string_view(t.text).substr(0, t.text.find(kStatementsSlot));
    if (prompt.substr(0, header.size()) == header) return &t;
  }
  return nullptr;
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::string line;
  std::istringstream in{std::string(text)};
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

std::string VqaTemplate::options() const {
  std::string out;
  for (const auto& [word, label] : vocabulary) {
    if (!out.empty()) out += '/';
    out += word;
  }
  return out;
}

std::optional<Label> VqaTemplate::label_for(std::string_view word) const {
  const std::string w = to_lower(trim(word));
  for (const auto& [v, label] : vocabulary) {
    if (v == w) return label;
  }
  return std::nullopt;
}

std::string_view VqaTemplate::word_for(Label label) const {
  for (const auto& [v, l] : vocabulary) {
    if (l == label) return v;
  }
  throw DomainError("template " + id + " has no word for " + std::string(label_name(label)));
}

const VqaTemplate& builtin_template(std::string_view id) {
  for (const auto& t : builtin_templates()) {
    if (t.id == id) return t;
  }
  throw ConfigError("unknown VQA template '" + std::string(id) + "'");
}

const VqaTemplate& default_template(Task task) {
  return builtin_template(task == Task::ThreeWay ? "three_way_v1" : "two_way_v1");
}

std::vector<int> statement_order(std::size_t n, std::uint64_t seed) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  SeededRng rng(seed);
  rng.shuffle(order.begin(), order.end());
  return order;
}

VqaPrompt build_prompt(const NLIInstance& instance, const VqaTemplate& tmpl, const std::vector<int>& order) {
  if (!instance.ranked()) throw DomainError("VQA prompt needs a ranked instance: " + instance.id);
  if (instance.task != tmpl.task) throw DomainError("template " + tmpl.id + " does not match the instance task");
  const std::size_t n = instance.hypotheses.size();
  if (n != task_labels(tmpl.task).size()) throw DomainError("wrong number of statements for " + tmpl.id);
  std::vector<int> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < n; ++i) {
    if (sorted.size() != n || sorted[i] != static_cast<int>(i)) {
      throw DomainError("statement order is not a permutation of the slots");
    }
  }

  VqaPrompt prompt;
  prompt.template_id = tmpl.id;
  prompt.order = order;
  std::string statements;
  std::string answers;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& text = instance.hypotheses[static_cast<std::size_t>(order[i])].text;
    prompt.statements.push_back(text);
    if (i > 0) {
      statements += "\n\n";
      answers += "\n\n";
    }
    statements += "Statement " + std::to_string(i + 1) + ": [" + text + "]";
    answers += "Answer " + std::to_string(i + 1) + " (" + tmpl.options() + "): <...>";
  }
  prompt.rendered_text = tmpl.text;
  replace_once(prompt.rendered_text, kStatementsSlot, statements);
  replace_once(prompt.rendered_text, kAnswersSlot, answers);
  return prompt;
}

VqaPrompt build_prompt(const NLIInstance& instance, const VqaTemplate& tmpl, std::uint64_t shuffle_seed) {
  return build_prompt(instance, tmpl, statement_order(instance.hypotheses.size(), shuffle_seed));
}

ParseResult parse_response(std::string_view raw_text, std::size_t n_statements, const VqaTemplate& tmpl) {
  ParseResult result;
  std::size_t pos = 0;
  while (result.labels.size() < n_statements) {
    const auto open = raw_text.find('<', pos);
    if (open == std::string_view::npos) break;
    const auto close = raw_text.find('>', open + 1);
    if (close == std::string_view::npos) break;
    const auto inner = raw_text.substr(open + 1, close - open - 1);
    if (inner.find('<') != std::string_view::npos) {
      pos = open + 1 + inner.find('<');
      continue;
    }
    const auto label = tmpl.label_for(inner);
    if (!label) {
      result.labels.clear();
      result.error = "answer '" + std::string(inner) + "' is not one of " + tmpl.options();
      return result;
    }
    result.labels.push_back(*label);
    pos = close + 1;
  }
  if (result.labels.size() < n_statements) {
    result.error = "expected " + std::to_string(n_statements) + " bracketed answers, found " +
                   std::to_string(result.labels.size());
    result.labels.clear();
  }
  return result;
}

std::vector<std::string> prompt_statements(std::string_view prompt) {
  std::vector<std::string> out;
  for (const auto& line : split_lines(prompt)) {
    if (line.rfind("Statement ", 0) != 0) continue;
    const auto open = line.find(": [");
    if (open == std::string::npos || line.empty() || line.back() != ']') continue;
    out.push_back(line.substr(open + 3, line.size() - open - 4));
  }
  return out;
}

std::string format_answers(const std::vector<std::string>& words, const VqaTemplate& tmpl) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) out += "\n";
    out += "Answer " + std::to_string(i + 1) + " (" + tmpl.options() + "): <" + words[i] + ">";
  }
  return out;
}

GoldEchoVqaBackend::GoldEchoVqaBackend(std::string id, std::map<std::string, Label> gold_by_text)
    : id_(std::move(id)), gold_(std::move(gold_by_text)) {}

GoldEchoVqaBackend::GoldEchoVqaBackend(const std::vector<NLIInstance>& instances, std::string id)
    : id_(std::move(id)) {
  for (const auto& inst : instances) {
    for (const auto& h : inst.hypotheses) gold_.emplace(h.text, h.gold);
  }
}

std::string GoldEchoVqaBackend::chat(std::span<const std::uint8_t>, std::string_view prompt) {
  const VqaTemplate* tmpl = template_for_prompt(prompt);
  if (!tmpl) return "I cannot answer that.";
  std::vector<std::string> words;
  for (const auto& statement : prompt_statements(prompt)) {
    const auto it = gold_.find(statement);
    if (it == gold_.end()) return "Unknown statement.";
    words.emplace_back(tmpl->word_for(it->second));
  }
  return format_answers(words, *tmpl);
}

std::string ConstantVqaBackend::chat(std::span<const std::uint8_t>, std::string_view prompt) {
  const auto n = prompt_statements(prompt).size();
  const VqaTemplate* tmpl = template_for_prompt(prompt);
  if (!tmpl) return "I cannot answer that.";
  return format_answers(std::vector<std::string>(n, word_), *tmpl);
}

std::string UniformRandomVqaBackend::chat(std::span<const std::uint8_t> image, std::string_view prompt) {
  const VqaTemplate* tmpl = template_for_prompt(prompt);
  if (!tmpl) return "I cannot answer that.";
  const auto statements = prompt_statements(prompt);
  const std::string context = sha256_fields({sha256_hex(image), prompt});
  std::vector<std::string> words;
  for (std::size_t i = 0; i < statements.size(); ++i) {
    SeededRng rng(derive_seed(seed_, context + "#" + std::to_string(i)));
    words.push_back(tmpl->vocabulary[rng.uniform_index(tmpl->vocabulary.size())].first);
  }
  return format_answers(words, *tmpl);
}

Transcript::Transcript(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::app);
  if (!out_) throw ConfigError("cannot open transcript " + path.string());
}

void Transcript::log(const nlohmann::json& entry) {
  std::lock_guard lock(mu_);
  out_ << entry.dump() << '\n';
  out_.flush();
}

PredictionRecord vqa_infer(std::span<const std::uint8_t> image, int image_index, const NLIInstance& instance,
                           VqaBackend& backend, const VqaOptions& options) {
  const VqaTemplate& tmpl = options.tmpl ? *options.tmpl : default_template(instance.task);
  validate(instance);
  const std::size_t n = instance.hypotheses.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (options.shuffle) order = statement_order(n, derive_seed(options.shuffle_seed, instance.id));
  const VqaPrompt prompt = build_prompt(instance, tmpl, order);

  PredictionRecord record;
  record.instance_id = instance.id;
  record.image_index = image_index;
  record.method = Method::VQA;
  record.task = instance.task;
  record.backend_id = backend.id();
  record.template_id = tmpl.id;
  record.statement_order = order;
  record.timestamp = utc_timestamp();
  for (const auto& h : instance.hypotheses) record.per_hypothesis.push_back({h.gold, std::nullopt, std::nullopt});

  const std::string image_hash = sha256_hex(image);
  int calls = 0;
  std::string last_error;
  for (int query = 0; query <= std::max(0, options.max_parse_retries); ++query) {
    std::string response;
    try {
      response = with_retries(options.retry, [&] {
        if (options.limiter) options.limiter->acquire();
        ++calls;
        return backend.chat(image, prompt.rendered_text);
      });
    } catch (const std::exception& e) {
      if (options.transcript) {
        options.transcript->log({{"instance_id", instance.id}, {"image_index", image_index},
                                 {"backend_id", backend.id()}, {"template_id", tmpl.id},
                                 {"image_sha256", image_hash}, {"prompt", prompt.rendered_text},
                                 {"error", e.what()}, {"timestamp", utc_timestamp()}});
      }
      record.status = RecordStatus::Error;
      record.error = e.what();
      record.attempts = calls;
      return record;
    }
    const ParseResult parsed = parse_response(response, n, tmpl);
    if (options.transcript) {
      options.transcript->log({{"instance_id", instance.id}, {"image_index", image_index},
                               {"backend_id", backend.id()}, {"template_id", tmpl.id},
                               {"image_sha256", image_hash}, {"prompt", prompt.rendered_text},
                               {"response", response}, {"parsed", parsed.ok()},
                               {"timestamp", utc_timestamp()}});
    }
    if (parsed.ok()) {
      for (std::size_t i = 0; i < n; ++i) {
        record.per_hypothesis[static_cast<std::size_t>(order[i])].predicted = parsed.labels[i];
      }
      record.attempts = calls;
      return record;
    }
    last_error = parsed.error;
  }
  record.status = RecordStatus::ParseFailure;
  record.error = last_error;
  record.attempts = calls;
  return record;
}

}  // namespace visnli
