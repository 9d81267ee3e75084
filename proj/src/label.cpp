#include "visnli/label.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "visnli/errors.hpp"
#include "visnli/text.hpp"

namespace visnli {
namespace {

constexpr std::array<Label, 3> kThreeWay = {Label::Entailment, Label::Neutral, Label::Contradiction};
constexpr std::array<Label, 2> kTwoWay = {Label::Entailment, Label::NonEntailment};

}  // namespace

std::string_view label_name(Label label) {
  switch (label) {
    case Label::Entailment: return "entailment";
    case Label::Neutral: return "neutral";
    case Label::Contradiction: return "contradiction";
    case Label::NonEntailment: return "non-entailment";
  }
  return "?";
}

std::string_view label_code(Label label) {
  switch (label) {
    case Label::Entailment: return "E";
    case Label::Neutral: return "N";
    case Label::Contradiction: return "C";
    case Label::NonEntailment: return "NE";
  }
  return "?";
}

std::string_view task_name(Task task) {
  return task == Task::ThreeWay ? "three_way" : "two_way";
}

std::optional<Label> try_parse_label(std::string_view text) {
  const std::string t = to_lower(trim(text));
  if (t == "entailment" || t == "e") return Label::Entailment;
  if (t == "neutral" || t == "n") return Label::Neutral;
  if (t == "contradiction" || t == "c") return Label::Contradiction;
  if (t == "non-entailment" || t == "non_entailment" || t == "not_entailment" || t == "ne") {
    return Label::NonEntailment;
  }
  return std::nullopt;
}

Label parse_label(std::string_view text) {
  if (auto label = try_parse_label(text)) return *label;
  throw DomainError("unknown label '" + std::string(text) + "'");
}

Task parse_task(std::string_view text) {
  if (text == "three_way") return Task::ThreeWay;
  if (text == "two_way") return Task::TwoWay;
  throw DomainError("unknown task '" + std::string(text) + "'");
}

std::span<const Label> task_labels(Task task) {
  if (task == Task::ThreeWay) return kThreeWay;
  return kTwoWay;
}

bool belongs_to(Label label, Task task) {
  const auto labels = task_labels(task);
  return std::find(labels.begin(), labels.end(), label) != labels.end();
}

std::size_t slot_of(Label label, Task task) {
  const auto labels = task_labels(task);
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) {
    throw DomainError(std::string("label ") + std::string(label_name(label)) + " is not part of the " +
                      std::string(task_name(task)) + " task");
  }
  return static_cast<std::size_t>(it - labels.begin());
}

int label_value(Label label) {
  switch (label) {
    case Label::Entailment: return 1;
    case Label::Neutral: return 0;
    case Label::Contradiction: return -1;
    case Label::NonEntailment: break;
  }
  throw DomainError("label_value is undefined for two-way labels");
}

std::vector<Label> labels_from_ranking(std::span<const double> scores, Task task) {
  const auto labels = task_labels(task);
  if (scores.size() != labels.size()) {
    throw DomainError("ranking needs " + std::to_string(labels.size()) + " scores, got " +
                      std::to_string(scores.size()));
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw DomainError("ranking scores must be finite");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<Label> out(scores.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank) out[order[rank]] = labels[rank];
  return out;
}

}  // namespace visnli
