#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "visnli/label.hpp"

namespace visnli {

enum class SubsetTag : std::uint8_t { Plain, Easy, Hard, Adversarial };
enum class InstanceForm : std::uint8_t { Ranked, Pairwise };

std::string_view subset_name(SubsetTag tag);
SubsetTag parse_subset(std::string_view text);

struct Hypothesis {
  Label gold = Label::Entailment;
  std::string text;
  std::string pair_id;

  bool operator==(const Hypothesis&) const = default;
};

// One premise with its hypotheses. Ranked instances hold exactly one
// hypothesis per task label, stored in canonical slot order; pairwise
// instances hold a single (hypothesis, gold) pair.
struct NLIInstance {
  std::string id;
  std::string premise;
  Task task = Task::ThreeWay;
  InstanceForm form = InstanceForm::Ranked;
  std::vector<Hypothesis> hypotheses;
  SubsetTag subset = SubsetTag::Plain;
  std::map<std::string, std::string> provenance;

  bool ranked() const { return form == InstanceForm::Ranked; }
  const Hypothesis& hypothesis_for(Label slot) const;

  bool operator==(const NLIInstance&) const = default;
};

// Throws DomainError when the instance breaks its form's invariants.
void validate(const NLIInstance& instance);

void to_json(nlohmann::json& j, const NLIInstance& instance);
void from_json(const nlohmann::json& j, NLIInstance& instance);

}  // namespace visnli
