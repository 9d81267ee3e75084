#include "visnli/instance.hpp"

#include <nlohmann/json.hpp>

#include "visnli/errors.hpp"
#include "visnli/text.hpp"

namespace visnli {

std::string_view subset_name(SubsetTag tag) {
  switch (tag) {
    case SubsetTag::Plain: return "plain";
    case SubsetTag::Easy: return "easy";
    case SubsetTag::Hard: return "hard";
    case SubsetTag::Adversarial: return "adversarial";
  }
  return "plain";
}

SubsetTag parse_subset(std::string_view text) {
  const std::string t = to_lower(trim(text));
  if (t == "plain" || t.empty()) return SubsetTag::Plain;
  if (t == "easy") return SubsetTag::Easy;
  if (t == "hard") return SubsetTag::Hard;
  if (t == "adversarial") return SubsetTag::Adversarial;
  throw DomainError("unknown subset tag '" + std::string(text) + "'");
}

const Hypothesis& NLIInstance::hypothesis_for(Label slot) const {
  for (const auto& h : hypotheses) {
    if (h.gold == slot) return h;
  }
  throw DomainError("instance " + id + " has no hypothesis for slot " + std::string(label_name(slot)));
}

void validate(const NLIInstance& instance) {
  const std::string where = "instance " + instance.id + ": ";
  if (normalize_whitespace(instance.premise).empty()) throw DomainError(where + "empty premise");
  for (const auto& h : instance.hypotheses) {
    if (normalize_whitespace(h.text).empty()) throw DomainError(where + "empty hypothesis");
    if (!belongs_to(h.gold, instance.task)) {
      throw DomainError(where + "label " + std::string(label_name(h.gold)) + " outside the " +
                        std::string(task_name(instance.task)) + " label set");
    }
  }
  if (instance.form == InstanceForm::Pairwise) {
    if (instance.hypotheses.size() != 1) throw DomainError(where + "pairwise form needs one hypothesis");
    return;
  }
  const auto labels = task_labels(instance.task);
  if (instance.hypotheses.size() != labels.size()) {
    throw DomainError(where + "ranked form needs " + std::to_string(labels.size()) + " hypotheses");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (instance.hypotheses[i].gold != labels[i]) {
      throw DomainError(where + "ranked hypotheses must be one per label in slot order");
    }
  }
}

void to_json(nlohmann::json& j, const NLIInstance& instance) {
  nlohmann::json hyps = nlohmann::json::array();
  for (const auto& h : instance.hypotheses) {
    nlohmann::json jh = {{"gold_label", label_name(h.gold)}, {"text", h.text}};
    if (!h.pair_id.empty()) jh["pair_id"] = h.pair_id;
    hyps.push_back(std::move(jh));
  }
  j = {{"id", instance.id},
       {"premise", instance.premise},
       {"task", task_name(instance.task)},
       {"form", instance.ranked() ? "ranked" : "pairwise"},
       {"subset", subset_name(instance.subset)},
       {"hypotheses", std::move(hyps)}};
  if (!instance.provenance.empty()) j["provenance"] = instance.provenance;
}

void from_json(const nlohmann::json& j, NLIInstance& instance) {
  instance.id = j.at("id").get<std::string>();
  instance.premise = j.at("premise").get<std::string>();
  instance.task = parse_task(j.at("task").get<std::string>());
  instance.form = j.at("form").get<std::string>() == "pairwise" ? InstanceForm::Pairwise : InstanceForm::Ranked;
  instance.subset = parse_subset(j.value("subset", "plain"));
  instance.hypotheses.clear();
  for (const auto& jh : j.at("hypotheses")) {
    instance.hypotheses.push_back(
        {parse_label(jh.at("gold_label").get<std::string>()), jh.at("text").get<std::string>(),
         jh.value("pair_id", "")});
  }
  instance.provenance.clear();
  if (j.contains("provenance")) {
    instance.provenance = j.at("provenance").get<std::map<std::string, std::string>>();
  }
}

}  // namespace visnli
