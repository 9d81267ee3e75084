#include "visnli/dataset.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "visnli/errors.hpp"
#include "visnli/text.hpp"

namespace visnli {
namespace {

struct Row {
  std::string hypothesis;
  Label gold;
  std::string pair_id;
  std::string hardness;
};

struct PremiseGroup {
  std::string id;
  std::string premise;
  std::vector<Row> kept;  // at most one row per label
};

std::string premise_id_of(const NLIInstance& instance) {
  auto it = instance.provenance.find("premise_id");
  return it != instance.provenance.end() ? it->second : instance.id;
}

std::string padded_id(std::size_t index) {
  std::ostringstream os;
  os << "p" << std::setw(5) << std::setfill('0') << index;
  return os.str();
}

SubsetTag common_tag(const std::vector<Row>& rows, SubsetFilter filter) {
  if (filter == SubsetFilter::Adversarial) return SubsetTag::Adversarial;
  if (rows.empty()) return SubsetTag::Plain;
  const std::string& first = rows.front().hardness;
  for (const auto& r : rows) {
    if (r.hardness != first) return SubsetTag::Plain;
  }
  if (first == "easy") return SubsetTag::Easy;
  if (first == "hard") return SubsetTag::Hard;
  return SubsetTag::Plain;
}

std::unordered_set<std::string> read_membership(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open membership list " + path.string());
  std::unordered_set<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    auto id = trim(line);
    if (!id.empty()) ids.insert(std::move(id));
  }
  return ids;
}

}  // namespace

SubsetFilter parse_subset_filter(std::string_view text) {
  if (text == "all") return SubsetFilter::All;
  if (text == "easy") return SubsetFilter::Easy;
  if (text == "hard") return SubsetFilter::Hard;
  if (text == "adversarial") return SubsetFilter::Adversarial;
  throw ConfigError("unknown subset '" + std::string(text) + "'");
}

std::string_view subset_filter_name(SubsetFilter filter) {
  switch (filter) {
    case SubsetFilter::All: return "all";
    case SubsetFilter::Easy: return "easy";
    case SubsetFilter::Hard: return "hard";
    case SubsetFilter::Adversarial: return "adversarial";
  }
  return "all";
}

Task DatasetSpec::effective_task() const {
  if (task) return *task;
  return subset == SubsetFilter::Adversarial ? Task::TwoWay : Task::ThreeWay;
}

std::vector<NLIInstance> LoadResult::ranked() const {
  std::vector<NLIInstance> out;
  for (const auto& inst : instances) {
    if (inst.ranked()) out.push_back(inst);
  }
  return out;
}

LoadResult load_instances(const DatasetSpec& spec) {
  if (spec.max_premises && *spec.max_premises == 0) throw ConfigError("max_premises must be >= 1");
  std::ifstream in(spec.source_path);
  if (!in) throw ConfigError("cannot open dataset " + spec.source_path.string());

  const Task task = spec.effective_task();
  std::optional<std::unordered_set<std::string>> membership;
  if (!spec.membership_path.empty()) membership = read_membership(spec.membership_path);

  LoadResult result;
  LoadStats& stats = result.stats;
  std::vector<PremiseGroup> groups;
  std::unordered_map<std::string, std::size_t> group_index;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++stats.rows_read;

    std::string premise, hypothesis, gold_text, pair_id, caption_id, hardness;
    try {
      const auto j = nlohmann::json::parse(line);
      premise = normalize_whitespace(j.at("sentence1").get<std::string>());
      hypothesis = normalize_whitespace(j.at("sentence2").get<std::string>());
      gold_text = j.at("gold_label").get<std::string>();
      pair_id = j.value("pairID", "");
      caption_id = j.value("captionID", "");
      hardness = to_lower(j.value("hardness", ""));
    } catch (const nlohmann::json::exception& e) {
      stats.parse_errors.push_back({line_no, e.what()});
      continue;
    }
    if (premise.empty() || hypothesis.empty()) {
      stats.parse_errors.push_back({line_no, "empty premise or hypothesis"});
      continue;
    }
    const auto gold = try_parse_label(gold_text);
    if (!gold || !belongs_to(*gold, task)) {
      ++stats.skipped_label;
      continue;
    }
    if (spec.subset == SubsetFilter::Easy || spec.subset == SubsetFilter::Hard) {
      const bool member = membership ? membership->contains(pair_id)
                                     : hardness == subset_filter_name(spec.subset);
      if (!member) {
        ++stats.filtered_subset;
        continue;
      }
      if (membership) hardness = std::string(subset_filter_name(spec.subset));
    }

    auto it = group_index.find(premise);
    if (it == group_index.end()) {
      if (spec.max_premises && groups.size() >= *spec.max_premises) continue;
      const std::string id = caption_id.empty() ? padded_id(groups.size()) : caption_id;
      it = group_index.emplace(premise, groups.size()).first;
      groups.push_back({id, premise, {}});
    }
    auto& group = groups[it->second];
    const bool filled = std::any_of(group.kept.begin(), group.kept.end(),
                                    [&](const Row& r) { return r.gold == *gold; });
    if (filled) {
      ++stats.discarded_surplus;
      continue;
    }
    ++stats.rows_used;
    group.kept.push_back({hypothesis, *gold, pair_id, hardness});
  }

  const auto labels = task_labels(task);
  stats.premises = groups.size();
  for (auto& group : groups) {
    NLIInstance base;
    base.premise = group.premise;
    base.task = task;
    base.subset = common_tag(group.kept, spec.subset);
    if (group.kept.size() == labels.size()) {
      base.id = group.id;
      base.form = InstanceForm::Ranked;
      for (Label slot : labels) {
        const auto row = std::find_if(group.kept.begin(), group.kept.end(),
                                      [&](const Row& r) { return r.gold == slot; });
        base.hypotheses.push_back({row->gold, row->hypothesis, row->pair_id});
      }
      ++stats.ranked_instances;
      stats.ranked_hypotheses += labels.size();
      result.instances.push_back(std::move(base));
      continue;
    }
    ++stats.incomplete_premises;
    for (const auto& row : group.kept) {
      NLIInstance pair = base;
      pair.id = group.id + "/" + std::string(label_code(row.gold));
      pair.form = InstanceForm::Pairwise;
      pair.hypotheses = {{row.gold, row.hypothesis, row.pair_id}};
      pair.provenance["incomplete"] = "true";
      pair.provenance["premise_id"] = group.id;
      ++stats.pairwise_instances;
      result.instances.push_back(std::move(pair));
    }
  }
  return result;
}

std::vector<NLIInstance> make_uninformative(std::vector<NLIInstance> instances) {
  for (auto& inst : instances) {
    if (!inst.provenance.contains("original_premise")) inst.provenance["original_premise"] = inst.premise;
    inst.premise = std::string(kUninformativePremise);
  }
  return instances;
}

std::vector<NLIInstance> group_ranked(const std::vector<NLIInstance>& pairwise) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const NLIInstance*>> by_premise;
  for (const auto& inst : pairwise) {
    const std::string key = premise_id_of(inst);
    auto [it, inserted] = by_premise.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(&inst);
  }
  std::vector<NLIInstance> out;
  for (const auto& key : order) {
    const auto& members = by_premise[key];
    const NLIInstance& first = *members.front();
    const auto labels = task_labels(first.task);
    NLIInstance ranked;
    ranked.id = key;
    ranked.premise = first.premise;
    ranked.task = first.task;
    ranked.subset = first.subset;
    ranked.provenance = first.provenance;
    ranked.provenance.erase("premise_id");
    bool complete = members.size() == labels.size();
    for (Label slot : labels) {
      if (!complete) break;
      const auto m = std::find_if(members.begin(), members.end(), [&](const NLIInstance* p) {
        return p->form == InstanceForm::Pairwise && p->premise == first.premise && p->hypotheses.front().gold == slot;
      });
      if (m == members.end()) {
        complete = false;
        break;
      }
      ranked.hypotheses.push_back((*m)->hypotheses.front());
    }
    if (complete) {
      out.push_back(std::move(ranked));
    } else {
      for (const auto* m : members) out.push_back(*m);
    }
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, const std::vector<NLIInstance>& instances) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write corpus " + path.string());
  for (const auto& inst : instances) {
    const std::string caption = premise_id_of(inst);
    for (const auto& h : inst.hypotheses) {
      nlohmann::ordered_json row;
      row["captionID"] = caption;
      row["pairID"] = h.pair_id.empty() ? caption + "/" + std::string(label_code(h.gold)) : h.pair_id;
      row["sentence1"] = inst.premise;
      row["sentence2"] = h.text;
      row["gold_label"] = label_name(h.gold);
      if (inst.subset != SubsetTag::Plain) row["hardness"] = subset_name(inst.subset);
      out << row.dump() << '\n';
    }
  }
}

}  // namespace visnli
