#include "visnli/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "visnli/errors.hpp"
#include "visnli/rng.hpp"

namespace visnli {
namespace {

constexpr Method kMethodOrder[] = {Method::CSS, Method::VQA, Method::BLEU, Method::NSP, Method::EmbCos,
                                   Method::ExternalNLI};

nlohmann::json opt_json(std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::vector<AggregationScheme> applicable(const std::vector<AggregationScheme>& schemes, Task task) {
  std::vector<AggregationScheme> out;
  for (auto s : schemes) {
    if (s == AggregationScheme::Average && task == Task::TwoWay) continue;
    out.push_back(s);
  }
  return out;
}

std::vector<const NLIInstance*> ranked_only(const std::vector<NLIInstance>& instances) {
  std::vector<const NLIInstance*> out;
  for (const auto& inst : instances) {
    if (inst.ranked()) out.push_back(&inst);
  }
  return out;
}

// Records of one method keyed by instance id, ordered by image index.
std::map<std::string, std::map<int, const PredictionRecord*>> index_records(
    const std::vector<PredictionRecord>& records, Method method) {
  std::map<std::string, std::map<int, const PredictionRecord*>> out;
  for (const auto& r : records) {
    if (r.method != method) continue;
    out[r.instance_id][r.image_index.value_or(-1)] = &r;
  }
  return out;
}

// Scored pairs for one image index (or -1 for text methods).
std::vector<ScoredPair> pairs_for(const std::vector<const NLIInstance*>& instances,
                                  const std::map<std::string, std::map<int, const PredictionRecord*>>& index,
                                  int image_index) {
  std::vector<ScoredPair> pairs;
  for (const auto* inst : instances) {
    const PredictionRecord* record = nullptr;
    if (auto it = index.find(inst->id); it != index.end()) {
      if (auto jt = it->second.find(image_index); jt != it->second.end()) record = jt->second;
    }
    for (const auto& h : inst->hypotheses) {
      std::optional<Label> predicted;
      if (record && record->ok()) predicted = record->predicted_for(h.gold);
      pairs.push_back({h.gold, predicted});
    }
  }
  return pairs;
}

AccuracyCell mean_cell(const std::vector<AccuracyCell>& cells, Task task) {
  AccuracyCell out;
  std::vector<double> overall;
  std::map<Label, std::vector<double>> per_class;
  for (const auto& c : cells) {
    if (c.overall) overall.push_back(*c.overall);
    for (const auto& [label, v] : c.per_class) {
      if (v) per_class[label].push_back(*v);
    }
    out.correct += c.correct;
    out.evaluated += c.evaluated;
    out.invalid += c.invalid;
  }
  auto mean = [](const std::vector<double>& v) -> std::optional<double> {
    if (v.empty()) return std::nullopt;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  out.overall = mean(overall);
  for (Label l : task_labels(task)) out.per_class[l] = mean(per_class[l]);
  if (!cells.empty()) out.class_counts = cells.front().class_counts;
  return out;
}

nlohmann::json cell_json(const AccuracyCell& cell) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [label, v] : cell.per_class) per_class[std::string(label_code(label))] = opt_json(v);
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [label, n] : cell.class_counts) counts[std::string(label_code(label))] = n;
  return {{"overall", opt_json(cell.overall)}, {"per_class", per_class}, {"class_counts", counts},
          {"correct", cell.correct},           {"evaluated", cell.evaluated}, {"invalid", cell.invalid}};
}

}  // namespace

std::optional<double> accuracy(std::span<const Label> predictions, std::span<const Label> golds,
                               std::optional<Label> class_filter) {
  if (predictions.size() != golds.size()) throw DomainError("predictions and golds are not aligned");
  std::size_t matches = 0;
  std::size_t denominator = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (class_filter && golds[i] != *class_filter) continue;
    ++denominator;
    if (predictions[i] == golds[i]) ++matches;
  }
  if (denominator == 0) return std::nullopt;
  return static_cast<double>(matches) / static_cast<double>(denominator);
}

double bias_delta(double acc_easy, double acc_hard) { return acc_hard - acc_easy; }

AccuracyCell score_pairs(std::span<const ScoredPair> pairs, Task task, bool count_invalid_as_wrong) {
  AccuracyCell cell;
  std::map<Label, std::size_t> class_correct;
  for (Label l : task_labels(task)) {
    cell.class_counts[l] = 0;
    class_correct[l] = 0;
  }
  for (const auto& p : pairs) {
    if (!p.predicted) {
      ++cell.invalid;
      if (!count_invalid_as_wrong) continue;
    }
    ++cell.evaluated;
    ++cell.class_counts[p.gold];
    if (p.predicted && *p.predicted == p.gold) {
      ++cell.correct;
      ++class_correct[p.gold];
    }
  }
  if (cell.evaluated > 0) cell.overall = static_cast<double>(cell.correct) / static_cast<double>(cell.evaluated);
  for (Label l : task_labels(task)) {
    const auto n = cell.class_counts[l];
    cell.per_class[l] = n == 0 ? std::nullopt
                               : std::optional<double>(static_cast<double>(class_correct[l]) / static_cast<double>(n));
  }
  return cell;
}

bool per_class_consistent(const AccuracyCell& cell, double tolerance) {
  if (!cell.overall) return cell.evaluated == 0;
  double weighted = 0.0;
  for (const auto& [label, n] : cell.class_counts) {
    if (n == 0) continue;
    const auto it = cell.per_class.find(label);
    if (it == cell.per_class.end() || !it->second) return false;
    weighted += *it->second * static_cast<double>(n);
  }
  return std::abs(weighted / static_cast<double>(cell.evaluated) - *cell.overall) <= tolerance;
}

std::uint64_t aggregation_seed(std::uint64_t seed, std::string_view instance_id, Label slot) {
  return derive_seed(seed, std::string(instance_id) + "#" + std::string(label_code(slot)));
}

std::vector<AggregatedLabel> aggregate_records(const std::vector<PredictionRecord>& per_image_records,
                                               const std::vector<NLIInstance>& instances,
                                               const AggregationSettings& settings) {
  std::vector<AggregatedLabel> out;
  const auto ranked = ranked_only(instances);
  if (ranked.empty()) return out;
  std::map<std::string, std::map<int, const PredictionRecord*>> index;
  for (const auto& r : per_image_records) {
    if (!r.image_index) throw DomainError("aggregation needs per-image records");
    index[r.instance_id][*r.image_index] = &r;
  }
  std::optional<std::size_t> expected_images;
  for (const auto* inst : ranked) {
    const auto it = index.find(inst->id);
    const std::size_t count = it == index.end() ? 0 : it->second.size();
    if (!expected_images) expected_images = count;
    if (count != *expected_images && !settings.allow_inconsistent_image_counts) {
      throw DomainError("instance " + inst->id + " has " + std::to_string(count) + " image records, expected " +
                        std::to_string(*expected_images));
    }
    const auto schemes = applicable(settings.schemes, inst->task);
    for (const auto& h : inst->hypotheses) {
      AggregationInput input;
      input.gold = h.gold;
      input.rng_seed = aggregation_seed(settings.seed, inst->id, h.gold);
      if (it != index.end()) {
        for (const auto& [image_index, record] : it->second) {
          if (!record->ok()) continue;
          if (auto p = record->predicted_for(h.gold)) input.labels.push_back(*p);
        }
      }
      for (auto scheme : schemes) {
        AggregatedLabel agg{inst->id, h.gold, scheme, std::nullopt, input.labels.size()};
        if (!input.labels.empty()) agg.label = aggregate(scheme, input, settings.thresholds);
        out.push_back(agg);
      }
    }
  }
  return out;
}

std::map<AggregationScheme, AccuracyCell> compare_aggregations(const std::vector<PredictionRecord>& per_image_records,
                                                               const std::vector<NLIInstance>& instances,
                                                               const AggregationSettings& settings) {
  std::map<AggregationScheme, AccuracyCell> out;
  const auto ranked = ranked_only(instances);
  if (ranked.empty()) return out;
  const Task task = ranked.front()->task;
  std::map<AggregationScheme, std::vector<ScoredPair>> pairs;
  for (const auto& agg : aggregate_records(per_image_records, instances, settings)) {
    pairs[agg.scheme].push_back({agg.slot, agg.label});
  }
  for (const auto& [scheme, p] : pairs) out[scheme] = score_pairs(p, task, settings.count_invalid_as_wrong);
  const auto majority = out.find(AggregationScheme::Majority);
  const auto oracle = out.find(AggregationScheme::Oracle);
  if (majority != out.end() && oracle != out.end() && oracle->second.correct < majority->second.correct) {
    throw std::logic_error("oracle aggregation scored below majority vote");
  }
  return out;
}

PartitionReport evaluate_partition(const std::string& name, const std::vector<NLIInstance>& instances,
                                   const std::vector<PredictionRecord>& records, const EvaluateOptions& options) {
  PartitionReport report;
  report.name = name;
  const auto ranked = ranked_only(instances);
  report.instances = ranked.size();
  report.skipped_instances = instances.size() - ranked.size();
  if (!ranked.empty()) report.task = ranked.front()->task;
  for (const auto* inst : ranked) report.hypotheses += inst->hypotheses.size();
  const bool as_wrong = options.aggregation.count_invalid_as_wrong;
  std::set<std::string> ranked_ids;
  for (const auto* inst : ranked) ranked_ids.insert(inst->id);

  for (Method method : kMethodOrder) {
    const auto index = index_records(records, method);
    if (index.empty()) continue;
    MethodRow base;
    base.method = method;
    for (const auto& r : records) {
      if (r.method != method) continue;
      if (base.backend_id.empty()) base.backend_id = r.backend_id;
      if (!ranked_ids.contains(r.instance_id)) continue;
      ++base.records;
      if (r.status == RecordStatus::ParseFailure) ++base.parse_failures;
      if (r.status == RecordStatus::Error) ++base.errors;
    }

    if (!is_image_method(method)) {
      MethodRow row = base;
      row.variant = "text";
      row.expected_records = ranked.size();
      const auto pairs = pairs_for(ranked, index, -1);
      row.cell = score_pairs(pairs, report.task, as_wrong);
      report.rows.push_back(std::move(row));
      continue;
    }

    base.expected_records = ranked.size() * options.images_per_premise;
    MethodRow single = base;
    single.variant = "single";
    single.cell = score_pairs(pairs_for(ranked, index, 0), report.task, as_wrong);
    report.rows.push_back(single);

    std::vector<AccuracyCell> per_image;
    for (std::size_t i = 0; i < options.images_per_premise; ++i) {
      per_image.push_back(score_pairs(pairs_for(ranked, index, static_cast<int>(i)), report.task, as_wrong));
    }
    MethodRow mean = base;
    mean.variant = "per_image_mean";
    mean.cell = mean_cell(per_image, report.task);
    report.rows.push_back(mean);

    std::vector<PredictionRecord> method_records;
    for (const auto& r : records) {
      if (r.method == method && r.image_index) method_records.push_back(r);
    }
    for (const auto& [scheme, cell] : compare_aggregations(method_records, instances, options.aggregation)) {
      MethodRow row = base;
      row.variant = std::string(scheme_name(scheme));
      row.cell = cell;
      report.rows.push_back(row);
    }
  }
  return report;
}

std::vector<DeltaRow> subset_deltas(const std::vector<PartitionReport>& partitions) {
  std::vector<DeltaRow> out;
  for (const std::string prefix : {"", "uninformative/"}) {
    const auto easy = std::find_if(partitions.begin(), partitions.end(),
                                   [&](const PartitionReport& p) { return p.name == prefix + "easy"; });
    const auto hard = std::find_if(partitions.begin(), partitions.end(),
                                   [&](const PartitionReport& p) { return p.name == prefix + "hard"; });
    if (easy == partitions.end() || hard == partitions.end()) continue;
    for (const auto& row : easy->rows) {
      const auto match = std::find_if(hard->rows.begin(), hard->rows.end(), [&](const MethodRow& r) {
        return r.method == row.method && r.variant == row.variant;
      });
      if (match == hard->rows.end()) continue;
      DeltaRow d;
      d.group = prefix.empty() ? "subset" : "uninformative";
      d.method = row.method;
      d.variant = row.variant;
      d.easy = row.cell.overall;
      d.hard = match->cell.overall;
      if (d.easy && d.hard) d.delta = bias_delta(*d.easy, *d.hard);
      out.push_back(d);
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const EvalReport& report) {
  nlohmann::json partitions = nlohmann::json::array();
  for (const auto& p : report.partitions) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : p.rows) {
      rows.push_back({{"method", method_name(r.method)},
                      {"backend_id", r.backend_id},
                      {"variant", r.variant},
                      {"accuracy", cell_json(r.cell)},
                      {"expected_records", r.expected_records},
                      {"records", r.records},
                      {"parse_failures", r.parse_failures},
                      {"errors", r.errors}});
    }
    partitions.push_back({{"name", p.name},
                          {"task", task_name(p.task)},
                          {"instances", p.instances},
                          {"hypotheses", p.hypotheses},
                          {"skipped_instances", p.skipped_instances},
                          {"rows", std::move(rows)}});
  }
  nlohmann::json deltas = nlohmann::json::array();
  for (const auto& d : report.deltas) {
    deltas.push_back({{"group", d.group},
                      {"method", method_name(d.method)},
                      {"variant", d.variant},
                      {"easy", opt_json(d.easy)},
                      {"hard", opt_json(d.hard)},
                      {"delta", opt_json(d.delta)}});
  }
  j = {{"schema_version", report.schema_version},
       {"run_id", report.run_id},
       {"config_fingerprint", report.config_fingerprint},
       {"settings", report.settings},
       {"coverage", report.coverage},
       {"partitions", std::move(partitions)},
       {"deltas", std::move(deltas)}};
}

std::string format_percent(std::optional<double> value) {
  if (!value) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << (*value * 100.0) << "%";
  return os.str();
}

std::string render_table(const EvalReport& report) {
  std::ostringstream os;
  os << "run " << report.run_id << " (" << report.schema_version << ")\n";
  os << "coverage " << format_percent(report.coverage);
  if (report.coverage < 1.0) os << "  ** incomplete inference **";
  os << "\n";
  for (const auto& [k, v] : report.settings) os << "  " << k << " = " << v << "\n";
  for (const auto& p : report.partitions) {
    os << "\n== " << p.name << " (" << task_name(p.task) << "): " << p.instances << " premises, " << p.hypotheses
       << " hypotheses, " << p.skipped_instances << " skipped\n";
    os << std::left << std::setw(12) << "method" << std::setw(16) << "variant" << std::right << std::setw(9)
       << "overall";
    for (Label l : task_labels(p.task)) os << std::setw(9) << label_code(l);
    os << std::setw(8) << "n" << std::setw(9) << "invalid" << "\n";
    for (const auto& r : p.rows) {
      os << std::left << std::setw(12) << method_name(r.method) << std::setw(16) << r.variant << std::right
         << std::setw(9) << format_percent(r.cell.overall);
      for (Label l : task_labels(p.task)) {
        const auto it = r.cell.per_class.find(l);
        os << std::setw(9) << format_percent(it == r.cell.per_class.end() ? std::nullopt : it->second);
      }
      os << std::setw(8) << r.cell.evaluated << std::setw(9) << r.cell.invalid << "\n";
    }
  }
  if (!report.deltas.empty()) {
    os << "\n== hard - easy\n";
    for (const auto& d : report.deltas) {
      os << std::left << std::setw(15) << d.group << std::setw(12) << method_name(d.method) << std::setw(16)
         << d.variant << std::right << std::setw(9) << format_percent(d.easy) << std::setw(9)
         << format_percent(d.hard);
      if (d.delta) {
        std::ostringstream delta;
        delta << std::showpos << std::fixed << std::setprecision(1) << (*d.delta * 100.0);
        os << "  (" << delta.str() << ")";
      }
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace visnli
