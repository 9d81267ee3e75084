#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "visnli/aggregation.hpp"
#include "visnli/instance.hpp"
#include "visnli/prediction.hpp"

namespace visnli {

// matches / denominator; with class_filter only positions whose gold equals
// the filter count. Empty denominator yields nullopt, never 0.
std::optional<double> accuracy(std::span<const Label> predictions, std::span<const Label> golds,
                               std::optional<Label> class_filter = std::nullopt);

// hard - easy; negative means the method leans on easy-subset artifacts.
double bias_delta(double acc_easy, double acc_hard);

// One gold/prediction pair; predicted is empty for an invalid record.
struct ScoredPair {
  Label gold = Label::Entailment;
  std::optional<Label> predicted;
};

struct AccuracyCell {
  std::optional<double> overall;
  std::map<Label, std::optional<double>> per_class;
  std::map<Label, std::size_t> class_counts;  // gold-class denominators
  std::size_t correct = 0;
  std::size_t evaluated = 0;
  std::size_t invalid = 0;
};

// Invalid pairs are excluded from every denominator unless
// count_invalid_as_wrong is set, in which case they count as misses.
AccuracyCell score_pairs(std::span<const ScoredPair> pairs, Task task, bool count_invalid_as_wrong = false);

// Overall accuracy equals the prevalence-weighted mean of per-class accuracy.
bool per_class_consistent(const AccuracyCell& cell, double tolerance = 1e-12);

struct AggregationSettings {
  std::vector<AggregationScheme> schemes = {AggregationScheme::Majority, AggregationScheme::Average,
                                            AggregationScheme::Oracle};
  AverageThresholds thresholds;
  std::uint64_t seed = 0;
  bool allow_inconsistent_image_counts = false;
  bool count_invalid_as_wrong = false;
};

// Tie-break stream for one (instance, slot); shared by majority and the
// oracle's fallback so the oracle is never worse than majority.
std::uint64_t aggregation_seed(std::uint64_t seed, std::string_view instance_id, Label slot);

// Aggregates per-image labels of one image method per hypothesis and scores
// each scheme. Schemes that do not apply to the task (average on two-way)
// are left out. Throws DomainError on inconsistent image counts unless
// allowed, and std::logic_error if oracle ever scores below majority.
std::map<AggregationScheme, AccuracyCell> compare_aggregations(const std::vector<PredictionRecord>& per_image_records,
                                                               const std::vector<NLIInstance>& instances,
                                                               const AggregationSettings& settings);

// Aggregated label per (instance, slot, scheme), for persisting the stage output.
struct AggregatedLabel {
  std::string instance_id;
  Label slot = Label::Entailment;
  AggregationScheme scheme = AggregationScheme::Majority;
  std::optional<Label> label;  // empty when every image record was invalid
  std::size_t images = 0;
};

std::vector<AggregatedLabel> aggregate_records(const std::vector<PredictionRecord>& per_image_records,
                                               const std::vector<NLIInstance>& instances,
                                               const AggregationSettings& settings);

struct MethodRow {
  Method method = Method::CSS;
  std::string backend_id;
  std::string variant;  // "single", "per_image_mean", "majority", "average", "oracle", "text"
  AccuracyCell cell;
  std::size_t expected_records = 0;
  std::size_t records = 0;
  std::size_t parse_failures = 0;
  std::size_t errors = 0;
};

struct PartitionReport {
  std::string name;
  Task task = Task::ThreeWay;
  std::size_t instances = 0;
  std::size_t hypotheses = 0;
  std::size_t skipped_instances = 0;  // pairwise / incomplete, not evaluable by ranking
  std::vector<MethodRow> rows;
};

struct DeltaRow {
  std::string group;  // "subset" or "uninformative"
  Method method = Method::CSS;
  std::string variant;
  std::optional<double> easy;
  std::optional<double> hard;
  std::optional<double> delta;
};

struct EvalReport {
  std::string schema_version = "visnli.report.v1";
  std::string run_id;
  std::string config_fingerprint;
  std::vector<PartitionReport> partitions;
  std::vector<DeltaRow> deltas;
  std::map<std::string, std::string> settings;  // aggregation scheme, thresholds, policies
  double coverage = 1.0;                        // records present / records expected
};

struct EvaluateOptions {
  AggregationSettings aggregation;
  std::size_t images_per_premise = 5;
};

// Builds all rows of one partition. Pairwise instances are counted as skipped.
PartitionReport evaluate_partition(const std::string& name, const std::vector<NLIInstance>& instances,
                                   const std::vector<PredictionRecord>& records, const EvaluateOptions& options);

// Hard - easy deltas for every row present in both partitions named
// `<prefix>easy` and `<prefix>hard`.
std::vector<DeltaRow> subset_deltas(const std::vector<PartitionReport>& partitions);

void to_json(nlohmann::json& j, const EvalReport& report);

// Fixed-width table; percentages with one decimal place.
std::string render_table(const EvalReport& report);

std::string format_percent(std::optional<double> value);

}  // namespace visnli
