#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "visnli/adversarial.hpp"
#include "visnli/baselines.hpp"
#include "visnli/css.hpp"
#include "visnli/dataset.hpp"
#include "visnli/evaluation.hpp"
#include "visnli/http_backends.hpp"
#include "visnli/imaging.hpp"
#include "visnli/vqa.hpp"

namespace visnli {

// One named backend. `kind` selects the implementation; the remaining
// fields only matter for network kinds.
struct BackendSpec {
  std::string id;
  std::string kind;
  HttpEndpoint endpoint;
  std::string model;
  std::string path;         // scorer route for generic HTTP kinds
  nlohmann::json options;   // kind-specific extras (word, seed, label, dim, forward_params, table)
};

bool is_network_kind(std::string_view kind);

struct AdversarialConfig {
  std::filesystem::path lexicon_path;  // empty: built-in lexicon
  std::size_t n_premises = kDefaultAdversarialPremises;
  std::uint64_t seed = kDefaultAdversarialSeed;
  std::filesystem::path output_path = "adversarial.jsonl";
};

struct RunConfig {
  DatasetSpec dataset;
  std::map<SubsetFilter, std::filesystem::path> membership_paths;  // pair-id lists per subset
  std::vector<SubsetFilter> compare_subsets;  // e.g. easy + hard; empty runs dataset.subset alone
  bool uninformative_probe = false;
  int images_per_premise = 5;

  std::string tti_backend;
  GenerationParams tti_params;
  bool allow_partial_images = false;  // true: failed images become Error records

  std::map<Method, std::string> methods;  // method -> backend id (ignored for BLEU)
  std::map<std::string, BackendSpec> backends;

  std::string vqa_template;  // empty: default for the task
  bool vqa_shuffle = true;
  int vqa_max_parse_retries = 1;
  BleuOptions bleu;

  AggregationSettings aggregation;
  std::uint64_t seed = 0;

  RetryPolicy retry;
  std::size_t parallelism = 1;
  double tti_requests_per_second = 0.0;
  double vqa_requests_per_second = 0.0;
  std::filesystem::path cache_root = "cache";
  std::filesystem::path output_dir = "out";
  bool offline = false;

  AdversarialConfig adversarial;
};

// Reads a JSON config. Missing "seeds" is an error; relative paths are
// resolved against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_json(const RunConfig& config);

// Applies "a.b.c=value" to a config document; value is parsed as JSON when
// possible and taken as a string otherwise.
void apply_override(nlohmann::json& config, std::string_view assignment);

// Throws ConfigError for unresolved backend ids, wrong kinds per role,
// network kinds in offline mode, or bad numeric settings.
void validate_config(const RunConfig& config);

// SHA-256 over the result-determining part of the config.
std::string config_fingerprint(const RunConfig& config);

// Instantiates backends on demand. Gold-echo mocks read the gold labels of
// `gold_source`.
class BackendRegistry {
 public:
  BackendRegistry(const RunConfig& config, std::vector<NLIInstance> gold_source);

  TTIBackend& tti();
  ImageTextScorer& css();
  VqaBackend& vqa();
  TextScorer& text(Method method);
  ExternalNliLabeler& external_nli();

 private:
  const BackendSpec& spec_for(Method method) const;

  const RunConfig& config_;
  std::vector<NLIInstance> gold_source_;
  std::unique_ptr<TTIBackend> tti_;
  std::unique_ptr<ImageTextScorer> css_;
  std::unique_ptr<VqaBackend> vqa_;
  std::unique_ptr<NextSentenceModel> nsp_model_;
  std::unique_ptr<Embedder> embedder_;
  std::map<Method, std::unique_ptr<TextScorer>> text_;
  std::unique_ptr<ExternalNliLabeler> nli_;
};

struct Partition {
  std::string name;  // "all", "easy", "hard", "adversarial", "uninformative/easy", ...
  std::vector<NLIInstance> instances;
  LoadStats stats;
};

std::vector<Partition> load_partitions(const RunConfig& config);

std::filesystem::path partition_dir(const RunConfig& config, const Partition& partition);

// Stage functions. Each persists its output under partition_dir().
std::map<std::string, ImageSet> stage_images(const RunConfig& config, const Partition& partition,
                                             BackendRegistry& registry);
std::vector<PredictionRecord> stage_infer(const RunConfig& config, const Partition& partition,
                                          const std::map<std::string, ImageSet>& images, BackendRegistry& registry,
                                          Transcript* transcript = nullptr);
std::vector<AggregatedLabel> stage_aggregate(const RunConfig& config, const Partition& partition,
                                             const std::vector<PredictionRecord>& records);
EvalReport stage_evaluate(const RunConfig& config, const std::vector<Partition>& partitions,
                          const std::map<std::string, std::vector<PredictionRecord>>& records_by_partition);

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

std::map<std::string, ImageSet> read_image_sets(const std::filesystem::path& path);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

// Writes the corpus and a manifest next to it; returns the corpus path.
std::filesystem::path cmd_gen_adversarial(const RunConfig& config);

// Stage commands used by the CLI; each reads the previous stage's artifacts.
void cmd_gen_images(const RunConfig& config);
void cmd_infer(const RunConfig& config);
void cmd_aggregate(const RunConfig& config);
EvalReport cmd_evaluate(const RunConfig& config);

// Full pipeline: images, inference, aggregation, evaluation. Writes
// report.json, report.txt and manifest.json to output_dir.
EvalReport cmd_run(const RunConfig& config);

std::string report_json_text(const EvalReport& report);

}  // namespace visnli
