#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "visnli/instance.hpp"

namespace visnli {

enum class SubsetFilter : std::uint8_t { All, Easy, Hard, Adversarial };

SubsetFilter parse_subset_filter(std::string_view text);
std::string_view subset_filter_name(SubsetFilter filter);

struct DatasetSpec {
  std::filesystem::path source_path;
  SubsetFilter subset = SubsetFilter::All;
  std::optional<std::size_t> max_premises;  // unlimited when empty
  std::uint64_t seed = 0;
  // Optional list of pair ids (one per line) forming the requested subset;
  // used instead of the `hardness` column when set.
  std::filesystem::path membership_path;
  // Three-way unless the subset is adversarial.
  std::optional<Task> task;

  Task effective_task() const;
};

struct RecordIssue {
  std::size_t line = 0;
  std::string message;
};

struct LoadStats {
  std::size_t rows_read = 0;
  std::size_t rows_used = 0;
  std::size_t skipped_label = 0;     // gold label outside the task set, e.g. "-"
  std::size_t filtered_subset = 0;   // row not in the requested easy/hard subset
  std::size_t discarded_surplus = 0; // second hypothesis for an already filled slot
  std::size_t premises = 0;
  std::size_t ranked_instances = 0;
  std::size_t ranked_hypotheses = 0;
  std::size_t incomplete_premises = 0;
  std::size_t pairwise_instances = 0;
  std::vector<RecordIssue> parse_errors;
};

struct LoadResult {
  // File order; incomplete premises appear as pairwise instances flagged
  // with provenance["incomplete"] == "true".
  std::vector<NLIInstance> instances;
  LoadStats stats;

  std::vector<NLIInstance> ranked() const;
};

// Reads line-delimited JSON records (sentence1, sentence2, gold_label,
// optional hardness / pairID / captionID).
LoadResult load_instances(const DatasetSpec& spec);

inline constexpr std::string_view kUninformativePremise = "Something is happening.";

std::vector<NLIInstance> make_uninformative(std::vector<NLIInstance> instances);

// Groups pairwise instances sharing a premise into ranked instances. Groups
// without a full label set are returned unchanged.
std::vector<NLIInstance> group_ranked(const std::vector<NLIInstance>& pairwise);

// Writes instances back in the line-delimited input format, one row per hypothesis.
void write_corpus(const std::filesystem::path& path, const std::vector<NLIInstance>& instances);

}  // namespace visnli
