#include "visnli/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "visnli/errors.hpp"
#include "visnli/text.hpp"

namespace visnli {
namespace {

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, int n) {
  NgramCounts counts;
  const auto size = static_cast<int>(tokens.size());
  for (int i = 0; i + n <= size; ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

}  // namespace

BleuStats bleu_stats(const std::vector<std::string>& reference, const std::vector<std::string>& candidate,
                     int max_order) {
  BleuStats stats;
  stats.candidate_length = static_cast<int>(candidate.size());
  stats.reference_length = static_cast<int>(reference.size());
  for (int n = 1; n <= max_order; ++n) {
    const auto cand = count_ngrams(candidate, n);
    const auto ref = count_ngrams(reference, n);
    int matches = 0;
    int total = 0;
    for (const auto& [gram, count] : cand) {
      total += count;
      if (auto it = ref.find(gram); it != ref.end()) matches += std::min(count, it->second);
    }
    stats.matches.push_back(matches);
    stats.totals.push_back(total);
  }
  return stats;
}

double bleu_from_stats(const BleuStats& stats, const BleuOptions& options) {
  if (options.max_order < 1 || options.smoothing_k <= 0.0) throw DomainError("invalid BLEU options");
  if (stats.candidate_length == 0 || stats.totals.empty() || stats.totals[0] == 0 || stats.matches[0] == 0) {
    return 0.0;
  }
  double log_precision = std::log(static_cast<double>(stats.matches[0]) / stats.totals[0]);
  for (std::size_t i = 1; i < stats.totals.size(); ++i) {
    log_precision +=
        std::log((stats.matches[i] + options.smoothing_k) / (stats.totals[i] + options.smoothing_k));
  }
  log_precision /= static_cast<double>(stats.totals.size());
  double log_bp = 0.0;
  if (stats.candidate_length < stats.reference_length) {
    log_bp = 1.0 - static_cast<double>(stats.reference_length) / stats.candidate_length;
  }
  return std::exp(log_bp + log_precision);
}

double bleu_score(std::string_view premise, std::string_view hypothesis, const BleuOptions& options) {
  return bleu_from_stats(bleu_stats(tokenize(premise), tokenize(hypothesis), options.max_order), options);
}

}  // namespace visnli
