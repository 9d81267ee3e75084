#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace visnli {

// Sentence-level BLEU. Orders above one use add-k smoothing on both the
// match count and the total; unigram precision is left unsmoothed so a pair
// with no shared token scores exactly 0.
struct BleuOptions {
  int max_order = 4;
  double smoothing_k = 1.0;
};

struct BleuStats {
  std::vector<int> matches;  // clipped n-gram matches, index n-1
  std::vector<int> totals;   // candidate n-grams, index n-1
  int candidate_length = 0;
  int reference_length = 0;
};

BleuStats bleu_stats(const std::vector<std::string>& reference, const std::vector<std::string>& candidate,
                     int max_order);

double bleu_from_stats(const BleuStats& stats, const BleuOptions& options = {});

// BLEU of `hypothesis` against `premise` (the reference), on case-folded
// tokens split at whitespace and punctuation. Result is in [0, 1].
double bleu_score(std::string_view premise, std::string_view hypothesis, const BleuOptions& options = {});

}  // namespace visnli
