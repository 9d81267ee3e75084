#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "visnli/label.hpp"

namespace visnli {

enum class AggregationScheme : std::uint8_t { Majority, Average, Oracle };

std::string_view scheme_name(AggregationScheme scheme);
AggregationScheme parse_scheme(std::string_view text);

// Per-image labels for one hypothesis.
struct AggregationInput {
  std::vector<Label> labels;
  std::optional<Label> gold;
  std::uint64_t rng_seed = 0;
};

// Mean-to-label cut points for the average scheme: mean > upper -> E,
// mean < lower -> C, otherwise N.
struct AverageThresholds {
  double lower = -1.0 / 3.0;
  double upper = 1.0 / 3.0;
};

// Most frequent label; ties are broken uniformly at random from the tied
// labels with a stream seeded by rng_seed.
Label aggregate_majority(const AggregationInput& input);

// Three-way only: thresholds the mean of label_value().
Label aggregate_average(const AggregationInput& input, const AverageThresholds& thresholds = {});
double mean_label_value(std::span<const Label> labels);

// Gold if any image predicted it, otherwise the majority vote.
Label aggregate_oracle(const AggregationInput& input);

Label aggregate(AggregationScheme scheme, const AggregationInput& input, const AverageThresholds& thresholds = {});

}  // namespace visnli
