#include "visnli/aggregation.hpp"

#include <algorithm>
#include <array>
#include <string>

#include "visnli/errors.hpp"
#include "visnli/rng.hpp"

namespace visnli {

std::string_view scheme_name(AggregationScheme scheme) {
  switch (scheme) {
    case AggregationScheme::Majority: return "majority";
    case AggregationScheme::Average: return "average";
    case AggregationScheme::Oracle: return "oracle";
  }
  return "?";
}

AggregationScheme parse_scheme(std::string_view text) {
  if (text == "majority") return AggregationScheme::Majority;
  if (text == "average") return AggregationScheme::Average;
  if (text == "oracle") return AggregationScheme::Oracle;
  throw ConfigError("unknown aggregation scheme '" + std::string(text) + "'");
}

Label aggregate_majority(const AggregationInput& input) {
  if (input.labels.empty()) throw DomainError("cannot aggregate an empty label list");
  // Indexed by the enum value; candidates are collected in enum order so the
  // tie-break does not depend on the order of the input list.
  std::array<int, 4> counts{};
  for (Label l : input.labels) ++counts[static_cast<std::size_t>(l)];
  const int best = *std::max_element(counts.begin(), counts.end());
  std::vector<Label> tied;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == best) tied.push_back(static_cast<Label>(i));
  }
  if (tied.size() == 1) return tied.front();
  SeededRng rng(input.rng_seed);
  return tied[rng.uniform_index(tied.size())];
}

double mean_label_value(std::span<const Label> labels) {
  if (labels.empty()) throw DomainError("cannot average an empty label list");
  double sum = 0.0;
  for (Label l : labels) sum += label_value(l);
  return sum / static_cast<double>(labels.size());
}

Label aggregate_average(const AggregationInput& input, const AverageThresholds& thresholds) {
  if (thresholds.lower > thresholds.upper) throw ConfigError("average thresholds must satisfy lower <= upper");
  const double m = mean_label_value(input.labels);
  if (m > thresholds.upper) return Label::Entailment;
  if (m < thresholds.lower) return Label::Contradiction;
  return Label::Neutral;
}

Label aggregate_oracle(const AggregationInput& input) {
  if (!input.gold) throw DomainError("oracle aggregation needs the gold label");
  if (input.labels.empty()) throw DomainError("cannot aggregate an empty label list");
  if (std::find(input.labels.begin(), input.labels.end(), *input.gold) != input.labels.end()) return *input.gold;
  return aggregate_majority(input);
}

Label aggregate(AggregationScheme scheme, const AggregationInput& input, const AverageThresholds& thresholds) {
  switch (scheme) {
    case AggregationScheme::Majority: return aggregate_majority(input);
    case AggregationScheme::Average: return aggregate_average(input, thresholds);
    case AggregationScheme::Oracle: return aggregate_oracle(input);
  }
  throw DomainError("unknown aggregation scheme");
}

}  // namespace visnli
