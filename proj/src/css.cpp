#include "visnli/css.hpp"

#include <cmath>
#include <set>

#include "visnli/errors.hpp"
#include "visnli/hashing.hpp"
#include "visnli/imaging.hpp"
#include "visnli/text.hpp"

namespace visnli {

double ngram_overlap(std::string_view reference, std::string_view text) {
  const auto ref = word_tokens(reference);
  const auto hyp = word_tokens(text);
  std::set<std::string> ref_unigrams(ref.begin(), ref.end());
  std::set<std::pair<std::string, std::string>> ref_bigrams;
  for (std::size_t i = 0; i + 1 < ref.size(); ++i) ref_bigrams.emplace(ref[i], ref[i + 1]);
  double score = 0.0;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    if (ref_unigrams.contains(hyp[i])) score += 1.0;
    if (i + 1 < hyp.size() && ref_bigrams.contains({hyp[i], hyp[i + 1]})) score += 1.0;
  }
  return score;
}

double TokenOverlapScorer::match(std::span<const std::uint8_t> image, std::string_view text) {
  const auto premise = mock_image_text(image);
  if (!premise) throw BackendError(id_ + " only understands mock images");
  return ngram_overlap(*premise, text);
}

double HashScorer::match(std::span<const std::uint8_t> image, std::string_view text) {
  const std::string h = sha256_fields({sha256_hex(image), text});
  return static_cast<double>(std::stoull(h.substr(0, 13), nullptr, 16)) / static_cast<double>(1ULL << 52);
}

PredictionRecord css_infer(std::span<const std::uint8_t> image, int image_index, const NLIInstance& instance,
                           ImageTextScorer& scorer) {
  if (!instance.ranked()) throw DomainError("CSS needs a ranked instance: " + instance.id);
  validate(instance);

  PredictionRecord record;
  record.instance_id = instance.id;
  record.image_index = image_index;
  record.method = Method::CSS;
  record.task = instance.task;
  record.backend_id = scorer.id();
  record.timestamp = utc_timestamp();

  std::vector<double> scores;
  try {
    for (const auto& h : instance.hypotheses) {
      const double s = scorer.match(image, h.text);
      if (!std::isfinite(s)) throw BackendError("scorer returned a non-finite score");
      scores.push_back(s);
    }
  } catch (const std::exception& e) {
    record.status = RecordStatus::Error;
    record.error = e.what();
    for (const auto& h : instance.hypotheses) record.per_hypothesis.push_back({h.gold, std::nullopt, std::nullopt});
    return record;
  }
  const auto labels = labels_from_ranking(scores, instance.task);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    record.per_hypothesis.push_back({instance.hypotheses[i].gold, labels[i], scores[i]});
  }
  return record;
}

}  // namespace visnli
