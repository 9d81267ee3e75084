#pragma once

#include <span>
#include <string>
#include <string_view>

#include "visnli/instance.hpp"
#include "visnli/prediction.hpp"

namespace visnli {

// match(image, text) -> real, higher means a better match.
class ImageTextScorer {
 public:
  virtual ~ImageTextScorer() = default;

  virtual std::string id() const = 0;
  virtual double match(std::span<const std::uint8_t> image, std::string_view text) = 0;
  virtual bool is_network() const { return false; }
};

// Counts hypothesis unigrams and bigrams that also occur in the text carried
// by a mock image. Word-order blind beyond bigrams, like a bag-of-regions
// matcher, which is what the overlap trap exploits.
class TokenOverlapScorer : public ImageTextScorer {
 public:
  explicit TokenOverlapScorer(std::string id = "mock-overlap") : id_(std::move(id)) {}
  std::string id() const override { return id_; }
  double match(std::span<const std::uint8_t> image, std::string_view text) override;

 private:
  std::string id_;
};

// Pseudo-random but deterministic score per (image, text).
class HashScorer : public ImageTextScorer {
 public:
  explicit HashScorer(std::string id = "mock-hash") : id_(std::move(id)) {}
  std::string id() const override { return id_; }
  double match(std::span<const std::uint8_t> image, std::string_view text) override;

 private:
  std::string id_;
};

// Unigram + bigram overlap of `text` against `reference`.
double ngram_overlap(std::string_view reference, std::string_view text);

// Scores every hypothesis against one image and ranks them. Scorer failures
// become an Error record instead of propagating.
PredictionRecord css_infer(std::span<const std::uint8_t> image, int image_index, const NLIInstance& instance,
                           ImageTextScorer& scorer);

}  // namespace visnli
