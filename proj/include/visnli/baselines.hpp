#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "visnli/bleu.hpp"
#include "visnli/instance.hpp"
#include "visnli/prediction.hpp"

namespace visnli {

// score(premise, hypothesis) -> real; higher ranks as entailment.
class TextScorer {
 public:
  virtual ~TextScorer() = default;

  virtual std::string id() const = 0;
  virtual Method method() const = 0;
  virtual double score(std::string_view premise, std::string_view hypothesis) = 0;
  virtual bool is_network() const { return false; }
};

class BleuScorer : public TextScorer {
 public:
  explicit BleuScorer(BleuOptions options = {}) : options_(options) {}

  std::string id() const override { return "bleu"; }
  Method method() const override { return Method::BLEU; }
  double score(std::string_view premise, std::string_view hypothesis) override {
    return bleu_score(premise, hypothesis, options_);
  }

 private:
  BleuOptions options_;
};

// next_prob(a, b): probability that b follows a.
class NextSentenceModel {
 public:
  virtual ~NextSentenceModel() = default;
  virtual std::string id() const = 0;
  virtual double next_prob(std::string_view first, std::string_view second) = 0;
  virtual bool is_network() const { return false; }
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string id() const = 0;
  virtual std::vector<double> embed(std::string_view text) = 0;
  virtual bool is_network() const { return false; }
};

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

class NspScorer : public TextScorer {
 public:
  explicit NspScorer(NextSentenceModel& model) : model_(model) {}

  std::string id() const override { return model_.id(); }
  Method method() const override { return Method::NSP; }
  double score(std::string_view premise, std::string_view hypothesis) override {
    return model_.next_prob(premise, hypothesis);
  }
  bool is_network() const override { return model_.is_network(); }

 private:
  NextSentenceModel& model_;
};

class EmbCosScorer : public TextScorer {
 public:
  explicit EmbCosScorer(Embedder& embedder) : embedder_(embedder) {}

  std::string id() const override { return embedder_.id(); }
  Method method() const override { return Method::EmbCos; }
  double score(std::string_view premise, std::string_view hypothesis) override {
    return cosine_similarity(embedder_.embed(premise), embedder_.embed(hypothesis));
  }
  bool is_network() const override { return embedder_.is_network(); }

 private:
  Embedder& embedder_;
};

// Probability looked up by hypothesis text; unknown text gets `fallback`.
class TableNextSentenceModel : public NextSentenceModel {
 public:
  TableNextSentenceModel(std::string id, std::map<std::string, double> prob_by_hypothesis, double fallback = 0.0)
      : id_(std::move(id)), table_(std::move(prob_by_hypothesis)), fallback_(fallback) {}

  std::string id() const override { return id_; }
  double next_prob(std::string_view first, std::string_view second) override;

 private:
  std::string id_;
  std::map<std::string, double> table_;
  double fallback_;
};

// Bag of hashed case-folded tokens; identical strings embed identically.
class HashingEmbedder : public Embedder {
 public:
  explicit HashingEmbedder(std::string id = "mock-embedder", std::size_t dim = 64) : id_(std::move(id)), dim_(dim) {}

  std::string id() const override { return id_; }
  std::vector<double> embed(std::string_view text) override;

 private:
  std::string id_;
  std::size_t dim_;
};

// Ranks the instance's hypotheses by scorer output and labels them by rank.
// Scorer failures yield an Error record.
PredictionRecord rank_with_text_scorer(const NLIInstance& instance, TextScorer& scorer);

// Opaque fine-tuned NLI model; always answers with a three-way label.
class ExternalNliLabeler {
 public:
  virtual ~ExternalNliLabeler() = default;
  virtual std::string id() const = 0;
  virtual Label label(std::string_view premise, std::string_view hypothesis) = 0;
  virtual bool is_network() const { return false; }
};

class GoldEchoLabeler : public ExternalNliLabeler {
 public:
  GoldEchoLabeler(const std::vector<NLIInstance>& instances, std::string id = "mock-nli-gold");

  std::string id() const override { return id_; }
  Label label(std::string_view premise, std::string_view hypothesis) override;

 private:
  std::string id_;
  std::map<std::string, Label> gold_;
};

class ConstantLabeler : public ExternalNliLabeler {
 public:
  ConstantLabeler(std::string id, Label label) : id_(std::move(id)), label_(label) {}

  std::string id() const override { return id_; }
  Label label(std::string_view, std::string_view) override { return label_; }

 private:
  std::string id_;
  Label label_;
};

Label external_nli_label(std::string_view premise, std::string_view hypothesis, ExternalNliLabeler& labeler);

// Labels every hypothesis independently. For two-way instances a neutral or
// contradiction answer counts as non-entailment.
PredictionRecord external_nli_infer(const NLIInstance& instance, ExternalNliLabeler& labeler);

}  // namespace visnli
