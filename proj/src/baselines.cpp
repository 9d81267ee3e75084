#include "visnli/baselines.hpp"

#include <cmath>

#include "visnli/errors.hpp"
#include "visnli/rng.hpp"
#include "visnli/text.hpp"

namespace visnli {

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DomainError("cosine of vectors with different dimensions");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double TableNextSentenceModel::next_prob(std::string_view, std::string_view second) {
  const auto it = table_.find(std::string(second));
  return it == table_.end() ? fallback_ : it->second;
}

std::vector<double> HashingEmbedder::embed(std::string_view text) {
  std::vector<double> v(dim_, 0.0);
  for (const auto& token : tokenize(text)) {
    v[derive_seed(0, token) % dim_] += 1.0;
  }
  return v;
}

PredictionRecord rank_with_text_scorer(const NLIInstance& instance, TextScorer& scorer) {
  if (!instance.ranked()) throw DomainError("ranking baselines need a ranked instance: " + instance.id);
  validate(instance);
  PredictionRecord record;
  record.instance_id = instance.id;
  record.method = scorer.method();
  record.task = instance.task;
  record.backend_id = scorer.id();
  record.timestamp = utc_timestamp();

  std::vector<double> scores;
  try {
    for (const auto& h : instance.hypotheses) {
      const double s = scorer.score(instance.premise, h.text);
      if (!std::isfinite(s)) throw BackendError("text scorer returned a non-finite score");
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

GoldEchoLabeler::GoldEchoLabeler(const std::vector<NLIInstance>& instances, std::string id) : id_(std::move(id)) {
  for (const auto& inst : instances) {
    for (const auto& h : inst.hypotheses) {
      gold_.emplace(h.text, h.gold == Label::NonEntailment ? Label::Contradiction : h.gold);
    }
  }
}

Label GoldEchoLabeler::label(std::string_view, std::string_view hypothesis) {
  const auto it = gold_.find(std::string(hypothesis));
  if (it == gold_.end()) throw BackendError("gold-echo labeler has no entry for '" + std::string(hypothesis) + "'");
  return it->second;
}

Label external_nli_label(std::string_view premise, std::string_view hypothesis, ExternalNliLabeler& labeler) {
  const Label label = labeler.label(premise, hypothesis);
  if (!belongs_to(label, Task::ThreeWay)) throw BackendError("external labeler returned a non three-way label");
  return label;
}

PredictionRecord external_nli_infer(const NLIInstance& instance, ExternalNliLabeler& labeler) {
  validate(instance);
  PredictionRecord record;
  record.instance_id = instance.id;
  record.method = Method::ExternalNLI;
  record.task = instance.task;
  record.backend_id = labeler.id();
  record.timestamp = utc_timestamp();
  try {
    for (const auto& h : instance.hypotheses) {
      Label l = external_nli_label(instance.premise, h.text, labeler);
      if (instance.task == Task::TwoWay && l != Label::Entailment) l = Label::NonEntailment;
      record.per_hypothesis.push_back({h.gold, l, std::nullopt});
    }
  } catch (const std::exception& e) {
    record.status = RecordStatus::Error;
    record.error = e.what();
    record.per_hypothesis.clear();
    for (const auto& h : instance.hypotheses) record.per_hypothesis.push_back({h.gold, std::nullopt, std::nullopt});
  }
  return record;
}

}  // namespace visnli
