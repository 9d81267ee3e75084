#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "visnli/adversarial.hpp"
#include "visnli/dataset.hpp"
#include "visnli/errors.hpp"
#include "visnli/text.hpp"

#include "support.hpp"

using namespace visnli;
using visnli::testing::snli_row;

namespace {

// `total` premises of one hardness; premises listed in `incomplete` lack a
// contradiction hypothesis.
void append_subset(std::vector<nlohmann::json>& rows, const std::string& hardness, int total,
                   const std::set<int>& incomplete) {
  for (int i = 0; i < total; ++i) {
    const std::string cap = hardness + std::to_string(i);
    const std::string p = "Scene " + cap + " with people.";
    rows.push_back(snli_row(cap, p, "E " + cap, "entailment", hardness));
    rows.push_back(snli_row(cap, p, "N " + cap, "neutral", hardness));
    if (!incomplete.contains(i)) rows.push_back(snli_row(cap, p, "C " + cap, "contradiction", hardness));
    rows.push_back(snli_row(cap, p, "X " + cap, "-", hardness));
  }
}

std::size_t count_overlap(const std::string& premise, const std::string& hypothesis) {
  auto p = tokenize(premise);
  std::size_t n = 0;
  for (const auto& t : tokenize(hypothesis)) {
    const auto it = std::find(p.begin(), p.end(), t);
    if (it != p.end()) {
      ++n;
      p.erase(it);
    }
  }
  return n;
}

}  // namespace

TEST(Loader, TripleCompletionCountsPerSubset) {
  visnli::testing::TempDir dir;
  std::vector<nlohmann::json> rows;
  // Interleave hardness groups so truncation must count premises after filtering.
  std::set<int> easy_missing, hard_missing;
  for (int i : {3, 11, 19, 27, 40, 58, 77, 99}) easy_missing.insert(i);
  for (int i : {0, 20, 45, 71, 98}) hard_missing.insert(i);
  append_subset(rows, "easy", 120, easy_missing);
  append_subset(rows, "hard", 120, hard_missing);
  visnli::testing::write_lines(dir / "snli.jsonl", rows);

  DatasetSpec spec;
  spec.source_path = dir / "snli.jsonl";
  spec.max_premises = 100;
  spec.subset = SubsetFilter::Easy;
  auto easy = load_instances(spec);
  EXPECT_EQ(easy.stats.premises, 100u);
  EXPECT_EQ(easy.stats.ranked_instances, 92u);
  EXPECT_EQ(easy.stats.ranked_hypotheses, 276u);
  EXPECT_EQ(easy.ranked().size(), 92u);
  EXPECT_EQ(easy.stats.incomplete_premises, 8u);
  EXPECT_EQ(easy.stats.pairwise_instances, 16u);
  EXPECT_EQ(easy.stats.skipped_label, 240u);

  spec.subset = SubsetFilter::Hard;
  auto hard = load_instances(spec);
  EXPECT_EQ(hard.stats.ranked_instances, 95u);
  EXPECT_EQ(hard.stats.ranked_hypotheses, 285u);
  for (const auto& inst : hard.instances) {
    if (inst.ranked()) EXPECT_EQ(inst.subset, SubsetTag::Hard);
    if (!inst.ranked()) EXPECT_EQ(inst.provenance.at("incomplete"), "true");
  }
}

TEST(Loader, SurplusAndOrder) {
  visnli::testing::TempDir dir;
  visnli::testing::write_lines(dir / "d.jsonl", {snli_row("", "One premise.", "first", "entailment"),
                                         snli_row("", "One premise.", "second", "entailment")});
  DatasetSpec spec;
  spec.source_path = dir / "d.jsonl";
  auto r = load_instances(spec);
  ASSERT_EQ(r.instances.size(), 1u);
  EXPECT_EQ(r.instances[0].hypotheses.size(), 1u);
  EXPECT_EQ(r.instances[0].hypotheses[0].text, "first");
  EXPECT_EQ(r.stats.discarded_surplus, 1u);
  EXPECT_FALSE(r.instances[0].ranked());
}

TEST(Loader, ParseErrorsKeepGoing) {
  visnli::testing::TempDir dir;
  {
    std::ofstream out(dir / "d.jsonl");
    out << snli_row("a", "P one.", "e", "entailment").dump() << "\n";
    out << "{not json\n";
    out << snli_row("a", "P one.", "n", "neutral").dump() << "\n";
    out << nlohmann::json{{"sentence1", "x"}}.dump() << "\n";
    out << snli_row("a", "P one.", "c", "contradiction").dump() << "\n";
  }
  DatasetSpec spec;
  spec.source_path = dir / "d.jsonl";
  auto r = load_instances(spec);
  ASSERT_EQ(r.stats.parse_errors.size(), 2u);
  EXPECT_EQ(r.stats.parse_errors[0].line, 2u);
  EXPECT_EQ(r.stats.parse_errors[1].line, 4u);
  ASSERT_EQ(r.ranked().size(), 1u);
  EXPECT_EQ(r.ranked()[0].id, "a");
}

TEST(Loader, MembershipFileAndDeterminism) {
  visnli::testing::TempDir dir;
  std::vector<nlohmann::json> rows;
  for (const char* l : {"entailment", "neutral", "contradiction"}) {
    auto row = snli_row("c1", "P one.", std::string("h1 ") + l, l);
    row["pairID"] = std::string("c1") + l[0];
    rows.push_back(row);
    auto row2 = snli_row("c2", "P two.", std::string("h2 ") + l, l);
    row2["pairID"] = std::string("c2") + l[0];
    rows.push_back(row2);
  }
  visnli::testing::write_lines(dir / "d.jsonl", rows);
  {
    std::ofstream m(dir / "hard.txt");
    m << "c2e\nc2n\nc2c\n";
  }
  DatasetSpec spec;
  spec.source_path = dir / "d.jsonl";
  spec.subset = SubsetFilter::Hard;
  spec.membership_path = dir / "hard.txt";
  auto r = load_instances(spec);
  ASSERT_EQ(r.ranked().size(), 1u);
  EXPECT_EQ(r.ranked()[0].id, "c2");
  EXPECT_EQ(load_instances(spec).instances, r.instances);
}

TEST(Loader, MissingFileAndZeroCap) {
  DatasetSpec spec;
  spec.source_path = "/nonexistent/visnli.jsonl";
  EXPECT_THROW(load_instances(spec), ConfigError);
}

TEST(Uninformative, Transform) {
  auto insts = visnli::testing::synthetic_instances(3);
  insts[0].premise = "Three people shopping in a market";
  const auto u = make_uninformative(insts);
  ASSERT_EQ(u.size(), insts.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    EXPECT_EQ(u[i].premise, "Something is happening.");
    EXPECT_EQ(u[i].hypotheses, insts[i].hypotheses);
    EXPECT_EQ(u[i].provenance.at("original_premise"), insts[i].premise);
  }
  EXPECT_EQ(make_uninformative(u), u);
  EXPECT_TRUE(make_uninformative({}).empty());
}

TEST(Adversarial, TemplateExample) {
  AdversarialItem item{"girl", "dog", "greets", "laughs"};
  EXPECT_EQ(item.premise(), "The girl who greets the dog laughs.");
  EXPECT_EQ(item.entailed(), "The girl laughs.");
  EXPECT_EQ(item.non_entailed(), "The dog laughs.");
}

TEST(Adversarial, DefaultCorpusProperties) {
  const auto insts = generate_adversarial(default_lexicon(), kDefaultAdversarialPremises, kDefaultAdversarialSeed);
  ASSERT_EQ(insts.size(), 200u);
  std::set<std::string> premises;
  for (std::size_t i = 0; i < insts.size(); i += 2) {
    const auto& e = insts[i];
    const auto& ne = insts[i + 1];
    ASSERT_EQ(e.hypotheses[0].gold, Label::Entailment);
    ASSERT_EQ(ne.hypotheses[0].gold, Label::NonEntailment);
    EXPECT_EQ(e.premise, ne.premise);
    EXPECT_EQ(e.task, Task::TwoWay);
    premises.insert(e.premise);
    EXPECT_EQ(count_overlap(e.premise, e.hypotheses[0].text), count_overlap(e.premise, ne.hypotheses[0].text));
    const std::string noun1 = e.provenance.at("noun1"), noun2 = e.provenance.at("noun2");
    const std::string iv = e.provenance.at("intransitive_verb");
    EXPECT_NE(e.premise.find(noun2 + " " + iv), std::string::npos);
    EXPECT_EQ(e.premise.find(noun1 + " " + iv), std::string::npos);
  }
  EXPECT_EQ(premises.size(), 100u);
  EXPECT_EQ(generate_adversarial(default_lexicon(), 100, kDefaultAdversarialSeed), insts);
  EXPECT_NE(generate_adversarial(default_lexicon(), 100, kDefaultAdversarialSeed + 1), insts);
  EXPECT_EQ(group_ranked(insts).size(), 100u);
  EXPECT_TRUE(group_ranked(insts)[0].ranked());
}

TEST(Adversarial, CapacityError) {
  Lexicon small{{"girl", "boy"}, {"dog"}, {"greets"}, {"laughs", "smiles"}};
  EXPECT_EQ(small.tuple_space(), 4u);
  EXPECT_EQ(generate_adversarial(small, 4, 1).size(), 8u);
  try {
    generate_adversarial(small, 10, 1);
    FAIL() << "expected CapacityError";
  } catch (const CapacityError& e) {
    EXPECT_EQ(e.required(), 10u);
    EXPECT_EQ(e.available(), 4u);
    EXPECT_EQ(e.shortfall(), 6u);
  }
}

TEST(Adversarial, LexiconValidation) {
  EXPECT_NO_THROW(default_lexicon().validate());
  Lexicon shared{{"girl"}, {"girl"}, {"greets"}, {"laughs"}};
  EXPECT_THROW(shared.validate(), DomainError);
  Lexicon empty{{}, {"dog"}, {"greets"}, {"laughs"}};
  EXPECT_THROW(empty.validate(), DomainError);
  Lexicon multi{{"old man"}, {"dog"}, {"greets"}, {"laughs"}};
  EXPECT_THROW(multi.validate(), DomainError);
  EXPECT_THROW(generate_adversarial(default_lexicon(), 0, 1), DomainError);
}

TEST(Adversarial, CorpusRoundTrip) {
  visnli::testing::TempDir dir;
  const auto insts = generate_adversarial(default_lexicon(), 100, kDefaultAdversarialSeed);
  write_corpus(dir / "adv.jsonl", insts);
  DatasetSpec spec;
  spec.source_path = dir / "adv.jsonl";
  spec.subset = SubsetFilter::Adversarial;
  const auto loaded = load_instances(spec);
  ASSERT_EQ(loaded.ranked().size(), 100u);
  EXPECT_EQ(loaded.stats.rows_used, 200u);
  const auto grouped = group_ranked(insts);
  for (std::size_t i = 0; i < grouped.size(); ++i) {
    EXPECT_EQ(loaded.instances[i].id, grouped[i].id);
    EXPECT_EQ(loaded.instances[i].premise, grouped[i].premise);
    EXPECT_EQ(loaded.instances[i].hypotheses, grouped[i].hypotheses);
    EXPECT_EQ(loaded.instances[i].task, Task::TwoWay);
  }
  const auto manifest = adversarial_manifest(default_lexicon(), 100, kDefaultAdversarialSeed, dir / "adv.jsonl");
  EXPECT_EQ(manifest.at("n_pairs"), 200);
  EXPECT_EQ(manifest.at("seed"), kDefaultAdversarialSeed);
  nlohmann::json lj = default_lexicon();
  EXPECT_EQ(lj.get<Lexicon>().human_nouns, default_lexicon().human_nouns);
}
