// Acceptance checks: one PASS/FAIL/SKIP line per criterion. Exit code is
// non-zero when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "visnli/adversarial.hpp"
#include "visnli/aggregation.hpp"
#include "visnli/baselines.hpp"
#include "visnli/bleu.hpp"
#include "visnli/dataset.hpp"
#include "visnli/errors.hpp"
#include "visnli/evaluation.hpp"
#include "visnli/label.hpp"
#include "visnli/pipeline.hpp"
#include "visnli/rng.hpp"
#include "visnli/text.hpp"
#include "visnli/vqa.hpp"

#include "support.hpp"

using namespace visnli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Pinned tolerances and budgets.
constexpr double kAlgebraBudgetS = 1.0;
constexpr double kAggregationBudgetS = 1.0;
constexpr double kGeneratorBudgetS = 5.0;
constexpr int kTieSeeds = 10'000;
constexpr double kTieTolerance = 0.02;
constexpr std::size_t kUniformInstances = 10'000;
constexpr double kUniformTolerance = 0.02;
constexpr double kLiveParseRate = 0.90;
constexpr std::size_t kLivePremises = 5;

constexpr Label E = Label::Entailment, N = Label::Neutral, C = Label::Contradiction;

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status = Status::Pass;
  std::string detail;
};

Outcome pass(std::string d) { return {Status::Pass, std::move(d)}; }
Outcome fail(std::string d) { return {Status::Fail, std::move(d)}; }
Outcome skip(std::string d) { return {Status::Skip, std::move(d)}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// Every tuple in labels^n.
std::vector<std::vector<Label>> all_tuples(const std::vector<Label>& labels, std::size_t n) {
  std::vector<std::vector<Label>> out = {{}};
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<std::vector<Label>> next;
    for (const auto& t : out) {
      for (Label l : labels) {
        auto u = t;
        u.push_back(l);
        next.push_back(std::move(u));
      }
    }
    out = std::move(next);
  }
  return out;
}

Outcome label_algebra() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t checked = 0;
  for (Task task : {Task::TwoWay, Task::ThreeWay}) {
    const auto labels = task_labels(task);
    const std::size_t n = labels.size();
    // Scores over {0..n-1}^n cover every strict order and every tie pattern.
    std::size_t combos = 1;
    for (std::size_t i = 0; i < n; ++i) combos *= n;
    for (std::size_t code = 0; code < combos; ++code) {
      std::vector<double> s(n);
      std::size_t c = code;
      for (auto& x : s) {
        x = static_cast<double>(c % n);
        c /= n;
      }
      const auto got = labels_from_ranking(s, task);
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t rank = 0;
        for (std::size_t j = 0; j < n; ++j) {
          if (s[j] > s[i] || (s[j] == s[i] && j < i)) ++rank;
        }
        if (got[i] != labels[rank]) return fail("ranking mismatch for task " + std::string(task_name(task)));
      }
      if (std::set<Label>(got.begin(), got.end()).size() != n) return fail("ranking is not a permutation");
      ++checked;
    }
    for (Label l : labels) {
      if (parse_label(label_name(l)) != l || !belongs_to(l, task)) return fail("label name round trip");
    }
  }
  if (label_value(E) != 1 || label_value(N) != 0 || label_value(C) != -1) return fail("label values");
  const double t = seconds_since(t0);
  if (t >= kAlgebraBudgetS) return fail("took " + fixed(t, 3) + " s");
  return pass(std::to_string(checked) + " score tuples, " + fixed(t, 3) + " s");
}

Outcome oracle_dominance() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto tuples = all_tuples({E, N, C}, 5);
  if (tuples.size() != 243) return fail("tuple enumeration");
  std::size_t checked = 0;
  for (const auto& t : tuples) {
    for (Label gold : {E, N, C}) {
      AggregationInput in{t, gold, derive_seed(17, std::to_string(checked))};
      const Label maj = aggregate_majority(in);
      const Label ora = aggregate_oracle(in);
      const bool gold_present = std::find(t.begin(), t.end(), gold) != t.end();
      if (maj == gold && ora != gold) return fail("oracle below majority");
      if (gold_present && ora != gold) return fail("oracle missed a present gold");
      if (!gold_present && ora != maj) return fail("oracle fallback differs from majority");
      ++checked;
    }
  }
  for (Label l : {E, N, C}) {
    AggregationInput in{std::vector<Label>(5, l), l == E ? C : E, 3};
    for (auto scheme : {AggregationScheme::Majority, AggregationScheme::Average, AggregationScheme::Oracle}) {
      if (aggregate(scheme, in) != l) return fail("unanimity fixed point broken for " + std::string(scheme_name(scheme)));
    }
  }
  const double t = seconds_since(t0);
  if (t >= kAggregationBudgetS) return fail("took " + fixed(t, 3) + " s");
  return pass(std::to_string(checked) + " (tuple, gold) cases + unanimity, " + fixed(t, 3) + " s");
}

Outcome average_mapping() {
  const auto tuples = all_tuples({E, N, C}, 5);
  std::size_t checked = 0;
  for (const auto& t : tuples) {
    int sum = 0;
    for (Label l : t) sum += label_value(l);
    const Label expected = 3 * sum > 5 ? E : (3 * sum < -5 ? C : N);
    const Label got = aggregate_average({t, std::nullopt, 0});
    if (got != expected) return fail("mean mapping wrong for sum " + std::to_string(sum));
    if (aggregate_average({t, std::nullopt, 99}) != got) return fail("not deterministic");
    auto p = t;
    std::sort(p.begin(), p.end());
    do {
      if (aggregate_average({p, std::nullopt, 0}) != got) return fail("not permutation invariant");
    } while (std::next_permutation(p.begin(), p.end()));
    ++checked;
  }
  return pass(std::to_string(checked) + " tuples total, deterministic, permutation invariant");
}

Outcome majority_tie() {
  const std::vector<Label> votes = {E, E, C, C, N};
  int e = 0, c = 0;
  for (int s = 0; s < kTieSeeds; ++s) {
    const Label l = aggregate_majority({votes, std::nullopt, derive_seed(static_cast<std::uint64_t>(s), "tie")});
    if (l == E) ++e;
    else if (l == C) ++c;
    else return fail("tie resolved to a non-tied label");
  }
  const double ratio = static_cast<double>(e) / kTieSeeds;
  const std::string d = "P(E) = " + fixed(ratio, 4) + " over " + std::to_string(kTieSeeds) + " seeds";
  return std::abs(ratio - 0.5) <= kTieTolerance ? pass(d) : fail(d);
}

std::multiset<std::string> token_bag(const std::string& s) {
  const auto t = tokenize(s);
  return {t.begin(), t.end()};
}

std::size_t overlap(const std::string& a, const std::string& b) {
  const auto x = token_bag(a), y = token_bag(b);
  std::vector<std::string> common;
  std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(common));
  return common.size();
}

bool contiguous(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

Outcome adversarial_generator() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto pairs = generate_adversarial(default_lexicon(), kDefaultAdversarialPremises, kDefaultAdversarialSeed);
  const double t = seconds_since(t0);
  std::set<std::string> premises;
  for (const auto& p : pairs) premises.insert(p.premise);
  if (premises.size() != 100 || pairs.size() != 200) {
    return fail(std::to_string(premises.size()) + " premises / " + std::to_string(pairs.size()) + " pairs");
  }
  for (std::size_t i = 0; i + 1 < pairs.size(); i += 2) {
    const auto& ent = pairs[i];
    const auto& non = pairs[i + 1];
    if (ent.premise != non.premise || ent.hypotheses[0].gold != E || non.hypotheses[0].gold != Label::NonEntailment) {
      return fail("pair layout at " + std::to_string(i));
    }
    if (overlap(ent.premise, ent.hypotheses[0].text) != overlap(non.premise, non.hypotheses[0].text)) {
      return fail("unequal token overlap for " + ent.premise);
    }
    const auto prem = tokenize(ent.premise);
    const auto e_tok = tokenize(ent.hypotheses[0].text), n_tok = tokenize(non.hypotheses[0].text);
    // "<noun> <iv>" is tokens 1..2 of "The <noun> <iv>."
    const std::vector<std::string> noun2_iv(n_tok.begin() + 1, n_tok.begin() + 3);
    const std::vector<std::string> noun1_iv(e_tok.begin() + 1, e_tok.begin() + 3);
    if (!contiguous(prem, noun2_iv)) return fail("noun2 iv not contiguous in " + ent.premise);
    if (contiguous(prem, noun1_iv)) return fail("noun1 iv contiguous in " + ent.premise);
  }
  if (t >= kGeneratorBudgetS) return fail("took " + fixed(t, 3) + " s");
  return pass("100 premises / 200 pairs, equal overlap, contiguity holds, " + fixed(t, 3) + " s");
}

Outcome bleu_trap() {
  const auto pairs = generate_adversarial(default_lexicon(), kDefaultAdversarialPremises, kDefaultAdversarialSeed);
  std::size_t trapped = 0, total = 0;
  for (std::size_t i = 0; i + 1 < pairs.size(); i += 2) {
    ++total;
    if (bleu_score(pairs[i].premise, pairs[i + 1].hypotheses[0].text) >
        bleu_score(pairs[i].premise, pairs[i].hypotheses[0].text)) {
      ++trapped;
    }
  }
  BleuScorer scorer;
  std::size_t ranked_wrong = 0;
  for (const auto& inst : group_ranked(pairs)) {
    if (rank_with_text_scorer(inst, scorer).predicted_for(E) == Label::NonEntailment) ++ranked_wrong;
  }
  const std::string d = std::to_string(trapped) + "/" + std::to_string(total) + " pairs score the non-entailed "
                        "hypothesis higher; ranking mislabels " + std::to_string(ranked_wrong) + "/" +
                        std::to_string(total);
  return trapped == total && ranked_wrong == total ? pass(d) : fail(d);
}

Outcome vqa_round_trip() {
  const auto& tmpl = default_template(Task::ThreeWay);
  const auto inst = testing::ranked3("rt", "A premise.", "Statement for E.", "Statement for N.", "Statement for C.");
  std::vector<int> order = {0, 1, 2};
  std::size_t cases = 0, failures = 0;
  do {
    const auto prompt = build_prompt(inst, tmpl, order);
    if (prompt_statements(prompt.rendered_text) != prompt.statements) ++failures;
    for (int mask = 0; mask < 27; ++mask) {
      std::vector<std::string> words;
      int m = mask;
      for (int shown : prompt.order) {
        std::string w(tmpl.word_for(inst.hypotheses[static_cast<std::size_t>(shown)].gold));
        const int style = m % 3;
        m /= 3;
        if (style == 1) std::transform(w.begin(), w.end(), w.begin(), ::toupper);
        if (style == 2) w[0] = static_cast<char>(std::toupper(w[0]));
        words.push_back(w);
      }
      const auto parsed = parse_response(format_answers(words, tmpl), 3, tmpl);
      ++cases;
      if (!parsed.ok()) {
        ++failures;
        continue;
      }
      for (std::size_t i = 0; i < 3; ++i) {
        if (parsed.labels[i] != inst.hypotheses[static_cast<std::size_t>(prompt.order[i])].gold) {
          ++failures;
          break;
        }
      }
    }
  } while (std::next_permutation(order.begin(), order.end()));
  const std::string d = std::to_string(cases) + " cases (6 orderings x 27 casings), " + std::to_string(failures) +
                        " failures";
  return cases == 6 * 27 && failures == 0 ? pass(d) : fail(d);
}

fs::path write_dataset(const fs::path& path, std::size_t premises) {
  std::vector<json> rows;
  rows.reserve(premises * 3);
  for (std::size_t i = 0; i < premises; ++i) {
    const std::string k = std::to_string(i), hard = i % 2 ? "hard" : "easy";
    const std::string p = "Scene " + k + " shows a person near a market.";
    rows.push_back(testing::snli_row("c" + k, p, "A person is outdoors " + k + ".", "entailment", hard));
    rows.push_back(testing::snli_row("c" + k, p, "A person buys fruit " + k + ".", "neutral", hard));
    rows.push_back(testing::snli_row("c" + k, p, "Nobody is there " + k + ".", "contradiction", hard));
  }
  testing::write_lines(path, rows);
  return path;
}

const MethodRow* find_row(const EvalReport& r, const std::string& partition, Method m, const std::string& variant) {
  for (const auto& p : r.partitions) {
    if (p.name != partition) continue;
    for (const auto& row : p.rows) {
      if (row.method == m && row.variant == variant) return &row;
    }
  }
  return nullptr;
}

Outcome pipeline_determinism() {
  testing::TempDir dir;
  const auto data = write_dataset(dir / "data.jsonl", 12);
  const json methods = {{"css", "overlap"}, {"vqa", "vqa-gold"}, {"bleu", nullptr},
                        {"nsp", "nsp"},     {"emb_cos", "embedder"}, {"external_nli", "nli"}};
  json doc = testing::mock_config(data, dir / "run1", dir / "cache1", methods);
  doc["compare_subsets"] = {"easy", "hard"};
  doc["uninformative_probe"] = true;
  cmd_run(parse_run_config(doc, dir.path()));
  doc["output_dir"] = (dir / "run2").string();
  doc["cache_root"] = (dir / "cache2").string();
  doc["parallelism"] = 1;
  cmd_run(parse_run_config(doc, dir.path()));
  for (const auto& f : {"report.json", "report.txt"}) {
    if (testing::read_file_text(dir / "run1" / f) != testing::read_file_text(dir / "run2" / f)) {
      return fail(std::string(f) + " differs between runs");
    }
  }
  return pass("report.json and report.txt byte-identical across two runs");
}

Outcome gold_echo_vqa() {
  testing::TempDir dir;
  const auto data = write_dataset(dir / "data.jsonl", 30);
  const json doc = testing::mock_config(data, dir / "out", dir / "cache", {{"vqa", "vqa-gold"}});
  const auto report = cmd_run(parse_run_config(doc, dir.path()));
  for (const std::string variant : {"single", "per_image_mean", "majority", "average", "oracle"}) {
    const auto* row = find_row(report, "all", Method::VQA, variant);
    if (!row || !row->cell.overall) return fail("missing VQA " + variant + " row");
    if (fixed(*row->cell.overall, 3) != "1.000") return fail(variant + " overall " + fixed(*row->cell.overall, 3));
    for (const auto& [label, acc] : row->cell.per_class) {
      if (!acc || fixed(*acc, 3) != "1.000") return fail(variant + " class " + std::string(label_code(label)));
    }
  }
  return pass("overall and per-class 1.000 for every VQA row");
}

Outcome uniform_vqa() {
  testing::TempDir dir;
  const auto data = write_dataset(dir / "data.jsonl", kUniformInstances);
  json doc = testing::mock_config(data, dir / "out", dir / "cache", {{"vqa", "vqa-uniform"}});
  doc["images_per_premise"] = 1;
  doc["parallelism"] = 1;
  const auto report = cmd_run(parse_run_config(doc, dir.path()));
  const auto* row = find_row(report, "all", Method::VQA, "single");
  if (!row || !row->cell.overall) return fail("missing VQA single row");
  const double acc = *row->cell.overall;
  const std::string d = "accuracy " + fixed(acc, 4) + " over " + std::to_string(report.partitions[0].instances) +
                        " instances";
  if (report.partitions[0].instances != kUniformInstances) return fail(d);
  return std::abs(acc - 1.0 / 3.0) <= kUniformTolerance ? pass(d) : fail(d);
}

Outcome bias_delta_exact() {
  const std::vector<std::tuple<double, double, std::string>> cases = {
      {51.4, 28.1, "-23.3"}, {42.0, 29.8, "-12.2"}, {45.5, 37.0, "-8.5"}};
  std::string detail;
  for (const auto& [easy, hard, want] : cases) {
    const double d = bias_delta(easy, hard);
    const std::string got = fixed(d, 1);
    if (got != want || std::abs(d - std::stod(want)) > 1e-9) return fail("(" + fixed(easy, 1) + ", " + fixed(hard, 1) + ") -> " + got);
    detail += (detail.empty() ? "" : ", ") + got;
  }
  return pass(detail);
}

Outcome uninformative_transform() {
  testing::TempDir dir;
  const auto path = write_dataset(dir / "data.jsonl", 50);
  DatasetSpec spec;
  spec.source_path = path;
  const auto loaded = load_instances(spec).ranked();
  const auto u = make_uninformative(loaded);
  if (u.size() != loaded.size() || loaded.empty()) return fail("instance count changed");
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u[i].premise != "Something is happening.") return fail("premise " + u[i].premise);
    if (u[i].hypotheses != loaded[i].hypotheses) return fail("hypotheses or golds changed for " + u[i].id);
  }
  return pass(std::to_string(u.size()) + " instances, premise replaced, golds unchanged");
}

// Runs only when VISNLI_LIVE_CONFIG names a config with network backends
// whose credentials are present.
Outcome live_smoke() {
  const char* cfg = std::getenv("VISNLI_LIVE_CONFIG");
  if (!cfg || !*cfg) return skip("VISNLI_LIVE_CONFIG not set");
  RunConfig config;
  try {
    config = load_run_config(cfg);
  } catch (const std::exception& e) {
    return fail(e.what());
  }
  if (config.offline) return skip("config is offline");
  if (!config.methods.contains(Method::VQA)) return fail("live config has no VQA method");
  for (const std::string id : {config.tti_backend, config.methods.at(Method::VQA)}) {
    const auto it = config.backends.find(id);
    if (it == config.backends.end()) return fail("backend " + id + " missing");
    const auto& env = it->second.endpoint.api_key_env;
    if (!env.empty() && !std::getenv(env.c_str())) return skip(env + " not set");
  }
  testing::TempDir dir;
  config.dataset.max_premises = kLivePremises;
  config.compare_subsets.clear();
  config.uninformative_probe = false;
  config.output_dir = dir / "out";
  EvalReport report;
  try {
    report = cmd_run(config);
  } catch (const BackendError& e) {
    return skip(std::string("network unavailable: ") + e.what());
  } catch (const std::exception& e) {
    return fail(e.what());
  }
  std::size_t records = 0, parse_failures = 0, errors = 0;
  for (const auto& p : report.partitions) {
    for (const auto& row : p.rows) {
      if (row.method != Method::VQA || row.variant != "single") continue;
      records += row.records;
      parse_failures += row.parse_failures;
      errors += row.errors;
    }
  }
  if (records == 0 || errors == records) return skip("no VQA exchange completed");
  const double rate = 1.0 - static_cast<double>(parse_failures) / static_cast<double>(records - errors);
  const std::string d = "parse success " + fixed(rate, 3) + " over " + std::to_string(records - errors) + " answers";
  return rate >= kLiveParseRate ? pass(d) : fail(d);
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"label-algebra-exhaustive", label_algebra},
      {"oracle-dominance-unanimity", oracle_dominance},
      {"average-mapping", average_mapping},
      {"majority-tie-ratio", majority_tie},
      {"adversarial-generator", adversarial_generator},
      {"bleu-trap", bleu_trap},
      {"vqa-round-trip", vqa_round_trip},
      {"pipeline-determinism", pipeline_determinism},
      {"pipeline-gold-echo", gold_echo_vqa},
      {"pipeline-uniform-random", uniform_vqa},
      {"bias-delta", bias_delta_exact},
      {"uninformative-transform", uninformative_transform},
      {"live-smoke", live_smoke},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
    if (o.status == Status::Fail) ++failed;
    std::cout << tag << " " << name << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
