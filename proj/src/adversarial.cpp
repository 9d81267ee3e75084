#include "visnli/adversarial.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "visnli/errors.hpp"
#include "visnli/hashing.hpp"
#include "visnli/rng.hpp"

namespace visnli {
namespace {

void check_list(const std::vector<std::string>& words, const char* name, std::set<std::string>& seen) {
  if (words.empty()) throw DomainError(std::string("lexicon list ") + name + " is empty");
  for (const auto& w : words) {
    if (w.empty() || !std::all_of(w.begin(), w.end(), [](unsigned char c) { return std::islower(c); })) {
      throw DomainError(std::string("lexicon entry '") + w + "' in " + name + " must be one lowercase word");
    }
    if (!seen.insert(w).second) throw DomainError("lexicon token '" + w + "' appears more than once");
  }
}

std::string item_id(std::size_t index) {
  std::ostringstream os;
  os << "adv-" << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

}  // namespace

void Lexicon::validate() const {
  std::set<std::string> seen;
  check_list(human_nouns, "human_nouns", seen);
  check_list(animal_nouns, "animal_nouns", seen);
  check_list(transitive_verbs, "transitive_verbs", seen);
  check_list(intransitive_verbs, "intransitive_verbs", seen);
  // "the"/"who" are template words; a lexicon entry equal to them would break overlap parity.
  for (const char* reserved : {"the", "who"}) {
    if (seen.contains(reserved)) throw DomainError(std::string("lexicon may not contain '") + reserved + "'");
  }
}

std::uint64_t Lexicon::tuple_space() const {
  return static_cast<std::uint64_t>(human_nouns.size()) * animal_nouns.size() * transitive_verbs.size() *
         intransitive_verbs.size();
}

const Lexicon& default_lexicon() {
  static const Lexicon lexicon{
      {"girl", "boy", "woman", "man", "child", "baby", "grandmother", "grandfather", "teenager", "toddler"},
      {"dog", "cat", "horse", "cow", "goat", "sheep", "rabbit", "pig", "duck", "monkey"},
      {"greets", "feeds", "hugs", "pets", "watches", "chases", "follows", "kisses", "holds", "touches"},
      {"laughs", "smiles", "cries", "frowns", "yawns", "screams", "grins", "sneezes"},
  };
  return lexicon;
}

void to_json(nlohmann::json& j, const Lexicon& lexicon) {
  j = {{"human_nouns", lexicon.human_nouns},
       {"animal_nouns", lexicon.animal_nouns},
       {"transitive_verbs", lexicon.transitive_verbs},
       {"intransitive_verbs", lexicon.intransitive_verbs}};
}

void from_json(const nlohmann::json& j, Lexicon& lexicon) {
  j.at("human_nouns").get_to(lexicon.human_nouns);
  j.at("animal_nouns").get_to(lexicon.animal_nouns);
  j.at("transitive_verbs").get_to(lexicon.transitive_verbs);
  j.at("intransitive_verbs").get_to(lexicon.intransitive_verbs);
}

Lexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open lexicon " + path.string());
  Lexicon lexicon = nlohmann::json::parse(in).get<Lexicon>();
  lexicon.validate();
  return lexicon;
}

std::string AdversarialItem::premise() const {
  return "The " + human + " who " + transitive_verb + " the " + animal + " " + intransitive_verb + ".";
}

std::string AdversarialItem::entailed() const { return "The " + human + " " + intransitive_verb + "."; }

std::string AdversarialItem::non_entailed() const { return "The " + animal + " " + intransitive_verb + "."; }

std::vector<NLIInstance> generate_adversarial(const Lexicon& lexicon, std::size_t n_premises,
                                              std::uint64_t seed) {
  if (n_premises == 0) throw DomainError("n_premises must be >= 1");
  lexicon.validate();
  const std::uint64_t space = lexicon.tuple_space();
  if (n_premises > space) {
    throw CapacityError("lexicon yields " + std::to_string(space) + " unique premises but " +
                            std::to_string(n_premises) + " were requested (short by " +
                            std::to_string(n_premises - space) + ")",
                        n_premises, space);
  }

  SeededRng rng(seed);
  std::vector<std::uint64_t> picks;
  picks.reserve(n_premises);
  if (n_premises * 2 > space) {
    std::vector<std::uint64_t> all(space);
    std::iota(all.begin(), all.end(), std::uint64_t{0});
    rng.shuffle(all.begin(), all.end());
    picks.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_premises));
  } else {
    std::unordered_set<std::uint64_t> used;
    while (picks.size() < n_premises) {
      const auto t = rng.uniform_index(space);
      if (used.insert(t).second) picks.push_back(t);
    }
  }

  std::vector<NLIInstance> out;
  out.reserve(2 * n_premises);
  for (std::size_t i = 0; i < picks.size(); ++i) {
    std::uint64_t t = picks[i];
    AdversarialItem item;
    item.intransitive_verb = lexicon.intransitive_verbs[t % lexicon.intransitive_verbs.size()];
    t /= lexicon.intransitive_verbs.size();
    item.transitive_verb = lexicon.transitive_verbs[t % lexicon.transitive_verbs.size()];
    t /= lexicon.transitive_verbs.size();
    item.animal = lexicon.animal_nouns[t % lexicon.animal_nouns.size()];
    t /= lexicon.animal_nouns.size();
    item.human = lexicon.human_nouns[t];

    const std::string id = item_id(i + 1);
    NLIInstance base;
    base.premise = item.premise();
    base.task = Task::TwoWay;
    base.form = InstanceForm::Pairwise;
    base.subset = SubsetTag::Adversarial;
    base.provenance = {{"premise_id", id},
                       {"noun1", item.human},
                       {"noun2", item.animal},
                       {"transitive_verb", item.transitive_verb},
                       {"intransitive_verb", item.intransitive_verb}};

    NLIInstance entailed = base;
    entailed.id = id + "/E";
    entailed.hypotheses = {{Label::Entailment, item.entailed(), id + "e"}};
    NLIInstance non_entailed = base;
    non_entailed.id = id + "/NE";
    non_entailed.hypotheses = {{Label::NonEntailment, item.non_entailed(), id + "n"}};
    out.push_back(std::move(entailed));
    out.push_back(std::move(non_entailed));
  }
  return out;
}

nlohmann::json adversarial_manifest(const Lexicon& lexicon, std::size_t n_premises, std::uint64_t seed,
                                    const std::filesystem::path& corpus_path) {
  std::ifstream in(corpus_path, std::ios::binary);
  std::ostringstream contents;
  contents << in.rdbuf();
  nlohmann::json m;
  m["generator"] = "adversarial_template_v1";
  m["template"] = "The [noun1] who [transitive_verb] the [noun2] [intransitive_verb].";
  m["seed"] = seed;
  m["n_premises"] = n_premises;
  m["n_pairs"] = 2 * n_premises;
  m["tuple_space"] = lexicon.tuple_space();
  m["lexicon"] = lexicon;
  m["corpus"] = corpus_path.filename().string();
  m["corpus_sha256"] = sha256_hex(contents.str());
  return m;
}

}  // namespace visnli
