#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "visnli/instance.hpp"

namespace visnli {

// Word lists for the "The [human] who [tv] the [animal] [iv]." template.
// Verbs are third-person singular; intransitive verbs are facial-expression
// actions that render reliably.
struct Lexicon {
  std::vector<std::string> human_nouns;
  std::vector<std::string> animal_nouns;
  std::vector<std::string> transitive_verbs;
  std::vector<std::string> intransitive_verbs;

  // Throws DomainError on empty lists, duplicates, multi-word entries or a
  // token shared between lists.
  void validate() const;
  std::uint64_t tuple_space() const;
};

// Lexicon shipped with this project; not taken from any published corpus.
const Lexicon& default_lexicon();

Lexicon load_lexicon(const std::filesystem::path& path);
void to_json(nlohmann::json& j, const Lexicon& lexicon);
void from_json(const nlohmann::json& j, Lexicon& lexicon);

struct AdversarialItem {
  std::string human;
  std::string animal;
  std::string transitive_verb;
  std::string intransitive_verb;

  std::string premise() const;
  std::string entailed() const;
  std::string non_entailed() const;
};

inline constexpr std::size_t kDefaultAdversarialPremises = 100;
inline constexpr std::uint64_t kDefaultAdversarialSeed = 20240917;

// Samples n distinct (human, animal, tv, iv) tuples without replacement and
// expands each into an entailed and a non-entailed pairwise instance, in
// that order. Throws CapacityError when the lexicon has fewer than n tuples.
std::vector<NLIInstance> generate_adversarial(const Lexicon& lexicon, std::size_t n_premises,
                                              std::uint64_t seed);

nlohmann::json adversarial_manifest(const Lexicon& lexicon, std::size_t n_premises, std::uint64_t seed,
                                    const std::filesystem::path& corpus_path);

}  // namespace visnli
