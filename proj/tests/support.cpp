#include "support.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "visnli/dataset.hpp"

namespace visnli::testing {

TempDir::TempDir() {
  std::string pattern = (std::filesystem::temp_directory_path() / "visnli-test-XXXXXX").string();
  if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
  path_ = pattern;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

NLIInstance ranked3(std::string id, std::string premise, std::string e, std::string n, std::string c) {
  NLIInstance inst;
  inst.id = std::move(id);
  inst.premise = std::move(premise);
  inst.hypotheses = {{Label::Entailment, std::move(e), ""},
                     {Label::Neutral, std::move(n), ""},
                     {Label::Contradiction, std::move(c), ""}};
  return inst;
}

NLIInstance ranked2(std::string id, std::string premise, std::string e, std::string ne) {
  NLIInstance inst;
  inst.id = std::move(id);
  inst.premise = std::move(premise);
  inst.task = Task::TwoWay;
  inst.hypotheses = {{Label::Entailment, std::move(e), ""}, {Label::NonEntailment, std::move(ne), ""}};
  return inst;
}

std::vector<NLIInstance> synthetic_instances(std::size_t n, const std::string& prefix) {
  std::vector<NLIInstance> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string k = prefix + std::to_string(i);
    out.push_back(ranked3(k, "Premise number " + k + " shows a scene.", "Entailed statement " + k + ".",
                          "Neutral statement " + k + ".", "Contradicting statement " + k + "."));
  }
  return out;
}

void write_lines(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
  std::ofstream out(path, std::ios::trunc);
  for (const auto& r : rows) out << r.dump() << "\n";
}

nlohmann::json snli_row(const std::string& caption, const std::string& premise, const std::string& hypothesis,
                        const std::string& gold, const std::string& hardness) {
  nlohmann::json j = {{"captionID", caption}, {"sentence1", premise}, {"sentence2", hypothesis}, {"gold_label", gold}};
  if (!hardness.empty()) j["hardness"] = hardness;
  return j;
}

nlohmann::json mock_config(const std::filesystem::path& source, const std::filesystem::path& out,
                           const std::filesystem::path& cache, const nlohmann::json& methods) {
  return {{"dataset", {{"source", source.string()}, {"subset", "all"}}},
          {"images_per_premise", 5},
          {"tti", {{"backend", "tti"}, {"params", {{"size", "256x256"}, {"seed", 3}}}}},
          {"methods", methods},
          {"backends",
           {{"tti", {{"kind", "mock-tti"}}},
            {"overlap", {{"kind", "mock-overlap"}}},
            {"hash", {{"kind", "mock-hash"}}},
            {"vqa-gold", {{"kind", "mock-vqa-gold"}}},
            {"vqa-uniform", {{"kind", "mock-vqa-uniform"}, {"options", {{"seed", 11}}}}},
            {"vqa-contra", {{"kind", "mock-vqa-constant"}, {"options", {{"word", "contradicting"}}}}},
            {"nsp", {{"kind", "mock-nsp-gold"}}},
            {"embedder", {{"kind", "mock-hashing-embedder"}}},
            {"nli", {{"kind", "mock-nli-gold"}}},
            {"nli-e", {{"kind", "mock-nli-constant"}, {"options", {{"label", "entailment"}}}}}}},
          {"seeds", {{"run", 42}}},
          {"retry", {{"max_attempts", 2}, {"base_backoff_ms", 1}, {"max_backoff_ms", 2}}},
          {"parallelism", 2},
          {"cache_root", cache.string()},
          {"output_dir", out.string()}};
}

std::string read_file_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace visnli::testing
