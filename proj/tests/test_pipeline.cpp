#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "visnli/dataset.hpp"
#include "visnli/errors.hpp"
#include "visnli/pipeline.hpp"

#include "support.hpp"

using namespace visnli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Six premises, three easy and three hard.
fs::path write_dataset(const visnli::testing::TempDir& dir) {
  std::vector<json> rows;
  for (int i = 0; i < 6; ++i) {
    const std::string k = std::to_string(i), hard = i % 2 ? "hard" : "easy";
    const std::string p = "Scene " + k + " shows people outdoors.";
    rows.push_back(visnli::testing::snli_row("c" + k, p, "People are outside " + k + ".", "entailment", hard));
    rows.push_back(visnli::testing::snli_row("c" + k, p, "People wait for a bus " + k + ".", "neutral", hard));
    rows.push_back(visnli::testing::snli_row("c" + k, p, "Nobody is outside " + k + ".", "contradiction", hard));
  }
  const auto path = dir / "data.jsonl";
  visnli::testing::write_lines(path, rows);
  return path;
}

const json kAllMethods = {{"css", "overlap"},   {"vqa", "vqa-gold"}, {"bleu", nullptr},
                          {"nsp", "nsp"},       {"emb_cos", "embedder"}, {"external_nli", "nli"}};

double overall(const EvalReport& r, const std::string& partition, Method m, const std::string& variant) {
  for (const auto& p : r.partitions) {
    if (p.name != partition) continue;
    for (const auto& row : p.rows) {
      if (row.method == m && row.variant == variant) return row.cell.overall.value_or(-1.0);
    }
  }
  ADD_FAILURE() << "no row " << partition << " " << method_name(m) << " " << variant;
  return -1.0;
}

}  // namespace

TEST(Config, ParseAndDefaults) {
  visnli::testing::TempDir dir;
  json doc = visnli::testing::mock_config("data.jsonl", "out", "cache", kAllMethods);
  doc["seeds"] = {{"run", 5}, {"aggregation", 9}};
  const auto c = parse_run_config(doc, dir.path());
  EXPECT_EQ(c.dataset.source_path, dir / "data.jsonl");
  EXPECT_EQ(c.output_dir, dir / "out");
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.dataset.seed, 5u);
  EXPECT_EQ(c.aggregation.seed, 9u);
  EXPECT_EQ(c.methods.size(), 6u);
  EXPECT_EQ(c.methods.at(Method::EmbCos), "embedder");
  EXPECT_EQ(c.tti_params.at("seed"), "3");
  EXPECT_NO_THROW(validate_config(c));

  doc.erase("seeds");
  EXPECT_THROW(parse_run_config(doc, dir.path()), ConfigError);
}

TEST(Config, Overrides) {
  json doc = {{"vqa", {{"shuffle", true}}}};
  apply_override(doc, "vqa.shuffle=false");
  apply_override(doc, "dataset.subset=hard");
  apply_override(doc, "aggregation.thresholds.lower=-0.5");
  EXPECT_EQ(doc["vqa"]["shuffle"], false);
  EXPECT_EQ(doc["dataset"]["subset"], "hard");
  EXPECT_DOUBLE_EQ(doc["aggregation"]["thresholds"]["lower"].get<double>(), -0.5);
  EXPECT_THROW(apply_override(doc, "novalue"), ConfigError);
  EXPECT_THROW(apply_override(doc, "vqa.shuffle.x=1"), ConfigError);
}

TEST(Config, ValidationErrors) {
  visnli::testing::TempDir dir;
  const json base = visnli::testing::mock_config(dir / "d.jsonl", dir / "o", dir / "c", kAllMethods);
  auto expect_invalid = [&](const std::function<void(json&)>& edit) {
    json doc = base;
    edit(doc);
    EXPECT_THROW(validate_config(parse_run_config(doc, dir.path())), ConfigError) << doc.dump();
  };
  expect_invalid([](json& d) { d["methods"]["css"] = "missing"; });
  expect_invalid([](json& d) { d["methods"]["css"] = "nsp"; });
  expect_invalid([](json& d) { d["methods"] = json::object(); });
  expect_invalid([](json& d) { d["images_per_premise"] = 0; });
  expect_invalid([](json& d) { d["parallelism"] = 0; });
  expect_invalid([](json& d) { d["aggregation"]["thresholds"] = {{"lower", 0.5}, {"upper", 0.1}}; });
  expect_invalid([](json& d) { d["tti"]["backend"] = ""; });
  expect_invalid([](json& d) {
    d["backends"]["remote"] = {{"kind", "http-css"}, {"base_url", "http://127.0.0.1:1"}};
    d["methods"]["css"] = "remote";
    d["offline"] = true;
  });
  expect_invalid([](json& d) {
    d["backends"]["remote"] = {{"kind", "openai-chat"}};
    d["methods"]["vqa"] = "remote";
  });
  expect_invalid([](json& d) { d["dataset"]["source"] = ""; });
}

TEST(Config, FingerprintIgnoresOperationalSettings) {
  visnli::testing::TempDir dir;
  const json base = visnli::testing::mock_config(dir / "d.jsonl", dir / "o", dir / "c", kAllMethods);
  const auto fp = config_fingerprint(parse_run_config(base, dir.path()));
  json other = base;
  other["parallelism"] = 7;
  other["output_dir"] = (dir / "elsewhere").string();
  other["cache_root"] = (dir / "c2").string();
  other["retry"]["max_attempts"] = 9;
  EXPECT_EQ(config_fingerprint(parse_run_config(other, dir.path())), fp);
  other["seeds"]["run"] = 43;
  EXPECT_NE(config_fingerprint(parse_run_config(other, dir.path())), fp);
}

TEST(Pipeline, RunIsDeterministicAndGoldEchoIsPerfect) {
  visnli::testing::TempDir dir;
  const auto data = write_dataset(dir);
  json doc = visnli::testing::mock_config(data, dir / "o1", dir / "cache", kAllMethods);
  doc["compare_subsets"] = {"easy", "hard"};
  doc["uninformative_probe"] = true;
  const auto c1 = parse_run_config(doc, dir.path());
  const auto r1 = cmd_run(c1);
  doc["output_dir"] = (dir / "o2").string();
  doc["parallelism"] = 1;
  const auto c2 = parse_run_config(doc, dir.path());
  cmd_run(c2);
  const auto a = visnli::testing::read_file_text(dir / "o1" / "report.json");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, visnli::testing::read_file_text(dir / "o2" / "report.json"));
  EXPECT_EQ(visnli::testing::read_file_text(dir / "o1" / "report.txt"), visnli::testing::read_file_text(dir / "o2" / "report.txt"));

  EXPECT_DOUBLE_EQ(r1.coverage, 1.0);
  EXPECT_EQ(r1.partitions.size(), 4u);
  for (const std::string p : {"easy", "hard"}) {
    EXPECT_DOUBLE_EQ(overall(r1, p, Method::VQA, "single"), 1.0);
    EXPECT_DOUBLE_EQ(overall(r1, p, Method::VQA, "majority"), 1.0);
    EXPECT_DOUBLE_EQ(overall(r1, p, Method::ExternalNLI, "text"), 1.0);
    EXPECT_DOUBLE_EQ(overall(r1, p, Method::NSP, "text"), 1.0);
  }
  EXPECT_FALSE(r1.deltas.empty());
  for (const auto& f : {"manifest.json", "transcript.jsonl", "partitions/easy/predictions.jsonl",
                        "partitions/uninformative/hard/aggregated.jsonl", "partitions/hard/images.jsonl"}) {
    EXPECT_TRUE(fs::exists(dir / "o1" / f)) << f;
  }
  const auto manifest = json::parse(visnli::testing::read_file_text(dir / "o1" / "manifest.json"));
  EXPECT_EQ(manifest.at("run_id"), r1.run_id);
}

TEST(Pipeline, ManifestHoldsNoSecrets) {
  visnli::testing::TempDir dir;
  const auto data = write_dataset(dir);
  ::setenv("VISNLI_TEST_SECRET", "sk-do-not-persist-123", 1);
  json doc = visnli::testing::mock_config(data, dir / "o", dir / "cache", {{"bleu", nullptr}});
  doc["backends"]["remote"] = {{"kind", "openai-chat"}, {"base_url", "http://127.0.0.1:1/v1"},
                               {"api_key_env", "VISNLI_TEST_SECRET"}};
  cmd_run(parse_run_config(doc, dir.path()));
  const auto manifest = visnli::testing::read_file_text(dir / "o" / "manifest.json");
  EXPECT_NE(manifest.find("VISNLI_TEST_SECRET"), std::string::npos);
  EXPECT_EQ(manifest.find("sk-do-not-persist-123"), std::string::npos);
  ::unsetenv("VISNLI_TEST_SECRET");
}

TEST(Pipeline, WarmCacheSkipsRendering) {
  visnli::testing::TempDir dir;
  const auto data = write_dataset(dir);
  const auto config = parse_run_config(visnli::testing::mock_config(data, dir / "o", dir / "cache", {{"css", "overlap"}}),
                                       dir.path());
  const auto partitions = load_partitions(config);
  ASSERT_EQ(partitions.size(), 1u);
  {
    BackendRegistry cold(config, partitions[0].instances);
    stage_images(config, partitions[0], cold);
    EXPECT_EQ(dynamic_cast<MockTTIBackend&>(cold.tti()).calls(), 6u * 5u);
  }
  BackendRegistry warm(config, partitions[0].instances);
  const auto images = stage_images(config, partitions[0], warm);
  EXPECT_EQ(dynamic_cast<MockTTIBackend&>(warm.tti()).calls(), 0u);
  EXPECT_EQ(images.size(), 6u);
  for (const auto& [id, set] : images) EXPECT_EQ(set.images.size(), 5u);
}

TEST(Pipeline, ConstantAnswerMatchesPrevalence) {
  visnli::testing::TempDir dir;
  const auto data = write_dataset(dir);
  json doc = visnli::testing::mock_config(data, dir / "o", dir / "cache", {{"vqa", "vqa-contra"}, {"external_nli", "nli-e"}});
  const auto r = cmd_run(parse_run_config(doc, dir.path()));
  EXPECT_NEAR(overall(r, "all", Method::VQA, "single"), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(overall(r, "all", Method::ExternalNLI, "text"), 1.0 / 3.0, 1e-12);
}

TEST(Pipeline, StageCommandsMatchRun) {
  visnli::testing::TempDir dir;
  const auto data = write_dataset(dir);
  json doc = visnli::testing::mock_config(data, dir / "staged", dir / "cache", kAllMethods);
  const auto staged = parse_run_config(doc, dir.path());
  EXPECT_THROW(cmd_infer(staged), ConfigError);
  cmd_gen_images(staged);
  cmd_infer(staged);
  cmd_aggregate(staged);
  cmd_evaluate(staged);
  doc["output_dir"] = (dir / "full").string();
  cmd_run(parse_run_config(doc, dir.path()));
  EXPECT_EQ(visnli::testing::read_file_text(dir / "staged" / "report.json"),
            visnli::testing::read_file_text(dir / "full" / "report.json"));
  // A second infer with the same fingerprint resumes from the stored predictions.
  const auto before = visnli::testing::read_file_text(dir / "staged" / "partitions" / "all" / "predictions.jsonl");
  cmd_infer(staged);
  EXPECT_EQ(visnli::testing::read_file_text(dir / "staged" / "partitions" / "all" / "predictions.jsonl"), before);
}

TEST(Pipeline, GenAdversarial) {
  visnli::testing::TempDir dir;
  json doc = {{"dataset", json::object()},
              {"seeds", {{"run", 0}}},
              {"adversarial", {{"output", (dir / "a.jsonl").string()}}}};
  const auto path = cmd_gen_adversarial(parse_run_config(doc, dir.path()));
  const auto first = visnli::testing::read_file_text(path);
  const auto manifest = visnli::testing::read_file_text(dir / "a.manifest.json");
  cmd_gen_adversarial(parse_run_config(doc, dir.path()));
  EXPECT_EQ(visnli::testing::read_file_text(path), first);
  EXPECT_EQ(visnli::testing::read_file_text(dir / "a.manifest.json"), manifest);
  EXPECT_EQ(read_jsonl(path).size(), 200u);

  doc["adversarial"]["n_premises"] = 1u << 30;
  EXPECT_THROW(cmd_gen_adversarial(parse_run_config(doc, dir.path())), CapacityError);
}
