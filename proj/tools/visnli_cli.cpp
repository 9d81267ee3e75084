#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "visnli/errors.hpp"
#include "visnli/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct Overrides {
  std::string config_path;
  std::vector<std::string> assignments;
  std::string output_dir;
  std::string cache_root;
  std::string source;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_premises;
  std::optional<std::size_t> parallelism;
  bool offline = false;
};

std::string absolute(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

visnli::RunConfig build_config(const Overrides& o, bool config_required) {
  nlohmann::json doc = nlohmann::json::object();
  fs::path base = fs::current_path();
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw visnli::ConfigError("cannot read config " + o.config_path);
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw visnli::ConfigError("config " + o.config_path + " is not valid JSON: " + e.what());
    }
    base = fs::absolute(o.config_path).parent_path();
  } else if (config_required) {
    throw visnli::ConfigError("--config is required");
  }
  if (!doc.contains("dataset")) doc["dataset"] = nlohmann::json::object();
  if (!doc.contains("seeds") && !config_required) doc["seeds"] = {{"run", 0}};
  for (const auto& a : o.assignments) visnli::apply_override(doc, a);
  if (!o.output_dir.empty()) doc["output_dir"] = absolute(o.output_dir);
  if (!o.cache_root.empty()) doc["cache_root"] = absolute(o.cache_root);
  if (!o.source.empty()) doc["dataset"]["source"] = absolute(o.source);
  if (o.seed) doc["seeds"]["run"] = *o.seed;
  if (o.max_premises) doc["dataset"]["max_premises"] = *o.max_premises;
  if (o.parallelism) doc["parallelism"] = *o.parallelism;
  if (o.offline) doc["offline"] = true;
  return visnli::parse_run_config(doc, base);
}

void add_common(CLI::App* cmd, Overrides& o, bool config_required) {
  auto* opt = cmd->add_option("-c,--config", o.config_path, "JSON run config");
  if (config_required) opt->required();
  cmd->add_option("--set", o.assignments, "Override a config key, e.g. --set vqa.shuffle=false");
  cmd->add_option("--output-dir", o.output_dir, "Directory for stage artifacts and reports");
  cmd->add_option("--cache-root", o.cache_root, "Image cache directory");
  cmd->add_option("--source", o.source, "Dataset file (line-delimited JSON)");
  cmd->add_option("--seed", o.seed, "Run seed");
  cmd->add_option("--max-premises", o.max_premises, "Cap on premises loaded per subset");
  cmd->add_option("--parallelism", o.parallelism, "Worker threads per stage");
  cmd->add_flag("--offline", o.offline, "Refuse network backends");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visual NLI evaluation: text-to-image premises, CSS and VQA inference, aggregation, evaluation"};
  app.require_subcommand(1);

  Overrides o;
  auto* gen_images = app.add_subcommand("gen-images", "Generate or fetch cached premise images");
  auto* infer = app.add_subcommand("infer", "Run CSS, VQA and text baselines over generated images");
  auto* aggregate = app.add_subcommand("aggregate", "Aggregate per-image labels");
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions and write the report");
  auto* run = app.add_subcommand("run", "All stages end to end");
  for (auto* cmd : {gen_images, infer, aggregate, evaluate, run}) add_common(cmd, o, true);

  auto* gen_adv = app.add_subcommand("gen-adversarial", "Write the adversarial two-way corpus");
  add_common(gen_adv, o, false);
  std::string adv_out, lexicon;
  std::optional<std::size_t> adv_n;
  std::optional<std::uint64_t> adv_seed;
  gen_adv->add_option("-o,--out", adv_out, "Corpus path (a .manifest.json is written next to it)");
  gen_adv->add_option("--lexicon", lexicon, "Lexicon JSON; defaults to the built-in one");
  gen_adv->add_option("-n,--premises", adv_n, "Number of premises");
  gen_adv->add_option("--adv-seed", adv_seed, "Sampling seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_adv->parsed()) {
      if (!adv_out.empty()) o.assignments.push_back("adversarial.output=\"" + absolute(adv_out) + "\"");
      if (!lexicon.empty()) o.assignments.push_back("adversarial.lexicon=\"" + absolute(lexicon) + "\"");
      if (adv_n) o.assignments.push_back("adversarial.n_premises=" + std::to_string(*adv_n));
      if (adv_seed) o.assignments.push_back("adversarial.seed=" + std::to_string(*adv_seed));
      const auto config = build_config(o, false);
      const auto path = visnli::cmd_gen_adversarial(config);
      std::cout << "wrote " << path.string() << "\n";
      return 0;
    }
    const auto config = build_config(o, true);
    if (gen_images->parsed()) {
      visnli::cmd_gen_images(config);
    } else if (infer->parsed()) {
      visnli::cmd_infer(config);
    } else if (aggregate->parsed()) {
      visnli::cmd_aggregate(config);
    } else if (evaluate->parsed()) {
      std::cout << visnli::render_table(visnli::cmd_evaluate(config));
    } else if (run->parsed()) {
      std::cout << visnli::render_table(visnli::cmd_run(config));
    }
  } catch (const visnli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const visnli::CapacityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
