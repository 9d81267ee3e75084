#include "visnli/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "visnli/errors.hpp"
#include "visnli/hashing.hpp"
#include "visnli/text.hpp"

namespace visnli {
namespace {

namespace fs = std::filesystem;

enum class Role { TTI, CSS, VQA, NSP, EmbCos, ExternalNLI };

std::string_view role_name(Role role) {
  switch (role) {
    case Role::TTI: return "tti";
    case Role::CSS: return "css";
    case Role::VQA: return "vqa";
    case Role::NSP: return "nsp";
    case Role::EmbCos: return "embcos";
    case Role::ExternalNLI: return "external_nli";
  }
  return "?";
}

const std::map<Role, std::vector<std::string_view>>& role_kinds() {
  static const std::map<Role, std::vector<std::string_view>> kinds = {
      {Role::TTI, {"mock-tti", "openai-images"}},
      {Role::CSS, {"mock-overlap", "mock-hash", "http-css"}},
      {Role::VQA, {"mock-vqa-gold", "mock-vqa-constant", "mock-vqa-uniform", "openai-chat"}},
      {Role::NSP, {"mock-nsp-gold", "mock-nsp-table", "http-nsp"}},
      {Role::EmbCos, {"mock-hashing-embedder", "http-embedder"}},
      {Role::ExternalNLI, {"mock-nli-gold", "mock-nli-constant", "http-nli"}},
  };
  return kinds;
}

std::optional<Role> role_of(Method method) {
  switch (method) {
    case Method::CSS: return Role::CSS;
    case Method::VQA: return Role::VQA;
    case Method::NSP: return Role::NSP;
    case Method::EmbCos: return Role::EmbCos;
    case Method::ExternalNLI: return Role::ExternalNLI;
    case Method::BLEU: return std::nullopt;
  }
  return std::nullopt;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  if (path.is_absolute() || base.empty()) return path;
  return base / path;
}

std::string param_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
  }
  fs::rename(tmp, path);
}

bool has_image_method(const RunConfig& config) {
  return std::any_of(config.methods.begin(), config.methods.end(),
                     [](const auto& m) { return is_image_method(m.first); });
}

std::vector<const NLIInstance*> ranked_of(const Partition& partition) {
  std::vector<const NLIInstance*> out;
  for (const auto& inst : partition.instances) {
    if (inst.ranked()) out.push_back(&inst);
  }
  return out;
}

PredictionRecord failed_record(const NLIInstance& inst, Method method, std::optional<int> image_index,
                               std::string backend_id, std::string error) {
  PredictionRecord r;
  r.instance_id = inst.id;
  r.image_index = image_index;
  r.method = method;
  r.task = inst.task;
  r.backend_id = std::move(backend_id);
  r.timestamp = utc_timestamp();
  r.status = RecordStatus::Error;
  r.error = std::move(error);
  for (const auto& h : inst.hypotheses) r.per_hypothesis.push_back({h.gold, std::nullopt, std::nullopt});
  return r;
}

std::string record_key(const std::string& instance_id, Method method, std::optional<int> image_index) {
  return instance_id + "|" + std::string(method_name(method)) + "|" +
         (image_index ? std::to_string(*image_index) : std::string("-"));
}

constexpr const char* kStageFile = "stage.json";

std::string stored_fingerprint(const fs::path& dir) {
  std::ifstream in(dir / kStageFile);
  if (!in) return {};
  try {
    return nlohmann::json::parse(in).value("config_fingerprint", "");
  } catch (const nlohmann::json::exception&) {
    return {};
  }
}

fs::path sibling_manifest(const fs::path& corpus) {
  fs::path m = corpus;
  m.replace_extension(".manifest.json");
  return m;
}

}  // namespace

bool is_network_kind(std::string_view kind) { return kind.rfind("mock-", 0) != 0; }

RunConfig parse_run_config(const nlohmann::json& j, const fs::path& base_dir) {
  RunConfig c;
  try {
    const auto& d = j.at("dataset");
    c.dataset.source_path = resolve(base_dir, d.value("source", ""));
    c.dataset.subset = parse_subset_filter(d.value("subset", "all"));
    if (d.contains("max_premises") && !d.at("max_premises").is_null()) {
      c.dataset.max_premises = d.at("max_premises").get<std::size_t>();
    }
    if (d.contains("task") && !d.at("task").is_null()) c.dataset.task = parse_task(d.at("task").get<std::string>());
    if (d.contains("membership")) {
      const auto& m = d.at("membership");
      if (m.is_string()) {
        c.membership_paths[c.dataset.subset] = resolve(base_dir, m.get<std::string>());
      } else {
        for (const auto& [name, p] : m.items()) {
          c.membership_paths[parse_subset_filter(name)] = resolve(base_dir, p.get<std::string>());
        }
      }
    }
    for (const auto& s : j.value("compare_subsets", std::vector<std::string>{})) {
      c.compare_subsets.push_back(parse_subset_filter(s));
    }
    c.uninformative_probe = j.value("uninformative_probe", false);
    c.images_per_premise = j.value("images_per_premise", 5);

    if (j.contains("tti")) {
      const auto& t = j.at("tti");
      c.tti_backend = t.value("backend", "");
      if (t.contains("params")) {
        for (const auto& [k, v] : t.at("params").items()) c.tti_params[k] = param_string(v);
      }
      c.allow_partial_images = t.value("allow_partial", false);
    }
    if (j.contains("methods")) {
      for (const auto& [name, backend] : j.at("methods").items()) {
        c.methods[parse_method(name)] = backend.is_string() ? backend.get<std::string>() : std::string();
      }
    }
    if (j.contains("backends")) {
      for (const auto& [id, b] : j.at("backends").items()) {
        BackendSpec spec;
        spec.id = id;
        spec.kind = b.at("kind").get<std::string>();
        spec.endpoint.base_url = b.value("base_url", "");
        spec.endpoint.api_key_env = b.value("api_key_env", "");
        spec.endpoint.timeout_seconds = b.value("timeout_s", 120);
        spec.endpoint.requests_per_second = b.value("rps", 0.0);
        spec.model = b.value("model", "");
        spec.path = b.value("path", "");
        spec.options = b.value("options", nlohmann::json::object());
        c.backends[id] = std::move(spec);
      }
    }
    if (j.contains("vqa")) {
      const auto& v = j.at("vqa");
      c.vqa_template = v.value("template", "");
      c.vqa_shuffle = v.value("shuffle", true);
      c.vqa_max_parse_retries = v.value("max_parse_retries", 1);
    }
    if (j.contains("bleu")) {
      c.bleu.max_order = j.at("bleu").value("max_order", 4);
      c.bleu.smoothing_k = j.at("bleu").value("smoothing_k", 1.0);
    }
    if (j.contains("aggregation")) {
      const auto& a = j.at("aggregation");
      if (a.contains("schemes")) {
        c.aggregation.schemes.clear();
        for (const auto& s : a.at("schemes")) c.aggregation.schemes.push_back(parse_scheme(s.get<std::string>()));
      }
      if (a.contains("thresholds")) {
        c.aggregation.thresholds.lower = a.at("thresholds").value("lower", -1.0 / 3.0);
        c.aggregation.thresholds.upper = a.at("thresholds").value("upper", 1.0 / 3.0);
      }
      c.aggregation.count_invalid_as_wrong = a.value("count_invalid_as_wrong", false);
      c.aggregation.allow_inconsistent_image_counts = a.value("allow_inconsistent_image_counts", false);
    }
    if (!j.contains("seeds") || !j.at("seeds").contains("run")) throw ConfigError("config needs seeds.run");
    const auto& seeds = j.at("seeds");
    c.seed = seeds.at("run").get<std::uint64_t>();
    c.dataset.seed = seeds.value("dataset", c.seed);
    c.aggregation.seed = seeds.value("aggregation", c.seed);

    if (j.contains("retry")) {
      const auto& r = j.at("retry");
      c.retry.max_attempts = r.value("max_attempts", 3);
      c.retry.base_backoff = std::chrono::milliseconds(r.value("base_backoff_ms", 200));
      c.retry.max_backoff = std::chrono::milliseconds(r.value("max_backoff_ms", 10'000));
    }
    for (auto& [id, spec] : c.backends) spec.endpoint.retry = c.retry;
    c.parallelism = j.value("parallelism", std::size_t{1});
    if (j.contains("rate_limits")) {
      c.tti_requests_per_second = j.at("rate_limits").value("tti_rps", 0.0);
      c.vqa_requests_per_second = j.at("rate_limits").value("vqa_rps", 0.0);
    }
    c.cache_root = resolve(base_dir, j.value("cache_root", "cache"));
    c.output_dir = resolve(base_dir, j.value("output_dir", "out"));
    c.offline = j.value("offline", false);

    if (j.contains("adversarial")) {
      const auto& a = j.at("adversarial");
      c.adversarial.lexicon_path = resolve(base_dir, a.value("lexicon", ""));
      c.adversarial.n_premises = a.value("n_premises", kDefaultAdversarialPremises);
      c.adversarial.seed = a.value("seed", kDefaultAdversarialSeed);
      c.adversarial.output_path = resolve(base_dir, a.value("output", "adversarial.jsonl"));
    } else {
      c.adversarial.output_path = resolve(base_dir, "adversarial.jsonl");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  } catch (const DomainError& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  const auto m = c.membership_paths.find(c.dataset.subset);
  if (m != c.membership_paths.end()) c.dataset.membership_path = m->second;
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

nlohmann::json run_config_json(const RunConfig& c) {
  nlohmann::json dataset = {{"source", c.dataset.source_path.string()},
                            {"subset", subset_filter_name(c.dataset.subset)}};
  if (c.dataset.max_premises) dataset["max_premises"] = *c.dataset.max_premises;
  if (c.dataset.task) dataset["task"] = task_name(*c.dataset.task);
  if (!c.membership_paths.empty()) {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [s, p] : c.membership_paths) m[std::string(subset_filter_name(s))] = p.string();
    dataset["membership"] = m;
  }
  std::vector<std::string> subsets;
  for (auto s : c.compare_subsets) subsets.emplace_back(subset_filter_name(s));
  nlohmann::json methods = nlohmann::json::object();
  for (const auto& [m, id] : c.methods) methods[std::string(method_name(m))] = id;
  nlohmann::json backends = nlohmann::json::object();
  for (const auto& [id, b] : c.backends) {
    nlohmann::json jb = {{"kind", b.kind}, {"options", b.options}};
    if (is_network_kind(b.kind)) {
      jb["base_url"] = b.endpoint.base_url;
      jb["api_key_env"] = b.endpoint.api_key_env;
      jb["timeout_s"] = b.endpoint.timeout_seconds;
      jb["rps"] = b.endpoint.requests_per_second;
      jb["model"] = b.model;
      jb["path"] = b.path;
    }
    backends[id] = jb;
  }
  std::vector<std::string> schemes;
  for (auto s : c.aggregation.schemes) schemes.emplace_back(scheme_name(s));
  return {{"dataset", dataset},
          {"compare_subsets", subsets},
          {"uninformative_probe", c.uninformative_probe},
          {"images_per_premise", c.images_per_premise},
          {"tti", {{"backend", c.tti_backend}, {"params", c.tti_params}, {"allow_partial", c.allow_partial_images}}},
          {"methods", methods},
          {"backends", backends},
          {"vqa",
           {{"template", c.vqa_template}, {"shuffle", c.vqa_shuffle}, {"max_parse_retries", c.vqa_max_parse_retries}}},
          {"bleu", {{"max_order", c.bleu.max_order}, {"smoothing_k", c.bleu.smoothing_k}}},
          {"aggregation",
           {{"schemes", schemes},
            {"thresholds", {{"lower", c.aggregation.thresholds.lower}, {"upper", c.aggregation.thresholds.upper}}},
            {"count_invalid_as_wrong", c.aggregation.count_invalid_as_wrong},
            {"allow_inconsistent_image_counts", c.aggregation.allow_inconsistent_image_counts}}},
          {"seeds", {{"run", c.seed}, {"dataset", c.dataset.seed}, {"aggregation", c.aggregation.seed}}},
          {"retry",
           {{"max_attempts", c.retry.max_attempts},
            {"base_backoff_ms", c.retry.base_backoff.count()},
            {"max_backoff_ms", c.retry.max_backoff.count()}}},
          {"parallelism", c.parallelism},
          {"rate_limits", {{"tti_rps", c.tti_requests_per_second}, {"vqa_rps", c.vqa_requests_per_second}}},
          {"cache_root", c.cache_root.string()},
          {"output_dir", c.output_dir.string()},
          {"offline", c.offline},
          {"adversarial",
           {{"lexicon", c.adversarial.lexicon_path.string()},
            {"n_premises", c.adversarial.n_premises},
            {"seed", c.adversarial.seed},
            {"output", c.adversarial.output_path.string()}}}};
}

void apply_override(nlohmann::json& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override must look like key.path=value: " + std::string(assignment));
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  nlohmann::json* node = &config;
  std::stringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) path.push_back(part);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    if (!node->is_object()) throw ConfigError("override path crosses a non-object at '" + path[i] + "'");
    node = &(*node)[path[i]];
    if (node->is_null()) *node = nlohmann::json::object();
  }
  if (!node->is_object()) throw ConfigError("override path crosses a non-object: " + key);
  (*node)[path.back()] = value;
}

void validate_config(const RunConfig& c) {
  if (c.images_per_premise < 1) throw ConfigError("images_per_premise must be >= 1");
  if (c.parallelism < 1) throw ConfigError("parallelism must be >= 1");
  if (c.vqa_max_parse_retries < 0) throw ConfigError("vqa.max_parse_retries must be >= 0");
  if (c.aggregation.thresholds.lower > c.aggregation.thresholds.upper) {
    throw ConfigError("aggregation thresholds need lower <= upper");
  }
  if (c.methods.empty()) throw ConfigError("config lists no methods");
  auto check = [&](const std::string& id, Role role) {
    const auto it = c.backends.find(id);
    if (it == c.backends.end()) {
      throw ConfigError(std::string(role_name(role)) + " backend '" + id + "' is not defined in backends");
    }
    const auto& kinds = role_kinds().at(role);
    if (std::find(kinds.begin(), kinds.end(), it->second.kind) == kinds.end()) {
      throw ConfigError("backend '" + id + "' of kind '" + it->second.kind + "' cannot serve as " +
                        std::string(role_name(role)));
    }
    if (c.offline && is_network_kind(it->second.kind)) {
      throw ConfigError("backend '" + id + "' needs the network but --offline is set");
    }
    if (is_network_kind(it->second.kind) && it->second.endpoint.base_url.empty()) {
      throw ConfigError("network backend '" + id + "' has no base_url");
    }
  };
  for (const auto& [method, id] : c.methods) {
    if (auto role = role_of(method)) check(id, *role);
  }
  if (has_image_method(c)) {
    if (c.tti_backend.empty()) throw ConfigError("image methods need tti.backend");
    check(c.tti_backend, Role::TTI);
  }
  if (!c.vqa_template.empty()) builtin_template(c.vqa_template);
  if (c.dataset.source_path.empty()) throw ConfigError("dataset.source is required");
}

std::string config_fingerprint(const RunConfig& config) {
  nlohmann::json j = run_config_json(config);
  for (const char* key : {"parallelism", "rate_limits", "cache_root", "output_dir", "offline", "adversarial", "retry"}) {
    j.erase(key);
  }
  // Only the file name of the corpus matters for identity; its content is
  // pinned by the partitions themselves.
  j["dataset"]["source"] = config.dataset.source_path.filename().string();
  if (j["dataset"].contains("membership")) {
    for (auto& [k, v] : j["dataset"]["membership"].items()) v = fs::path(v.get<std::string>()).filename().string();
  }
  return sha256_hex(j.dump());
}

BackendRegistry::BackendRegistry(const RunConfig& config, std::vector<NLIInstance> gold_source)
    : config_(config), gold_source_(std::move(gold_source)) {}

const BackendSpec& BackendRegistry::spec_for(Method method) const {
  const auto m = config_.methods.find(method);
  if (m == config_.methods.end()) throw ConfigError(std::string(method_name(method)) + " is not configured");
  const auto b = config_.backends.find(m->second);
  if (b == config_.backends.end()) throw ConfigError("backend '" + m->second + "' is not defined");
  return b->second;
}

TTIBackend& BackendRegistry::tti() {
  if (!tti_) {
    const auto it = config_.backends.find(config_.tti_backend);
    if (it == config_.backends.end()) throw ConfigError("tti backend '" + config_.tti_backend + "' is not defined");
    const auto& s = it->second;
    if (s.kind == "mock-tti") {
      tti_ = std::make_unique<MockTTIBackend>(s.id);
    } else if (s.kind == "openai-images") {
      tti_ = std::make_unique<OpenAiImagesBackend>(
          s.id, s.endpoint, s.model, s.options.value("forward_params", std::vector<std::string>{"size"}));
    } else {
      throw ConfigError("unknown tti kind '" + s.kind + "'");
    }
  }
  return *tti_;
}

ImageTextScorer& BackendRegistry::css() {
  if (!css_) {
    const auto& s = spec_for(Method::CSS);
    if (s.kind == "mock-overlap") {
      css_ = std::make_unique<TokenOverlapScorer>(s.id);
    } else if (s.kind == "mock-hash") {
      css_ = std::make_unique<HashScorer>(s.id);
    } else if (s.kind == "http-css") {
      css_ = std::make_unique<HttpImageTextScorer>(s.id, s.endpoint, s.path.empty() ? "/score" : s.path);
    } else {
      throw ConfigError("unknown css kind '" + s.kind + "'");
    }
  }
  return *css_;
}

VqaBackend& BackendRegistry::vqa() {
  if (!vqa_) {
    const auto& s = spec_for(Method::VQA);
    if (s.kind == "mock-vqa-gold") {
      vqa_ = std::make_unique<GoldEchoVqaBackend>(gold_source_, s.id);
    } else if (s.kind == "mock-vqa-constant") {
      vqa_ = std::make_unique<ConstantVqaBackend>(s.id, s.options.value("word", "neither"));
    } else if (s.kind == "mock-vqa-uniform") {
      vqa_ = std::make_unique<UniformRandomVqaBackend>(s.id, s.options.value("seed", config_.seed));
    } else if (s.kind == "openai-chat") {
      vqa_ = std::make_unique<OpenAiChatBackend>(s.id, s.endpoint, s.model, s.options.value("temperature", 0.0));
    } else {
      throw ConfigError("unknown vqa kind '" + s.kind + "'");
    }
  }
  return *vqa_;
}

TextScorer& BackendRegistry::text(Method method) {
  auto& slot = text_[method];
  if (slot) return *slot;
  switch (method) {
    case Method::BLEU:
      slot = std::make_unique<BleuScorer>(config_.bleu);
      break;
    case Method::NSP: {
      const auto& s = spec_for(method);
      if (s.kind == "mock-nsp-gold") {
        std::map<std::string, double> table;
        const double pe = s.options.value("entailment", 0.9);
        const double pn = s.options.value("neutral", 0.5);
        const double pc = s.options.value("contradiction", 0.1);
        for (const auto& inst : gold_source_) {
          for (const auto& h : inst.hypotheses) {
            table.emplace(h.text, h.gold == Label::Entailment ? pe : h.gold == Label::Neutral ? pn : pc);
          }
        }
        nsp_model_ = std::make_unique<TableNextSentenceModel>(s.id, std::move(table), s.options.value("fallback", 0.0));
      } else if (s.kind == "mock-nsp-table") {
        nsp_model_ = std::make_unique<TableNextSentenceModel>(
            s.id, s.options.value("table", std::map<std::string, double>{}), s.options.value("fallback", 0.0));
      } else if (s.kind == "http-nsp") {
        nsp_model_ = std::make_unique<HttpNextSentenceModel>(s.id, s.endpoint, s.path.empty() ? "/next_prob" : s.path);
      } else {
        throw ConfigError("unknown nsp kind '" + s.kind + "'");
      }
      slot = std::make_unique<NspScorer>(*nsp_model_);
      break;
    }
    case Method::EmbCos: {
      const auto& s = spec_for(method);
      if (s.kind == "mock-hashing-embedder") {
        embedder_ = std::make_unique<HashingEmbedder>(s.id, s.options.value("dim", std::size_t{64}));
      } else if (s.kind == "http-embedder") {
        embedder_ = std::make_unique<HttpEmbedder>(s.id, s.endpoint, s.path.empty() ? "/embed" : s.path);
      } else {
        throw ConfigError("unknown embcos kind '" + s.kind + "'");
      }
      slot = std::make_unique<EmbCosScorer>(*embedder_);
      break;
    }
    default:
      throw ConfigError(std::string(method_name(method)) + " is not a text ranking method");
  }
  return *slot;
}

ExternalNliLabeler& BackendRegistry::external_nli() {
  if (!nli_) {
    const auto& s = spec_for(Method::ExternalNLI);
    if (s.kind == "mock-nli-gold") {
      nli_ = std::make_unique<GoldEchoLabeler>(gold_source_, s.id);
    } else if (s.kind == "mock-nli-constant") {
      nli_ = std::make_unique<ConstantLabeler>(s.id, parse_label(s.options.value("label", "neutral")));
    } else if (s.kind == "http-nli") {
      nli_ = std::make_unique<HttpNliLabeler>(s.id, s.endpoint, s.path.empty() ? "/nli" : s.path);
    } else {
      throw ConfigError("unknown external_nli kind '" + s.kind + "'");
    }
  }
  return *nli_;
}

std::vector<Partition> load_partitions(const RunConfig& config) {
  std::vector<SubsetFilter> subsets = config.compare_subsets;
  if (subsets.empty()) subsets.push_back(config.dataset.subset);
  std::vector<Partition> out;
  for (SubsetFilter s : subsets) {
    DatasetSpec spec = config.dataset;
    spec.subset = s;
    const auto m = config.membership_paths.find(s);
    spec.membership_path = m == config.membership_paths.end() ? fs::path{} : m->second;
    auto loaded = load_instances(spec);
    out.push_back({std::string(subset_filter_name(s)), std::move(loaded.instances), loaded.stats});
  }
  if (config.uninformative_probe) {
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back({"uninformative/" + out[i].name, make_uninformative(out[i].instances), out[i].stats});
    }
  }
  return out;
}

fs::path partition_dir(const RunConfig& config, const Partition& partition) {
  return config.output_dir / "partitions" / partition.name;
}

void write_jsonl(const fs::path& path, const std::vector<nlohmann::json>& rows) {
  std::string text;
  for (const auto& r : rows) {
    text += r.dump();
    text += '\n';
  }
  write_text(path, text);
}

std::vector<nlohmann::json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

std::map<std::string, ImageSet> read_image_sets(const fs::path& path) {
  std::map<std::string, ImageSet> out;
  for (const auto& row : read_jsonl(path)) {
    auto set = row.get<ImageSet>();
    out[set.premise_id] = std::move(set);
  }
  return out;
}

std::vector<PredictionRecord> read_predictions(const fs::path& path) {
  std::vector<PredictionRecord> out;
  for (const auto& row : read_jsonl(path)) out.push_back(row.get<PredictionRecord>());
  return out;
}

std::map<std::string, ImageSet> stage_images(const RunConfig& config, const Partition& partition,
                                             BackendRegistry& registry) {
  std::map<std::string, ImageSet> out;
  const fs::path dir = partition_dir(config, partition);
  if (!has_image_method(config)) return out;

  const auto ranked = ranked_of(partition);
  // Premises shared by several instances (the uninformative probe) are rendered once.
  std::vector<const NLIInstance*> unique;
  std::map<std::string, std::size_t> slot_of_premise;
  for (const auto* inst : ranked) {
    if (slot_of_premise.emplace(inst->premise, unique.size()).second) unique.push_back(inst);
  }
  TTIBackend& backend = registry.tti();
  const ImageCache cache(config.cache_root);
  RateLimiter limiter(config.tti_requests_per_second);
  GenerateOptions options;
  options.retry = config.retry;
  options.allow_partial = config.allow_partial_images;
  options.limiter = &limiter;

  std::vector<ImageSet> sets(unique.size());
  parallel_for(unique.size(), config.parallelism, [&](std::size_t i) {
    sets[i] = generate_images(*unique[i], config.images_per_premise, backend, config.tti_params, cache, options);
  });

  std::vector<nlohmann::json> rows;
  for (const auto* inst : ranked) {
    ImageSet set = sets[slot_of_premise.at(inst->premise)];
    set.premise_id = inst->id;
    rows.emplace_back(set);
    out[inst->id] = std::move(set);
  }
  write_jsonl(dir / "images.jsonl", rows);
  return out;
}

std::vector<PredictionRecord> stage_infer(const RunConfig& config, const Partition& partition,
                                          const std::map<std::string, ImageSet>& images, BackendRegistry& registry,
                                          Transcript* transcript) {
  const fs::path dir = partition_dir(config, partition);
  const std::string fingerprint = config_fingerprint(config);
  const auto ranked = ranked_of(partition);

  std::map<std::string, PredictionRecord> previous;
  if (fs::exists(dir / "predictions.jsonl") && stored_fingerprint(dir) == fingerprint) {
    for (auto& r : read_predictions(dir / "predictions.jsonl")) {
      if (r.ok()) previous.emplace(record_key(r.instance_id, r.method, r.image_index), std::move(r));
    }
  }

  struct Job {
    const NLIInstance* instance;
    Method method;
    std::optional<int> image_index;
  };
  std::vector<Job> jobs;
  for (const auto* inst : ranked) {
    for (const auto& [method, id] : config.methods) {
      if (is_image_method(method)) {
        for (int k = 0; k < config.images_per_premise; ++k) jobs.push_back({inst, method, k});
      } else {
        jobs.push_back({inst, method, std::nullopt});
      }
    }
  }

  // Instantiate every backend before fanning out.
  for (const auto& [method, id] : config.methods) {
    switch (method) {
      case Method::CSS: registry.css(); break;
      case Method::VQA: registry.vqa(); break;
      case Method::ExternalNLI: registry.external_nli(); break;
      default: registry.text(method); break;
    }
  }
  const VqaTemplate* tmpl = config.vqa_template.empty() ? nullptr : &builtin_template(config.vqa_template);
  RateLimiter vqa_limiter(config.vqa_requests_per_second);
  VqaOptions vqa_options;
  vqa_options.tmpl = tmpl;
  vqa_options.shuffle_seed = config.seed;
  vqa_options.shuffle = config.vqa_shuffle;
  vqa_options.max_parse_retries = config.vqa_max_parse_retries;
  vqa_options.retry = config.retry;
  vqa_options.limiter = &vqa_limiter;
  vqa_options.transcript = transcript;

  std::vector<PredictionRecord> records(jobs.size());
  parallel_for(jobs.size(), config.parallelism, [&](std::size_t i) {
    const Job& job = jobs[i];
    const NLIInstance& inst = *job.instance;
    if (auto it = previous.find(record_key(inst.id, job.method, job.image_index)); it != previous.end()) {
      records[i] = it->second;
      return;
    }
    switch (job.method) {
      case Method::CSS:
      case Method::VQA: {
        const std::string backend_id =
            job.method == Method::CSS ? registry.css().id() : registry.vqa().id();
        const auto set = images.find(inst.id);
        if (set == images.end()) {
          records[i] = failed_record(inst, job.method, job.image_index, backend_id, "no image set for instance");
          return;
        }
        const auto& refs = set->second.images;
        const auto ref = std::find_if(refs.begin(), refs.end(),
                                      [&](const ImageRef& r) { return r.image_index == *job.image_index; });
        if (ref == refs.end()) {
          records[i] = failed_record(inst, job.method, job.image_index, backend_id, "image unavailable");
          return;
        }
        Bytes bytes;
        try {
          bytes = set->second.load(static_cast<std::size_t>(ref - refs.begin()));
        } catch (const std::exception& e) {
          records[i] = failed_record(inst, job.method, job.image_index, backend_id, e.what());
          return;
        }
        records[i] = job.method == Method::CSS ? css_infer(bytes, *job.image_index, inst, registry.css())
                                               : vqa_infer(bytes, *job.image_index, inst, registry.vqa(), vqa_options);
        return;
      }
      case Method::ExternalNLI:
        records[i] = external_nli_infer(inst, registry.external_nli());
        return;
      default:
        records[i] = rank_with_text_scorer(inst, registry.text(job.method));
        return;
    }
  });

  std::vector<nlohmann::json> rows(records.begin(), records.end());
  write_jsonl(dir / "predictions.jsonl", rows);
  write_text(dir / kStageFile, nlohmann::json{{"config_fingerprint", fingerprint}}.dump(2) + "\n");
  return records;
}

std::vector<AggregatedLabel> stage_aggregate(const RunConfig& config, const Partition& partition,
                                             const std::vector<PredictionRecord>& records) {
  std::vector<AggregatedLabel> out;
  std::vector<nlohmann::json> rows;
  for (const auto& [method, id] : config.methods) {
    if (!is_image_method(method)) continue;
    std::vector<PredictionRecord> per_image;
    for (const auto& r : records) {
      if (r.method == method && r.image_index) per_image.push_back(r);
    }
    if (per_image.empty()) continue;
    for (auto& agg : aggregate_records(per_image, partition.instances, config.aggregation)) {
      rows.push_back({{"method", method_name(method)},
                      {"instance_id", agg.instance_id},
                      {"slot", label_name(agg.slot)},
                      {"scheme", scheme_name(agg.scheme)},
                      {"label", agg.label ? nlohmann::json(label_name(*agg.label)) : nlohmann::json(nullptr)},
                      {"images", agg.images}});
      out.push_back(std::move(agg));
    }
  }
  write_jsonl(partition_dir(config, partition) / "aggregated.jsonl", rows);
  return out;
}

EvalReport stage_evaluate(const RunConfig& config, const std::vector<Partition>& partitions,
                          const std::map<std::string, std::vector<PredictionRecord>>& records_by_partition) {
  EvalReport report;
  report.config_fingerprint = config_fingerprint(config);
  report.run_id = "run-" + report.config_fingerprint.substr(0, 12);
  EvaluateOptions options;
  options.aggregation = config.aggregation;
  options.images_per_premise = static_cast<std::size_t>(config.images_per_premise);

  std::size_t expected = 0, ok = 0;
  for (const auto& p : partitions) {
    static const std::vector<PredictionRecord> kNone;
    const auto it = records_by_partition.find(p.name);
    auto part = evaluate_partition(p.name, p.instances, it == records_by_partition.end() ? kNone : it->second, options);
    for (const auto& row : part.rows) {
      if (row.variant != "single" && row.variant != "text") continue;
      expected += row.expected_records;
      ok += row.records - row.parse_failures - row.errors;
    }
    for (const auto& [method, id] : config.methods) {
      const bool present = std::any_of(part.rows.begin(), part.rows.end(),
                                       [&](const MethodRow& r) { return r.method == method; });
      if (!present && part.instances > 0) {
        expected += part.instances * (is_image_method(method) ? options.images_per_premise : 1);
      }
    }
    report.partitions.push_back(std::move(part));
  }
  report.coverage = expected == 0 ? 1.0 : static_cast<double>(ok) / static_cast<double>(expected);
  report.deltas = subset_deltas(report.partitions);

  std::vector<std::string> schemes;
  for (auto s : config.aggregation.schemes) schemes.emplace_back(scheme_name(s));
  std::ostringstream thresholds;
  thresholds << config.aggregation.thresholds.lower << "," << config.aggregation.thresholds.upper;
  std::string scheme_list;
  for (const auto& s : schemes) scheme_list += (scheme_list.empty() ? "" : ",") + s;
  report.settings = {
      {"accuracy_unit", "hypothesis"},
      {"aggregation_schemes", scheme_list},
      {"average_thresholds", thresholds.str()},
      {"count_invalid_as_wrong", config.aggregation.count_invalid_as_wrong ? "true" : "false"},
      {"images_per_premise", std::to_string(config.images_per_premise)},
      {"invalid_policy", "excluded from denominators unless count_invalid_as_wrong"},
      {"multi_image_mean", "per_image_mean averages per-image accuracy"},
      {"seed", std::to_string(config.seed)},
      {"majority_tie_break", "seeded uniform over tied labels"},
      {"ranking_tie_break", "dataset slot order"},
      {"vqa_max_parse_retries", std::to_string(config.vqa_max_parse_retries)},
      {"vqa_template", config.vqa_template.empty() ? "task default" : config.vqa_template},
  };
  return report;
}

std::string report_json_text(const EvalReport& report) {
  nlohmann::json j = report;
  return j.dump(2) + "\n";
}

fs::path cmd_gen_adversarial(const RunConfig& config) {
  const auto& a = config.adversarial;
  const Lexicon lexicon = a.lexicon_path.empty() ? default_lexicon() : load_lexicon(a.lexicon_path);
  const auto instances = generate_adversarial(lexicon, a.n_premises, a.seed);
  write_corpus(a.output_path, instances);
  write_text(sibling_manifest(a.output_path),
             adversarial_manifest(lexicon, a.n_premises, a.seed, a.output_path).dump(2) + "\n");
  return a.output_path;
}

namespace {

void write_instances(const RunConfig& config, const Partition& p) {
  std::vector<nlohmann::json> rows(p.instances.begin(), p.instances.end());
  write_jsonl(partition_dir(config, p) / "instances.jsonl", rows);
}

std::vector<NLIInstance> all_instances(const std::vector<Partition>& partitions) {
  std::vector<NLIInstance> out;
  for (const auto& p : partitions) out.insert(out.end(), p.instances.begin(), p.instances.end());
  return out;
}

void write_report(const RunConfig& config, const EvalReport& report) {
  write_text(config.output_dir / "report.json", report_json_text(report));
  write_text(config.output_dir / "report.txt", render_table(report));
}

nlohmann::json stats_json(const LoadStats& s) {
  return {{"rows_read", s.rows_read},
          {"rows_used", s.rows_used},
          {"skipped_label", s.skipped_label},
          {"filtered_subset", s.filtered_subset},
          {"discarded_surplus", s.discarded_surplus},
          {"premises", s.premises},
          {"ranked_instances", s.ranked_instances},
          {"ranked_hypotheses", s.ranked_hypotheses},
          {"incomplete_premises", s.incomplete_premises},
          {"pairwise_instances", s.pairwise_instances},
          {"parse_errors", s.parse_errors.size()}};
}

std::unique_ptr<Transcript> open_transcript(const RunConfig& config) {
  if (!config.methods.contains(Method::VQA)) return nullptr;
  return std::make_unique<Transcript>(config.output_dir / "transcript.jsonl");
}

}  // namespace

void cmd_gen_images(const RunConfig& config) {
  validate_config(config);
  const auto partitions = load_partitions(config);
  BackendRegistry registry(config, all_instances(partitions));
  for (const auto& p : partitions) {
    write_instances(config, p);
    stage_images(config, p, registry);
  }
}

void cmd_infer(const RunConfig& config) {
  validate_config(config);
  const auto partitions = load_partitions(config);
  BackendRegistry registry(config, all_instances(partitions));
  auto transcript = open_transcript(config);
  for (const auto& p : partitions) {
    std::map<std::string, ImageSet> images;
    if (has_image_method(config)) {
      const fs::path path = partition_dir(config, p) / "images.jsonl";
      if (!fs::exists(path)) throw ConfigError("missing " + path.string() + "; run gen-images first");
      images = read_image_sets(path);
    }
    stage_infer(config, p, images, registry, transcript.get());
  }
}

void cmd_aggregate(const RunConfig& config) {
  validate_config(config);
  for (const auto& p : load_partitions(config)) {
    const fs::path path = partition_dir(config, p) / "predictions.jsonl";
    if (!fs::exists(path)) throw ConfigError("missing " + path.string() + "; run infer first");
    stage_aggregate(config, p, read_predictions(path));
  }
}

EvalReport cmd_evaluate(const RunConfig& config) {
  validate_config(config);
  const auto partitions = load_partitions(config);
  std::map<std::string, std::vector<PredictionRecord>> records;
  for (const auto& p : partitions) {
    const fs::path path = partition_dir(config, p) / "predictions.jsonl";
    if (!fs::exists(path)) throw ConfigError("missing " + path.string() + "; run infer first");
    records[p.name] = read_predictions(path);
  }
  auto report = stage_evaluate(config, partitions, records);
  write_report(config, report);
  return report;
}

EvalReport cmd_run(const RunConfig& config) {
  validate_config(config);
  const auto partitions = load_partitions(config);
  BackendRegistry registry(config, all_instances(partitions));
  auto transcript = open_transcript(config);
  std::map<std::string, std::vector<PredictionRecord>> records;
  nlohmann::json partition_stats = nlohmann::json::array();
  for (const auto& p : partitions) {
    write_instances(config, p);
    const auto images = stage_images(config, p, registry);
    auto recs = stage_infer(config, p, images, registry, transcript.get());
    stage_aggregate(config, p, recs);
    records[p.name] = std::move(recs);
    partition_stats.push_back({{"name", p.name}, {"instances", p.instances.size()}, {"load", stats_json(p.stats)}});
  }
  auto report = stage_evaluate(config, partitions, records);
  write_report(config, report);

  nlohmann::json config_doc = run_config_json(config);
  nlohmann::json manifest = {{"run_id", report.run_id},
                             {"config_fingerprint", report.config_fingerprint},
                             {"config", config_doc},
                             {"partitions", partition_stats},
                             {"coverage", report.coverage}};
  write_text(config.output_dir / "manifest.json", manifest.dump(2) + "\n");
  return report;
}

}  // namespace visnli
