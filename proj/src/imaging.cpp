#include "visnli/imaging.hpp"

#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "visnli/errors.hpp"
#include "visnli/prediction.hpp"

namespace visnli {
namespace {

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BackendError("cannot read " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::filesystem::create_directories(path.parent_path());
  std::ostringstream suffix;
  suffix << ".tmp." << std::this_thread::get_id() << "." << std::random_device{}();
  const auto tmp = path.string() + suffix.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw BackendError("cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw BackendError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

std::string params_fingerprint(const GenerationParams& params) {
  return sha256_hex(nlohmann::json(params).dump());
}

GenerationParams per_image_params(const GenerationParams& params, int image_index) {
  GenerationParams out = params;
  std::uint64_t base = 0;
  if (auto it = params.find("seed"); it != params.end()) base = std::stoull(it->second);
  out["seed"] = std::to_string(base + static_cast<std::uint64_t>(image_index));
  return out;
}

std::string cache_key(std::string_view premise_text, std::string_view backend_id, const GenerationParams& params,
                      int image_index) {
  const std::string fp = params_fingerprint(params);
  const std::string idx = std::to_string(image_index);
  return sha256_fields({"visnli-image-v1", premise_text, backend_id, fp, idx});
}

Bytes MockTTIBackend::render(std::string_view text, const GenerationParams& params) {
  ++calls_;
  const auto seed_it = params.find("seed");
  const std::string seed = seed_it == params.end() ? "0" : seed_it->second;
  std::string doc(kMockImageMagic);
  doc += "seed: " + seed + "\n";
  doc += "noise: " + sha256_fields({"mock-noise", text, seed}) + "\n";
  doc += "text: ";
  doc += text;
  doc += "\n";
  return to_bytes(doc);
}

std::optional<std::string> mock_image_text(std::span<const std::uint8_t> image) {
  const std::string doc = to_string(image);
  if (doc.rfind(kMockImageMagic, 0) != 0) return std::nullopt;
  const auto pos = doc.find("\ntext: ");
  if (pos == std::string::npos) return std::nullopt;
  std::string text = doc.substr(pos + 7);
  if (!text.empty() && text.back() == '\n') text.pop_back();
  return text;
}

ImageCache::ImageCache(std::filesystem::path root) : root_(std::move(root)) {}

std::filesystem::path ImageCache::image_path(std::string_view backend_id, std::string_view key) const {
  return root_ / std::string(backend_id) / std::string(key.substr(0, 2)) / (std::string(key) + ".img");
}

std::filesystem::path ImageCache::sidecar_path(std::string_view backend_id, std::string_view key) const {
  return root_ / std::string(backend_id) / std::string(key.substr(0, 2)) / (std::string(key) + ".json");
}

std::optional<Bytes> ImageCache::load(std::string_view backend_id, std::string_view key) const {
  const auto img = image_path(backend_id, key);
  const auto meta = sidecar_path(backend_id, key);
  if (!std::filesystem::exists(img) || !std::filesystem::exists(meta)) return std::nullopt;
  Bytes bytes = read_file(img);
  std::ifstream in(meta);
  nlohmann::json sidecar;
  try {
    sidecar = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
  if (sidecar.value("sha256", "") != sha256_hex(bytes)) return std::nullopt;
  return bytes;
}

void ImageCache::store(std::string_view backend_id, std::string_view key, std::span<const std::uint8_t> bytes,
                       const nlohmann::json& metadata) const {
  nlohmann::json sidecar = metadata;
  sidecar["key"] = key;
  sidecar["backend_id"] = backend_id;
  sidecar["sha256"] = sha256_hex(bytes);
  sidecar["bytes"] = bytes.size();
  // Image first: a sidecar only ever points at complete bytes.
  write_atomic(image_path(backend_id, key), bytes);
  write_atomic(sidecar_path(backend_id, key), to_bytes(sidecar.dump(2)));
}

Bytes ImageSet::load(std::size_t position) const {
  const auto& ref = images.at(position);
  Bytes bytes = read_file(ref.path);
  if (sha256_hex(bytes) != ref.sha256) throw BackendError("image hash mismatch for " + ref.path.string());
  return bytes;
}

void to_json(nlohmann::json& j, const ImageSet& set) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& ref : set.images) {
    images.push_back({{"image_index", ref.image_index},
                      {"cache_key", ref.cache_key},
                      {"path", ref.path.string()},
                      {"sha256", ref.sha256},
                      {"params", ref.params}});
  }
  j = {{"premise_id", set.premise_id},
       {"backend_id", set.backend_id},
       {"params_fingerprint", set.params_fingerprint},
       {"images", std::move(images)},
       {"missing", set.missing}};
}

void from_json(const nlohmann::json& j, ImageSet& set) {
  set.premise_id = j.at("premise_id").get<std::string>();
  set.backend_id = j.at("backend_id").get<std::string>();
  set.params_fingerprint = j.at("params_fingerprint").get<std::string>();
  set.images.clear();
  for (const auto& ji : j.at("images")) {
    ImageRef ref;
    ref.image_index = ji.at("image_index").get<int>();
    ref.cache_key = ji.at("cache_key").get<std::string>();
    ref.path = ji.at("path").get<std::string>();
    ref.sha256 = ji.at("sha256").get<std::string>();
    ref.params = ji.at("params").get<GenerationParams>();
    ref.from_cache = true;
    set.images.push_back(std::move(ref));
  }
  set.missing = j.value("missing", std::vector<int>{});
}

ImageSet generate_images(const NLIInstance& instance, int n, TTIBackend& backend, const GenerationParams& params,
                         const ImageCache& cache, const GenerateOptions& options) {
  if (n < 1) throw DomainError("images per premise must be >= 1");
  const std::string backend_id = backend.id();
  ImageSet set;
  set.premise_id = instance.id;
  set.backend_id = backend_id;
  set.params_fingerprint = params_fingerprint(params);

  std::vector<std::optional<ImageRef>> refs(static_cast<std::size_t>(n));
  std::vector<std::string> errors(static_cast<std::size_t>(n));
  const std::string premise_hash = sha256_hex(instance.premise);

  parallel_for(refs.size(), options.parallelism, [&](std::size_t i) {
    const int index = static_cast<int>(i);
    ImageRef ref;
    ref.image_index = index;
    ref.cache_key = cache_key(instance.premise, backend_id, params, index);
    ref.path = cache.image_path(backend_id, ref.cache_key);
    ref.params = per_image_params(params, index);
    if (auto cached = cache.load(backend_id, ref.cache_key)) {
      ref.sha256 = sha256_hex(*cached);
      ref.from_cache = true;
      refs[i] = std::move(ref);
      return;
    }
    try {
      Bytes bytes = with_retries(options.retry, [&] {
        if (options.limiter) options.limiter->acquire();
        Bytes out = backend.render(instance.premise, ref.params);
        if (out.empty()) throw BackendError("backend returned an empty image");
        return out;
      });
      nlohmann::json meta = {{"premise_sha256", premise_hash},
                             {"image_index", index},
                             {"params", ref.params},
                             {"params_fingerprint", set.params_fingerprint},
                             {"created", utc_timestamp()}};
      cache.store(backend_id, ref.cache_key, bytes, meta);
      ref.sha256 = sha256_hex(bytes);
      refs[i] = std::move(ref);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  std::string detail;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i]) {
      set.images.push_back(std::move(*refs[i]));
    } else {
      set.missing.push_back(static_cast<int>(i));
      detail += " [" + std::to_string(i) + "] " + errors[i] + ";";
    }
  }
  if (!set.missing.empty() && !options.allow_partial) {
    throw PartialImageSetError("premise " + instance.id + ": " + std::to_string(set.missing.size()) + " of " +
                                   std::to_string(n) + " images failed:" + detail,
                               set.missing);
  }
  return set;
}

}  // namespace visnli
