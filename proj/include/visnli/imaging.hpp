#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "visnli/concurrency.hpp"
#include "visnli/hashing.hpp"
#include "visnli/instance.hpp"

namespace visnli {

// Backend-specific generation settings (size, guidance, seed...). Ordered so
// that the fingerprint is independent of insertion order.
using GenerationParams = std::map<std::string, std::string>;

std::string params_fingerprint(const GenerationParams& params);

// Params actually sent for image `image_index`: the base "seed" (default 0)
// is offset by the index so each image of a premise is sampled differently.
GenerationParams per_image_params(const GenerationParams& params, int image_index);

// Content address of one image: SHA-256 over the length-prefixed fields.
std::string cache_key(std::string_view premise_text, std::string_view backend_id, const GenerationParams& params,
                      int image_index);

// Text-to-image contract shared by the mock and the network generators.
class TTIBackend {
 public:
  virtual ~TTIBackend() = default;

  virtual std::string id() const = 0;
  virtual Bytes render(std::string_view text, const GenerationParams& params) = 0;
  virtual bool is_network() const { return false; }
};

// Deterministic offline generator. The "image" is a small text document that
// embeds the premise, so mock scorers can read the premise back.
class MockTTIBackend : public TTIBackend {
 public:
  explicit MockTTIBackend(std::string id = "mock-tti") : id_(std::move(id)) {}

  std::string id() const override { return id_; }
  Bytes render(std::string_view text, const GenerationParams& params) override;

  std::size_t calls() const { return calls_.load(); }

 private:
  std::string id_;
  std::atomic<std::size_t> calls_{0};
};

inline constexpr std::string_view kMockImageMagic = "VISNLI-MOCK-IMAGE v1\n";

// Premise text embedded in a mock image, or nullopt for any other bytes.
std::optional<std::string> mock_image_text(std::span<const std::uint8_t> image);

// <root>/<backend_id>/<key[0:2]>/<key>.img with a <key>.json sidecar.
class ImageCache {
 public:
  explicit ImageCache(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path image_path(std::string_view backend_id, std::string_view key) const;
  std::filesystem::path sidecar_path(std::string_view backend_id, std::string_view key) const;

  // Returns the cached bytes if present and their hash matches the sidecar.
  std::optional<Bytes> load(std::string_view backend_id, std::string_view key) const;

  // Atomic write via rename; concurrent stores of the same key are idempotent.
  void store(std::string_view backend_id, std::string_view key, std::span<const std::uint8_t> bytes,
             const nlohmann::json& metadata) const;

 private:
  std::filesystem::path root_;
};

struct ImageRef {
  int image_index = 0;
  std::string cache_key;
  std::filesystem::path path;
  std::string sha256;
  GenerationParams params;
  bool from_cache = false;
};

struct ImageSet {
  std::string premise_id;
  std::string backend_id;
  std::string params_fingerprint;
  std::vector<ImageRef> images;  // ordered by image_index
  std::vector<int> missing;      // only non-empty with allow_partial

  Bytes load(std::size_t position) const;
};

void to_json(nlohmann::json& j, const ImageSet& set);
void from_json(const nlohmann::json& j, ImageSet& set);

struct GenerateOptions {
  RetryPolicy retry;
  bool allow_partial = false;
  std::size_t parallelism = 1;
  RateLimiter* limiter = nullptr;
};

// Returns n images for the premise, serving cache hits byte-identically and
// persisting new images before returning. Throws PartialImageSetError when
// some index still fails after retries, unless allow_partial is set.
ImageSet generate_images(const NLIInstance& instance, int n, TTIBackend& backend, const GenerationParams& params,
                         const ImageCache& cache, const GenerateOptions& options = {});

}  // namespace visnli
