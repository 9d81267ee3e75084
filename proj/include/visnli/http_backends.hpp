#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "visnli/baselines.hpp"
#include "visnli/concurrency.hpp"
#include "visnli/css.hpp"
#include "visnli/imaging.hpp"
#include "visnli/vqa.hpp"

namespace visnli {

struct HttpEndpoint {
  std::string base_url;     // scheme://host[:port][/prefix]
  std::string api_key_env;  // name of the env var holding a bearer token; empty for none
  int timeout_seconds = 120;
  double requests_per_second = 0.0;
  RetryPolicy retry;  // used by scorers that have no caller-side retry loop
};

// POSTs JSON and returns the parsed body. Any transport error or non-2xx
// status throws BackendError. The bearer token is read from the
// environment on every call and never stored.
class JsonHttpClient {
 public:
  explicit JsonHttpClient(HttpEndpoint endpoint);

  nlohmann::json post(const std::string& path, const nlohmann::json& body);
  const HttpEndpoint& endpoint() const { return endpoint_; }

 private:
  HttpEndpoint endpoint_;
  std::string host_;
  std::string prefix_;
  RateLimiter limiter_;
};

std::string image_mime_type(std::span<const std::uint8_t> image);

// OpenAI-compatible /images/generations with b64_json output.
class OpenAiImagesBackend : public TTIBackend {
 public:
  OpenAiImagesBackend(std::string id, HttpEndpoint endpoint, std::string model,
                      std::vector<std::string> forward_params = {"size"});

  std::string id() const override { return id_; }
  Bytes render(std::string_view text, const GenerationParams& params) override;
  bool is_network() const override { return true; }

 private:
  std::string id_;
  JsonHttpClient client_;
  std::string model_;
  std::vector<std::string> forward_params_;
};

// OpenAI-compatible /chat/completions with the image as a data URL.
class OpenAiChatBackend : public VqaBackend {
 public:
  OpenAiChatBackend(std::string id, HttpEndpoint endpoint, std::string model, double temperature = 0.0);

  std::string id() const override { return id_; }
  std::string chat(std::span<const std::uint8_t> image, std::string_view prompt) override;
  bool is_network() const override { return true; }

 private:
  std::string id_;
  JsonHttpClient client_;
  std::string model_;
  double temperature_;
};

// POST {path} {"image_b64", "text"} -> {"score"}.
class HttpImageTextScorer : public ImageTextScorer {
 public:
  HttpImageTextScorer(std::string id, HttpEndpoint endpoint, std::string path = "/score");

  std::string id() const override { return id_; }
  double match(std::span<const std::uint8_t> image, std::string_view text) override;
  bool is_network() const override { return true; }

 private:
  std::string id_;
  JsonHttpClient client_;
  std::string path_;
};

// POST {path} {"first", "second"} -> {"prob"}.
class HttpNextSentenceModel : public NextSentenceModel {
 public:
  HttpNextSentenceModel(std::string id, HttpEndpoint endpoint, std::string path = "/next_prob");

  std::string id() const override { return id_; }
  double next_prob(std::string_view first, std::string_view second) override;
  bool is_network() const override { return true; }

 private:
  std::string id_;
  JsonHttpClient client_;
  std::string path_;
};

// POST {path} {"text"} -> {"embedding": [...]}.
class HttpEmbedder : public Embedder {
 public:
  HttpEmbedder(std::string id, HttpEndpoint endpoint, std::string path = "/embed");

  std::string id() const override { return id_; }
  std::vector<double> embed(std::string_view text) override;
  bool is_network() const override { return true; }

 private:
  std::string id_;
  JsonHttpClient client_;
  std::string path_;
};

// POST {path} {"premise", "hypothesis"} -> {"label"}.
class HttpNliLabeler : public ExternalNliLabeler {
 public:
  HttpNliLabeler(std::string id, HttpEndpoint endpoint, std::string path = "/nli");

  std::string id() const override { return id_; }
  Label label(std::string_view premise, std::string_view hypothesis) override;
  bool is_network() const override { return true; }

 private:
  std::string id_;
  JsonHttpClient client_;
  std::string path_;
};

}  // namespace visnli
