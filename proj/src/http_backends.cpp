#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "visnli/http_backends.hpp"

#include <cstdlib>

#include "visnli/errors.hpp"
#include "visnli/hashing.hpp"

namespace visnli {
namespace {

// Splits "https://host:port/v1" into ("https://host:port", "/v1").
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path_start), prefix};
}

}  // namespace

JsonHttpClient::JsonHttpClient(HttpEndpoint endpoint)
    : endpoint_(std::move(endpoint)), limiter_(endpoint_.requests_per_second) {
  std::tie(host_, prefix_) = split_url(endpoint_.base_url);
}

nlohmann::json JsonHttpClient::post(const std::string& path, const nlohmann::json& body) {
  limiter_.acquire();
  httplib::Client client(host_);
  client.set_connection_timeout(endpoint_.timeout_seconds, 0);
  client.set_read_timeout(endpoint_.timeout_seconds, 0);
  client.set_write_timeout(endpoint_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!endpoint_.api_key_env.empty()) {
    const char* key = std::getenv(endpoint_.api_key_env.c_str());
    if (!key || !*key) throw BackendError("environment variable " + endpoint_.api_key_env + " is not set");
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const auto res = client.Post(prefix_ + path, headers, body.dump(), "application/json");
  if (!res) {
    throw BackendError("POST " + host_ + prefix_ + path + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw BackendError("POST " + host_ + prefix_ + path + " returned HTTP " + std::to_string(res->status) + ": " +
                       res->body.substr(0, 300));
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw BackendError("response from " + host_ + prefix_ + path + " is not JSON: " + e.what());
  }
}

std::string image_mime_type(std::span<const std::uint8_t> image) {
  if (image.size() >= 3 && image[0] == 0xFF && image[1] == 0xD8 && image[2] == 0xFF) return "image/jpeg";
  if (image.size() >= 4 && image[0] == 'R' && image[1] == 'I' && image[2] == 'F' && image[3] == 'F') {
    return "image/webp";
  }
  return "image/png";
}

OpenAiImagesBackend::OpenAiImagesBackend(std::string id, HttpEndpoint endpoint, std::string model,
                                         std::vector<std::string> forward_params)
    : id_(std::move(id)),
      client_(std::move(endpoint)),
      model_(std::move(model)),
      forward_params_(std::move(forward_params)) {}

Bytes OpenAiImagesBackend::render(std::string_view text, const GenerationParams& params) {
  nlohmann::json body = {{"model", model_}, {"prompt", text}, {"n", 1}, {"response_format", "b64_json"}};
  for (const auto& name : forward_params_) {
    const auto it = params.find(name);
    if (it == params.end()) continue;
    if (name == "seed") {
      body[name] = std::stoll(it->second);
    } else {
      body[name] = it->second;
    }
  }
  const auto response = client_.post("/images/generations", body);
  try {
    return base64_decode(response.at("data").at(0).at("b64_json").get<std::string>());
  } catch (const std::exception& e) {
    throw BackendError(id_ + ": malformed image response: " + e.what());
  }
}

OpenAiChatBackend::OpenAiChatBackend(std::string id, HttpEndpoint endpoint, std::string model, double temperature)
    : id_(std::move(id)), client_(std::move(endpoint)), model_(std::move(model)), temperature_(temperature) {}

std::string OpenAiChatBackend::chat(std::span<const std::uint8_t> image, std::string_view prompt) {
  const std::string data_url = "data:" + image_mime_type(image) + ";base64," + base64_encode(image);
  nlohmann::json content = nlohmann::json::array();
  content.push_back({{"type", "text"}, {"text", prompt}});
  content.push_back({{"type", "image_url"}, {"image_url", {{"url", data_url}}}});
  const nlohmann::json body = {{"model", model_},
                               {"temperature", temperature_},
                               {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})}};
  const auto response = client_.post("/chat/completions", body);
  try {
    return response.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const std::exception& e) {
    throw BackendError(id_ + ": malformed chat response: " + e.what());
  }
}

HttpImageTextScorer::HttpImageTextScorer(std::string id, HttpEndpoint endpoint, std::string path)
    : id_(std::move(id)), client_(std::move(endpoint)), path_(std::move(path)) {}

double HttpImageTextScorer::match(std::span<const std::uint8_t> image, std::string_view text) {
  const nlohmann::json body = {{"image_b64", base64_encode(image)}, {"text", text}};
  return with_retries(client_.endpoint().retry, [&] { return client_.post(path_, body).at("score").get<double>(); });
}

HttpNextSentenceModel::HttpNextSentenceModel(std::string id, HttpEndpoint endpoint, std::string path)
    : id_(std::move(id)), client_(std::move(endpoint)), path_(std::move(path)) {}

double HttpNextSentenceModel::next_prob(std::string_view first, std::string_view second) {
  const nlohmann::json body = {{"first", first}, {"second", second}};
  return with_retries(client_.endpoint().retry, [&] { return client_.post(path_, body).at("prob").get<double>(); });
}

HttpEmbedder::HttpEmbedder(std::string id, HttpEndpoint endpoint, std::string path)
    : id_(std::move(id)), client_(std::move(endpoint)), path_(std::move(path)) {}

std::vector<double> HttpEmbedder::embed(std::string_view text) {
  const nlohmann::json body = {{"text", text}};
  return with_retries(client_.endpoint().retry,
                      [&] { return client_.post(path_, body).at("embedding").get<std::vector<double>>(); });
}

HttpNliLabeler::HttpNliLabeler(std::string id, HttpEndpoint endpoint, std::string path)
    : id_(std::move(id)), client_(std::move(endpoint)), path_(std::move(path)) {}

Label HttpNliLabeler::label(std::string_view premise, std::string_view hypothesis) {
  const nlohmann::json body = {{"premise", premise}, {"hypothesis", hypothesis}};
  return with_retries(client_.endpoint().retry, [&] {
    return parse_label(client_.post(path_, body).at("label").get<std::string>());
  });
}

}  // namespace visnli
