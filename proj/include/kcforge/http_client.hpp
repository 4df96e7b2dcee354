#pragma once

#include <chrono>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <json.hpp>

#include "kcforge/chat.hpp"
#include "kcforge/embedding.hpp"
#include "kcforge/error.hpp"

namespace kcforge {

namespace detail {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path_prefix;
};

inline SplitUrl split_base_url(const std::string& base_url) {
  const std::size_t scheme = base_url.find("://");
  if (scheme == std::string::npos) {
    throw ValidationError("base URL must include a scheme: '" + base_url +
                          "'");
  }
  const std::size_t path = base_url.find('/', scheme + 3);
  SplitUrl split;
  if (path == std::string::npos) {
    split.origin = base_url;
  } else {
    split.origin = base_url.substr(0, path);
    split.path_prefix = base_url.substr(path);
    while (!split.path_prefix.empty() && split.path_prefix.back() == '/') {
      split.path_prefix.pop_back();
    }
  }
  return split;
}

inline bool retryable_status(int status) {
  return status == 429 || status >= 500;
}

// Exponential backoff with multiplicative jitter. The jitter only shapes
// wall-clock waits, never any artifact, so it may be non-deterministic.
inline std::chrono::milliseconds backoff_delay(
    std::chrono::milliseconds initial, int attempt) {
  thread_local std::mt19937_64 jitter_engine{std::random_device{}()};
  const double jitter =
      0.5 + static_cast<double>(jitter_engine() >> 11) * 0x1.0p-53;
  const double scaled = static_cast<double>(initial.count()) *
                        std::pow(2.0, attempt) * jitter;
  return std::chrono::milliseconds(static_cast<long long>(scaled));
}

// POSTs JSON with retries on transport failures, 429 and 5xx. Other HTTP
// errors and malformed bodies surface immediately.
template <typename MakeClient>
inline std::string post_json_with_retries(
    MakeClient&& make_client, const std::string& path,
    const std::string& body, int max_retries,
    std::chrono::milliseconds retry_initial_delay) {
  std::string last_error;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          backoff_delay(retry_initial_delay, attempt - 1));
    }
    auto client = make_client();
    httplib::Result result =
        client->Post(path, body, "application/json");
    if (!result) {
      last_error = "transport failure: " + httplib::to_string(result.error());
      continue;
    }
    if (result->status >= 200 && result->status < 300) {
      return result->body;
    }
    if (detail::retryable_status(result->status)) {
      last_error = "HTTP " + std::to_string(result->status);
      continue;
    }
    throw TransportError("HTTP " + std::to_string(result->status) + " from " +
                         path + ": " + result->body.substr(0, 500));
  }
  throw TransportError("request to " + path + " failed after " +
                       std::to_string(max_retries + 1) + " attempts; last: " +
                       last_error);
}

}  // namespace detail

// Chat-completions client for any OpenAI-compatible endpoint:
// POST {base_url}/chat/completions with {model, temperature, messages}.
class HttpChatClient : public ChatClient {
 public:
  HttpChatClient(LlmConfig config, std::string api_key)
      : config_(std::move(config)),
        api_key_(std::move(api_key)),
        url_(detail::split_base_url(config_.base_url)) {
    validate(config_);
  }

  std::string complete(const std::vector<ChatMessage>& messages) override {
    const nlohmann::json body = {{"model", config_.model},
                                 {"temperature", config_.temperature},
                                 {"messages", messages_to_json(messages)}};
    const std::string response = detail::post_json_with_retries(
        [this] { return make_client(); },
        url_.path_prefix + "/chat/completions", body.dump(),
        config_.max_retries, config_.retry_initial_delay);
    try {
      const nlohmann::json doc = nlohmann::json::parse(response);
      return doc.at("choices").at(0).at("message").at("content")
          .get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(std::string("unexpected chat-completion response: ") +
                            ex.what(),
                        response);
    }
  }

 private:
  std::unique_ptr<httplib::Client> make_client() const {
    auto client = std::make_unique<httplib::Client>(url_.origin);
    client->set_connection_timeout(config_.timeout);
    client->set_read_timeout(config_.timeout);
    client->set_write_timeout(config_.timeout);
    if (!api_key_.empty()) {
      client->set_bearer_token_auth(api_key_);
    }
    return client;
  }

  LlmConfig config_;
  std::string api_key_;
  detail::SplitUrl url_;
};

struct EmbeddingConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model;  // required; the toolkit ships no default
  int max_retries = 3;
  std::chrono::milliseconds timeout{30'000};
  std::chrono::milliseconds retry_initial_delay{1'000};
};

// Embeddings client: POST {base_url}/embeddings with {model, input: [...]},
// one vector per input in order.
class HttpEmbeddingClient : public EmbeddingClient {
 public:
  HttpEmbeddingClient(EmbeddingConfig config, std::string api_key)
      : config_(std::move(config)),
        api_key_(std::move(api_key)),
        url_(detail::split_base_url(config_.base_url)) {
    if (config_.model.empty()) {
      throw ValidationError("embedding model identifier is required");
    }
  }

  std::vector<EmbeddingVector> embed(
      const std::vector<std::string>& inputs) override {
    const nlohmann::json body = {{"model", config_.model}, {"input", inputs}};
    const std::string response = detail::post_json_with_retries(
        [this] { return make_client(); }, url_.path_prefix + "/embeddings",
        body.dump(), config_.max_retries, config_.retry_initial_delay);
    try {
      const nlohmann::json doc = nlohmann::json::parse(response);
      const auto& data = doc.at("data");
      std::vector<EmbeddingVector> out(inputs.size());
      if (data.size() != inputs.size()) {
        throw ContractError("embeddings endpoint returned " +
                            std::to_string(data.size()) + " vectors for " +
                            std::to_string(inputs.size()) + " inputs");
      }
      for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& entry = data[i];
        const std::size_t index =
            entry.contains("index") ? entry.at("index").get<std::size_t>() : i;
        if (index >= out.size()) {
          throw ContractError("embeddings endpoint returned index " +
                              std::to_string(index) + " out of range");
        }
        out[index].values =
            entry.at("embedding").get<std::vector<double>>();
      }
      std::size_t dim = 0;
      for (const auto& vector : out) {
        validate(vector);
        if (dim == 0) {
          dim = vector.dim();
        } else if (vector.dim() != dim) {
          throw ContractError(
              "embeddings endpoint returned mixed dimensions");
        }
      }
      return out;
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(std::string("unexpected embeddings response: ") +
                            ex.what(),
                        response);
    }
  }

 private:
  std::unique_ptr<httplib::Client> make_client() const {
    auto client = std::make_unique<httplib::Client>(url_.origin);
    client->set_connection_timeout(config_.timeout);
    client->set_read_timeout(config_.timeout);
    client->set_write_timeout(config_.timeout);
    if (!api_key_.empty()) {
      client->set_bearer_token_auth(api_key_);
    }
    return client;
  }

  EmbeddingConfig config_;
  std::string api_key_;
  detail::SplitUrl url_;
};

}  // namespace kcforge
