#pragma once

#include <chrono>
#include <istream>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kcforge/cache.hpp"
#include "kcforge/error.hpp"
#include "kcforge/prompts.hpp"
#include "kcforge/types.hpp"

namespace kcforge {

enum class Role { kSystem, kUser, kAssistant };

inline const char* role_name(Role role) {
  switch (role) {
    case Role::kSystem:
      return "system";
    case Role::kUser:
      return "user";
    case Role::kAssistant:
      return "assistant";
  }
  throw ContractError("unknown chat role");
}

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;  // non-empty
};

inline bool operator==(const ChatMessage& a, const ChatMessage& b) {
  return a.role == b.role && a.content == b.content;
}

struct LlmConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model;
  double temperature = 0.0;
  int max_retries = 3;
  std::chrono::milliseconds timeout{30'000};
  // First retry waits this long; subsequent waits double, with jitter.
  std::chrono::milliseconds retry_initial_delay{1'000};
};

inline void validate(const LlmConfig& config) {
  if (config.max_retries < 0) {
    throw ValidationError("LlmConfig: max_retries must be >= 0");
  }
  if (config.timeout.count() <= 0) {
    throw ValidationError("LlmConfig: timeout must be positive");
  }
  if (config.temperature < 0.0) {
    throw ValidationError("LlmConfig: temperature must be >= 0");
  }
}

// A chat-completion backend: takes the whole conversation so far, returns
// the assistant's next message content.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
};

inline nlohmann::json messages_to_json(const std::vector<ChatMessage>& messages) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& message : messages) {
    if (message.content.empty()) {
      throw ValidationError("chat message content must be non-empty");
    }
    out.push_back({{"role", role_name(message.role)},
                   {"content", message.content}});
  }
  return out;
}

inline std::string chat_cache_key(const LlmConfig& config,
                                  const std::vector<ChatMessage>& messages) {
  nlohmann::json key = {{"kind", "chat"},
                        {"model", config.model},
                        {"temperature", config.temperature},
                        {"messages", messages_to_json(messages)}};
  return key.dump();
}

// Deterministic offline stand-in for the chat endpoint. Scripted responses
// are keyed by the exact turn-1 prompt plus the turn number inferred from
// the conversation length (1, 3 or 5 messages). Thread-safe; records every
// received conversation for test inspection.
class ScriptedChatClient : public ChatClient {
 public:
  using Script = std::map<std::string, std::array<std::string, 3>>;

  explicit ScriptedChatClient(Script script) : script_(std::move(script)) {}

  std::string complete(const std::vector<ChatMessage>& messages) override {
    std::size_t turn = 0;
    switch (messages.size()) {
      case 1:
        turn = 0;
        break;
      case 3:
        turn = 1;
        break;
      case 5:
        turn = 2;
        break;
      default:
        throw ContractError("scripted client: unexpected conversation length " +
                            std::to_string(messages.size()));
    }
    {
      std::lock_guard<std::mutex> lock(mutex_);
      ++calls_;
      call_log_.push_back(messages);
    }
    const auto it = script_.find(messages.front().content);
    if (it == script_.end()) {
      throw TransportError("scripted client: no entry for this conversation");
    }
    return it->second[turn];
  }

  int calls() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return calls_;
  }

  std::vector<std::vector<ChatMessage>> call_log() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return call_log_;
  }

 private:
  Script script_;
  mutable std::mutex mutex_;
  int calls_ = 0;
  std::vector<std::vector<ChatMessage>> call_log_;
};

// Mock-script file: a JSON object keyed by MCQ id, each entry holding the
// three scripted responses {"turn1": ..., "turn2": ..., "turn3": ...}.
inline ScriptedChatClient::Script load_mock_script(
    std::istream& source, const std::vector<Mcq>& mcqs) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(source);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("mock script is not valid JSON: ") + ex.what());
  }
  if (!doc.is_object()) {
    throw ParseError("mock script must be a JSON object keyed by MCQ id");
  }
  ScriptedChatClient::Script script;
  for (const auto& mcq : mcqs) {
    const auto it = doc.find(mcq.id);
    if (it == doc.end()) {
      throw ValidationError("mock script has no entry for MCQ '" + mcq.id +
                            "'");
    }
    const auto& entry = *it;
    for (const char* key : {"turn1", "turn2", "turn3"}) {
      if (!entry.contains(key) || !entry[key].is_string()) {
        throw ValidationError("mock script entry for '" + mcq.id +
                              "' is missing string field '" + key + "'");
      }
    }
    script[prompts::build_turn1_prompt(mcq)] = {
        entry["turn1"].get<std::string>(), entry["turn2"].get<std::string>(),
        entry["turn3"].get<std::string>()};
  }
  return script;
}

// Consults the cache before delegating; stores after every successful call.
class CachingChatClient : public ChatClient {
 public:
  CachingChatClient(ChatClient& inner, ResponseCache& cache, LlmConfig config)
      : inner_(inner), cache_(cache), config_(std::move(config)) {}

  std::string complete(const std::vector<ChatMessage>& messages) override {
    const std::string key = chat_cache_key(config_, messages);
    if (auto hit = cache_.lookup(key)) {
      return *hit;
    }
    std::string response = inner_.complete(messages);
    cache_.store(key, response);
    return response;
  }

 private:
  ChatClient& inner_;
  ResponseCache& cache_;
  LlmConfig config_;
};

}  // namespace kcforge
