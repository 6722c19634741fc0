#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "codecot/error.hpp"
#include "codecot/prompting.hpp"

namespace codecot {

// Name of the environment variable holding the endpoint API key.
inline constexpr const char* kApiKeyEnv = "CODECOT_API_KEY";

struct ModelConfig {
  std::string endpoint_url = "http://127.0.0.1:8000/v1/chat/completions";
  std::string model_name = "gpt-3.5-turbo";
  double temperature = 0.0;
  std::size_t max_tokens = 1024;
  std::chrono::milliseconds request_timeout{120'000};
  std::size_t max_retries = 3;
  std::chrono::milliseconds backoff_base{500};
  double requests_per_second = 2.0;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

class LlmError : public Error {
 public:
  using Error::Error;
};

// Connection-level failure that persisted through every retry.
class TransportError : public LlmError {
 public:
  using LlmError::LlmError;
};

class HttpStatusError : public LlmError {
 public:
  HttpStatusError(int status, std::string body_excerpt);
  int status() const { return status_; }
  const std::string& body_excerpt() const { return body_excerpt_; }

 private:
  int status_;
  std::string body_excerpt_;
};

class ReplayMiss : public LlmError {
 public:
  explicit ReplayMiss(std::string fingerprint);
  const std::string& fingerprint() const { return fingerprint_; }

 private:
  std::string fingerprint_;
};

// Canonical request document: sorted keys, the model, messages and
// temperature. The fingerprint is its SHA-256.
nlohmann::json fingerprint_material(const ModelConfig& config, const Conversation& conversation);
std::string request_fingerprint(const ModelConfig& config, const Conversation& conversation);

// Chat-completions wire body.
nlohmann::json request_body(const ModelConfig& config, const Conversation& conversation);
// Text of choices[0].message.content. Throws LlmError when absent.
std::string parse_completion(std::string_view body);

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const ModelConfig& config, const Conversation& conversation) = 0;
};

struct CassetteEntry {
  std::string fingerprint;
  nlohmann::json request;
  std::string response;
  std::string timestamp;
};

// Line-delimited store of recorded exchanges keyed by fingerprint. Appends
// go straight to disk. Lookups take a shared lock.
class Cassette {
 public:
  // An absent file yields an empty cassette that will be created on the
  // first append.
  static std::shared_ptr<Cassette> open(const std::filesystem::path& path);
  static std::shared_ptr<Cassette> in_memory();

  std::optional<std::string> find(std::string_view fingerprint) const;
  void append(CassetteEntry entry);
  std::size_t size() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  Cassette() = default;

  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::string> responses_;
};

// Serves responses only from the cassette. A missing fingerprint raises
// ReplayMiss, never a live request.
class ReplayClient final : public ChatClient {
 public:
  explicit ReplayClient(std::shared_ptr<const Cassette> cassette);
  std::string complete(const ModelConfig& config, const Conversation& conversation) override;

 private:
  std::shared_ptr<const Cassette> cassette_;
};

// Serves recorded responses when present; otherwise asks `upstream` and
// appends the exchange to the cassette.
class RecordingClient final : public ChatClient {
 public:
  RecordingClient(std::unique_ptr<ChatClient> upstream, std::shared_ptr<Cassette> cassette);
  std::string complete(const ModelConfig& config, const Conversation& conversation) override;

 private:
  std::unique_ptr<ChatClient> upstream_;
  std::shared_ptr<Cassette> cassette_;
};

// Token bucket with capacity `burst`, refilled at `rate` tokens per second.
class TokenBucket {
 public:
  using Clock = std::chrono::steady_clock;

  TokenBucket(double rate, double burst);
  // Blocks until a token is available.
  void acquire();

 private:
  double rate_;
  double burst_;
  double tokens_;
  Clock::time_point last_;
  std::mutex mutex_;
};

// OpenAI-compatible chat-completions client. Transport errors and 408/409/
// 429/5xx statuses are retried up to max_retries times with exponential
// backoff (backoff_base * 2^attempt). Other statuses fail immediately.
class HttpChatClient final : public ChatClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  // `api_key` empty means no Authorization header.
  explicit HttpChatClient(std::string api_key, Sleeper sleeper = {});
  // Reads the key from kApiKeyEnv.
  static std::unique_ptr<HttpChatClient> from_environment();

  std::string complete(const ModelConfig& config, const Conversation& conversation) override;

  std::size_t attempts() const { return attempts_; }

 private:
  std::string api_key_;
  Sleeper sleeper_;
  std::mutex limiter_mutex_;
  std::unique_ptr<TokenBucket> limiter_;
  double limiter_rate_ = 0;
  std::atomic<std::size_t> attempts_{0};
};

}  // namespace codecot
