#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "codecot/llm_client.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "codecot/hashing.hpp"

namespace codecot {
namespace {

std::string excerpt(std::string_view body, std::size_t limit = 512) {
  if (body.size() <= limit) return std::string(body);
  return std::string(body.substr(0, limit)) + "...";
}

std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  ::gmtime_r(&now, &tm);
  std::ostringstream oss;
  oss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return oss.str();
}

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_url(const std::string& url) {
  std::size_t scheme = url.find("://");
  if (scheme == std::string::npos) throw UsageError("endpoint URL needs a scheme: " + url);
  std::size_t slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

bool retryable_status(int status) {
  return status == 408 || status == 409 || status == 429 || status >= 500;
}

}  // namespace

void ModelConfig::validate() const {
  if (!(temperature >= 0.0)) throw UsageError("temperature must be >= 0");
  if (model_name.empty()) throw UsageError("model name must not be empty");
  if (max_tokens == 0) throw UsageError("max_tokens must be positive");
  if (requests_per_second <= 0.0) throw UsageError("requests per second must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return nlohmann::json{
      {"endpoint_url", endpoint_url},
      {"model_name", model_name},
      {"temperature", temperature},
      {"max_tokens", max_tokens},
      {"request_timeout_ms", request_timeout.count()},
      {"max_retries", max_retries},
      {"backoff_base_ms", backoff_base.count()},
      {"requests_per_second", requests_per_second},
  };
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.endpoint_url = j.at("endpoint_url").get<std::string>();
  c.model_name = j.at("model_name").get<std::string>();
  c.temperature = j.at("temperature").get<double>();
  c.max_tokens = j.at("max_tokens").get<std::size_t>();
  c.request_timeout = std::chrono::milliseconds(j.at("request_timeout_ms").get<long long>());
  c.max_retries = j.at("max_retries").get<std::size_t>();
  c.backoff_base = std::chrono::milliseconds(j.at("backoff_base_ms").get<long long>());
  c.requests_per_second = j.at("requests_per_second").get<double>();
  return c;
}

HttpStatusError::HttpStatusError(int status, std::string body_excerpt)
    : LlmError("endpoint returned HTTP " + std::to_string(status) + ": " + body_excerpt),
      status_(status),
      body_excerpt_(std::move(body_excerpt)) {}

ReplayMiss::ReplayMiss(std::string fingerprint)
    : LlmError("replay miss: no cassette entry for fingerprint " + fingerprint), fingerprint_(std::move(fingerprint)) {}

nlohmann::json fingerprint_material(const ModelConfig& config, const Conversation& conversation) {
  // nlohmann::json objects are std::map backed, so keys serialise sorted.
  return nlohmann::json{
      {"messages", conversation.messages()},
      {"model", config.model_name},
      {"temperature", config.temperature},
  };
}

std::string request_fingerprint(const ModelConfig& config, const Conversation& conversation) {
  return sha256_hex(fingerprint_material(config, conversation).dump());
}

nlohmann::json request_body(const ModelConfig& config, const Conversation& conversation) {
  return nlohmann::json{
      {"model", config.model_name},
      {"messages", conversation.messages()},
      {"temperature", config.temperature},
      {"max_tokens", config.max_tokens},
  };
}

std::string parse_completion(std::string_view body) {
  nlohmann::json doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded()) throw LlmError("response body is not JSON: " + excerpt(body));
  const auto choices = doc.find("choices");
  if (choices == doc.end() || !choices->is_array() || choices->empty()) {
    throw LlmError("response has no choices: " + excerpt(body));
  }
  const auto& first = choices->front();
  if (!first.contains("message") || !first["message"].contains("content") ||
      !first["message"]["content"].is_string()) {
    throw LlmError("response has no message content: " + excerpt(body));
  }
  return first["message"]["content"].get<std::string>();
}

std::shared_ptr<Cassette> Cassette::open(const std::filesystem::path& path) {
  std::shared_ptr<Cassette> c(new Cassette());
  c->path_ = path;
  std::ifstream in(path, std::ios::binary);
  if (!in) return c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json entry = nlohmann::json::parse(line, nullptr, false);
    if (entry.is_discarded() || !entry.contains("fingerprint") || !entry.contains("response")) {
      throw EnvironmentError("cassette " + path.string() + " line " + std::to_string(lineno) + " is malformed");
    }
    c->responses_.insert_or_assign(entry["fingerprint"].get<std::string>(), entry["response"].get<std::string>());
  }
  return c;
}

std::shared_ptr<Cassette> Cassette::in_memory() { return std::shared_ptr<Cassette>(new Cassette()); }

std::optional<std::string> Cassette::find(std::string_view fingerprint) const {
  std::lock_guard lock(mutex_);
  auto it = responses_.find(std::string(fingerprint));
  if (it == responses_.end()) return std::nullopt;
  return it->second;
}

void Cassette::append(CassetteEntry entry) {
  std::lock_guard lock(mutex_);
  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw EnvironmentError("cannot append to cassette " + path_.string());
    nlohmann::json line{
        {"fingerprint", entry.fingerprint},
        {"request", entry.request},
        {"response", entry.response},
        {"timestamp", entry.timestamp},
    };
    out << line.dump() << '\n';
    out.flush();
    if (!out) throw EnvironmentError("write to cassette " + path_.string() + " failed");
  }
  responses_.insert_or_assign(std::move(entry.fingerprint), std::move(entry.response));
}

std::size_t Cassette::size() const {
  std::lock_guard lock(mutex_);
  return responses_.size();
}

ReplayClient::ReplayClient(std::shared_ptr<const Cassette> cassette) : cassette_(std::move(cassette)) {}

std::string ReplayClient::complete(const ModelConfig& config, const Conversation& conversation) {
  conversation.validate();
  std::string fp = request_fingerprint(config, conversation);
  if (auto hit = cassette_->find(fp)) return *hit;
  throw ReplayMiss(std::move(fp));
}

RecordingClient::RecordingClient(std::unique_ptr<ChatClient> upstream, std::shared_ptr<Cassette> cassette)
    : upstream_(std::move(upstream)), cassette_(std::move(cassette)) {}

std::string RecordingClient::complete(const ModelConfig& config, const Conversation& conversation) {
  conversation.validate();
  std::string fp = request_fingerprint(config, conversation);
  if (auto hit = cassette_->find(fp)) return *hit;
  std::string response = upstream_->complete(config, conversation);
  cassette_->append(CassetteEntry{fp, fingerprint_material(config, conversation), response, utc_timestamp()});
  return response;
}

TokenBucket::TokenBucket(double rate, double burst) : rate_(rate), burst_(burst), tokens_(burst), last_(Clock::now()) {
  if (rate <= 0 || burst < 1) throw UsageError("token bucket needs rate > 0 and burst >= 1");
}

void TokenBucket::acquire() {
  std::unique_lock lock(mutex_);
  while (true) {
    auto now = Clock::now();
    tokens_ = std::min(burst_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    // Holding the lock while sleeping keeps waiters in FIFO-ish order.
    std::this_thread::sleep_for(wait);
  }
}

HttpChatClient::HttpChatClient(std::string api_key, Sleeper sleeper)
    : api_key_(std::move(api_key)), sleeper_(std::move(sleeper)) {
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::unique_ptr<HttpChatClient> HttpChatClient::from_environment() {
  const char* key = std::getenv(kApiKeyEnv);
  return std::make_unique<HttpChatClient>(key ? key : "");
}

std::string HttpChatClient::complete(const ModelConfig& config, const Conversation& conversation) {
  config.validate();
  conversation.validate();
  {
    std::lock_guard lock(limiter_mutex_);
    if (!limiter_ || limiter_rate_ != config.requests_per_second) {
      limiter_ = std::make_unique<TokenBucket>(config.requests_per_second, 1.0);
      limiter_rate_ = config.requests_per_second;
    }
  }

  const Endpoint ep = split_url(config.endpoint_url);
  const std::string body = request_body(config, conversation).dump();
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  std::string last_error;
  for (std::size_t attempt = 0; attempt <= config.max_retries; ++attempt) {
    if (attempt > 0) {
      sleeper_(config.backoff_base * (1LL << std::min<std::size_t>(attempt - 1, 16)));
    }
    limiter_->acquire();
    ++attempts_;

    httplib::Client cli(ep.origin);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.request_timeout).count();
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config.request_timeout).count() % 1'000'000;
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);

    auto res = cli.Post(ep.path, headers, body, "application/json");
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) return parse_completion(res->body);
    if (!retryable_status(res->status) || attempt == config.max_retries) {
      throw HttpStatusError(res->status, excerpt(res->body));
    }
    last_error = "HTTP " + std::to_string(res->status);
  }
  throw TransportError(last_error + " after " + std::to_string(config.max_retries + 1) + " attempts");
}

}  // namespace codecot
