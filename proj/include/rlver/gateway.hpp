#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "rlver/error.hpp"
#include "rlver/hashing.hpp"

namespace rlver {

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
  std::string profile;
  std::string model;  // empty: use the profile's model
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 2048;
  std::string tag;       // episode/turn/purpose, for logs only
  std::string seed_tag;  // part of the cache key; distinguishes repeated samples

  void validate() const {
    if (messages.empty()) throw UsageError("chat request " + tag + " has no messages");
    if (!(temperature >= 0.0)) throw UsageError("chat request " + tag + " has negative temperature");
    if (profile.empty()) throw UsageError("chat request " + tag + " names no endpoint profile");
  }
};

/// One chat-completion endpoint. The credential is referenced by environment
/// variable name; its value is read at call time and never stored or logged.
struct EndpointProfile {
  std::string name;
  std::string base_url;  // e.g. https://api.deepseek.com/v1
  std::string model;
  std::string credential_env;
  double requests_per_second = 2.0;
  int burst = 4;
  int retry_budget = 3;
  double timeout_seconds = 120.0;
};

/// Profiles file: {"profiles": [{"name": ..., "base_url": ..., ...}, ...]}.
inline std::map<std::string, EndpointProfile> profiles_from_json(const nlohmann::json& j) {
  std::map<std::string, EndpointProfile> out;
  try {
    for (const auto& p : j.at("profiles")) {
      EndpointProfile e;
      e.name = p.at("name").get<std::string>();
      e.base_url = p.at("base_url").get<std::string>();
      e.model = p.at("model").get<std::string>();
      e.credential_env = p.value("credential_env", std::string{});
      e.requests_per_second = p.value("rate_limit", e.requests_per_second);
      e.burst = p.value("burst", e.burst);
      e.retry_budget = p.value("retry_budget", e.retry_budget);
      e.timeout_seconds = p.value("timeout_seconds", e.timeout_seconds);
      if (e.requests_per_second <= 0 || e.burst < 1 || e.retry_budget < 0) {
        throw ConfigError("profile " + e.name + ": rate_limit, burst and retry_budget must be positive");
      }
      out[e.name] = e;
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("profiles file: ") + ex.what());
  }
  return out;
}

inline std::map<std::string, EndpointProfile> load_profiles(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read profiles file " + path);
  try {
    return profiles_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

struct HttpResponse {
  int status = 0;  // 0: no response (connection error, timeout)
  std::string body;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

/// The gateway's only route to the network.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& url, const HttpHeaders& headers,
                            const std::string& body, double timeout_seconds) = 0;
};

/// Seconds since an arbitrary epoch, plus a way to wait. Tests substitute a fake.
struct TimeSource {
  std::function<double()> now;
  std::function<void(double)> sleep;

  static TimeSource steady() {
    return {[] {
              return std::chrono::duration<double>(
                         std::chrono::steady_clock::now().time_since_epoch())
                  .count();
            },
            [](double s) {
              if (s > 0) std::this_thread::sleep_for(std::chrono::duration<double>(s));
            }};
  }
};

/// Token bucket: `burst` capacity refilled at `rate` tokens per second.
class RateLimiter {
 public:
  RateLimiter(double rate, int burst, TimeSource time)
      : rate_(rate), burst_(burst), tokens_(burst), time_(std::move(time)), last_(time_.now()) {}

  void acquire() {
    std::unique_lock lock(mu_);
    for (;;) {
      double now = time_.now();
      tokens_ = std::min<double>(burst_, tokens_ + (now - last_) * rate_);
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      double wait = (1.0 - tokens_) / rate_;
      time_.sleep(wait);
    }
  }

 private:
  std::mutex mu_;
  double rate_;
  int burst_;
  double tokens_;
  TimeSource time_;
  double last_;
};

/// Canonical text of the fields that identify a logical request.
inline std::string cache_key_material(const ChatRequest& req, const std::string& model) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : req.messages) msgs.push_back({m.role, m.content});
  nlohmann::json j = {{"profile", req.profile},
                      {"model", model},
                      {"messages", msgs},
                      {"temperature", req.temperature},
                      {"seed_tag", req.seed_tag}};
  return j.dump();
}

inline std::string cache_key(const ChatRequest& req, const std::string& model) {
  return sha256_hex(cache_key_material(req, model));
}

/// Content-addressed response store: <dir>/<key[0:2]>/<key>.json. Each entry
/// records the request material and a digest of the response; both are checked
/// on read so hand edits are detected.
class ResponseCache {
 public:
  ResponseCache(std::filesystem::path dir, bool lenient) : dir_(std::move(dir)), lenient_(lenient) {}

  std::optional<std::string> get(const std::string& key) const {
    auto path = path_for(key);
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
      auto j = nlohmann::json::parse(ss.str());
      auto response = j.at("response").get<std::string>();
      if (j.at("key").get<std::string>() != key) return corrupt(path, "key mismatch");
      if (sha256_hex(j.at("request").get<std::string>()) != key) return corrupt(path, "request digest mismatch");
      if (sha256_hex(response) != j.at("response_sha256").get<std::string>()) {
        return corrupt(path, "response digest mismatch");
      }
      return response;
    } catch (const nlohmann::json::exception& e) {
      return corrupt(path, e.what());
    }
  }

  void put(const std::string& key, const std::string& material, const std::string& response) {
    std::lock_guard lock(mu_);
    auto path = path_for(key);
    std::filesystem::create_directories(path.parent_path());
    if (std::filesystem::exists(path)) return;  // append-only
    nlohmann::json j = {{"key", key},
                        {"request", material},
                        {"response", response},
                        {"response_sha256", sha256_hex(response)}};
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << j.dump(2) << '\n';
      if (!out) throw Error("cache write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  }

  std::filesystem::path path_for(const std::string& key) const {
    return dir_ / key.substr(0, 2) / (key + ".json");
  }

 private:
  std::optional<std::string> corrupt(const std::filesystem::path& p, const std::string& why) const {
    if (!lenient_) throw CacheCorrupt("corrupt cache entry " + p.string() + ": " + why);
    spdlog::warn("skipping corrupt cache entry {}: {}", p.string(), why);
    return std::nullopt;
  }

  std::filesystem::path dir_;
  bool lenient_;
  std::mutex mu_;
};

enum class GatewayMode { Live, Record, Replay };

inline GatewayMode gateway_mode_from_string(std::string_view s) {
  if (s == "live") return GatewayMode::Live;
  if (s == "record") return GatewayMode::Record;
  if (s == "replay") return GatewayMode::Replay;
  throw ConfigError("unknown gateway mode '" + std::string(s) + "' (expected live|record|replay)");
}

struct GatewayOptions {
  GatewayMode mode = GatewayMode::Live;
  std::filesystem::path cache_dir;
  bool lenient_cache = true;
  double backoff_base_seconds = 0.5;
  TimeSource time = TimeSource::steady();
  std::function<const char*(const char*)> getenv = [](const char* n) { return std::getenv(n); };
};

struct GatewayStats {
  std::size_t network_calls = 0;
  std::size_t retries = 0;
  std::size_t cache_hits = 0;
};

/// Single egress point for chat completions: request shaping, per-profile rate
/// limiting, retries with exponential backoff, and the record/replay cache.
/// Safe for concurrent callers.
class Gateway {
 public:
  Gateway(std::map<std::string, EndpointProfile> profiles, std::shared_ptr<Transport> transport,
          GatewayOptions options = {})
      : profiles_(std::move(profiles)), transport_(std::move(transport)), opts_(std::move(options)) {
    if (opts_.mode != GatewayMode::Live) {
      if (opts_.cache_dir.empty()) throw ConfigError("record/replay mode needs a cache directory");
      cache_.emplace(opts_.cache_dir, opts_.lenient_cache);
    }
    for (const auto& [name, p] : profiles_) {
      limiters_.emplace(name, std::make_unique<RateLimiter>(p.requests_per_second, p.burst, opts_.time));
    }
  }

  GatewayMode mode() const noexcept { return opts_.mode; }

  std::string complete(const ChatRequest& req) {
    req.validate();
    const auto& profile = profile_for(req.profile);
    const std::string model = req.model.empty() ? profile.model : req.model;
    const std::string material = cache_key_material(req, model);
    const std::string key = sha256_hex(material);

    if (cache_) {
      if (auto hit = cache_->get(key)) {
        ++cache_hits_;
        return *hit;
      }
      if (opts_.mode == GatewayMode::Replay) {
        throw ReplayMiss("replay cache has no entry for request " + req.tag + " (key " + key + ")");
      }
    }

    std::string response = call_with_retries(req, profile, model);
    if (cache_ && opts_.mode == GatewayMode::Record) cache_->put(key, material, response);
    return response;
  }

  GatewayStats stats() const {
    return {network_calls_.load(), retries_.load(), cache_hits_.load()};
  }

 private:
  const EndpointProfile& profile_for(const std::string& name) const {
    auto it = profiles_.find(name);
    if (it == profiles_.end()) throw ConfigError("no endpoint profile named " + name);
    return it->second;
  }

  static bool transient(int status) {
    return status == 0 || status == 408 || status == 429 || status >= 500;
  }

  std::string call_with_retries(const ChatRequest& req, const EndpointProfile& profile,
                                const std::string& model) {
    nlohmann::json body = {{"model", model},
                           {"temperature", req.temperature},
                           {"max_tokens", req.max_tokens},
                           {"stream", false}};
    body["messages"] = nlohmann::json::array();
    for (const auto& m : req.messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    const std::string payload = body.dump();

    HttpHeaders headers{{"Content-Type", "application/json"}};
    if (!profile.credential_env.empty()) {
      const char* secret = opts_.getenv(profile.credential_env.c_str());
      if (secret == nullptr || *secret == '\0') {
        throw ConfigError("credential variable " + profile.credential_env + " for profile " +
                          profile.name + " is not set");
      }
      headers.emplace_back("Authorization", std::string("Bearer ") + secret);
    }

    std::string url = profile.base_url;
    while (!url.empty() && url.back() == '/') url.pop_back();
    url += "/chat/completions";

    auto& limiter = *limiters_.at(profile.name);
    std::string last_error;
    for (int attempt = 0; attempt <= profile.retry_budget; ++attempt) {
      if (attempt > 0) {
        ++retries_;
        double wait = opts_.backoff_base_seconds * std::pow(2.0, attempt - 1);
        spdlog::warn("gateway: retry {}/{} for {} after {} ({:.2f}s backoff)", attempt,
                     profile.retry_budget, req.tag, last_error, wait);
        opts_.time.sleep(wait);
      }
      limiter.acquire();
      ++network_calls_;
      HttpResponse resp = transport_->post(url, headers, payload, profile.timeout_seconds);
      if (resp.status >= 200 && resp.status < 300) {
        try {
          auto j = nlohmann::json::parse(resp.body);
          return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
          last_error = std::string("malformed completion body: ") + e.what();
          continue;
        }
      }
      last_error = resp.status == 0 ? "no response" : "HTTP " + std::to_string(resp.status);
      if (!transient(resp.status)) {
        throw PermanentFailure("gateway: " + req.tag + " failed permanently with " + last_error,
                               resp.status);
      }
    }
    throw TransportFailure("gateway: " + req.tag + " exhausted " +
                           std::to_string(profile.retry_budget) + " retries (" + last_error + ")");
  }

  std::map<std::string, EndpointProfile> profiles_;
  std::shared_ptr<Transport> transport_;
  GatewayOptions opts_;
  std::optional<ResponseCache> cache_;
  std::map<std::string, std::unique_ptr<RateLimiter>> limiters_;
  std::atomic<std::size_t> network_calls_{0};
  std::atomic<std::size_t> retries_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

}  // namespace rlver
