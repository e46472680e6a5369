#pragma once

// HTTP JSON provider: chat-completions, embeddings and extractive-QA endpoints
// with bounded concurrency, request spacing and exponential backoff.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <iostream>
#include <mutex>
#include <random>
#include <semaphore>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "textdial/providers/provider.hpp"

namespace textdial {

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{1000};
  double factor = 2.0;
  double jitter = 0.25;  // up to this fraction of the delay is added at random
  std::function<void(std::chrono::milliseconds)> sleep =
      [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };

  std::chrono::milliseconds delay_for(int failed_attempt, std::mt19937_64& rng) const {
    double d = static_cast<double>(base_delay.count());
    for (int i = 1; i < failed_attempt; ++i) d *= factor;
    std::uniform_real_distribution<double> u(0.0, jitter);
    return std::chrono::milliseconds(static_cast<std::int64_t>(d * (1.0 + u(rng))));
  }
};

/// Caps in-flight requests and enforces a minimum spacing between request
/// starts. Shared by every call made through one provider.
class Throttle {
 public:
  explicit Throttle(std::ptrdiff_t max_in_flight = 4,
                    std::chrono::milliseconds min_interval = std::chrono::milliseconds{0})
      : slots_(max_in_flight), min_interval_(min_interval) {}

  class Permit {
   public:
    explicit Permit(Throttle& t) : t_(&t) { t_->acquire(); }
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;
    ~Permit() { t_->slots_.release(); }

   private:
    Throttle* t_;
  };

 private:
  void acquire() {
    slots_.acquire();
    if (min_interval_.count() == 0) return;
    std::chrono::steady_clock::time_point start;
    {
      std::lock_guard lock(mu_);
      const auto now = std::chrono::steady_clock::now();
      start = std::max(now, next_start_);
      next_start_ = start + min_interval_;
    }
    std::this_thread::sleep_until(start);
  }

  std::counting_semaphore<1024> slots_;
  std::chrono::milliseconds min_interval_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_start_{};
};

struct HttpProviderConfig {
  std::string chat_url;        // e.g. https://api.example.com/v1/chat/completions
  std::string embeddings_url;  // OpenAI-style {"input": [...]} -> {"data": [{"embedding": [...]}]}
  std::string qa_url;          // {"question", "context"} -> {"answer", "score", "start"?}
  std::string chat_model;
  std::string embedding_model;
  std::string api_key;
  std::chrono::seconds timeout{60};
  int max_in_flight = 4;
  std::chrono::milliseconds min_interval{0};
  bool verbose = false;
  RetryPolicy retry;
};

namespace detail {

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;
};

inline SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorKind::InvalidConfig, "endpoint URL needs a scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

inline std::string redact(std::string text, const std::string& secret) {
  if (secret.empty()) return text;
  for (auto p = text.find(secret); p != std::string::npos; p = text.find(secret, p)) {
    text.replace(p, secret.size(), "***");
  }
  return text;
}

}  // namespace detail

class HttpProvider : public Provider {
 public:
  explicit HttpProvider(HttpProviderConfig config)
      : config_(std::move(config)),
        throttle_(config_.max_in_flight, config_.min_interval),
        rng_(0x5eed) {}

  std::string complete(const std::vector<ChatMessage>& messages,
                       const GenerationParams& params) override {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : messages) {
      msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    }
    nlohmann::json body = {{"messages", msgs},
                           {"temperature", params.temperature},
                           {"max_tokens", params.max_output_tokens}};
    if (!config_.chat_model.empty()) body["model"] = config_.chat_model;
    if (params.seed) body["seed"] = *params.seed;
    auto resp = post(config_.chat_url, body);
    try {
      return resp.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(ProviderErrorKind::MalformedResponse,
                          std::string("chat response: ") + e.what());
    }
  }

  EmbeddingVector embed(std::string_view text) override {
    auto v = embed_batch({std::string(text)});
    return std::move(v.front());
  }

  std::vector<EmbeddingVector> embed_each(const std::vector<std::string>& tokens) override {
    return embed_batch(tokens);
  }

  QAResult answer_window(std::string_view question, std::string_view context) override {
    nlohmann::json body = {{"question", question}, {"context", context}};
    auto resp = post(config_.qa_url, body);
    try {
      QAResult r;
      r.answer = resp.at("answer").get<std::string>();
      r.confidence = resp.value("score", 0.0);
      if (resp.contains("start") && resp["start"].is_number_integer()) {
        r.offset = resp["start"].get<std::size_t>();
      } else {
        auto p = context.find(r.answer);
        r.offset = p == std::string_view::npos ? 0 : p;
      }
      return r;
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(ProviderErrorKind::MalformedResponse,
                          std::string("qa response: ") + e.what());
    }
  }

  /// POSTs `body` and returns the parsed JSON response, retrying retryable
  /// failures per the configured policy.
  nlohmann::json post(const std::string& url, const nlohmann::json& body) {
    if (url.empty()) {
      throw ProviderError(ProviderErrorKind::BadRequest, "endpoint URL not configured");
    }
    const std::string payload = body.dump();
    for (int attempt = 1;; ++attempt) {
      try {
        return post_once(url, payload);
      } catch (const ProviderError& e) {
        if (!e.retryable() || attempt >= config_.retry.max_attempts) throw;
        std::chrono::milliseconds delay;
        {
          std::lock_guard lock(rng_mu_);
          delay = config_.retry.delay_for(attempt, rng_);
        }
        log("retry " + std::to_string(attempt) + " after " +
            std::to_string(delay.count()) + "ms: " + e.what());
        config_.retry.sleep(delay);
      }
    }
  }

 private:
  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& inputs) {
    nlohmann::json body = {{"input", inputs}};
    if (!config_.embedding_model.empty()) body["model"] = config_.embedding_model;
    auto resp = post(config_.embeddings_url, body);
    std::vector<EmbeddingVector> out;
    try {
      for (const auto& item : resp.at("data")) {
        out.push_back({item.at("embedding").get<std::vector<double>>()});
      }
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(ProviderErrorKind::MalformedResponse,
                          std::string("embedding response: ") + e.what());
    }
    if (out.size() != inputs.size()) {
      throw ProviderError(ProviderErrorKind::MalformedResponse,
                          "embedding count does not match input count");
    }
    std::lock_guard lock(dim_mu_);
    for (const auto& v : out) {
      if (v.dimension() == 0) {
        throw ProviderError(ProviderErrorKind::MalformedResponse, "empty embedding");
      }
      if (dimension_ == 0) dimension_ = v.dimension();
      if (v.dimension() != dimension_) {
        throw ProviderError(ProviderErrorKind::MalformedResponse,
                            "inconsistent embedding dimension");
      }
    }
    return out;
  }

  nlohmann::json post_once(const std::string& url, const std::string& payload) {
    Throttle::Permit permit(throttle_);
    const auto [base, path] = detail::split_url(url);
    httplib::Client client(base);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    httplib::Headers headers;
    if (!config_.api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + config_.api_key);
    }
    log("POST " + url + " " + payload);
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      const auto err = res.error();
      const bool timeout = err == httplib::Error::ConnectionTimeout ||
                           err == httplib::Error::Read || err == httplib::Error::Write;
      throw ProviderError(timeout ? ProviderErrorKind::Timeout : ProviderErrorKind::ServerError,
                          "transport failure: " + httplib::to_string(err));
    }
    log("HTTP " + std::to_string(res->status) + " " + res->body);
    if (res->status == 429) {
      throw ProviderError(ProviderErrorKind::RateLimited, "HTTP 429");
    }
    if (res->status == 408) {
      throw ProviderError(ProviderErrorKind::Timeout, "HTTP 408");
    }
    if (res->status >= 500) {
      throw ProviderError(ProviderErrorKind::ServerError, "HTTP " + std::to_string(res->status));
    }
    if (res->status >= 400) {
      throw ProviderError(ProviderErrorKind::BadRequest,
                          "HTTP " + std::to_string(res->status) + ": " +
                              detail::redact(res->body, config_.api_key));
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw ProviderError(ProviderErrorKind::MalformedResponse, e.what());
    }
  }

  void log(const std::string& line) {
    if (!config_.verbose) return;
    std::lock_guard lock(log_mu_);
    std::cerr << "[provider] " << detail::redact(line, config_.api_key) << '\n';
  }

  HttpProviderConfig config_;
  Throttle throttle_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
  std::mutex dim_mu_;
  std::size_t dimension_ = 0;
  std::mutex log_mu_;
};

}  // namespace textdial
