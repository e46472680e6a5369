#pragma once

// Model capabilities consumed by synthesis and metrics: chat completion,
// sentence embedding, per-token embedding and extractive QA. Concrete
// providers implement the raw calls; the free functions below enforce the
// shared contracts (normalization, windowing, invalid-answer handling).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "textdial/error.hpp"
#include "textdial/text.hpp"

namespace textdial {

enum class Role { System, User, Assistant };

constexpr std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

struct ChatMessage {
  Role role = Role::User;
  std::string content;
};

struct GenerationParams {
  double temperature = 0.7;
  int max_output_tokens = 256;
  std::optional<std::int64_t> seed;

  void validate() const {
    if (!(temperature >= 0.0 && temperature <= 2.0)) {
      throw Error(ErrorKind::InvalidConfig, "temperature must be in [0, 2]");
    }
    if (max_output_tokens <= 0) {
      throw Error(ErrorKind::InvalidConfig, "max_output_tokens must be positive");
    }
  }
};

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dimension() const { return values.size(); }

  double norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }
};

inline EmbeddingVector normalized(EmbeddingVector v) {
  const double n = v.norm();
  if (n > 0.0) {
    for (double& x : v.values) x /= n;
  }
  return v;
}

/// Cosine similarity; vectors of zero norm have similarity 0 with everything.
inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension()) {
    throw Error(ErrorKind::Provider, "embedding dimension mismatch");
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

struct QAResult {
  std::string answer;
  double confidence = 0.0;
  std::size_t offset = 0;  // byte offset of the answer inside the queried context
};

enum class ProviderErrorKind { RateLimited, ServerError, BadRequest, Timeout, MalformedResponse };

constexpr std::string_view to_string(ProviderErrorKind k) {
  switch (k) {
    case ProviderErrorKind::RateLimited: return "rate_limited";
    case ProviderErrorKind::ServerError: return "server_error";
    case ProviderErrorKind::BadRequest: return "bad_request";
    case ProviderErrorKind::Timeout: return "timeout";
    case ProviderErrorKind::MalformedResponse: return "malformed_response";
  }
  return "server_error";
}

class ProviderError : public Error {
 public:
  ProviderError(ProviderErrorKind kind, const std::string& what)
      : Error(ErrorKind::Provider,
              std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ProviderErrorKind provider_kind() const noexcept { return kind_; }

  bool retryable() const noexcept {
    return kind_ == ProviderErrorKind::RateLimited ||
           kind_ == ProviderErrorKind::ServerError ||
           kind_ == ProviderErrorKind::Timeout;
  }

 private:
  ProviderErrorKind kind_;
};

/// Raw capabilities. Implementations must be safe for concurrent calls.
class Provider {
 public:
  virtual ~Provider() = default;

  virtual std::string complete(const std::vector<ChatMessage>& messages,
                               const GenerationParams& params) = 0;
  virtual EmbeddingVector embed(std::string_view text) = 0;
  /// One vector per input token, in order.
  virtual std::vector<EmbeddingVector> embed_each(
      const std::vector<std::string>& tokens) = 0;
  /// Answers `question` from a single context window.
  virtual QAResult answer_window(std::string_view question,
                                 std::string_view context) = 0;
};

/// Returns the assistant text, trimmed. May be empty; callers decide whether an
/// empty completion is fatal.
inline std::string chat_complete(Provider& provider,
                                 const std::vector<ChatMessage>& messages,
                                 const GenerationParams& params) {
  if (messages.empty() || messages.back().role != Role::User) {
    throw std::invalid_argument("chat_complete: last message must come from the user");
  }
  for (const auto& m : messages) {
    if (m.content.empty()) {
      throw std::invalid_argument("chat_complete: message content is empty");
    }
  }
  params.validate();
  return trim(provider.complete(messages, params));
}

inline EmbeddingVector embed_sentence(Provider& provider, std::string_view text) {
  if (text.empty()) throw std::invalid_argument("embed_sentence: empty text");
  return normalized(provider.embed(text));
}

inline std::vector<EmbeddingVector> embed_tokens(Provider& provider,
                                                 std::string_view text) {
  auto tokens = tokenize(text);
  if (tokens.empty()) throw std::invalid_argument("embed_tokens: text has no tokens");
  auto vectors = provider.embed_each(tokens);
  if (vectors.size() != tokens.size()) {
    throw ProviderError(ProviderErrorKind::MalformedResponse,
                        "token embedding count does not match token count");
  }
  for (auto& v : vectors) v = normalized(std::move(v));
  return vectors;
}

/// "", "CANNOTANSWER" and "unanswerable" (any case, after trim) mean no answer.
inline bool is_invalid_answer(std::string_view answer) {
  const std::string a = to_lower_ascii(trim(answer));
  return a.empty() || a == "cannotanswer" || a == "unanswerable";
}

struct QAWindowing {
  std::size_t window_tokens = 400;
  std::size_t stride_tokens = 200;
};

/// Byte ranges of the sliding token windows over `context`.
inline std::vector<std::pair<std::size_t, std::size_t>> qa_windows(
    std::string_view context, const QAWindowing& w = {}) {
  auto spans = tokenize_spans(context);
  if (spans.size() <= w.window_tokens) return {{0, context.size()}};
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t start = 0;; start += w.stride_tokens) {
    const std::size_t end = std::min(start + w.window_tokens, spans.size());
    out.emplace_back(spans[start].begin, spans[end - 1].end);
    if (end == spans.size()) break;
  }
  return out;
}

/// Queries every window and keeps the highest-confidence valid answer. Ties go
/// to the earliest window, then the earliest offset.
inline QAResult extractive_qa(Provider& provider, std::string_view question,
                              std::string_view context,
                              const QAWindowing& windowing = {}) {
  if (question.empty() || context.empty()) {
    throw std::invalid_argument("extractive_qa: empty question or context");
  }
  std::optional<QAResult> best;
  for (auto [b, e] : qa_windows(context, windowing)) {
    QAResult r = provider.answer_window(question, context.substr(b, e - b));
    if (is_invalid_answer(r.answer)) continue;
    r.answer = trim(r.answer);
    r.confidence = std::clamp(r.confidence, 0.0, 1.0);
    r.offset += b;
    // Windows arrive in order, so a strict comparison keeps the earliest.
    if (!best || r.confidence > best->confidence) {
      best = std::move(r);
    }
  }
  if (!best) return QAResult{};
  return *best;
}

}  // namespace textdial
