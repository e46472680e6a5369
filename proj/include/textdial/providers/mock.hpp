#pragma once

// Deterministic in-process provider. Every output is a pure function of the
// request content and the configured seed, so results do not depend on call
// order or thread interleaving (scripted chat is the one exception: it replays
// fixtures in call order).

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "textdial/hash.hpp"
#include "textdial/providers/provider.hpp"
#include "textdial/text.hpp"

namespace textdial {

enum class MockChatMode {
  Echo,      // returns the last user message
  Scripted,  // replays fixtures "turn-1", "turn-2", ... in call order
  RolePlay,  // recognizes the synthesis prompts and answers in role
};

enum class MockEmbeddingMode {
  Identity,    // same text -> same pseudo-random dense vector
  Orthogonal,  // one-hot axis chosen by content hash bucket
};

struct MockConfig {
  MockChatMode chat_mode = MockChatMode::RolePlay;
  MockEmbeddingMode sentence_mode = MockEmbeddingMode::Identity;
  MockEmbeddingMode token_mode = MockEmbeddingMode::Orthogonal;
  std::size_t dimension = 1024;
  std::uint64_t seed = 0;
};

namespace detail {

inline const std::set<std::string, std::less<>>& stopwords() {
  static const std::set<std::string, std::less<>> words = {
      "a",    "an",   "the",   "is",    "are",  "was",  "were", "be",   "of",
      "to",   "in",   "on",    "for",   "and",  "or",   "it",   "its",  "this",
      "that", "what", "which", "why",   "how",  "does", "do",   "did",  "can",
      "you",  "me",   "about", "tell",  "with", "as",   "by",   "at",   "from",
      "more", "i",    "we",    "they",  "their", "there", "these", "those",
      "explain", "some", "any", "into", "between", "relate", "important"};
  return words;
}

// Crude plural folding so "graphs" meets "graph".
inline std::string stem(std::string word) {
  if (word.size() > 3 && word.back() == 's' && word[word.size() - 2] != 's') word.pop_back();
  return word;
}

inline std::set<std::string> content_words(std::string_view text) {
  std::set<std::string> out;
  for (auto& t : tokenize(text)) {
    if (!stopwords().count(t)) out.insert(stem(std::move(t)));
  }
  return out;
}

// Non-stopword tokens in order of first appearance.
inline std::vector<std::string> keywords(std::string_view text) {
  std::vector<std::string> out;
  for (auto& t : tokenize(text)) {
    if (stopwords().count(t) || t.size() < 3) continue;
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(std::move(t));
  }
  return out;
}

// Whitespace-normalized text plus, for each output byte, its source offset.
inline std::pair<std::string, std::vector<std::size_t>> normalize_with_map(
    std::string_view text) {
  std::string out;
  std::vector<std::size_t> map;
  bool pending = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto cp = decode_at(text, pos);
    if (is_space(cp.value)) {
      pending = !out.empty();
    } else {
      if (pending) {
        out.push_back(' ');
        map.push_back(pos);
      }
      pending = false;
      for (std::size_t i = pos; i < cp.end; ++i) {
        out.push_back(text[i]);
        map.push_back(i);
      }
    }
    pos = cp.end;
  }
  return {out, map};
}

// Text following `label` up to the end of its line.
inline std::string line_after(std::string_view text, std::string_view label) {
  auto p = text.find(label);
  if (p == std::string_view::npos) return {};
  p += label.size();
  auto e = text.find('\n', p);
  return trim(text.substr(p, e == std::string_view::npos ? text.size() - p : e - p));
}

inline bool filled(std::string_view v) { return !v.empty() && v != "N/A"; }

inline std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  if (!filled(v)) return out;
  std::size_t b = 0;
  while (b <= v.size()) {
    auto e = v.find(';', b);
    if (e == std::string_view::npos) e = v.size();
    std::string item = trim(v.substr(b, e - b));
    if (!item.empty()) out.push_back(std::move(item));
    b = e + 1;
  }
  return out;
}

// The first `n` tokens of `sentence`, joined by spaces.
inline std::string head_words(std::string_view sentence, std::size_t n) {
  auto toks = tokenize(sentence);
  if (toks.size() > n) toks.resize(n);
  return join(toks, " ");
}

}  // namespace detail

class MockProvider : public Provider {
 public:
  explicit MockProvider(MockConfig config = {}) : config_(config) {}

  const MockConfig& config() const { return config_; }

  // --- fixtures ---------------------------------------------------------

  void add_chat_fixture(std::string id, std::string text) {
    std::lock_guard lock(mu_);
    chat_fixtures_[std::move(id)] = std::move(text);
  }

  /// Loads a JSON object mapping fixture ids ("turn-1", ...) to response text.
  void load_chat_fixtures(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    auto j = nlohmann::json::parse(in);
    for (auto& [k, v] : j.items()) add_chat_fixture(k, v.get<std::string>());
  }

  void set_sentence_embedding(std::string text, std::vector<double> values) {
    std::lock_guard lock(mu_);
    sentence_fixtures_[std::move(text)] = EmbeddingVector{std::move(values)};
  }

  /// Fixed QA answer for a question, independent of context.
  void set_qa_answer(std::string question, std::string answer, double confidence) {
    std::lock_guard lock(mu_);
    qa_fixtures_[std::move(question)] = QAResult{std::move(answer), confidence, 0};
  }

  std::size_t chat_calls() const {
    std::lock_guard lock(mu_);
    return chat_calls_;
  }

  std::size_t qa_calls() const {
    std::lock_guard lock(mu_);
    return qa_calls_;
  }

  // --- Provider ---------------------------------------------------------

  std::string complete(const std::vector<ChatMessage>& messages,
                       const GenerationParams& params) override {
    std::size_t call = 0;
    {
      std::lock_guard lock(mu_);
      call = ++chat_calls_;
    }
    const std::string& prompt = messages.back().content;
    switch (config_.chat_mode) {
      case MockChatMode::Echo:
        return prompt;
      case MockChatMode::Scripted: {
        std::lock_guard lock(mu_);
        auto it = chat_fixtures_.find("turn-" + std::to_string(call));
        if (it == chat_fixtures_.end()) {
          throw ProviderError(ProviderErrorKind::BadRequest,
                              "no scripted fixture for turn-" + std::to_string(call));
        }
        return it->second;
      }
      case MockChatMode::RolePlay:
        return role_play(prompt, params);
    }
    return prompt;
  }

  EmbeddingVector embed(std::string_view text) override {
    {
      std::lock_guard lock(mu_);
      auto it = sentence_fixtures_.find(std::string(text));
      if (it != sentence_fixtures_.end()) return it->second;
    }
    return make_vector(text, config_.sentence_mode);
  }

  std::vector<EmbeddingVector> embed_each(
      const std::vector<std::string>& tokens) override {
    std::vector<EmbeddingVector> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(make_vector(t, config_.token_mode));
    return out;
  }

  QAResult answer_window(std::string_view question,
                         std::string_view context) override {
    {
      std::lock_guard lock(mu_);
      ++qa_calls_;
      auto it = qa_fixtures_.find(std::string(question));
      if (it != qa_fixtures_.end()) {
        QAResult r = it->second;
        auto pos = context.find(r.answer);
        r.offset = pos == std::string_view::npos ? 0 : pos;
        return r;
      }
    }
    return overlap_answer(question, context);
  }

 private:
  EmbeddingVector make_vector(std::string_view text, MockEmbeddingMode mode) const {
    EmbeddingVector v;
    v.values.assign(config_.dimension, 0.0);
    const std::uint64_t h = fnv1a(text);
    if (mode == MockEmbeddingMode::Orthogonal) {
      v.values[h % config_.dimension] = 1.0;
      return v;
    }
    std::uint64_t state = hash_combine(h, config_.seed);
    for (auto& x : v.values) {
      state = splitmix64(state);
      x = static_cast<double>(state >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    }
    return normalized(std::move(v));
  }

  // The sentence of `context` sharing the most content words with the question.
  static QAResult overlap_answer(std::string_view question, std::string_view context) {
    const auto qwords = detail::content_words(question);
    if (qwords.empty()) return {};
    auto [norm, map] = detail::normalize_with_map(context);
    std::size_t best_shared = 0;
    std::string best_sentence;
    std::size_t best_pos = 0;
    std::size_t search_from = 0;
    for (const auto& sentence : segment_sentences(norm)) {
      const auto pos = norm.find(sentence, search_from);
      search_from = pos + sentence.size();
      std::size_t shared = 0;
      for (const auto& w : detail::content_words(sentence)) shared += qwords.count(w);
      if (shared > best_shared) {
        best_shared = shared;
        best_sentence = sentence;
        best_pos = pos;
      }
    }
    if (best_shared == 0) return {};
    const std::size_t begin = map[best_pos];
    const std::size_t end = map[best_pos + best_sentence.size() - 1] + 1;
    const double confidence =
        std::min(0.99, static_cast<double>(best_shared) / static_cast<double>(qwords.size()));
    return {std::string(context.substr(begin, end - begin)), confidence, begin};
  }

  std::uint64_t request_seed(std::string_view prompt, const GenerationParams& params) const {
    return hash_combine(hash_combine(fnv1a(prompt), config_.seed),
                        static_cast<std::uint64_t>(params.seed.value_or(0)));
  }

  std::string role_play(std::string_view prompt, const GenerationParams& params) const {
    const std::uint64_t seed = request_seed(prompt, params);
    if (prompt.starts_with("Task: You are a student")) return student_turn(prompt, seed);
    if (prompt.starts_with("Task: You are a teacher")) return teacher_turn(prompt);
    if (prompt.starts_with("Task: generate a conversation")) return single_instance(prompt);
    if (prompt.starts_with("Task: Fill in the masked")) return infill_turn(prompt);
    return std::string(prompt);
  }

  static std::size_t previous_questions(std::string_view prompt) {
    auto p = prompt.find("Previous Conversation:");
    if (p == std::string_view::npos) return 0;
    std::size_t n = 0;
    for (p = prompt.find("\nStudent: ", p); p != std::string_view::npos;
         p = prompt.find("\nStudent: ", p + 1)) {
      ++n;
    }
    return n;
  }

  static std::string student_turn(std::string_view prompt, std::uint64_t seed) {
    const std::string title = detail::line_after(prompt, "Section Title: ");
    std::vector<std::string> topics;
    for (auto label : {"Bold Terms in Section: ", "Concepts in Section: ",
                       "Subsection Title: ", "Learning Objectives: "}) {
      for (auto& t : detail::split_list(detail::line_after(prompt, label))) {
        topics.push_back(std::move(t));
      }
    }
    if (topics.empty()) {
      const std::string summary = detail::line_after(prompt, "Section Summary: ");
      topics = detail::keywords(title + " " + (detail::filled(summary) ? summary : ""));
    }
    const std::size_t k = previous_questions(prompt);
    if (topics.empty()) {
      static constexpr std::array<std::string_view, 6> kAngles = {
          "the main idea", "a key definition", "an example", "a common mistake",
          "the underlying cause", "a real-world application"};
      return "What is " + std::string(kAngles[(k + seed) % kAngles.size()]) +
             " of " + title + "?";
    }
    const std::string& topic = topics[(k + seed) % topics.size()];
    switch ((k + (seed >> 8)) % 3) {
      case 0: return "What is " + topic + "?";
      case 1: return "How does " + topic + " relate to " + title + "?";
      default: return "Why is " + topic + " important in " + title + "?";
    }
  }

  static std::string teacher_turn(std::string_view prompt) {
    std::string question = detail::line_after(prompt, "The student's question is: ");
    if (auto p = question.find(". Provide a concise"); p != std::string::npos) {
      question.resize(p);
    }
    const std::string content = detail::line_after(prompt, "Subsection Content: ");
    std::set<std::string> used;
    if (auto p = prompt.find("Previous Conversation:"); p != std::string_view::npos) {
      for (auto q = prompt.find("\nTeacher: ", p); q != std::string_view::npos;
           q = prompt.find("\nTeacher: ", q + 1)) {
        used.insert(detail::line_after(prompt.substr(q + 1), "Teacher: "));
      }
    }
    const auto qwords = detail::content_words(question);
    std::string best;
    std::size_t best_shared = 0;
    std::string fallback;
    for (const auto& s : segment_sentences(content)) {
      if (used.count(s)) continue;
      if (fallback.empty()) fallback = s;
      std::size_t shared = 0;
      for (const auto& w : detail::content_words(s)) shared += qwords.count(w);
      if (shared > best_shared) {
        best_shared = shared;
        best = s;
      }
    }
    if (best.empty()) best = fallback;
    if (best.empty()) return "That is covered by the section as a whole.";
    return "In short, " + best;
  }

  static std::string single_instance(std::string_view prompt) {
    std::size_t pairs = 6;
    if (auto p = prompt.find("should contain "); p != std::string_view::npos) {
      pairs = static_cast<std::size_t>(std::max(1, std::atoi(prompt.data() + p + 15)));
    }
    const std::string section = detail::line_after(prompt, "The given section: ");
    const auto sentences = segment_sentences(section);
    std::string out;
    for (std::size_t i = 0; i < pairs && i < sentences.size(); ++i) {
      out += "student: Can you explain " + detail::head_words(sentences[i], 4) + "?\n";
      out += "teacher: " + sentences[i] + "\n";
    }
    return out.empty() ? "student: What is this section about?" : out;
  }

  static std::string infill_turn(std::string_view prompt) {
    auto p = prompt.find("Student: <mask>\nTeacher: ");
    if (p == std::string_view::npos) return "Could you go on?";
    const std::string next = detail::line_after(prompt.substr(p), "Teacher: ");
    return "Can you tell me about " + detail::head_words(next, 5) + "?";
  }

  MockConfig config_;
  mutable std::mutex mu_;
  std::size_t chat_calls_ = 0;
  std::size_t qa_calls_ = 0;
  std::map<std::string, std::string> chat_fixtures_;
  std::map<std::string, EmbeddingVector> sentence_fixtures_;
  std::map<std::string, QAResult> qa_fixtures_;
};

}  // namespace textdial
