#pragma once

// Automatic quality criteria for generated dialogues plus corpus BLEU.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "textdial/dialogue.hpp"
#include "textdial/error.hpp"
#include "textdial/providers/provider.hpp"
#include "textdial/text.hpp"

namespace textdial {

namespace metric {
inline constexpr std::string_view kAnswerRelevance = "answer_relevance_bf1";
inline constexpr std::string_view kCoherencePrev = "coherence_prev";
inline constexpr std::string_view kCoherenceAll = "coherence_all";
inline constexpr std::string_view kInformativeness = "informativeness";
inline constexpr std::string_view kDensity = "density";
inline constexpr std::string_view kCoverage = "coverage";
inline constexpr std::string_view kAnswerability = "answerability";
inline constexpr std::string_view kQFactScore = "qfactscore";
}  // namespace metric

/// Fixed CSV column order.
inline constexpr std::array<std::string_view, 8> kMetricColumns = {
    metric::kAnswerRelevance, metric::kCoherencePrev, metric::kCoherenceAll,
    metric::kInformativeness, metric::kDensity,       metric::kCoverage,
    metric::kAnswerability,   metric::kQFactScore};

/// Per-pair values (nullopt where undefined) and their mean over defined pairs.
struct PairScores {
  std::vector<std::optional<double>> per_pair;
  std::optional<double> mean;
};

inline std::optional<double> mean_of_defined(const std::vector<std::optional<double>>& xs) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& x : xs) {
    if (x) {
      sum += *x;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

inline PairScores make_scores(std::vector<std::optional<double>> values) {
  PairScores s{std::move(values), std::nullopt};
  s.mean = mean_of_defined(s.per_pair);
  return s;
}

// --- BF1 -------------------------------------------------------------------

/// Greedy-matching F1 over token embeddings, without IDF weighting or
/// baseline rescaling. Precision matches each candidate token to its most
/// similar reference token; recall does the reverse.
inline double bf1(const std::vector<EmbeddingVector>& candidate,
                  const std::vector<EmbeddingVector>& reference) {
  if (candidate.empty() || reference.empty()) {
    throw Error(ErrorKind::EmptyTokenList, "bf1 needs non-empty token lists");
  }
  std::vector<double> best_for_ref(reference.size(), -1.0);
  double precision = 0.0;
  for (const auto& c : candidate) {
    double best = -1.0;
    for (std::size_t j = 0; j < reference.size(); ++j) {
      const double s = cosine(c, reference[j]);
      best = std::max(best, s);
      best_for_ref[j] = std::max(best_for_ref[j], s);
    }
    precision += best;
  }
  precision /= static_cast<double>(candidate.size());
  const double recall = std::accumulate(best_for_ref.begin(), best_for_ref.end(), 0.0) /
                        static_cast<double>(reference.size());
  // Mixed signs have no meaningful harmonic mean; it also keeps F1 in [-1, 1].
  if (precision + recall == 0.0 || precision * recall < 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

/// Memoizes embeddings by text so each utterance is embedded once per run.
/// Only valid for providers that are deterministic per input.
class CachingProvider : public Provider {
 public:
  explicit CachingProvider(Provider& inner) : inner_(inner) {}

  std::string complete(const std::vector<ChatMessage>& m, const GenerationParams& p) override {
    return inner_.complete(m, p);
  }

  EmbeddingVector embed(std::string_view text) override {
    const std::string key(text);
    {
      std::lock_guard lock(mu_);
      if (auto it = sentences_.find(key); it != sentences_.end()) return it->second;
    }
    auto v = inner_.embed(text);
    std::lock_guard lock(mu_);
    return sentences_.emplace(key, std::move(v)).first->second;
  }

  std::vector<EmbeddingVector> embed_each(const std::vector<std::string>& tokens) override {
    std::vector<std::string> missing;
    {
      std::lock_guard lock(mu_);
      for (const auto& t : tokens) {
        if (!tokens_.count(t)) missing.push_back(t);
      }
    }
    std::sort(missing.begin(), missing.end());
    missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
    if (!missing.empty()) {
      auto vs = inner_.embed_each(missing);
      if (vs.size() != missing.size()) {
        throw ProviderError(ProviderErrorKind::MalformedResponse,
                            "token embedding count does not match token count");
      }
      std::lock_guard lock(mu_);
      for (std::size_t i = 0; i < missing.size(); ++i) {
        tokens_.emplace(missing[i], std::move(vs[i]));
      }
    }
    std::lock_guard lock(mu_);
    std::vector<EmbeddingVector> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(tokens_.at(t));
    return out;
  }

  QAResult answer_window(std::string_view q, std::string_view c) override {
    return inner_.answer_window(q, c);
  }

 private:
  Provider& inner_;
  std::mutex mu_;
  std::unordered_map<std::string, EmbeddingVector> sentences_;
  std::unordered_map<std::string, EmbeddingVector> tokens_;
};

namespace detail {

// Token embeddings for an utterance; nullopt when it has no tokens.
inline std::optional<std::vector<EmbeddingVector>> maybe_embed_tokens(
    Provider& provider, std::string_view text) {
  if (tokenize(text).empty()) return std::nullopt;
  return embed_tokens(provider, text);
}

}  // namespace detail

/// BF1(q_t, a_t), the question as candidate and the answer as reference.
inline PairScores answer_relevance(const Dialogue& dialogue, Provider& provider) {
  std::vector<std::optional<double>> out;
  for (const auto& p : dialogue.pairs) {
    auto q = detail::maybe_embed_tokens(provider, p.question);
    auto a = detail::maybe_embed_tokens(provider, p.answer);
    if (q && a) {
      out.emplace_back(bf1(*q, *a));
    } else {
      out.emplace_back(std::nullopt);
    }
  }
  return make_scores(std::move(out));
}

enum class CoherenceMode { Prev, All };
enum class ReferenceAggregation { Max, Mean };

/// BF1 of each question against the preceding answer (Prev) or every
/// preceding answer aggregated by max or mean (All). Pair 1 is undefined.
inline PairScores coherence(const Dialogue& dialogue, CoherenceMode mode, Provider& provider,
                            ReferenceAggregation aggregation = ReferenceAggregation::Max) {
  std::vector<std::optional<std::vector<EmbeddingVector>>> answers;
  for (const auto& p : dialogue.pairs) {
    answers.push_back(detail::maybe_embed_tokens(provider, p.answer));
  }
  std::vector<std::optional<double>> out;
  for (std::size_t t = 0; t < dialogue.pairs.size(); ++t) {
    if (t == 0) {
      out.emplace_back(std::nullopt);
      continue;
    }
    auto q = detail::maybe_embed_tokens(provider, dialogue.pairs[t].question);
    if (!q) {
      out.emplace_back(std::nullopt);
      continue;
    }
    if (mode == CoherenceMode::Prev) {
      out.emplace_back(answers[t - 1] ? std::optional<double>(bf1(*q, *answers[t - 1]))
                                      : std::nullopt);
      continue;
    }
    std::optional<double> agg;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < t; ++i) {
      if (!answers[i]) continue;
      const double s = bf1(*q, *answers[i]);
      agg = agg ? std::max(*agg, s) : s;
      sum += s;
      ++n;
    }
    if (aggregation == ReferenceAggregation::Mean && n > 0) agg = sum / static_cast<double>(n);
    out.push_back(agg);
  }
  return make_scores(std::move(out));
}

/// 1 - Jaccard(tokens(a_t), union of tokens(a_i), i < t). Pair 1 scores 1.
inline PairScores informativeness(const Dialogue& dialogue) {
  std::set<std::string> previous;
  std::vector<std::optional<double>> out;
  for (const auto& p : dialogue.pairs) {
    const auto toks = tokenize(p.answer);
    const std::set<std::string> current(toks.begin(), toks.end());
    std::size_t inter = 0;
    for (const auto& t : current) inter += previous.count(t);
    const std::size_t uni = current.size() + previous.size() - inter;
    out.emplace_back(uni == 0 ? 1.0
                              : 1.0 - static_cast<double>(inter) / static_cast<double>(uni));
    previous.insert(current.begin(), current.end());
  }
  return make_scores(std::move(out));
}

// --- extractive fragments ---------------------------------------------------

/// A token run shared verbatim by the dialogue stream and the source.
struct Fragment {
  std::vector<std::string> tokens;
  std::size_t dialogue_start = 0;
  std::size_t source_start = 0;

  bool operator==(const Fragment&) const = default;
};

struct ExtractiveStats {
  std::vector<Fragment> fragments;
  double density = 0.0;
  double coverage = 0.0;
};

/// Greedy scan: at each cursor position take the longest run found anywhere
/// in the source (earliest source offset on ties), then jump past it.
inline ExtractiveStats extractive_stats(const std::vector<std::string>& source,
                                        const std::vector<std::string>& stream) {
  ExtractiveStats out;
  if (stream.empty()) return out;

  std::unordered_map<std::string_view, std::vector<std::size_t>> positions;
  for (std::size_t j = 0; j < source.size(); ++j) positions[source[j]].push_back(j);

  double sq = 0.0;
  double lin = 0.0;
  std::size_t i = 0;
  while (i < stream.size()) {
    std::size_t best_len = 0;
    std::size_t best_src = 0;
    if (auto it = positions.find(stream[i]); it != positions.end()) {
      for (std::size_t j : it->second) {
        std::size_t len = 0;
        while (i + len < stream.size() && j + len < source.size() &&
               stream[i + len] == source[j + len]) {
          ++len;
        }
        if (len > best_len) {
          best_len = len;
          best_src = j;
        }
      }
    }
    if (best_len > 0) {
      Fragment f;
      f.tokens.assign(stream.begin() + static_cast<std::ptrdiff_t>(i),
                      stream.begin() + static_cast<std::ptrdiff_t>(i + best_len));
      f.dialogue_start = i;
      f.source_start = best_src;
      out.fragments.push_back(std::move(f));
      sq += static_cast<double>(best_len * best_len);
      lin += static_cast<double>(best_len);
    }
    i += std::max<std::size_t>(best_len, 1);
  }
  const auto n = static_cast<double>(stream.size());
  out.density = sq / n;
  out.coverage = lin / n;
  return out;
}

/// Dialogue stream h = every question and answer, in turn order.
inline std::vector<std::string> dialogue_tokens(const Dialogue& dialogue) {
  std::vector<std::string> h;
  for (const auto& p : dialogue.pairs) {
    for (auto& t : tokenize(p.question)) h.push_back(std::move(t));
    for (auto& t : tokenize(p.answer)) h.push_back(std::move(t));
  }
  return h;
}

inline ExtractiveStats extractive_stats(std::string_view source, const Dialogue& dialogue) {
  return extractive_stats(tokenize(source), dialogue_tokens(dialogue));
}

/// Coverage of the teacher side only.
inline double teacher_coverage(std::string_view source, const Dialogue& dialogue) {
  std::vector<std::string> h;
  for (const auto& p : dialogue.pairs) {
    for (auto& t : tokenize(p.answer)) h.push_back(std::move(t));
  }
  return extractive_stats(tokenize(source), h).coverage;
}

// --- QA-backed metrics ------------------------------------------------------

/// Per pair 1.0 when extractive QA finds a valid answer in the source, else
/// 0.0; the mean is the answerable ratio.
inline PairScores answerability(const Dialogue& dialogue, std::string_view source,
                                Provider& provider) {
  if (source.empty()) throw std::invalid_argument("answerability: empty source");
  std::vector<std::optional<double>> out;
  for (const auto& p : dialogue.pairs) {
    if (trim(p.question).empty()) {
      out.emplace_back(0.0);
      continue;
    }
    const QAResult r = extractive_qa(provider, p.question, source);
    out.emplace_back(is_invalid_answer(r.answer) ? 0.0 : 1.0);
  }
  return make_scores(std::move(out));
}

/// alpha * cos(QA(q_t, S), a_t) + beta * cos(q_t, a_t) over sentence
/// embeddings; the first term is 0 when QA finds nothing.
inline PairScores qfactscore(const Dialogue& dialogue, std::string_view source, double alpha,
                             double beta, Provider& provider) {
  if (alpha < 0.0 || beta < 0.0) {
    throw Error(ErrorKind::InvalidConfig, "qfactscore weights must be non-negative");
  }
  std::vector<std::optional<double>> out;
  for (const auto& p : dialogue.pairs) {
    const auto a = embed_sentence(provider, p.answer);
    const auto q = embed_sentence(provider, p.question);
    const QAResult r = extractive_qa(provider, p.question, source);
    double score = beta * cosine(q, a);
    if (!is_invalid_answer(r.answer)) {
      score += alpha * cosine(embed_sentence(provider, r.answer), a);
    }
    out.emplace_back(score);
  }
  return make_scores(std::move(out));
}

// --- BLEU --------------------------------------------------------------------

/// Corpus BLEU-4 in [0, 100] with clipped n-gram counts pooled over the
/// corpus, brevity penalty, no smoothing.
inline double corpus_bleu(const std::vector<std::string>& candidates,
                          const std::vector<std::string>& references) {
  if (candidates.size() != references.size()) {
    throw Error(ErrorKind::LengthMismatch, "candidates and references differ in length");
  }
  if (candidates.empty()) throw Error(ErrorKind::LengthMismatch, "empty corpus");
  constexpr std::size_t kOrder = 4;
  std::array<double, kOrder> matched{};
  std::array<double, kOrder> total{};
  double cand_len = 0.0;
  double ref_len = 0.0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const auto c = tokenize(candidates[s]);
    const auto r = tokenize(references[s]);
    cand_len += static_cast<double>(c.size());
    ref_len += static_cast<double>(r.size());
    for (std::size_t n = 1; n <= kOrder; ++n) {
      std::map<std::vector<std::string>, int> ref_counts;
      for (std::size_t i = 0; i + n <= r.size(); ++i) {
        ++ref_counts[std::vector<std::string>(r.begin() + static_cast<std::ptrdiff_t>(i),
                                              r.begin() + static_cast<std::ptrdiff_t>(i + n))];
      }
      std::map<std::vector<std::string>, int> cand_counts;
      for (std::size_t i = 0; i + n <= c.size(); ++i) {
        ++cand_counts[std::vector<std::string>(c.begin() + static_cast<std::ptrdiff_t>(i),
                                               c.begin() + static_cast<std::ptrdiff_t>(i + n))];
      }
      for (const auto& [gram, count] : cand_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matched[n - 1] += std::min(count, it->second);
        total[n - 1] += count;
      }
    }
  }
  double log_sum = 0.0;
  for (std::size_t n = 0; n < kOrder; ++n) {
    if (matched[n] == 0.0 || total[n] == 0.0) return 0.0;
    log_sum += std::log(matched[n] / total[n]);
  }
  const double bp = cand_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return 100.0 * bp * std::exp(log_sum / static_cast<double>(kOrder));
}

// --- reports -----------------------------------------------------------------

struct MetricReport {
  std::string dialogue_id;
  std::map<std::string, std::vector<std::optional<double>>, std::less<>> per_pair;
  std::map<std::string, double, std::less<>> per_dialogue;
  std::map<std::string, std::string, std::less<>> skipped;  // metric -> reason

  void put(std::string_view name, const PairScores& s) {
    per_pair[std::string(name)] = s.per_pair;
    if (s.mean) per_dialogue[std::string(name)] = *s.mean;
  }

  std::optional<double> value(std::string_view name) const {
    auto it = per_dialogue.find(name);
    if (it == per_dialogue.end()) return std::nullopt;
    return it->second;
  }
};

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json per_pair = nlohmann::json::object();
  for (const auto& [k, vs] : r.per_pair) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& v : vs) arr.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
    per_pair[k] = arr;
  }
  return {{"dialogue_id", r.dialogue_id},
          {"per_pair", per_pair},
          {"per_dialogue", r.per_dialogue},
          {"skipped", r.skipped}};
}

inline MetricReport metric_report_from_json(const nlohmann::json& j) {
  MetricReport r;
  try {
    r.dialogue_id = j.at("dialogue_id").get<std::string>();
    for (const auto& [k, arr] : j.at("per_pair").items()) {
      auto& vs = r.per_pair[k];
      for (const auto& v : arr) {
        vs.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
      }
    }
    for (const auto& [k, v] : j.at("per_dialogue").items()) r.per_dialogue[k] = v.get<double>();
    if (j.contains("skipped")) {
      for (const auto& [k, v] : j.at("skipped").items()) r.skipped[k] = v.get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("malformed metric report: ") + e.what());
  }
  return r;
}

/// Scores a (question, answer) pair with an external model, e.g. a QuestEval
/// or Uptake service. Reported as an extra per-pair column.
using PairScorer = std::function<double(const QAPair&)>;

struct EvalOptions {
  double alpha = 1.0;
  double beta = 1.0;
  ReferenceAggregation coherence_all_aggregation = ReferenceAggregation::Max;
  std::map<std::string, PairScorer> external_scorers;
};

/// Every metric for one dialogue. With `provider == nullptr` the
/// provider-backed metrics are recorded as skipped.
inline MetricReport evaluate_dialogue(const Dialogue& dialogue, std::string_view source,
                                      Provider* provider, const EvalOptions& options = {}) {
  MetricReport report;
  report.dialogue_id = dialogue.meta.id;
  report.put(metric::kInformativeness, informativeness(dialogue));
  const auto ext = extractive_stats(source, dialogue);
  report.per_dialogue[std::string(metric::kDensity)] = ext.density;
  report.per_dialogue[std::string(metric::kCoverage)] = ext.coverage;

  if (provider == nullptr) {
    for (auto name : {metric::kAnswerRelevance, metric::kCoherencePrev, metric::kCoherenceAll,
                      metric::kAnswerability, metric::kQFactScore}) {
      report.skipped[std::string(name)] = "offline: provider-backed metric";
    }
  } else {
    report.put(metric::kAnswerRelevance, answer_relevance(dialogue, *provider));
    report.put(metric::kCoherencePrev, coherence(dialogue, CoherenceMode::Prev, *provider));
    report.put(metric::kCoherenceAll, coherence(dialogue, CoherenceMode::All, *provider,
                                                options.coherence_all_aggregation));
    report.put(metric::kAnswerability, answerability(dialogue, source, *provider));
    report.put(metric::kQFactScore,
               qfactscore(dialogue, source, options.alpha, options.beta, *provider));
  }
  for (const auto& [name, scorer] : options.external_scorers) {
    std::vector<std::optional<double>> vs;
    for (const auto& p : dialogue.pairs) vs.emplace_back(scorer(p));
    report.put(name, make_scores(std::move(vs)));
  }
  return report;
}

namespace detail {

inline std::string format_value(double v) {
  std::array<char, 64> buf{};
  std::snprintf(buf.data(), buf.size(), "%.6f", v);
  return buf.data();
}

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

}  // namespace detail

/// One row per report plus a MEAN row. Undefined cells are empty; skipped
/// metrics read "skipped". Extra columns follow the fixed ones, sorted.
inline std::string metrics_csv(const std::vector<MetricReport>& reports) {
  std::vector<std::string> columns(kMetricColumns.begin(), kMetricColumns.end());
  std::set<std::string> extra;
  for (const auto& r : reports) {
    for (const auto& [k, _] : r.per_pair) {
      if (std::find(columns.begin(), columns.end(), k) == columns.end()) extra.insert(k);
    }
  }
  columns.insert(columns.end(), extra.begin(), extra.end());

  std::string out = "dialogue_id";
  for (const auto& c : columns) out += "," + c;
  out += "\n";
  std::vector<double> sums(columns.size(), 0.0);
  std::vector<std::size_t> counts(columns.size(), 0);
  std::vector<bool> any_skipped(columns.size(), false);
  for (const auto& r : reports) {
    out += detail::csv_escape(r.dialogue_id);
    for (std::size_t c = 0; c < columns.size(); ++c) {
      out += ",";
      if (r.skipped.count(columns[c])) {
        out += "skipped";
        any_skipped[c] = true;
      } else if (auto v = r.value(columns[c])) {
        out += detail::format_value(*v);
        sums[c] += *v;
        ++counts[c];
      }
    }
    out += "\n";
  }
  out += "MEAN";
  for (std::size_t c = 0; c < columns.size(); ++c) {
    out += ",";
    if (counts[c] > 0) {
      out += detail::format_value(sums[c] / static_cast<double>(counts[c]));
    } else if (any_skipped[c]) {
      out += "skipped";
    }
  }
  out += "\n";
  return out;
}

}  // namespace textdial
