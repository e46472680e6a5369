#pragma once

// Dataset statistics and metric-validation correlations.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "textdial/dialogue.hpp"
#include "textdial/error.hpp"
#include "textdial/metrics.hpp"
#include "textdial/text.hpp"

namespace textdial {

struct QuestionTypeStats {
  double pct_what_which = 0.0;
  double pct_why = 0.0;
  double pct_how = 0.0;
};

namespace detail {

inline std::size_t total_pairs(const std::vector<Dialogue>& dialogues) {
  std::size_t n = 0;
  for (const auto& d : dialogues) n += d.pairs.size();
  return n;
}

}  // namespace detail

/// Buckets are non-exclusive. "how" counts unless every occurrence is
/// directly followed by "much" or "many".
inline QuestionTypeStats question_type_stats(const std::vector<Dialogue>& dialogues) {
  const std::size_t total = detail::total_pairs(dialogues);
  if (total == 0) throw Error(ErrorKind::EmptyDataset, "dataset has no QA pairs");
  std::size_t what = 0;
  std::size_t why = 0;
  std::size_t how = 0;
  for (const auto& d : dialogues) {
    for (const auto& p : d.pairs) {
      const auto toks = tokenize(p.question);
      bool has_what = false;
      bool has_why = false;
      bool has_how = false;
      for (std::size_t i = 0; i < toks.size(); ++i) {
        if (toks[i] == "what" || toks[i] == "which") has_what = true;
        if (toks[i] == "why") has_why = true;
        if (toks[i] == "how" &&
            !(i + 1 < toks.size() && (toks[i + 1] == "much" || toks[i + 1] == "many"))) {
          has_how = true;
        }
      }
      what += has_what;
      why += has_why;
      how += has_how;
    }
  }
  const auto pct = [total](std::size_t k) {
    return 100.0 * static_cast<double>(k) / static_cast<double>(total);
  };
  return {pct(what), pct(why), pct(how)};
}

struct LengthStats {
  double avg_tokens_question = 0.0;
  double avg_tokens_answer = 0.0;
  double avg_words_per_utterance = 0.0;
};

inline LengthStats length_stats(const std::vector<Dialogue>& dialogues) {
  const std::size_t total = detail::total_pairs(dialogues);
  if (total == 0) throw Error(ErrorKind::EmptyDataset, "dataset has no QA pairs");
  std::size_t q = 0;
  std::size_t a = 0;
  for (const auto& d : dialogues) {
    for (const auto& p : d.pairs) {
      q += tokenize(p.question).size();
      a += tokenize(p.answer).size();
    }
  }
  const auto n = static_cast<double>(total);
  return {static_cast<double>(q) / n, static_cast<double>(a) / n,
          static_cast<double>(q + a) / (2.0 * n)};
}

/// Shannon entropy (bits) of the within-utterance token bigram distribution.
inline double bigram_entropy(const std::vector<Dialogue>& dialogues) {
  std::map<std::pair<std::string, std::string>, std::size_t> counts;
  std::size_t total = 0;
  auto add = [&](std::string_view utterance) {
    const auto toks = tokenize(utterance);
    for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
      ++counts[{toks[i], toks[i + 1]}];
      ++total;
    }
  };
  for (const auto& d : dialogues) {
    for (const auto& p : d.pairs) {
      add(p.question);
      add(p.answer);
    }
  }
  if (total == 0) throw Error(ErrorKind::NoBigrams, "no utterance has two or more tokens");
  double h = 0.0;
  for (const auto& [_, c] : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h == 0.0 ? 0.0 : h;  // no negative zero
}

struct DatasetStats {
  double pct_what_which = 0.0;
  double pct_why = 0.0;
  double pct_how = 0.0;
  double avg_tokens_question = 0.0;
  double avg_tokens_answer = 0.0;
  double bigram_entropy_bits = 0.0;
  double avg_words_per_utterance = 0.0;
  std::size_t n_dialogues = 0;
  std::size_t n_pairs = 0;
};

/// Dialogues without pairs are ignored. Bigram entropy is 0 when no
/// utterance has two tokens.
inline DatasetStats dataset_stats(const std::vector<Dialogue>& dialogues) {
  DatasetStats s;
  for (const auto& d : dialogues) {
    if (!d.empty()) ++s.n_dialogues;
  }
  s.n_pairs = detail::total_pairs(dialogues);
  const auto types = question_type_stats(dialogues);
  s.pct_what_which = types.pct_what_which;
  s.pct_why = types.pct_why;
  s.pct_how = types.pct_how;
  const auto lengths = length_stats(dialogues);
  s.avg_tokens_question = lengths.avg_tokens_question;
  s.avg_tokens_answer = lengths.avg_tokens_answer;
  s.avg_words_per_utterance = lengths.avg_words_per_utterance;
  try {
    s.bigram_entropy_bits = bigram_entropy(dialogues);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NoBigrams) throw;
  }
  return s;
}

inline nlohmann::json to_json(const DatasetStats& s) {
  return {{"pct_what_which", s.pct_what_which},
          {"pct_why", s.pct_why},
          {"pct_how", s.pct_how},
          {"avg_tokens_question", s.avg_tokens_question},
          {"avg_tokens_answer", s.avg_tokens_answer},
          {"bigram_entropy_bits", s.bigram_entropy_bits},
          {"avg_words_per_utterance", s.avg_words_per_utterance},
          {"n_dialogues", s.n_dialogues},
          {"n_pairs", s.n_pairs}};
}

inline std::string render_table(const DatasetStats& s) {
  std::ostringstream out;
  auto row = [&](const char* name, double v, int prec) {
    std::array<char, 96> buf{};
    std::snprintf(buf.data(), buf.size(), "%-26s %12.*f\n", name, prec, v);
    out << buf.data();
  };
  out << "statistic                         value\n";
  out << "---------------------------------------\n";
  row("dialogues", static_cast<double>(s.n_dialogues), 0);
  row("qa pairs", static_cast<double>(s.n_pairs), 0);
  row("what/which questions (%)", s.pct_what_which, 2);
  row("why questions (%)", s.pct_why, 2);
  row("how questions (%)", s.pct_how, 2);
  row("avg tokens / question", s.avg_tokens_question, 2);
  row("avg tokens / answer", s.avg_tokens_answer, 2);
  row("avg words / utterance", s.avg_words_per_utterance, 2);
  row("bigram entropy (bits)", s.bigram_entropy_bits, 4);
  return out.str();
}

// --- correlation -------------------------------------------------------------

struct CorrelationResult {
  double coefficient = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

inline nlohmann::json to_json(const CorrelationResult& r) {
  return {{"coefficient", r.coefficient}, {"p_value", r.p_value}, {"n", r.n}};
}

namespace detail {

inline void check_pair(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) {
    throw Error(ErrorKind::LengthMismatch, "correlation inputs differ in length");
  }
  if (x.size() < 3) {
    throw Error(ErrorKind::LengthMismatch, "correlation needs at least 3 observations");
  }
}

/// Two-tailed p-value of r under H0: rho = 0, via Student-t with n - 2 dof.
inline double correlation_p_value(double r, std::size_t n) {
  if (std::abs(r) >= 1.0) return 0.0;
  const double dof = static_cast<double>(n - 2);
  const double t = r * std::sqrt(dof / (1.0 - r * r));
  boost::math::students_t dist(dof);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace detail

inline CorrelationResult pearson(const std::vector<double>& x, const std::vector<double>& y) {
  detail::check_pair(x, y);
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw Error(ErrorKind::ConstantInput, "correlation input is constant");
  }
  const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return {r, detail::correlation_p_value(r, x.size()), x.size()};
}

/// 1-based ranks; tied values share the average of the ranks they span.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

inline CorrelationResult spearman(const std::vector<double>& x, const std::vector<double>& y) {
  detail::check_pair(x, y);
  return pearson(average_ranks(x), average_ranks(y));
}

// --- annotations -------------------------------------------------------------

struct AnnotationRecord {
  std::string dialogue_id;
  int pair_index = 0;
  std::string criterion;
  int human_score = 0;
  double metric_score = 0.0;
};

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

}  // namespace detail

/// Reads `dialogue_id,pair_index,criterion,human_score` rows. human_score must
/// be 0 or 1.
inline std::vector<AnnotationRecord> read_annotations(std::istream& in,
                                                      const std::string& name = "annotations") {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Schema, name + ": empty file");
  const auto header = detail::split_csv_line(line);
  const std::vector<std::string> expected = {"dialogue_id", "pair_index", "criterion",
                                             "human_score"};
  if (header.size() < expected.size() ||
      !std::equal(expected.begin(), expected.end(), header.begin())) {
    throw Error(ErrorKind::Schema,
                name + ": header must start with dialogue_id,pair_index,criterion,human_score");
  }
  std::vector<AnnotationRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    const std::string where = name + ":" + std::to_string(lineno);
    if (cells.size() < 4) throw Error(ErrorKind::Schema, where + ": expected 4 columns");
    AnnotationRecord r;
    r.dialogue_id = cells[0];
    r.criterion = cells[2];
    try {
      r.pair_index = std::stoi(cells[1]);
      r.human_score = std::stoi(cells[3]);
    } catch (const std::exception&) {
      throw Error(ErrorKind::Schema, where + ": pair_index and human_score must be integers");
    }
    if (r.human_score != 0 && r.human_score != 1) {
      throw Error(ErrorKind::Schema, where + ": human_score must be 0 or 1");
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return read_annotations(in, path.string());
}

/// Fills metric_score for every record of `criterion` from the per-pair
/// values of `metric`. Any record that cannot be matched is an error; the
/// message lists each one.
inline std::vector<AnnotationRecord> join_annotations(
    const std::vector<AnnotationRecord>& records,
    const std::map<std::string, MetricReport>& reports_by_id, std::string_view metric,
    std::string_view criterion) {
  std::vector<AnnotationRecord> out;
  std::vector<std::string> unmatched;
  for (const auto& r : records) {
    if (r.criterion != criterion) continue;
    auto it = reports_by_id.find(r.dialogue_id);
    const std::string key = r.dialogue_id + "#" + std::to_string(r.pair_index);
    if (it == reports_by_id.end()) {
      unmatched.push_back(key + " (unknown dialogue_id)");
      continue;
    }
    auto m = it->second.per_pair.find(metric);
    if (m == it->second.per_pair.end()) {
      unmatched.push_back(key + " (no per-pair values for " + std::string(metric) + ")");
      continue;
    }
    const auto idx = static_cast<std::size_t>(r.pair_index);
    if (r.pair_index < 1 || idx > m->second.size() || !m->second[idx - 1]) {
      unmatched.push_back(key + " (pair has no value)");
      continue;
    }
    AnnotationRecord joined = r;
    joined.metric_score = *m->second[idx - 1];
    out.push_back(std::move(joined));
  }
  if (!unmatched.empty()) {
    std::string msg = "unmatched annotation rows:";
    for (const auto& u : unmatched) msg += "\n  " + u;
    throw Error(ErrorKind::UnmatchedJoin, msg);
  }
  return out;
}

}  // namespace textdial
