#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "textdial/corpus.hpp"
#include "textdial/error.hpp"
#include "textdial/text.hpp"

namespace textdial {

enum class Strategy { PersonaDual, PersonaSingle, Inpainting, QGQA };

constexpr std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::PersonaDual: return "persona-dual";
    case Strategy::PersonaSingle: return "persona-single";
    case Strategy::Inpainting: return "inpainting";
    case Strategy::QGQA: return "qgqa";
  }
  return "persona-dual";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) {
  const std::string v = to_lower_ascii(s);
  if (v == "persona-dual" || v == "personadual") return Strategy::PersonaDual;
  if (v == "persona-single" || v == "personasingle") return Strategy::PersonaSingle;
  if (v == "inpainting") return Strategy::Inpainting;
  if (v == "qgqa" || v == "qg-qa") return Strategy::QGQA;
  return std::nullopt;
}

struct QAPair {
  int index = 0;  // 1-based turn index t
  std::string question;
  std::string answer;

  bool operator==(const QAPair&) const = default;
};

struct DialogueMeta {
  std::string id;
  std::string book_id;
  int chapter_index = 0;
  std::string section_id;
  Strategy strategy = Strategy::PersonaDual;
  InfoLevel info_level = InfoLevel::Full;
  std::int64_t seed = 0;
  std::string created_at;

  bool operator==(const DialogueMeta&) const = default;
};

struct Dialogue {
  std::vector<QAPair> pairs;
  DialogueMeta meta;

  bool operator==(const Dialogue&) const = default;
  bool empty() const { return pairs.empty(); }
  std::size_t size() const { return pairs.size(); }
};

/// Returns a copy of `dialogue` with (question, answer) appended as pair n+1.
inline Dialogue append_pair(const Dialogue& dialogue, std::string_view question,
                            std::string_view answer) {
  std::string q = trim(question);
  std::string a = trim(answer);
  if (q.empty() || a.empty()) {
    throw Error(ErrorKind::EmptyUtterance,
                q.empty() ? "question is empty" : "answer is empty");
  }
  Dialogue out = dialogue;
  out.pairs.push_back(
      {static_cast<int>(dialogue.pairs.size()) + 1, std::move(q), std::move(a)});
  return out;
}

/// "Student: q" / "Teacher: a" lines in pair order.
inline std::string render_history(const Dialogue& dialogue) {
  std::string out;
  for (const auto& p : dialogue.pairs) {
    if (!out.empty()) out.push_back('\n');
    out += "Student: " + p.question + "\nTeacher: " + p.answer;
  }
  return out;
}

struct TranscriptParse {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::vector<std::string> warnings;
};

/// Splits a "student: ... teacher: ..." transcript into (question, answer)
/// pairs. Labels are case-insensitive and may carry bullets or markdown bold.
inline TranscriptParse parse_transcript(std::string_view text) {
  static const std::regex kLabel(
      R"((?:\*\*)?\b(student|teacher)\b\s*(?:\*\*)?\s*:\s*(?:\*\*)?)",
      std::regex::icase | std::regex::ECMAScript);

  struct Utterance {
    bool student;
    std::string text;
  };
  std::vector<Utterance> utterances;

  const std::string s(text);
  auto begin = std::sregex_iterator(s.begin(), s.end(), kLabel);
  auto end = std::sregex_iterator();
  std::optional<bool> current;
  std::size_t body_start = 0;
  auto flush = [&](std::size_t body_end) {
    if (!current) return;
    std::string body = trim(std::string_view(s).substr(body_start, body_end - body_start));
    // Bullet markers that introduced the next label.
    while (!body.empty() &&
           (body.back() == '-' || body.back() == '*' || body.back() == ' ')) {
      body.pop_back();
    }
    if (body.size() >= 3 && body.compare(body.size() - 3, 3, "\xE2\x80\xA2") == 0) {
      body.resize(body.size() - 3);
    }
    utterances.push_back({*current, trim(body)});
  };
  for (auto it = begin; it != end; ++it) {
    const auto& m = *it;
    flush(static_cast<std::size_t>(m.position(0)));
    current = to_lower_ascii(m.str(1)) == "student";
    body_start = static_cast<std::size_t>(m.position(0) + m.length(0));
  }
  flush(s.size());

  TranscriptParse result;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const auto& u = utterances[i];
    if (!u.student) {
      result.warnings.push_back("teacher utterance without a question dropped");
      continue;
    }
    if (i + 1 >= utterances.size()) {
      result.warnings.push_back("trailing unanswered student utterance dropped");
      break;
    }
    const auto& next = utterances[i + 1];
    if (next.student) {
      result.warnings.push_back("student utterance without an answer dropped");
      continue;
    }
    if (u.text.empty() || next.text.empty()) {
      result.warnings.push_back("empty utterance dropped");
    } else {
      result.pairs.emplace_back(u.text, next.text);
    }
    ++i;
  }
  if (result.pairs.empty()) {
    throw Error(ErrorKind::NoPairsFound, "no student/teacher pair found in transcript");
  }
  return result;
}

/// Keeps at most max_turns / 2 pairs. Turns count utterances, so the cap must
/// be even and at least 2.
inline Dialogue truncate_pairs(const Dialogue& dialogue, int max_turns) {
  if (max_turns < 2 || max_turns % 2 != 0) {
    throw Error(ErrorKind::InvalidTurnCap,
                "max_turns must be even and >= 2, got " + std::to_string(max_turns));
  }
  Dialogue out = dialogue;
  const auto cap = static_cast<std::size_t>(max_turns / 2);
  if (out.pairs.size() > cap) out.pairs.resize(cap);
  return out;
}

// --- JSONL ------------------------------------------------------------------

inline nlohmann::json to_json(const DialogueMeta& m) {
  return {{"id", m.id},
          {"book_id", m.book_id},
          {"chapter_index", m.chapter_index},
          {"section_id", m.section_id},
          {"strategy", to_string(m.strategy)},
          {"info_level", to_string(m.info_level)},
          {"seed", m.seed},
          {"created_at", m.created_at}};
}

inline nlohmann::json to_json(const Dialogue& d) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : d.pairs) {
    pairs.push_back({{"t", p.index}, {"q", p.question}, {"a", p.answer}});
  }
  return {{"meta", to_json(d.meta)}, {"pairs", pairs}};
}

inline Dialogue dialogue_from_json(const nlohmann::json& j) {
  try {
    Dialogue d;
    const auto& m = j.at("meta");
    d.meta.id = m.value("id", std::string{});
    d.meta.book_id = m.at("book_id").get<std::string>();
    d.meta.chapter_index = m.value("chapter_index", 0);
    d.meta.section_id = m.at("section_id").get<std::string>();
    auto strategy = parse_strategy(m.at("strategy").get<std::string>());
    if (!strategy) throw Error(ErrorKind::Schema, "unknown strategy in meta");
    d.meta.strategy = *strategy;
    auto level = parse_info_level(m.value("info_level", std::string("full")));
    if (!level) throw Error(ErrorKind::Schema, "unknown info_level in meta");
    d.meta.info_level = *level;
    d.meta.seed = m.value("seed", std::int64_t{0});
    d.meta.created_at = m.value("created_at", std::string{});
    if (d.meta.id.empty()) {
      d.meta.id = d.meta.book_id + "/" + d.meta.section_id + "/" +
                  std::string(to_string(d.meta.strategy));
    }
    int expected = 1;
    for (const auto& p : j.at("pairs")) {
      QAPair pair{p.at("t").get<int>(), p.at("q").get<std::string>(),
                  p.at("a").get<std::string>()};
      if (pair.index != expected++) {
        throw Error(ErrorKind::Schema, "pair indices must be 1..n contiguous");
      }
      d.pairs.push_back(std::move(pair));
    }
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("malformed dialogue record: ") + e.what());
  }
}

inline std::vector<Dialogue> read_dialogues(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::vector<Dialogue> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(dialogue_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::Schema,
                  path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.kind(), path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_dialogues(const std::filesystem::path& path,
                            const std::vector<Dialogue>& dialogues) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& d : dialogues) out << to_json(d).dump() << '\n';
}

}  // namespace textdial
