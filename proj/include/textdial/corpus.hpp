#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "textdial/error.hpp"
#include "textdial/hash.hpp"
#include "textdial/text.hpp"

namespace textdial {

/// Structural metadata of a section, kept apart from its prose.
struct FormattingInfo {
  std::string title;
  std::string summary;
  std::string introduction;
  std::vector<std::string> learning_objectives;
  std::vector<std::string> bold_terms;
  std::vector<std::string> key_concepts;

  bool operator==(const FormattingInfo&) const = default;
};

struct Section {
  std::string id;
  std::string title;
  std::string content;
  std::vector<std::string> subsection_titles;
  FormattingInfo formatting;

  bool operator==(const Section&) const = default;
};

struct Chapter {
  int index = 0;
  std::string title;
  std::vector<Section> sections;

  bool operator==(const Chapter&) const = default;
};

struct Book {
  std::string id;
  std::string title;
  std::string domain_label;
  std::vector<Chapter> chapters;

  bool operator==(const Book&) const = default;

  std::size_t section_count() const {
    std::size_t n = 0;
    for (const auto& ch : chapters) n += ch.sections.size();
    return n;
  }
};

enum class InfoLevel { Low, Medium, High, Full };

constexpr std::string_view to_string(InfoLevel level) {
  switch (level) {
    case InfoLevel::Low: return "low";
    case InfoLevel::Medium: return "medium";
    case InfoLevel::High: return "high";
    case InfoLevel::Full: return "full";
  }
  return "full";
}

inline std::optional<InfoLevel> parse_info_level(std::string_view s) {
  const std::string v = to_lower_ascii(s);
  if (v == "low") return InfoLevel::Low;
  if (v == "medium") return InfoLevel::Medium;
  if (v == "high") return InfoLevel::High;
  if (v == "full") return InfoLevel::Full;
  return std::nullopt;
}

/// Field names used in StudentContext::rendered_fields.
namespace field {
inline constexpr std::string_view kTitle = "title";
inline constexpr std::string_view kSummary = "summary";
inline constexpr std::string_view kIntroduction = "introduction";
inline constexpr std::string_view kLearningObjectives = "learning_objectives";
inline constexpr std::string_view kBoldTerms = "bold_terms";
inline constexpr std::string_view kKeyConcepts = "key_concepts";
inline constexpr std::string_view kSubsectionTitles = "subsection_titles";
inline constexpr std::string_view kContent = "content";
}  // namespace field

/// The partial view of a section handed to the student role.
struct StudentContext {
  InfoLevel info_level = InfoLevel::Low;
  std::map<std::string, std::string, std::less<>> rendered_fields;

  bool exposes(std::string_view name) const {
    return rendered_fields.find(name) != rendered_fields.end();
  }

  /// Exposed text for `name`, or empty when the field is withheld.
  std::string_view get(std::string_view name) const {
    auto it = rendered_fields.find(name);
    return it == rendered_fields.end() ? std::string_view{} : it->second;
  }
};

inline std::string render_list(const std::vector<std::string>& items) {
  return join(items, "; ");
}

/// Low: title. Medium: title + summary. High: every formatting field plus
/// subsection headings. Full: High plus the section prose.
inline StudentContext select_context(
    const FormattingInfo& formatting, std::string_view content, InfoLevel level,
    const std::vector<std::string>& subsection_titles = {}) {
  StudentContext ctx;
  ctx.info_level = level;
  auto put = [&](std::string_view name, std::string value) {
    ctx.rendered_fields.emplace(std::string(name), std::move(value));
  };
  put(field::kTitle, formatting.title);
  if (level == InfoLevel::Low) return ctx;
  put(field::kSummary, formatting.summary);
  if (level == InfoLevel::Medium) return ctx;
  put(field::kIntroduction, formatting.introduction);
  put(field::kLearningObjectives, render_list(formatting.learning_objectives));
  put(field::kBoldTerms, render_list(formatting.bold_terms));
  put(field::kKeyConcepts, render_list(formatting.key_concepts));
  put(field::kSubsectionTitles, render_list(subsection_titles));
  if (level == InfoLevel::High) return ctx;
  put(field::kContent, std::string(content));
  return ctx;
}

inline StudentContext select_context(const Section& section, InfoLevel level) {
  return select_context(section.formatting, section.content, level,
                        section.subsection_titles);
}

// --- canonical textbook JSON ------------------------------------------------

namespace detail {

using nlohmann::json;

inline const json& require(const json& obj, std::string_view key,
                           const std::string& path) {
  if (!obj.is_object()) {
    throw Error(ErrorKind::Schema, "schema error: " + path + " is not an object");
  }
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw Error(ErrorKind::Schema, "schema error: missing required field " +
                                       path + (path.empty() ? "" : ".") +
                                       std::string(key));
  }
  return *it;
}

inline std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) {
    throw Error(ErrorKind::Schema, "schema error: " + path + " must be a string");
  }
  return nfc(v.get<std::string>());
}

inline std::string required_string(const json& obj, std::string_view key,
                                   const std::string& path) {
  return as_string(require(obj, key, path),
                   path + (path.empty() ? "" : ".") + std::string(key));
}

inline std::string optional_string(const json& obj, std::string_view key,
                                   const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  return as_string(*it, path + "." + std::string(key));
}

inline std::vector<std::string> optional_strings(const json& obj,
                                                 std::string_view key,
                                                 const std::string& path) {
  std::vector<std::string> out;
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return out;
  const std::string p = path + "." + std::string(key);
  if (!it->is_array()) {
    throw Error(ErrorKind::Schema, "schema error: " + p + " must be an array");
  }
  for (std::size_t i = 0; i < it->size(); ++i) {
    out.push_back(as_string((*it)[i], p + "[" + std::to_string(i) + "]"));
  }
  return out;
}

inline const json& required_array(const json& obj, std::string_view key,
                                  const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_array()) {
    throw Error(ErrorKind::Schema, "schema error: " + path +
                                       (path.empty() ? "" : ".") +
                                       std::string(key) + " must be an array");
  }
  return v;
}

}  // namespace detail

/// Builds a Book from a canonical textbook document. Strings are NFC-normalized.
/// Sections with empty content are accepted here; synthesis rejects them.
inline Book parse_textbook(const nlohmann::json& doc) {
  using detail::optional_string;
  using detail::optional_strings;
  using detail::required_array;
  using detail::required_string;

  Book book;
  book.id = required_string(doc, "id", "");
  if (book.id.empty()) throw Error(ErrorKind::Schema, "schema error: id is empty");
  book.title = required_string(doc, "title", "");
  book.domain_label = optional_string(doc, "domain", "");
  const auto& chapters = required_array(doc, "chapters", "");
  if (chapters.empty()) {
    throw Error(ErrorKind::EmptyBook, "book '" + book.id + "' has no chapters");
  }

  std::set<std::string> section_ids;
  for (std::size_t ci = 0; ci < chapters.size(); ++ci) {
    const std::string cpath = "chapters[" + std::to_string(ci) + "]";
    const auto& cj = chapters[ci];
    Chapter ch;
    const auto& idx = detail::require(cj, "index", cpath);
    if (!idx.is_number_integer()) {
      throw Error(ErrorKind::Schema, "schema error: " + cpath + ".index must be an integer");
    }
    ch.index = idx.get<int>();
    if (ch.index != static_cast<int>(ci) + 1) {
      throw Error(ErrorKind::Schema,
                  "schema error: " + cpath + ".index must be " +
                      std::to_string(ci + 1) + " (1-based, contiguous)");
    }
    ch.title = required_string(cj, "title", cpath);
    const auto& sections = required_array(cj, "sections", cpath);
    for (std::size_t si = 0; si < sections.size(); ++si) {
      const std::string spath = cpath + ".sections[" + std::to_string(si) + "]";
      const auto& sj = sections[si];
      Section sec;
      sec.id = required_string(sj, "id", spath);
      if (sec.id.empty()) {
        throw Error(ErrorKind::Schema, "schema error: " + spath + ".id is empty");
      }
      if (!section_ids.insert(sec.id).second) {
        throw Error(ErrorKind::Schema,
                    "schema error: duplicate section id '" + sec.id + "' at " + spath);
      }
      sec.title = required_string(sj, "title", spath);
      sec.content = required_string(sj, "content", spath);
      sec.subsection_titles = optional_strings(sj, "subsection_titles", spath);
      const std::string fpath = spath + ".formatting";
      const auto& fj = detail::require(sj, "formatting", spath);
      sec.formatting.title = required_string(fj, "title", fpath);
      if (sec.formatting.title.empty()) {
        throw Error(ErrorKind::Schema, "schema error: " + fpath + ".title is empty");
      }
      sec.formatting.summary = optional_string(fj, "summary", fpath);
      sec.formatting.introduction = optional_string(fj, "introduction", fpath);
      sec.formatting.learning_objectives =
          optional_strings(fj, "learning_objectives", fpath);
      sec.formatting.bold_terms = optional_strings(fj, "bold_terms", fpath);
      sec.formatting.key_concepts = optional_strings(fj, "key_concepts", fpath);
      ch.sections.push_back(std::move(sec));
    }
    book.chapters.push_back(std::move(ch));
  }
  return book;
}

inline nlohmann::json to_json(const Book& book) {
  nlohmann::json chapters = nlohmann::json::array();
  for (const auto& ch : book.chapters) {
    nlohmann::json sections = nlohmann::json::array();
    for (const auto& s : ch.sections) {
      const auto& f = s.formatting;
      sections.push_back({{"id", s.id},
                          {"title", s.title},
                          {"content", s.content},
                          {"subsection_titles", s.subsection_titles},
                          {"formatting",
                           {{"title", f.title},
                            {"summary", f.summary},
                            {"introduction", f.introduction},
                            {"learning_objectives", f.learning_objectives},
                            {"bold_terms", f.bold_terms},
                            {"key_concepts", f.key_concepts}}}});
    }
    chapters.push_back(
        {{"index", ch.index}, {"title", ch.title}, {"sections", sections}});
  }
  return {{"id", book.id},
          {"title", book.title},
          {"domain", book.domain_label},
          {"chapters", chapters}};
}

inline Book parse_textbook_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Schema, path.string() + ": " + e.what());
  }
  return parse_textbook(doc);
}

/// A set of books with unique ids.
class Corpus {
 public:
  struct Location {
    const Book* book = nullptr;
    const Chapter* chapter = nullptr;
    const Section* section = nullptr;
  };

  Corpus() = default;
  explicit Corpus(std::vector<Book> books) : books_(std::move(books)) {
    std::set<std::string> ids;
    for (const auto& b : books_) {
      if (!ids.insert(b.id).second) {
        throw Error(ErrorKind::Schema, "duplicate book id '" + b.id + "' in corpus");
      }
    }
  }

  /// Reads a single textbook file or every *.json file in a directory
  /// (sorted by file name).
  static Corpus load(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    if (fs::is_directory(path)) {
      for (const auto& e : fs::directory_iterator(path)) {
        // Fixture manifests sit next to their books and are not books.
        if (e.is_regular_file() && e.path().extension() == ".json" &&
            !e.path().filename().string().ends_with(".manifest.json")) {
          files.push_back(e.path());
        }
      }
      std::sort(files.begin(), files.end());
    } else {
      files.push_back(path);
    }
    if (files.empty()) {
      throw Error(ErrorKind::Io, "no textbook files under " + path.string());
    }
    std::vector<Book> books;
    for (const auto& f : files) books.push_back(parse_textbook_file(f));
    return Corpus(std::move(books));
  }

  const std::vector<Book>& books() const { return books_; }

  std::optional<Location> find(std::string_view book_id,
                               std::string_view section_id) const {
    for (const auto& b : books_) {
      if (b.id != book_id) continue;
      for (const auto& ch : b.chapters) {
        for (const auto& s : ch.sections) {
          if (s.id == section_id) return Location{&b, &ch, &s};
        }
      }
    }
    return std::nullopt;
  }

  /// Order-sensitive fingerprint of the canonical serialization.
  std::uint64_t fingerprint() const {
    std::uint64_t h = fnv1a("corpus");
    for (const auto& b : books_) h = fnv1a(to_json(b).dump(), h);
    return h;
  }

 private:
  std::vector<Book> books_;
};

}  // namespace textdial
