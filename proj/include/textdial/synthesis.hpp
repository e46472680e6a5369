#pragma once

// Dialogue generation strategies. The student role only ever sees a
// StudentContext; the teacher role sees the full section.

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "textdial/corpus.hpp"
#include "textdial/dialogue.hpp"
#include "textdial/error.hpp"
#include "textdial/providers/provider.hpp"
#include "textdial/text.hpp"

namespace textdial {

struct SynthesisConfig {
  Strategy strategy = Strategy::PersonaDual;
  InfoLevel info_level = InfoLevel::High;
  int max_turns = 12;
  GenerationParams params{0.7, 256, std::nullopt};  // student / single-call budget
  int teacher_max_output_tokens = 512;
  std::int64_t seed = 0;
  std::string created_at;

  void validate() const {
    if (max_turns < 2 || max_turns % 2 != 0) {
      throw Error(ErrorKind::InvalidConfig,
                  "max_turns must be even and >= 2, got " + std::to_string(max_turns));
    }
    if (strategy == Strategy::PersonaDual && info_level == InfoLevel::Full) {
      throw Error(ErrorKind::InvalidConfig,
                  "strategy persona-dual does not accept info-level full "
                  "(use low, medium or high)");
    }
    params.validate();
    if (teacher_max_output_tokens <= 0) {
      throw Error(ErrorKind::InvalidConfig, "teacher_max_output_tokens must be positive");
    }
  }

  /// Level recorded in dialogue metadata.
  InfoLevel effective_info_level() const {
    switch (strategy) {
      case Strategy::PersonaDual: return info_level;
      case Strategy::QGQA: return InfoLevel::Medium;
      case Strategy::PersonaSingle:
      case Strategy::Inpainting: return InfoLevel::Full;
    }
    return info_level;
  }
};

/// Where a section sits in the corpus; copied into dialogue metadata.
struct Grounding {
  std::string book_id;
  int chapter_index = 0;
};

namespace detail {

inline std::string slot(std::string_view value) {
  std::string v = normalize_whitespace(value);
  return v.empty() ? "N/A" : v;
}

inline std::string slot(const StudentContext& ctx, std::string_view name) {
  return slot(ctx.get(name));
}

inline std::string previous_conversation(const Dialogue& history) {
  std::string out = "Previous Conversation:\n";
  for (const auto& p : history.pairs) {
    out += "Student: " + normalize_whitespace(p.question) + "\n";
    out += "Teacher: " + normalize_whitespace(p.answer) + "\n";
  }
  return out;
}

}  // namespace detail

inline constexpr std::string_view kPreviousConversationHeader = "Previous Conversation:";

inline std::string build_student_prompt(const StudentContext& context,
                                        const Dialogue& history) {
  using detail::slot;
  std::string p =
      "Task: You are a student preparing to ask questions about a textbook "
      "subsection to a teacher. Your goal is to uncover the key information "
      "from this subsection. Based on the teacher's responses, you'll further "
      "inquire to get a comprehensive understanding. Make sure to ask specific "
      "questions about the subsection's content and avoid repeating queries "
      "from prior discussions.\n\n";
  p += "Information Provided:\n";
  p += "1. Section Title: " + slot(context, field::kTitle) + "\n";
  p += "2. Subsection Title: " + slot(context, field::kSubsectionTitles) + "\n";
  p += "3. Section Summary: " + slot(context, field::kSummary) + "\n";
  p += "4. Bold Terms in Section: " + slot(context, field::kBoldTerms) + "\n";
  p += "5. Learning Objectives: " + slot(context, field::kLearningObjectives) + "\n";
  p += "6. Concepts in Section: " + slot(context, field::kKeyConcepts) + "\n";
  p += "7. Section Introduction: " + slot(context, field::kIntroduction) + "\n";
  p += detail::previous_conversation(history);
  p += "\n*Note:* Frame your questions considering the information above and "
       "ensure they're relevant to the content. Do not ask questions about "
       "information you already have. Only ask one question at a time.\n\n";
  p += "Expected Output: Please phrase your question as a string.";
  return p;
}

inline std::string build_teacher_prompt(const Section& section, std::string_view question,
                                        const Dialogue& history) {
  using detail::slot;
  if (trim(section.content).empty()) {
    throw Error(ErrorKind::EmptySection, "section '" + section.id + "' has no content");
  }
  if (trim(question).empty()) {
    throw Error(ErrorKind::EmptyUtterance, "teacher prompt needs a question");
  }
  const auto& f = section.formatting;
  std::string p =
      "Task: You are a teacher preparing to answer a student's question about "
      "a subsection of a textbook. The student's question is: " +
      normalize_whitespace(question) +
      ". Provide a concise, specific response, ensuring it's not a summary and "
      "distinct from any previous answers you've given.\n\n";
  p += "Information Provided:\n";
  p += "1. Section Title: " + slot(f.title) + "\n";
  p += "2. Subsection Title: " + slot(render_list(section.subsection_titles)) + "\n";
  p += "3. Subsection Content: " + slot(section.content) + "\n";
  p += "4. Section Summary: " + slot(f.summary) + "\n";
  p += "5. Bold Terms in Section: " + slot(render_list(f.bold_terms)) + "\n";
  p += "6. Learning Objectives: " + slot(render_list(f.learning_objectives)) + "\n";
  p += "7. Concepts in Section: " + slot(render_list(f.key_concepts)) + "\n";
  p += "8. Section Introduction: " + slot(f.introduction) + "\n";
  p += detail::previous_conversation(history);
  p += "\n*Note:* When crafting your response, consider all the information "
       "above. Be sure your answer directly addresses the student's question "
       "and is not a repetition of prior information.\n\n";
  p += "Expected Output: Please phrase your answer as a string.";
  return p;
}

inline std::string build_single_instance_prompt(const Section& section, int pairs) {
  std::string p =
      "Task: generate a conversation between a student and a teacher using "
      "the given section.\n\n";
  p += "Introduction:\n";
  p += "1. The conversation should contain " + std::to_string(pairs) +
       " question-answer pairs.\n";
  p += "2. The output conversation should be in this format: student: ... "
       "teacher: ... student: ...\n";
  p += "3. The given section: " + detail::slot(section.content);
  return p;
}

/// Opening teacher line that seeds the inpainting loop; never emitted as a pair.
inline std::string inpainting_opening(const Section& section) {
  const std::string& title =
      section.title.empty() ? section.formatting.title : section.title;
  return "I am a teacher and can answer questions about " +
         normalize_whitespace(title) + ".";
}

/// Asks for the student utterance hidden behind <mask>, placed right before
/// the next teacher sentence.
inline std::string build_infill_prompt(const Section& section, const Dialogue& history,
                                       std::string_view next_sentence) {
  std::string p =
      "Task: Fill in the masked student utterance in the conversation below. "
      "Reply with the student's question only.\n\n";
  p += "Teacher: " + inpainting_opening(section) + "\n";
  for (const auto& pair : history.pairs) {
    p += "Student: " + normalize_whitespace(pair.question) + "\n";
    p += "Teacher: " + normalize_whitespace(pair.answer) + "\n";
  }
  p += "Student: <mask>\n";
  p += "Teacher: " + normalize_whitespace(next_sentence);
  return p;
}

/// True when the information part of a student prompt (everything before the
/// Previous Conversation block) contains a content sentence verbatim, after
/// whitespace normalization.
inline bool student_prompt_leaks(std::string_view prompt, std::string_view content) {
  auto info = prompt.substr(0, prompt.find(kPreviousConversationHeader));
  const std::string haystack = normalize_whitespace(info);
  for (const auto& s : segment_sentences(content)) {
    if (haystack.find(s) != std::string::npos) return true;
  }
  return false;
}

namespace detail {

inline std::vector<ChatMessage> user_message(std::string prompt) {
  return {ChatMessage{Role::User, std::move(prompt)}};
}

// Stops the loop when a role produced nothing usable.
struct Degenerate {
  bool hit = false;
  std::string reason;
};

}  // namespace detail

/// Runs one strategy over a section and caps the result at max_turns / 2 pairs.
inline Dialogue synthesize(const Section& section, const SynthesisConfig& config,
                           Provider& provider, const Grounding& grounding = {},
                           std::vector<std::string>* warnings = nullptr) {
  config.validate();
  if (trim(section.content).empty()) {
    throw Error(ErrorKind::EmptySection, "section '" + section.id + "' has no content");
  }
  const int max_pairs = config.max_turns / 2;

  Dialogue d;
  d.meta.book_id = grounding.book_id;
  d.meta.chapter_index = grounding.chapter_index;
  d.meta.section_id = section.id;
  d.meta.strategy = config.strategy;
  d.meta.info_level = config.effective_info_level();
  d.meta.seed = config.seed;
  d.meta.created_at = config.created_at;
  d.meta.id = grounding.book_id + "/" + section.id + "/" +
              std::string(to_string(config.strategy));
  if (config.strategy == Strategy::PersonaDual) {
    d.meta.id += "-" + std::string(to_string(config.info_level));
  }

  GenerationParams student_params = config.params;
  student_params.seed = config.seed;
  GenerationParams teacher_params = student_params;
  teacher_params.max_output_tokens = config.teacher_max_output_tokens;

  auto warn = [&](std::string w) {
    if (warnings) warnings->push_back(d.meta.id + ": " + std::move(w));
  };
  detail::Degenerate degenerate;
  auto stop = [&](std::string reason) {
    degenerate = {true, std::move(reason)};
  };

  switch (config.strategy) {
    case Strategy::PersonaDual: {
      const StudentContext ctx = select_context(section, config.info_level);
      for (int t = 0; t < max_pairs && !degenerate.hit; ++t) {
        const std::string q = chat_complete(
            provider, detail::user_message(build_student_prompt(ctx, d)), student_params);
        if (q.empty()) {
          stop("student produced an empty question");
          break;
        }
        const std::string a = chat_complete(
            provider, detail::user_message(build_teacher_prompt(section, q, d)),
            teacher_params);
        if (a.empty()) {
          stop("teacher produced an empty answer");
          break;
        }
        d = append_pair(d, q, a);
      }
      break;
    }
    case Strategy::PersonaSingle: {
      GenerationParams params = config.params;
      params.seed = config.seed;
      params.max_output_tokens = std::max(params.max_output_tokens,
                                          config.teacher_max_output_tokens * 2);
      const std::string transcript = chat_complete(
          provider, detail::user_message(build_single_instance_prompt(section, max_pairs)),
          params);
      auto parsed = parse_transcript(transcript);
      for (auto& w : parsed.warnings) warn(std::move(w));
      for (auto& [q, a] : parsed.pairs) d = append_pair(d, q, a);
      break;
    }
    case Strategy::Inpainting: {
      const auto sentences = segment_sentences(section.content);
      for (std::size_t k = 0; k < sentences.size() &&
                              static_cast<int>(k) < max_pairs;
           ++k) {
        const std::string q = chat_complete(
            provider, detail::user_message(build_infill_prompt(section, d, sentences[k])),
            student_params);
        if (q.empty()) {
          stop("infill produced an empty question");
          break;
        }
        Dialogue next = d;
        next.pairs.push_back({static_cast<int>(d.pairs.size()) + 1, q, sentences[k]});
        d = std::move(next);
      }
      break;
    }
    case Strategy::QGQA: {
      const StudentContext ctx = select_context(section, InfoLevel::Medium);
      for (int t = 0; t < max_pairs; ++t) {
        const std::string q = chat_complete(
            provider, detail::user_message(build_student_prompt(ctx, d)), student_params);
        if (q.empty()) {
          stop("question generator produced an empty question");
          break;
        }
        std::string evidence = section.content;
        if (!d.empty()) evidence += "\n\n" + render_history(d);
        QAResult r = extractive_qa(provider, q, evidence);
        if (trim(r.answer).empty()) {
          stop("answer finder found no span");
          break;
        }
        Dialogue next = d;
        next.pairs.push_back({static_cast<int>(d.pairs.size()) + 1, q, r.answer});
        d = std::move(next);
      }
      break;
    }
  }

  if (degenerate.hit) {
    if (d.empty()) throw Error(ErrorKind::DegenerateTurn, d.meta.id + ": " + degenerate.reason);
    warn("truncated after " + std::to_string(d.size()) + " pairs: " + degenerate.reason);
  }
  return truncate_pairs(d, config.max_turns);
}

}  // namespace textdial
