#pragma once

// Chat prompt rendering for context repetition. A plan with k_hat = 1 is the
// plain prompt; k_hat >= 2 adds an assistant turn that restates the question
// and documents k_hat - 1 more times before the model is asked to answer.
//
// Layout conventions: blocks are separated by one blank line, documents are
// rendered "Document [i] {text}" (or "Document [i] (Title: {title}) {text}")
// with numbering restarting at 0 in every block.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ctxrep/context_model.hpp"
#include "ctxrep/error.hpp"
#include "ctxrep/random.hpp"
#include "ctxrep/synthetic_chains.hpp"

namespace ctxrep {

enum class MessageRole { System, User, Assistant };

inline std::string_view to_string(MessageRole r) {
  switch (r) {
  case MessageRole::System:
    return "system";
  case MessageRole::User:
    return "user";
  case MessageRole::Assistant:
    return "assistant";
  }
  return "user";
}

inline MessageRole message_role_from_string(std::string_view s) {
  if (s == "system")
    return MessageRole::System;
  if (s == "user")
    return MessageRole::User;
  if (s == "assistant")
    return MessageRole::Assistant;
  throw ValidationError("unknown message role '" + std::string(s) + "'");
}

struct ChatMessage {
  MessageRole role = MessageRole::User;
  std::string content;

  ChatMessage() = default;
  ChatMessage(MessageRole r, std::string c) : role(r), content(std::move(c)) {
    if (content.empty())
      throw ValidationError("chat message content must be non-empty");
  }

  friend bool operator==(const ChatMessage &, const ChatMessage &) = default;
};

enum class PromptTemplate { QaBase, QaCot, QaCotExtract, SyntheticBase, QaUserRole, Decompose };

inline std::string_view to_string(PromptTemplate t) {
  switch (t) {
  case PromptTemplate::QaBase:
    return "qa_base";
  case PromptTemplate::QaCot:
    return "qa_cot";
  case PromptTemplate::QaCotExtract:
    return "qa_cot_extract";
  case PromptTemplate::SyntheticBase:
    return "synthetic_base";
  case PromptTemplate::QaUserRole:
    return "qa_user_role";
  case PromptTemplate::Decompose:
    return "decompose";
  }
  return "qa_base";
}

inline PromptTemplate prompt_template_from_string(std::string_view s) {
  for (auto t : {PromptTemplate::QaBase, PromptTemplate::QaCot, PromptTemplate::QaCotExtract,
                 PromptTemplate::SyntheticBase, PromptTemplate::QaUserRole,
                 PromptTemplate::Decompose})
    if (to_string(t) == s)
      return t;
  throw ConfigError("unknown template '" + std::string(s) + "'");
}

struct RepetitionStyle {
  enum class Kind { Verbatim, Shuffle, Reverse };
  Kind kind = Kind::Verbatim;
  std::uint64_t seed = 0; // Shuffle only

  static RepetitionStyle verbatim() { return {}; }
  static RepetitionStyle reverse() { return {Kind::Reverse, 0}; }
  static RepetitionStyle shuffle(std::uint64_t seed) { return {Kind::Shuffle, seed}; }

  // "verbatim", "reverse", "shuffle:<seed>"
  std::string to_string() const {
    switch (kind) {
    case Kind::Verbatim:
      return "verbatim";
    case Kind::Reverse:
      return "reverse";
    case Kind::Shuffle:
      return "shuffle:" + std::to_string(seed);
    }
    return "verbatim";
  }

  static RepetitionStyle parse(std::string_view s) {
    if (s == "verbatim")
      return verbatim();
    if (s == "reverse")
      return reverse();
    if (s.substr(0, 8) == "shuffle:" && s.size() > 8) {
      try {
        std::size_t used = 0;
        const std::string digits(s.substr(8));
        const auto seed = std::stoull(digits, &used);
        if (used == digits.size())
          return shuffle(seed);
      } catch (const std::exception &) {
      }
    }
    throw ConfigError("repetition style must be verbatim, reverse or shuffle:<seed>, got '" +
                      std::string(s) + "'");
  }

  friend bool operator==(const RepetitionStyle &, const RepetitionStyle &) = default;
};

struct PromptPlan {
  PromptTemplate template_kind = PromptTemplate::QaBase;
  int k_hat = 1;
  RepetitionStyle style;

  void validate() const {
    if (k_hat < 1)
      throw InvalidRepetition("k_hat must be >= 1, got " + std::to_string(k_hat));
  }
};

// Receives non-fatal notices (currently: QA prompts with k_hat > 3).
inline std::function<void(std::string_view)> &warning_sink() {
  static std::function<void(std::string_view)> sink = [](std::string_view msg) {
    std::clog << "warning: " << msg << '\n';
  };
  return sink;
}

namespace prompt_text {
inline constexpr std::string_view kQaInstruction =
    "Answer the question based on the given documents. Respond only the answer within a few "
    "words after 'Answer:'.";
inline constexpr std::string_view kQaNowAnswer =
    "Now answer the question based on the documents. Respond only the answer within a few "
    "words after 'Answer:'.";
inline constexpr std::string_view kCotInstruction = "Answer the question based on the given documents.";
inline constexpr std::string_view kCotNowAnswer = "Now answer the question based on the documents.";
inline constexpr std::string_view kCotSeed = "Let's think step by step.";
inline constexpr std::string_view kCotExtract = "Respond only the answer in a few words after 'Answer:'.";
inline constexpr std::string_view kSyntheticInstruction =
    "Answer the question based on the given information. Respond only the answer without any "
    "explanation after 'Answer:'.";
inline constexpr std::string_view kSyntheticNowAnswer =
    "Now answer the question based on the documents. Respond only the answer without any "
    "explanation after 'Answer:'.";
inline constexpr std::string_view kAnswerSeed = "Answer:";
inline constexpr std::string_view kLookAgain = "Look again the input prompt:";
inline constexpr std::string_view kDecompose =
    "Decompose the following question into several sub-questions.";
inline constexpr std::string_view kDecomposeSeed = "1. ";

// Text-rewriting repetition styles (paraphrase, summary). Only the prompts
// live here; running them through a model to rewrite documents is left to
// the caller.
inline constexpr std::string_view kParaphraseSystem =
    "You are a professional paraphraser. Your task is to paraphrase the given text based on the "
    "below instructions. Follow the instructions to achieve the desired output.\n\n"
    "- Objective: Rewrite the text more thoroughly, changing both vocabulary and sentence "
    "structure while preserving the original meaning.\n"
    "- Instructions:\n"
    "(MOST IMPORTANT) Use your own style for natural paraphrase\n"
    "Introduce new expressions, alter sentence structure, and rearrange clauses.\n"
    "Use synonyms and change the form of words (e.g., verbs to nouns, or active to passive "
    "voice).\n"
    "Retain the original message but express it in a noticeably different way.\n\n"
    "- Example:\n"
    "Original: \"The quick brown fox jumps over the lazy dog.\"\n"
    "Paraphrase: \"With swift movements, the brown fox leaps over the dog lying lazily.\"\n\n"
    "# Format of the paraphrasing task\n"
    "- Original: The original text.\n"
    "- Paraphrase: The paraphrased version of the text based on the above guideline. Provide "
    "the output text immediately.";
inline constexpr std::string_view kParaphraseUser = "Paraphrase the original text below.\nOriginal: ";
inline constexpr std::string_view kParaphraseSeed = "Paraphrase:";

inline constexpr std::string_view kSummarySystem =
    "Summarize the following text while ensuring that no key information, factual accuracy, or "
    "essential meaning is lost. Follow these guidelines:\n\n"
    "- Maintain Key Details: All critical points, facts, and arguments from the original text "
    "must be preserved.\n"
    "- Conciseness: The summary should be significantly shorter than the original text while "
    "capturing its essence.\n"
    "- Clarity and Precision: Use clear, professional language. Avoid vague phrasing.\n"
    "- No Alteration of Meaning: Do not add, alter, or infer information that is not present in "
    "the original text.\n\n"
    "Please follow below pattern of example. Provide the output text immediately.\n\n"
    "- Example:\n"
    "Original Text: The rapid development of artificial intelligence over the last decade has "
    "led to significant breakthroughs in various fields, including healthcare, finance, and "
    "transportation. However, these advancements also raise concerns about data privacy, job "
    "displacement, and the ethical use of AI technologies.\n"
    "Summary: AI advancements in healthcare, finance, and transportation have been substantial, "
    "though concerns about data privacy, job displacement, and ethical issues have emerged.";
inline constexpr std::string_view kSummaryUser = "Summarize the following text below.\nOriginal Text: ";
inline constexpr std::string_view kSummarySeed = "Summary:";

inline std::string reconsider(std::size_t extra, bool once_wording) {
  const std::string head = "Sure. Before answering the question, I'll reconsider the question "
                           "and the documents ";
  if (extra == 1 && once_wording)
    return head + "once more.";
  return head + std::to_string(extra) + " times more.";
}
} // namespace prompt_text

// Verbatim -> unchanged; Reverse -> reversed; Shuffle(seed) -> a seeded
// permutation that is never the identity when there are >= 2 documents.
inline std::vector<Document> apply_repetition_style(std::vector<Document> documents,
                                                    const RepetitionStyle &style) {
  switch (style.kind) {
  case RepetitionStyle::Kind::Verbatim:
    break;
  case RepetitionStyle::Kind::Reverse:
    std::reverse(documents.begin(), documents.end());
    break;
  case RepetitionStyle::Kind::Shuffle: {
    if (documents.size() < 2)
      break;
    std::vector<std::size_t> idx(documents.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
      idx[i] = i;
    Rng rng(splitmix64(style.seed));
    auto is_identity = [&] {
      for (std::size_t i = 0; i < idx.size(); ++i)
        if (idx[i] != i)
          return false;
      return true;
    };
    do {
      fisher_yates(std::span<std::size_t>(idx), rng);
    } while (is_identity());
    std::vector<Document> out;
    out.reserve(documents.size());
    for (auto i : idx)
      out.push_back(std::move(documents[i]));
    documents = std::move(out);
    break;
  }
  }
  return documents;
}

inline std::string render_document_line(std::size_t index, const Document &d) {
  std::string line = "Document [" + std::to_string(index) + "] ";
  if (d.title)
    line += "(Title: " + *d.title + ") ";
  return line + d.text;
}

// "Question: ...", blank line, "Documents:" and the numbered documents.
inline std::string render_question_block(std::string_view question,
                                         const std::vector<Document> &documents) {
  std::string out = "Question: " + std::string(question) + "\n\nDocuments:";
  for (std::size_t i = 0; i < documents.size(); ++i)
    out += "\n" + render_document_line(i, documents[i]);
  return out;
}

namespace detail {
inline void require_context(const ContextSpec &context) {
  if (context.empty())
    throw EmptyContext("prompt needs at least one document");
}

inline void require_question(std::string_view question) {
  if (detail::is_blank(question))
    throw PreconditionError("question must be non-empty");
}

// Assistant turn restating the block k_hat - 1 times, style applied per
// repeated block (block b shuffles with seed + b - 1).
inline std::string qa_repetition_turn(std::string_view question, const ContextSpec &context,
                                      int k_hat, const RepetitionStyle &style) {
  const auto extra = static_cast<std::size_t>(k_hat - 1);
  std::string out = prompt_text::reconsider(extra, true);
  for (std::size_t b = 0; b < extra; ++b) {
    RepetitionStyle s = style;
    s.seed += b;
    out += "\n\n" + render_question_block(question, apply_repetition_style(context.documents, s));
  }
  return out;
}

inline void warn_large_qa_k_hat(int k_hat) {
  if (k_hat > 3)
    warning_sink()("QA prompt rendered with k_hat=" + std::to_string(k_hat) +
                   " (evaluated range is 1..3)");
}
} // namespace detail

inline std::vector<ChatMessage> render_qa_prompt(std::string_view question,
                                                 const ContextSpec &context,
                                                 const PromptPlan &plan) {
  plan.validate();
  if (plan.template_kind != PromptTemplate::QaBase)
    throw ConfigError("render_qa_prompt expects the qa_base template");
  detail::require_context(context);
  detail::warn_large_qa_k_hat(plan.k_hat);

  const std::string first = render_question_block(question, context.documents) + "\n\n" +
                            std::string(prompt_text::kQaInstruction);
  std::vector<ChatMessage> out{{MessageRole::User, first}};
  if (plan.k_hat == 1)
    return out;
  out.emplace_back(MessageRole::Assistant,
                   detail::qa_repetition_turn(question, context, plan.k_hat, plan.style));
  out.emplace_back(MessageRole::User, std::string(prompt_text::kQaNowAnswer));
  out.emplace_back(MessageRole::Assistant, std::string(prompt_text::kAnswerSeed));
  return out;
}

inline std::vector<ChatMessage> render_synthetic_prompt(const SyntheticSample &sample, int k_hat,
                                                        HeaderWording wording = HeaderWording::Below) {
  if (k_hat < 1)
    throw InvalidRepetition("k_hat must be >= 1, got " + std::to_string(k_hat));
  const std::string info = render_information(sample, wording);
  const std::string block = "Information:\n" + info + "\n\n" + sample.question_line;

  std::vector<ChatMessage> out{
      {MessageRole::User, block + "\n\n" + std::string(prompt_text::kSyntheticInstruction)}};
  if (k_hat == 1)
    return out;
  const auto extra = static_cast<std::size_t>(k_hat - 1);
  std::string turn = prompt_text::reconsider(extra, false);
  for (std::size_t b = 0; b < extra; ++b)
    turn += "\n\n" + block;
  out.emplace_back(MessageRole::Assistant, std::move(turn));
  out.emplace_back(MessageRole::User, std::string(prompt_text::kSyntheticNowAnswer));
  out.emplace_back(MessageRole::Assistant, std::string(prompt_text::kAnswerSeed));
  return out;
}

// Without cot_response: the reasoning prompt, ending in the assistant seed
// "Let's think step by step.". With it: the extraction prompt that embeds the
// reasoning and asks for the short answer.
inline std::vector<ChatMessage> render_cot_prompts(std::string_view question,
                                                   const ContextSpec &context, int k_hat,
                                                   const std::optional<std::string> &cot_response,
                                                   const RepetitionStyle &style = {}) {
  if (k_hat < 1)
    throw InvalidRepetition("k_hat must be >= 1, got " + std::to_string(k_hat));
  detail::require_context(context);
  detail::warn_large_qa_k_hat(k_hat);

  std::vector<ChatMessage> out{{MessageRole::User,
                                render_question_block(question, context.documents) + "\n\n" +
                                    std::string(prompt_text::kCotInstruction)}};
  if (k_hat >= 2) {
    out.emplace_back(MessageRole::Assistant,
                     detail::qa_repetition_turn(question, context, k_hat, style));
    out.emplace_back(MessageRole::User, std::string(prompt_text::kCotNowAnswer));
  }
  if (!cot_response) {
    out.emplace_back(MessageRole::Assistant, std::string(prompt_text::kCotSeed));
    return out;
  }
  out.emplace_back(MessageRole::Assistant,
                   std::string(prompt_text::kCotSeed) + " " + *cot_response);
  out.emplace_back(MessageRole::User, std::string(prompt_text::kCotExtract));
  out.emplace_back(MessageRole::Assistant, std::string(prompt_text::kAnswerSeed));
  return out;
}

// Repetition inside the user turn (k_hat fixed at 2).
inline std::vector<ChatMessage> render_user_role_prompt(std::string_view question,
                                                        const ContextSpec &context) {
  detail::require_context(context);
  const std::string block = render_question_block(question, context.documents) + "\n\n" +
                            std::string(prompt_text::kQaInstruction);
  return {{MessageRole::User, block + "\n\n" + std::string(prompt_text::kLookAgain) + "\n\n" + block},
          {MessageRole::Assistant, std::string(prompt_text::kAnswerSeed)}};
}

inline std::vector<ChatMessage> render_decompose_prompt(std::string_view question) {
  detail::require_question(question);
  return {{MessageRole::User,
           std::string(prompt_text::kDecompose) + "\nQuestion: " + std::string(question)},
          {MessageRole::Assistant, std::string(prompt_text::kDecomposeSeed)}};
}

inline std::vector<ChatMessage> render_paraphrase_prompt(std::string_view text) {
  return {{MessageRole::System, std::string(prompt_text::kParaphraseSystem)},
          {MessageRole::User, std::string(prompt_text::kParaphraseUser) + std::string(text)},
          {MessageRole::Assistant, std::string(prompt_text::kParaphraseSeed)}};
}

inline std::vector<ChatMessage> render_summary_prompt(std::string_view text) {
  return {{MessageRole::System, std::string(prompt_text::kSummarySystem)},
          {MessageRole::User, std::string(prompt_text::kSummaryUser) + std::string(text)},
          {MessageRole::Assistant, std::string(prompt_text::kSummarySeed)}};
}

// ---------------------------------------------------------------------------
// Golden text: every message as "### ROLE ###" on its own line followed by
// the content and a newline.

inline std::string to_golden_text(const std::vector<ChatMessage> &messages) {
  std::string out;
  for (const auto &m : messages) {
    std::string role(to_string(m.role));
    for (auto &c : role)
      c = static_cast<char>(c - 'a' + 'A');
    out += "### " + role + " ###\n" + m.content + "\n";
  }
  return out;
}

inline std::vector<ChatMessage> parse_golden_text(std::string_view text) {
  std::vector<ChatMessage> out;
  std::optional<MessageRole> role;
  std::string content;
  auto flush = [&] {
    if (!role)
      return;
    if (!content.empty() && content.back() == '\n')
      content.pop_back();
    out.emplace_back(*role, content);
    content.clear();
  };
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    const bool last = eol == std::string_view::npos;
    const auto line = text.substr(pos, last ? std::string_view::npos : eol - pos);
    std::optional<MessageRole> header;
    if (line == "### SYSTEM ###")
      header = MessageRole::System;
    else if (line == "### USER ###")
      header = MessageRole::User;
    else if (line == "### ASSISTANT ###")
      header = MessageRole::Assistant;
    if (header) {
      flush();
      role = header;
    } else {
      if (!role)
        throw ValidationError("golden text must start with a role header");
      content.append(line);
      if (!last)
        content.push_back('\n');
    }
    pos = last ? text.size() : eol + 1;
  }
  flush();
  return out;
}

} // namespace ctxrep
