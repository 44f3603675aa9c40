#pragma once

// Answer extraction and short-answer metrics: SQuAD-style normalised token F1
// for QA and integer exact match for the chained-list task.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ctxrep {

struct ScoredAnswer {
  std::string raw_output;
  std::string extracted;
  std::string normalized;
  double f1 = 0.0;
  bool exact_match = false;
  // Index of the gold alias that produced f1 (QA only).
  std::size_t matched_alias = 0;
};

namespace detail {
inline bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && is_space(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

inline char ascii_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(static_cast<unsigned char>(s[i])))
      ++i;
    const std::size_t start = i;
    while (i < s.size() && !is_space(static_cast<unsigned char>(s[i])))
      ++i;
    if (i > start)
      out.emplace_back(s.substr(start, i - start));
  }
  return out;
}
} // namespace detail

// Text after the last "Answer:" (any case), trimmed, trailing periods removed.
// Without a marker the whole output is returned trimmed.
inline std::string extract_answer(std::string_view raw_output) {
  static constexpr std::string_view kMarker = "answer:";
  std::string lowered(raw_output);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(), detail::ascii_lower);
  const auto at = lowered.rfind(kMarker);
  if (at == std::string::npos)
    return std::string(detail::trim(raw_output));
  auto tail = detail::trim(raw_output.substr(at + kMarker.size()));
  while (!tail.empty() && tail.back() == '.')
    tail = detail::trim(tail.substr(0, tail.size() - 1));
  return std::string(tail);
}

// Lowercase, drop ASCII punctuation, drop the articles a/an/the, collapse
// whitespace.
inline std::string normalize_answer(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 128 && std::ispunct(u))
      continue;
    cleaned.push_back(detail::ascii_lower(c));
  }
  std::string out;
  for (const auto &tok : detail::split_ws(cleaned)) {
    if (tok == "a" || tok == "an" || tok == "the")
      continue;
    if (!out.empty())
      out.push_back(' ');
    out += tok;
  }
  return out;
}

// Bag-of-tokens F1 over normalised tokens.
inline double token_f1(std::string_view prediction, std::string_view gold) {
  const auto pred = detail::split_ws(normalize_answer(prediction));
  const auto ref = detail::split_ws(normalize_answer(gold));
  if (pred.empty() && ref.empty())
    return 1.0;
  if (pred.empty() || ref.empty())
    return 0.0;
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto &t : ref)
    ++counts[t];
  std::size_t common = 0;
  for (const auto &t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0)
    return 0.0;
  // 2PR/(P+R) with P = c/|pred|, R = c/|ref|.
  return 2.0 * static_cast<double>(common) / static_cast<double>(pred.size() + ref.size());
}

// The first maximal digit run of the extracted answer equals `gold`.
inline bool exact_match_int(std::string_view prediction, long long gold) {
  if (gold < 0)
    return false;
  const std::string answer = extract_answer(prediction);
  const auto first = std::find_if(answer.begin(), answer.end(),
                                  [](char c) { return c >= '0' && c <= '9'; });
  if (first == answer.end())
    return false;
  auto last = std::find_if(first, answer.end(), [](char c) { return c < '0' || c > '9'; });
  auto start = first;
  while (start + 1 < last && *start == '0')
    ++start;
  return std::string(start, last) == std::to_string(gold);
}

// Scores a QA output against gold aliases; f1 is the max over aliases.
inline ScoredAnswer score_qa(std::string_view raw_output, const std::vector<std::string> &golds) {
  ScoredAnswer s;
  s.raw_output = std::string(raw_output);
  s.extracted = extract_answer(raw_output);
  s.normalized = normalize_answer(s.extracted);
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const double f = token_f1(s.extracted, golds[i]);
    if (i == 0 || f > s.f1) {
      s.f1 = f;
      s.matched_alias = i;
    }
    if (s.normalized == normalize_answer(golds[i]))
      s.exact_match = true;
  }
  return s;
}

inline ScoredAnswer score_int(std::string_view raw_output, long long gold) {
  ScoredAnswer s;
  s.raw_output = std::string(raw_output);
  s.extracted = extract_answer(raw_output);
  s.normalized = normalize_answer(s.extracted);
  s.exact_match = exact_match_int(raw_output, gold);
  s.f1 = s.exact_match ? 1.0 : token_f1(s.extracted, std::to_string(gold));
  return s;
}

} // namespace ctxrep
