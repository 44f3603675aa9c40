#pragma once

// Multi-hop QA samples and the datasets the harness evaluates.
//
// QA dataset files are JSON Lines, one sample per line:
//
//   {"id": "...", "question": "...", "answers": ["..."],
//    "supporting": [{"title": "...", "text": "...", "hop_index": 1}, ...],
//    "noisy": [{"title": "...", "text": "..."}, ...],
//    "type": "compositional"}
//
// "title" and "type" are optional. Document ids are derived from the sample
// id: "<id>/s<hop>" for supporting and "<id>/n<i>" for noisy documents.

#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ctxrep/context_model.hpp"
#include "ctxrep/error.hpp"
#include "ctxrep/synthetic_chains.hpp"

namespace ctxrep {

struct QaSample {
  std::string id;
  std::string question;
  std::vector<std::string> answers;
  std::vector<Document> supporting;
  std::vector<Document> noisy;
  std::optional<std::string> type;

  std::size_t hop_count() const noexcept { return supporting.size(); }

  void validate() const {
    auto fail = [&](const std::string &what) {
      throw ValidationError("sample '" + id + "': " + what);
    };
    if (detail::is_blank(question))
      fail("question is empty");
    if (answers.empty())
      fail("no gold answers");
    if (supporting.empty())
      fail("no supporting documents");
    try {
      for (const auto &d : supporting)
        if (!d.is_supporting())
          fail("document '" + d.id + "' is listed as supporting but has no hop_index");
      for (const auto &d : noisy)
        if (d.is_supporting())
          fail("document '" + d.id + "' is listed as noisy but has a hop_index");
      ContextSpec{supporting}.validate();
      for (const auto &d : noisy)
        d.validate();
    } catch (const ValidationError &e) {
      const std::string what = e.what();
      if (what.rfind("sample '", 0) == 0)
        throw;
      fail(what);
    }
  }

  friend bool operator==(const QaSample &, const QaSample &) = default;
};

inline nlohmann::ordered_json to_json(const QaSample &s) {
  using oj = nlohmann::ordered_json;
  auto doc = [](const Document &d, bool with_hop) {
    oj j;
    if (d.title)
      j["title"] = *d.title;
    j["text"] = d.text;
    if (with_hop)
      j["hop_index"] = *d.hop_index;
    return j;
  };
  oj j;
  j["id"] = s.id;
  j["question"] = s.question;
  j["answers"] = s.answers;
  oj sup = oj::array();
  for (const auto &d : s.supporting)
    sup.push_back(doc(d, true));
  j["supporting"] = std::move(sup);
  oj noi = oj::array();
  for (const auto &d : s.noisy)
    noi.push_back(doc(d, false));
  j["noisy"] = std::move(noi);
  if (s.type)
    j["type"] = *s.type;
  return j;
}

// Parses one dataset line. Structural problems (missing keys, wrong JSON
// types) raise nlohmann exceptions; invariant violations raise
// ValidationError naming the sample.
template <class Json> QaSample qa_sample_from_json(const Json &j) {
  QaSample s;
  s.id = j.at("id").template get<std::string>();
  s.question = j.at("question").template get<std::string>();
  s.answers = j.at("answers").template get<std::vector<std::string>>();
  auto title_of = [](const Json &d) -> std::optional<std::string> {
    if (d.contains("title") && !d.at("title").is_null())
      return d.at("title").template get<std::string>();
    return std::nullopt;
  };
  for (const auto &d : j.at("supporting")) {
    Document doc;
    doc.title = title_of(d);
    doc.text = d.at("text").template get<std::string>();
    if (d.contains("hop_index") && !d.at("hop_index").is_null()) {
      doc.role = Role::Supporting;
      doc.hop_index = d.at("hop_index").template get<int>();
      doc.id = s.id + "/s" + std::to_string(*doc.hop_index);
    } else {
      doc.id = s.id + "/s?" + std::to_string(s.supporting.size());
    }
    s.supporting.push_back(std::move(doc));
  }
  if (j.contains("noisy")) {
    for (const auto &d : j.at("noisy")) {
      Document doc;
      doc.id = s.id + "/n" + std::to_string(s.noisy.size());
      doc.title = title_of(d);
      doc.text = d.at("text").template get<std::string>();
      s.noisy.push_back(std::move(doc));
    }
  }
  if (j.contains("type") && !j.at("type").is_null())
    s.type = j.at("type").template get<std::string>();
  s.validate();
  return s;
}

inline std::vector<QaSample> ingest_qa_dataset(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ConfigError("cannot open dataset '" + path + "'");
  std::vector<QaSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_blank(line))
      continue;
    try {
      out.push_back(qa_sample_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception &e) {
      throw IngestError(lineno, e.what());
    } catch (const ValidationError &e) {
      throw ValidationError(std::string(e.what()) + " (line " + std::to_string(lineno) + ")");
    }
  }
  return out;
}

inline void write_qa_dataset(const std::string &path, const std::vector<QaSample> &samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw ConfigError("cannot open '" + path + "' for writing");
  for (const auto &s : samples)
    out << to_json(s).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Chain-derived QA samples.
//
// A synthetic sample with lists of n elements becomes an (n-1)-hop QA sample:
// hop h is the fact linking elements n-1-h and n-h of the target list, so the
// gold order walks the chain backwards from the queried tail to the head and
// the single-register reader resolves it in one pass. Facts of the other lists
// become noisy documents.

inline QaSample chain_qa_sample(const SyntheticSample &s) {
  const auto &target = s.lists.at(static_cast<std::size_t>(s.target_list));
  const auto &e = target.elements;
  const std::size_t n = e.size();
  QaSample q;
  q.id = s.sample_id;
  q.question = "What is the first element of the list that contains " +
               std::to_string(s.query_element) + "?";
  q.answers = {std::to_string(s.oracle_answer)};
  for (std::size_t h = 1; h < n; ++h)
    q.supporting.push_back(Document::supporting(
        q.id + "/s" + std::to_string(h), fact_line(target.list_id, e[n - 1 - h], e[n - h]),
        static_cast<int>(h)));
  for (int li : s.list_order) {
    if (li == s.target_list)
      continue;
    const auto &l = s.lists.at(static_cast<std::size_t>(li));
    for (std::size_t j = 0; j + 1 < l.elements.size(); ++j)
      q.noisy.push_back(Document::noisy(q.id + "/n" + std::to_string(q.noisy.size()),
                                        fact_line(l.list_id, l.elements[j], l.elements[j + 1])));
  }
  q.type = "chain";
  q.validate();
  return q;
}

inline std::vector<QaSample> chain_qa_samples(const std::vector<SyntheticSample> &samples) {
  std::vector<QaSample> out;
  out.reserve(samples.size());
  for (const auto &s : samples)
    out.push_back(chain_qa_sample(s));
  return out;
}

// ---------------------------------------------------------------------------

using Dataset = std::variant<std::vector<QaSample>, std::vector<SyntheticSample>>;

inline bool is_synthetic(const Dataset &d) {
  return std::holds_alternative<std::vector<SyntheticSample>>(d);
}

inline std::size_t dataset_size(const Dataset &d) {
  return std::visit([](const auto &v) { return v.size(); }, d);
}

// Synthetic when the file starts with a synthetic-chains header, QA otherwise.
inline Dataset load_dataset(const std::string &path) {
  if (is_synthetic_dataset_file(path))
    return read_synthetic_dataset(path).samples;
  return ingest_qa_dataset(path);
}

} // namespace ctxrep
