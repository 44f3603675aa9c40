#pragma once

// Aggregation of record files and the replay check.
//
// report() groups records by any of
//
//   study task model template k_hat step rep_style sigma offset num_noisy
//   hop_count type list_count
//
// and emits, after the group columns and in this order:
//
//   count         records in the group
//   failures      records with an error
//   mean_score    mean of "score" (F1 for QA, 0/1 for synthetic)
//   mean_f1       mean of "f1" over records that have one
//   accuracy      fraction of "exact_match" == true among records that have one
//   mean_logprob  mean of "logprob_score" over records that have one
//
// Means that have no contributing record are left empty.

#include <algorithm>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctxrep/error.hpp"
#include "ctxrep/harness/dataset.hpp"
#include "ctxrep/harness/records.hpp"
#include "ctxrep/harness/runner.hpp"

namespace ctxrep {

inline const std::vector<std::string> &report_group_keys() {
  static const std::vector<std::string> keys{
      "study",  "task",      "model",     "template", "k_hat", "step",      "rep_style",
      "sigma",  "offset",    "num_noisy", "hop_count", "type", "list_count"};
  return keys;
}

inline const std::vector<std::string> &report_metric_columns() {
  static const std::vector<std::string> cols{"count",    "failures", "mean_score",
                                             "mean_f1",  "accuracy", "mean_logprob"};
  return cols;
}

inline std::string record_field(const RunRecord &r, const std::string &key) {
  auto opt_int = [](const std::optional<int> &v) { return v ? std::to_string(*v) : std::string(); };
  const auto &c = r.condition;
  if (key == "study")
    return r.study;
  if (key == "task")
    return r.task;
  if (key == "model")
    return r.model_name;
  if (key == "template")
    return std::string(to_string(c.template_kind));
  if (key == "k_hat")
    return std::to_string(c.k_hat);
  if (key == "step")
    return std::to_string(c.k_hat - 1);
  if (key == "rep_style")
    return c.style.to_string();
  if (key == "sigma")
    return c.sigma ? c.sigma->to_string() : std::string();
  if (key == "offset")
    return opt_int(c.offset);
  if (key == "num_noisy")
    return opt_int(c.num_noisy);
  if (key == "hop_count")
    return std::to_string(r.hop_count);
  if (key == "type")
    return r.type.value_or("");
  if (key == "list_count")
    return opt_int(r.list_count);
  throw ConfigError("unknown group key '" + key + "'");
}

struct ReportTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

namespace detail {
inline std::string fmt4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline bool parse_number(const std::string &s, double &out) {
  if (s.empty())
    return false;
  std::istringstream in(s);
  in >> out;
  return in && in.peek() == std::char_traits<char>::eof();
}

// Numeric values compare numerically, everything else lexicographically.
inline bool value_less(const std::string &a, const std::string &b) {
  double x = 0, y = 0;
  const bool nx = parse_number(a, x), ny = parse_number(b, y);
  if (nx && ny)
    return x < y;
  if (nx != ny)
    return nx;
  return a < b;
}

struct Accumulator {
  std::size_t count = 0, failures = 0;
  Stat score, f1, em, logprob;
};
} // namespace detail

inline ReportTable report(const std::vector<RunRecord> &records,
                          const std::vector<std::string> &group_by) {
  const auto &known = report_group_keys();
  for (const auto &k : group_by)
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ConfigError("unknown group key '" + k + "'");

  std::map<std::vector<std::string>, detail::Accumulator,
           decltype([](const std::vector<std::string> &a, const std::vector<std::string> &b) {
             return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(),
                                                 detail::value_less);
           })>
      groups;
  for (const auto &r : records) {
    std::vector<std::string> key;
    for (const auto &g : group_by)
      key.push_back(record_field(r, g));
    auto &acc = groups[key];
    ++acc.count;
    if (r.failed()) {
      ++acc.failures;
      continue;
    }
    if (r.score)
      detail::add(acc.score, *r.score);
    if (r.f1)
      detail::add(acc.f1, *r.f1);
    if (r.exact_match)
      detail::add(acc.em, *r.exact_match ? 1.0 : 0.0);
    if (r.logprob_score)
      detail::add(acc.logprob, *r.logprob_score);
  }

  ReportTable t;
  t.columns = group_by;
  for (const auto &c : report_metric_columns())
    t.columns.push_back(c);
  auto mean = [](const Stat &s) { return s.count ? detail::fmt4(s.mean()) : std::string(); };
  for (const auto &[key, acc] : groups) {
    auto row = key;
    row.push_back(std::to_string(acc.count));
    row.push_back(std::to_string(acc.failures));
    row.push_back(mean(acc.score));
    row.push_back(mean(acc.f1));
    row.push_back(mean(acc.em));
    row.push_back(mean(acc.logprob));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline ReportTable report(const std::string &records_path, const std::vector<std::string> &group_by) {
  return report(read_records(records_path), group_by);
}

inline std::string csv_escape(const std::string &v) {
  if (v.find_first_of(",\"\n\r") == std::string::npos)
    return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"')
      out += '"';
    out += c;
  }
  return out + "\"";
}

inline void write_csv(std::ostream &out, const ReportTable &t) {
  auto line = [&](const std::vector<std::string> &cells) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      out << (i ? "," : "") << csv_escape(cells[i]);
    out << '\n';
  };
  line(t.columns);
  for (const auto &r : t.rows)
    line(r);
}

// Columns padded to their widest cell; numeric cells right-aligned.
inline void write_table(std::ostream &out, const ReportTable &t) {
  std::vector<std::size_t> width(t.columns.size());
  for (std::size_t i = 0; i < t.columns.size(); ++i) {
    width[i] = t.columns[i].size();
    for (const auto &r : t.rows)
      width[i] = std::max(width[i], r[i].size());
  }
  auto line = [&](const std::vector<std::string> &cells) {
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      double ignored = 0;
      const bool numeric = detail::parse_number(cells[i], ignored);
      const std::string pad(width[i] - cells[i].size(), ' ');
      if (i)
        s += "  ";
      s += numeric ? pad + cells[i] : cells[i] + pad;
    }
    while (!s.empty() && s.back() == ' ')
      s.pop_back();
    out << s << '\n';
  };
  line(t.columns);
  std::vector<std::string> rule;
  for (auto w : width)
    rule.emplace_back(w, '-');
  line(rule);
  for (const auto &r : t.rows)
    line(r);
}

// ---------------------------------------------------------------------------
// Replay: re-render each record's prompt from (sample, condition) and compare
// hashes. Records of failed samples and of samples absent from the dataset
// are skipped.

struct ReplayReport {
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::vector<std::string> mismatches; // sample ids
};

inline ReplayReport replay_check(const std::vector<RunRecord> &records, const Dataset &dataset) {
  ReplayReport rep;
  std::visit(
      [&](const auto &samples) {
        using Sample = typename std::decay_t<decltype(samples)>::value_type;
        std::unordered_map<std::string, const Sample *> by_id;
        for (const auto &s : samples) {
          if constexpr (std::is_same_v<Sample, QaSample>)
            by_id.emplace(s.id, &s);
          else
            by_id.emplace(s.sample_id, &s);
        }
        for (const auto &r : records) {
          const auto it = by_id.find(r.sample_id);
          if (r.failed() || it == by_id.end()) {
            ++rep.skipped;
            continue;
          }
          ++rep.checked;
          std::string hash;
          try {
            hash = prompt_hash(render_condition(*it->second, r.condition));
          } catch (const Error &) {
          }
          if (hash != r.prompt_hash)
            rep.mismatches.push_back(r.sample_id);
        }
      },
      dataset);
  return rep;
}

} // namespace ctxrep
