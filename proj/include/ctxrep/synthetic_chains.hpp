#pragma once

// Chained-list task: L lists of n distinct integers, described one adjacent
// pair at a time ("In the list i, a is positioned immediately before b."),
// with the question asking for the head of the list holding a given tail.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ctxrep/error.hpp"
#include "ctxrep/random.hpp"

namespace ctxrep {

inline constexpr int kMaxChainValue = 9999;

struct ChainList {
  int list_id = 0;
  std::vector<int> elements;

  friend bool operator==(const ChainList &, const ChainList &) = default;
};

enum class FactOrder { RoundRobin, GroupedByList };
enum class HeaderWording { Below, InTheBelow };

struct SyntheticSample {
  std::string sample_id;
  std::vector<ChainList> lists;
  // Order in which lists are visited inside each round of facts.
  std::vector<int> list_order;
  int target_list = 0;
  int query_element = 0;
  int oracle_answer = 0;
  std::vector<std::string> fact_lines;
  std::string question_line;

  std::size_t elements_per_list() const {
    return lists.empty() ? 0 : lists.front().elements.size();
  }

  friend bool operator==(const SyntheticSample &, const SyntheticSample &) = default;
};

struct SyntheticParams {
  std::size_t num_samples = 1000;
  std::size_t num_lists = 10;
  std::size_t elements_per_list = 3;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Rendering

inline std::string fact_line(int list_id, int before, int after) {
  return "In the list " + std::to_string(list_id) + ", " + std::to_string(before) +
         " is positioned immediately before " + std::to_string(after) + ".";
}

inline std::string question_line_for(int query_element) {
  return "Question: What is the first element of the list that contains " +
         std::to_string(query_element) + "?";
}

inline std::string render_header(std::size_t num_lists, std::size_t elements_per_list,
                                 HeaderWording wording = HeaderWording::Below) {
  return "All the " + std::to_string(num_lists) + " lists described " +
         (wording == HeaderWording::Below ? "below" : "in the below") + " contain exactly " +
         std::to_string(elements_per_list) + " elements.";
}

inline std::string render_header(const SyntheticSample &s,
                                 HeaderWording wording = HeaderWording::Below) {
  return render_header(s.lists.size(), s.elements_per_list(), wording);
}

inline std::vector<std::string> render_fact_lines(const SyntheticSample &s,
                                                  FactOrder order = FactOrder::RoundRobin) {
  const std::size_t n = s.elements_per_list();
  std::vector<std::string> out;
  if (n < 2)
    return out;
  out.reserve(s.lists.size() * (n - 1));
  if (order == FactOrder::RoundRobin) {
    for (std::size_t j = 0; j + 1 < n; ++j)
      for (int i : s.list_order) {
        const auto &l = s.lists.at(static_cast<std::size_t>(i));
        out.push_back(fact_line(l.list_id, l.elements[j], l.elements[j + 1]));
      }
  } else {
    for (int i : s.list_order) {
      const auto &l = s.lists.at(static_cast<std::size_t>(i));
      for (std::size_t j = 0; j + 1 < n; ++j)
        out.push_back(fact_line(l.list_id, l.elements[j], l.elements[j + 1]));
    }
  }
  return out;
}

// Header line followed by the fact lines.
inline std::string render_information(const SyntheticSample &s,
                                      HeaderWording wording = HeaderWording::Below) {
  std::string out = render_header(s, wording);
  for (const auto &line : s.fact_lines)
    out += "\n" + line;
  return out;
}

// ---------------------------------------------------------------------------
// Fact parsing (shared by the round-trip check and the mock reader)

struct ChainFact {
  int list_id = 0;
  int before = 0;
  int after = 0;

  friend bool operator==(const ChainFact &, const ChainFact &) = default;
};

namespace detail {
inline std::optional<long long> take_int(std::string_view s, std::size_t &pos) {
  const std::size_t start = pos;
  long long v = 0;
  while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
    if (pos - start > 12)
      return std::nullopt;
    v = v * 10 + (s[pos] - '0');
    ++pos;
  }
  if (pos == start)
    return std::nullopt;
  return v;
}

inline bool take_literal(std::string_view s, std::size_t &pos, std::string_view lit) {
  if (s.substr(pos, lit.size()) != lit)
    return false;
  pos += lit.size();
  return true;
}

// Parses one fact starting exactly at `pos`; advances pos past it on success.
inline std::optional<ChainFact> parse_fact_at(std::string_view s, std::size_t &pos) {
  std::size_t p = pos;
  if (!take_literal(s, p, "In the list "))
    return std::nullopt;
  const auto list = take_int(s, p);
  if (!list || !take_literal(s, p, ", "))
    return std::nullopt;
  const auto a = take_int(s, p);
  if (!a || !take_literal(s, p, " is positioned immediately before "))
    return std::nullopt;
  const auto b = take_int(s, p);
  if (!b || !take_literal(s, p, "."))
    return std::nullopt;
  pos = p;
  return ChainFact{static_cast<int>(*list), static_cast<int>(*a), static_cast<int>(*b)};
}
} // namespace detail

// Parses a full fact line; nullopt when the line is not exactly a fact.
inline std::optional<ChainFact> parse_fact_line(std::string_view line) {
  std::size_t pos = 0;
  auto f = detail::parse_fact_at(line, pos);
  if (!f || pos != line.size())
    return std::nullopt;
  return f;
}

// Every fact occurring anywhere in `text`, in reading order.
inline std::vector<ChainFact> scan_facts(std::string_view text) {
  static constexpr std::string_view kPrefix = "In the list ";
  std::vector<ChainFact> out;
  std::size_t pos = text.find(kPrefix);
  while (pos != std::string_view::npos) {
    std::size_t p = pos;
    if (auto f = detail::parse_fact_at(text, p)) {
      out.push_back(*f);
      pos = text.find(kPrefix, p);
    } else {
      pos = text.find(kPrefix, pos + 1);
    }
  }
  return out;
}

// Target element of the first chain question in `text`.
inline std::optional<int> scan_question_target(std::string_view text) {
  static constexpr std::string_view kQuestion =
      "What is the first element of the list that contains ";
  std::size_t pos = text.find(kQuestion);
  while (pos != std::string_view::npos) {
    std::size_t p = pos + kQuestion.size();
    const auto v = detail::take_int(text, p);
    if (v && p < text.size() && text[p] == '?')
      return static_cast<int>(*v);
    pos = text.find(kQuestion, pos + 1);
  }
  return std::nullopt;
}

// Rebuilds the lists described by a set of fact lines.
inline std::vector<ChainList> reconstruct_lists(const std::vector<std::string> &lines) {
  std::vector<std::vector<ChainFact>> by_list;
  for (const auto &line : lines) {
    const auto f = parse_fact_line(line);
    if (!f)
      throw ValidationError("not a chain fact: '" + line + "'");
    if (f->list_id < 0)
      throw ValidationError("negative list id");
    if (by_list.size() <= static_cast<std::size_t>(f->list_id))
      by_list.resize(static_cast<std::size_t>(f->list_id) + 1);
    by_list[static_cast<std::size_t>(f->list_id)].push_back(*f);
  }
  std::vector<ChainList> out;
  for (std::size_t id = 0; id < by_list.size(); ++id) {
    const auto &facts = by_list[id];
    if (facts.empty())
      continue;
    // Walk from the unique element that never appears as a successor.
    auto head = facts.front().before;
    for (const auto &f : facts) {
      const bool has_pred = std::any_of(facts.begin(), facts.end(),
                                        [&](const ChainFact &g) { return g.after == f.before; });
      if (!has_pred) {
        head = f.before;
        break;
      }
    }
    ChainList l{static_cast<int>(id), {head}};
    for (std::size_t step = 0; step < facts.size(); ++step) {
      const auto it = std::find_if(facts.begin(), facts.end(),
                                   [&](const ChainFact &g) { return g.before == l.elements.back(); });
      if (it == facts.end())
        throw ValidationError("broken chain in list " + std::to_string(id));
      l.elements.push_back(it->after);
    }
    out.push_back(std::move(l));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generation and oracle

inline int oracle_answer(const SyntheticSample &s) {
  return s.lists.at(static_cast<std::size_t>(s.target_list)).elements.front();
}

// Passes a single-register backward reader needs over round-robin facts: each
// fact it needs sits earlier than the fact that triggered the need, so one
// hop resolves per pass.
inline int mock_passes_required(const SyntheticSample &s) {
  return static_cast<int>(s.elements_per_list()) - 1;
}

inline void validate(const SyntheticSample &s) {
  const std::size_t n = s.elements_per_list();
  if (s.lists.empty() || n < 2)
    throw ValidationError(s.sample_id + ": need at least one list of >= 2 elements");
  std::vector<bool> used(kMaxChainValue + 1, false);
  for (std::size_t i = 0; i < s.lists.size(); ++i) {
    const auto &l = s.lists[i];
    if (l.list_id != static_cast<int>(i))
      throw ValidationError(s.sample_id + ": list ids must be 0..L-1 in order");
    if (l.elements.size() != n)
      throw ValidationError(s.sample_id + ": lists differ in length");
    for (int e : l.elements) {
      if (e < 0 || e > kMaxChainValue)
        throw ValidationError(s.sample_id + ": element " + std::to_string(e) + " out of range");
      if (used[static_cast<std::size_t>(e)])
        throw ValidationError(s.sample_id + ": element " + std::to_string(e) + " repeated");
      used[static_cast<std::size_t>(e)] = true;
    }
  }
  std::vector<int> order = s.list_order;
  std::sort(order.begin(), order.end());
  bool is_perm = order.size() == s.lists.size();
  for (std::size_t i = 0; is_perm && i < order.size(); ++i)
    is_perm = order[i] == static_cast<int>(i);
  if (!is_perm)
    throw ValidationError(s.sample_id + ": list_order is not a permutation of the lists");
  if (s.target_list < 0 || static_cast<std::size_t>(s.target_list) >= s.lists.size())
    throw ValidationError(s.sample_id + ": target_list out of range");
  const auto &target = s.lists[static_cast<std::size_t>(s.target_list)];
  if (s.query_element != target.elements.back() || s.oracle_answer != target.elements.front())
    throw ValidationError(s.sample_id + ": query/oracle do not match the target list");
  if (s.fact_lines.size() != s.lists.size() * (n - 1))
    throw ValidationError(s.sample_id + ": wrong number of fact lines");
  if (s.question_line != question_line_for(s.query_element))
    throw ValidationError(s.sample_id + ": question line does not match the query element");
}

// Assembles a sample from explicit lists (list i gets id i, target is list 0).
inline SyntheticSample make_sample(std::string sample_id, std::vector<std::vector<int>> lists,
                                   std::vector<int> list_order = {},
                                   FactOrder order = FactOrder::RoundRobin) {
  SyntheticSample s;
  s.sample_id = std::move(sample_id);
  for (std::size_t i = 0; i < lists.size(); ++i)
    s.lists.push_back(ChainList{static_cast<int>(i), std::move(lists[i])});
  if (list_order.empty()) {
    list_order.resize(s.lists.size());
    std::iota(list_order.begin(), list_order.end(), 0);
  }
  s.list_order = std::move(list_order);
  s.target_list = 0;
  if (!s.lists.empty() && !s.lists.front().elements.empty()) {
    s.query_element = s.lists.front().elements.back();
    s.oracle_answer = s.lists.front().elements.front();
  }
  s.fact_lines = render_fact_lines(s, order);
  s.question_line = question_line_for(s.query_element);
  validate(s);
  return s;
}

inline std::string synthetic_sample_id(const SyntheticParams &p, std::size_t index) {
  return "syn-L" + std::to_string(p.num_lists) + "-n" + std::to_string(p.elements_per_list) +
         "-s" + std::to_string(p.seed) + "-" + std::to_string(index);
}

// Sample i depends only on (params, i), so shards can be generated
// independently.
inline void check_feasible(const SyntheticParams &p) {
  const std::size_t total = p.num_lists * p.elements_per_list;
  if (p.num_lists < 1)
    throw CapacityError("need at least one list");
  if (p.elements_per_list < 2)
    throw CapacityError("lists need at least 2 elements");
  if (total > static_cast<std::size_t>(kMaxChainValue) + 1)
    throw CapacityError(std::to_string(total) + " unique integers requested from [0, " +
                        std::to_string(kMaxChainValue) + "]");
}

inline SyntheticSample generate_sample(const SyntheticParams &p, std::size_t index,
                                       FactOrder order = FactOrder::RoundRobin) {
  check_feasible(p);
  const std::size_t total = p.num_lists * p.elements_per_list;
  Rng rng(splitmix64(p.seed ^ splitmix64(index + 1)));
  std::vector<int> pool(kMaxChainValue + 1);
  std::iota(pool.begin(), pool.end(), 0);
  // Partial Fisher-Yates: the first `total` slots become a uniform draw
  // without replacement.
  for (std::size_t i = 0; i < total; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_below(rng, pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  std::vector<std::vector<int>> lists(p.num_lists);
  for (std::size_t i = 0; i < p.num_lists; ++i)
    lists[i].assign(pool.begin() + static_cast<std::ptrdiff_t>(i * p.elements_per_list),
                    pool.begin() + static_cast<std::ptrdiff_t>((i + 1) * p.elements_per_list));

  std::vector<int> list_order(p.num_lists);
  std::iota(list_order.begin(), list_order.end(), 0);
  fisher_yates(std::span<int>(list_order), rng);

  return make_sample(synthetic_sample_id(p, index), std::move(lists), std::move(list_order), order);
}

inline std::vector<SyntheticSample> generate_dataset(const SyntheticParams &p,
                                                     FactOrder order = FactOrder::RoundRobin) {
  check_feasible(p);
  std::vector<SyntheticSample> out;
  out.reserve(p.num_samples);
  for (std::size_t i = 0; i < p.num_samples; ++i)
    out.push_back(generate_sample(p, i, order));
  return out;
}

inline std::vector<SyntheticSample> generate_dataset(std::size_t num_samples,
                                                     std::size_t num_lists,
                                                     std::size_t elements_per_list,
                                                     std::uint64_t seed) {
  return generate_dataset(SyntheticParams{num_samples, num_lists, elements_per_list, seed});
}

// ---------------------------------------------------------------------------
// JSON Lines dataset file: one header object, then one sample per line.

inline nlohmann::ordered_json to_json(const SyntheticSample &s) {
  nlohmann::ordered_json j;
  j["sample_id"] = s.sample_id;
  nlohmann::ordered_json lists = nlohmann::ordered_json::array();
  for (const auto &l : s.lists)
    lists.push_back(l.elements);
  j["lists"] = std::move(lists);
  j["list_order"] = s.list_order;
  j["target_list"] = s.target_list;
  j["query_element"] = s.query_element;
  j["oracle_answer"] = s.oracle_answer;
  j["fact_lines"] = s.fact_lines;
  j["question_line"] = s.question_line;
  return j;
}

template <class Json> SyntheticSample synthetic_sample_from_json(const Json &j) {
  SyntheticSample s;
  s.sample_id = j.at("sample_id").template get<std::string>();
  int id = 0;
  for (const auto &l : j.at("lists"))
    s.lists.push_back(ChainList{id++, l.template get<std::vector<int>>()});
  s.list_order = j.at("list_order").template get<std::vector<int>>();
  s.target_list = j.at("target_list").template get<int>();
  s.query_element = j.at("query_element").template get<int>();
  s.oracle_answer = j.at("oracle_answer").template get<int>();
  s.fact_lines = j.at("fact_lines").template get<std::vector<std::string>>();
  s.question_line = j.at("question_line").template get<std::string>();
  validate(s);
  return s;
}

inline nlohmann::ordered_json dataset_header(const SyntheticParams &p, FactOrder order) {
  nlohmann::ordered_json h;
  h["kind"] = "synthetic-chains";
  h["num_samples"] = p.num_samples;
  h["num_lists"] = p.num_lists;
  h["elements_per_list"] = p.elements_per_list;
  h["seed"] = p.seed;
  h["fact_order"] = order == FactOrder::RoundRobin ? "round_robin" : "grouped_by_list";
  return h;
}

inline void write_synthetic_dataset(const std::string &path, const SyntheticParams &p,
                                    const std::vector<SyntheticSample> &samples,
                                    FactOrder order = FactOrder::RoundRobin) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw ConfigError("cannot open '" + path + "' for writing");
  out << dataset_header(p, order).dump() << '\n';
  for (const auto &s : samples)
    out << to_json(s).dump() << '\n';
}

struct SyntheticDataset {
  SyntheticParams params;
  std::vector<SyntheticSample> samples;
};

inline SyntheticDataset read_synthetic_dataset(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ConfigError("cannot open '" + path + "'");
  SyntheticDataset ds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty())
      continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception &e) {
      throw IngestError(lineno, e.what());
    }
    try {
      if (j.contains("kind")) {
        ds.params.num_samples = j.at("num_samples").get<std::size_t>();
        ds.params.num_lists = j.at("num_lists").get<std::size_t>();
        ds.params.elements_per_list = j.at("elements_per_list").get<std::size_t>();
        ds.params.seed = j.at("seed").get<std::uint64_t>();
        continue;
      }
      ds.samples.push_back(synthetic_sample_from_json(j));
    } catch (const nlohmann::json::exception &e) {
      throw IngestError(lineno, e.what());
    }
  }
  return ds;
}

// True when the file's first object is a synthetic dataset header.
inline bool is_synthetic_dataset_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    try {
      const auto j = nlohmann::json::parse(line);
      return j.is_object() && j.value("kind", "") == "synthetic-chains";
    } catch (const nlohmann::json::exception &) {
      return false;
    }
  }
  return false;
}

} // namespace ctxrep
