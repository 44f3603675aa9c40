#pragma once

// Documents, contexts, supporting-document orders and the repetition
// augmentation C -> C ⊕ C ⊕ ... ⊕ C.
//
// A context is an ordered sequence of documents. Supporting documents carry a
// 1-based hop index giving their place in the gold reasoning chain; noisy
// documents carry none. An order σ is a permutation of (1..k); a context
// "presents σ" when some strictly increasing selection of positions yields
// one copy of each supporting document, hop σ(1) first, then σ(2), and so on.
// Copies that are not selected count as noise, so a repeated context can
// present many orders at once.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ctxrep/error.hpp"
#include "ctxrep/random.hpp"

namespace ctxrep {

enum class Role { Supporting, Noisy };

inline std::string_view to_string(Role r) {
  return r == Role::Supporting ? "supporting" : "noisy";
}

inline Role role_from_string(std::string_view s) {
  if (s == "supporting")
    return Role::Supporting;
  if (s == "noisy")
    return Role::Noisy;
  throw ValidationError("unknown document role '" + std::string(s) + "'");
}

namespace detail {
inline bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  });
}
} // namespace detail

struct Document {
  std::string id;
  std::optional<std::string> title;
  std::string text;
  Role role = Role::Noisy;
  std::optional<int> hop_index;

  static Document supporting(std::string id, std::string text, int hop,
                             std::optional<std::string> title = std::nullopt) {
    Document d{std::move(id), std::move(title), std::move(text), Role::Supporting, hop};
    d.validate();
    return d;
  }

  static Document noisy(std::string id, std::string text,
                        std::optional<std::string> title = std::nullopt) {
    Document d{std::move(id), std::move(title), std::move(text), Role::Noisy, std::nullopt};
    d.validate();
    return d;
  }

  bool is_supporting() const noexcept { return role == Role::Supporting; }

  void validate() const {
    if (detail::is_blank(text))
      throw ValidationError("document '" + id + "' has empty text");
    if (is_supporting() != hop_index.has_value())
      throw ValidationError("document '" + id +
                            "': hop_index must be present iff role is supporting");
    if (hop_index && *hop_index < 1)
      throw ValidationError("document '" + id + "': hop_index is 1-based");
  }

  friend bool operator==(const Document &, const Document &) = default;
};

// A permutation of (1..k), stored as its one-line notation.
class OrderPermutation {
public:
  explicit OrderPermutation(std::vector<int> mapping) : mapping_(std::move(mapping)) {
    const auto k = mapping_.size();
    std::vector<bool> seen(k + 1, false);
    for (int v : mapping_) {
      if (v < 1 || static_cast<std::size_t>(v) > k || seen[static_cast<std::size_t>(v)])
        throw InvalidPermutation("not a permutation of 1.." + std::to_string(k) + ": " +
                                 format(mapping_));
      seen[static_cast<std::size_t>(v)] = true;
    }
  }

  static OrderPermutation identity(std::size_t k) {
    std::vector<int> m(k);
    for (std::size_t i = 0; i < k; ++i)
      m[i] = static_cast<int>(i + 1);
    return OrderPermutation(std::move(m));
  }

  // Parses "3,1,2" or "(3,1,2)".
  static OrderPermutation parse(std::string_view text) {
    std::vector<int> m;
    std::string cur;
    auto flush = [&] {
      if (cur.empty())
        throw InvalidPermutation("malformed permutation '" + std::string(text) + "'");
      m.push_back(std::stoi(cur));
      cur.clear();
    };
    for (char c : text) {
      if (c == '(' || c == ')' || c == ' ')
        continue;
      if (c == ',')
        flush();
      else if (c >= '0' && c <= '9')
        cur.push_back(c);
      else
        throw InvalidPermutation("malformed permutation '" + std::string(text) + "'");
    }
    flush();
    return OrderPermutation(std::move(m));
  }

  std::size_t size() const noexcept { return mapping_.size(); }
  // σ(i) for 1-based i.
  int operator()(std::size_t i) const { return mapping_.at(i - 1); }
  const std::vector<int> &mapping() const noexcept { return mapping_; }

  OrderPermutation inverse() const {
    std::vector<int> inv(mapping_.size());
    for (std::size_t i = 0; i < mapping_.size(); ++i)
      inv[static_cast<std::size_t>(mapping_[i] - 1)] = static_cast<int>(i + 1);
    return OrderPermutation(std::move(inv));
  }

  bool is_identity() const noexcept {
    for (std::size_t i = 0; i < mapping_.size(); ++i)
      if (mapping_[i] != static_cast<int>(i + 1))
        return false;
    return true;
  }

  std::string to_string() const { return format(mapping_); }

  friend bool operator==(const OrderPermutation &, const OrderPermutation &) = default;
  friend auto operator<=>(const OrderPermutation &a, const OrderPermutation &b) {
    return a.mapping_ <=> b.mapping_;
  }

private:
  static std::string format(const std::vector<int> &m) {
    std::string s = "(";
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (i)
        s += ',';
      s += std::to_string(m[i]);
    }
    return s + ")";
  }

  std::vector<int> mapping_;
};

struct ContextSpec {
  std::vector<Document> documents;

  // Number of supporting documents (copies included).
  std::size_t k() const noexcept {
    return static_cast<std::size_t>(std::count_if(
        documents.begin(), documents.end(), [](const Document &d) { return d.is_supporting(); }));
  }

  std::size_t size() const noexcept { return documents.size(); }
  bool empty() const noexcept { return documents.empty(); }

  std::vector<Document> supporting() const {
    std::vector<Document> out;
    for (const auto &d : documents)
      if (d.is_supporting())
        out.push_back(d);
    return out;
  }

  std::vector<Document> noisy() const {
    std::vector<Document> out;
    for (const auto &d : documents)
      if (!d.is_supporting())
        out.push_back(d);
    return out;
  }

  // Every document valid, and supporting hop indices are exactly {1..k}.
  void validate() const {
    std::vector<bool> seen(k() + 1, false);
    for (const auto &d : documents) {
      d.validate();
      if (!d.is_supporting())
        continue;
      const auto h = static_cast<std::size_t>(*d.hop_index);
      if (h > k() || seen[h])
        throw ValidationError("supporting hop indices must be exactly 1.." +
                              std::to_string(k()) + " (document '" + d.id + "')");
      seen[h] = true;
    }
  }

  friend bool operator==(const ContextSpec &, const ContextSpec &) = default;
};

// Positions into an augmented sequence that spell out one σ-ordered copy of
// the supporting documents. repetition_of is 1-based.
struct OrderWitness {
  std::vector<std::size_t> positions;
  std::vector<int> repetition_of;

  friend bool operator==(const OrderWitness &, const OrderWitness &) = default;
};

// ---------------------------------------------------------------------------
// Operations

// (d_σ(1), ..., d_σ(k)) where d_i is supporting[i-1].
inline std::vector<Document> apply_order(const std::vector<Document> &supporting,
                                         const OrderPermutation &sigma) {
  if (supporting.size() != sigma.size())
    throw InvalidPermutation("permutation of size " + std::to_string(sigma.size()) +
                             " applied to " + std::to_string(supporting.size()) +
                             " supporting documents");
  for (const auto &d : supporting)
    if (!d.is_supporting())
      throw RoleError("apply_order: document '" + d.id + "' is not supporting");
  std::vector<Document> out;
  out.reserve(supporting.size());
  for (std::size_t i = 1; i <= sigma.size(); ++i)
    out.push_back(supporting[static_cast<std::size_t>(sigma(i) - 1)]);
  return out;
}

inline constexpr std::size_t kMaxEnumeratedOrder = 8;

// All k! permutations in lexicographic order.
inline std::vector<OrderPermutation> enumerate_orders(std::size_t k) {
  if (k < 1 || k > kMaxEnumeratedOrder)
    throw CardinalityGuard("enumerate_orders: k=" + std::to_string(k) + " outside [1, " +
                           std::to_string(kMaxEnumeratedOrder) + "]");
  std::vector<int> m(k);
  for (std::size_t i = 0; i < k; ++i)
    m[i] = static_cast<int>(i + 1);
  std::vector<OrderPermutation> out;
  do {
    out.emplace_back(m);
  } while (std::next_permutation(m.begin(), m.end()));
  return out;
}

namespace detail {
inline std::vector<Document> sorted_by_hop(std::vector<Document> supporting) {
  for (const auto &d : supporting)
    if (!d.is_supporting())
      throw RoleError("document '" + d.id + "' is not supporting");
  std::stable_sort(supporting.begin(), supporting.end(),
                   [](const Document &a, const Document &b) { return *a.hop_index < *b.hop_index; });
  for (std::size_t i = 0; i < supporting.size(); ++i)
    if (*supporting[i].hop_index != static_cast<int>(i + 1))
      throw ValidationError("supporting hop indices must be exactly 1.." +
                            std::to_string(supporting.size()));
  return supporting;
}
} // namespace detail

// Lays out σ-ordered supporting documents and scatters the noisy ones across
// the k+1 gaps n_0..n_k. Each noisy document draws its gap uniformly from a
// PRNG seeded with interleave_seed; noisy documents sharing a gap keep their
// input order. The gap draws do not depend on σ, so the same seed gives the
// same noise layout for every order.
//
// σ is read over hop indices: d_i is the supporting document with hop i.
inline ContextSpec build_context(const std::vector<Document> &supporting,
                                 const std::vector<Document> &noisy,
                                 const OrderPermutation &sigma, std::uint64_t interleave_seed) {
  if (supporting.empty())
    throw ValidationError("build_context: no supporting documents");
  if (supporting.size() != sigma.size())
    throw InvalidPermutation("permutation of size " + std::to_string(sigma.size()) +
                             " for " + std::to_string(supporting.size()) +
                             " supporting documents");
  const auto ordered = apply_order(detail::sorted_by_hop(supporting), sigma);
  const std::size_t k = ordered.size();

  std::vector<std::vector<const Document *>> gaps(k + 1);
  Rng rng(interleave_seed);
  for (const auto &n : noisy) {
    if (n.is_supporting())
      throw RoleError("build_context: document '" + n.id + "' passed as noise is supporting");
    gaps[static_cast<std::size_t>(uniform_below(rng, k + 1))].push_back(&n);
  }

  ContextSpec out;
  out.documents.reserve(k + noisy.size());
  for (std::size_t g = 0; g <= k; ++g) {
    for (const auto *n : gaps[g])
      out.documents.push_back(*n);
    if (g < k)
      out.documents.push_back(ordered[g]);
  }
  return out;
}

// Same context with its supporting slots refilled in σ order; noise stays put.
inline ContextSpec reorder_supporting(const ContextSpec &context, const OrderPermutation &sigma) {
  const auto ordered = apply_order(detail::sorted_by_hop(context.supporting()), sigma);
  ContextSpec out = context;
  std::size_t next = 0;
  for (auto &d : out.documents)
    if (d.is_supporting())
      d = ordered[next++];
  return out;
}

namespace detail {
// Checks that the distinct supporting hop indices in `context` are {1..|σ|}.
inline void require_order_domain(const ContextSpec &context, const OrderPermutation &sigma) {
  std::vector<bool> seen(sigma.size() + 1, false);
  std::size_t distinct = 0;
  for (const auto &d : context.documents) {
    if (!d.is_supporting())
      continue;
    const int h = d.hop_index.value_or(0);
    if (h < 1 || static_cast<std::size_t>(h) > sigma.size())
      throw InvalidPermutation("context has hop index " + std::to_string(h) +
                               " outside the permutation's domain 1.." +
                               std::to_string(sigma.size()));
    if (!seen[static_cast<std::size_t>(h)]) {
      seen[static_cast<std::size_t>(h)] = true;
      ++distinct;
    }
  }
  if (distinct != sigma.size())
    throw InvalidPermutation("context presents " + std::to_string(distinct) +
                             " distinct supporting documents, permutation has size " +
                             std::to_string(sigma.size()));
}

// Leftmost greedy match of hops σ(1..k) as a subsequence. Greedy is optimal
// for subsequence matching, so a miss here means no selection exists.
inline std::optional<std::vector<std::size_t>> greedy_selection(const ContextSpec &context,
                                                                const OrderPermutation &sigma) {
  std::vector<std::size_t> picks;
  picks.reserve(sigma.size());
  std::size_t pos = 0;
  for (std::size_t i = 1; i <= sigma.size(); ++i) {
    const int want = sigma(i);
    while (pos < context.documents.size() &&
           !(context.documents[pos].is_supporting() && context.documents[pos].hop_index == want))
      ++pos;
    if (pos == context.documents.size())
      return std::nullopt;
    picks.push_back(pos++);
  }
  return picks;
}
} // namespace detail

inline bool is_in_order_set(const ContextSpec &context, const OrderPermutation &sigma) {
  detail::require_order_domain(context, sigma);
  return detail::greedy_selection(context, sigma).has_value();
}

inline ContextSpec repeat_context(const ContextSpec &context, int k_hat) {
  if (k_hat < 1)
    throw InvalidRepetition("repetition count must be >= 1, got " + std::to_string(k_hat));
  ContextSpec out;
  out.documents.reserve(context.documents.size() * static_cast<std::size_t>(k_hat));
  for (int r = 0; r < k_hat; ++r)
    out.documents.insert(out.documents.end(), context.documents.begin(), context.documents.end());
  return out;
}

// True iff the k_hat-fold repetition of `context` presents every order of its
// k supporting documents. Always true once k_hat >= k.
inline bool verify_order_coverage(const ContextSpec &context, int k_hat) {
  const auto repeated = repeat_context(context, k_hat);
  for (const auto &sigma : enumerate_orders(context.k()))
    if (!is_in_order_set(repeated, sigma))
      return false;
  return true;
}

// The canonical selection: d_σ(i) taken from the i-th repetition block.
inline OrderWitness extract_order_witness(const ContextSpec &context, int k_hat,
                                          const OrderPermutation &sigma) {
  const std::size_t k = context.k();
  if (k_hat < 1)
    throw InvalidRepetition("repetition count must be >= 1, got " + std::to_string(k_hat));
  if (static_cast<std::size_t>(k_hat) < k)
    throw WitnessUnavailable("canonical witness needs k_hat >= k (k_hat=" +
                             std::to_string(k_hat) + ", k=" + std::to_string(k) + ")");
  if (sigma.size() != k)
    throw InvalidPermutation("permutation of size " + std::to_string(sigma.size()) +
                             " for a context with k=" + std::to_string(k));
  detail::require_order_domain(context, sigma);

  const std::size_t block = context.documents.size();
  OrderWitness w;
  w.positions.reserve(k);
  w.repetition_of.reserve(k);
  for (std::size_t i = 1; i <= k; ++i) {
    const auto it = std::find_if(context.documents.begin(), context.documents.end(),
                                 [&](const Document &d) {
                                   return d.is_supporting() && d.hop_index == sigma(i);
                                 });
    const auto offset = static_cast<std::size_t>(it - context.documents.begin());
    w.positions.push_back((i - 1) * block + offset);
    w.repetition_of.push_back(static_cast<int>(i));
  }
  return w;
}

// Witness invariants: strictly increasing positions, in range, reading off
// exactly hops σ(1), ..., σ(k).
inline bool witness_is_valid(const ContextSpec &augmented, const OrderWitness &w,
                             const OrderPermutation &sigma) {
  if (w.positions.size() != sigma.size() || w.repetition_of.size() != sigma.size())
    return false;
  for (std::size_t i = 0; i < w.positions.size(); ++i) {
    if (w.positions[i] >= augmented.documents.size())
      return false;
    if (i > 0 && w.positions[i] <= w.positions[i - 1])
      return false;
    const auto &d = augmented.documents[w.positions[i]];
    if (!d.is_supporting() || d.hop_index != sigma(i + 1))
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json to_json(const Document &d) {
  nlohmann::ordered_json j;
  j["id"] = d.id;
  j["title"] = d.title ? nlohmann::ordered_json(*d.title) : nlohmann::ordered_json(nullptr);
  j["text"] = d.text;
  j["role"] = std::string(to_string(d.role));
  j["hop_index"] = d.hop_index ? nlohmann::ordered_json(*d.hop_index) : nlohmann::ordered_json(nullptr);
  return j;
}

template <class Json> Document document_from_json(const Json &j) {
  Document d;
  d.id = j.at("id").template get<std::string>();
  if (j.contains("title") && !j.at("title").is_null())
    d.title = j.at("title").template get<std::string>();
  d.text = j.at("text").template get<std::string>();
  d.role = role_from_string(j.at("role").template get<std::string>());
  if (j.contains("hop_index") && !j.at("hop_index").is_null())
    d.hop_index = j.at("hop_index").template get<int>();
  d.validate();
  return d;
}

inline nlohmann::ordered_json to_json(const ContextSpec &c) {
  nlohmann::ordered_json docs = nlohmann::ordered_json::array();
  for (const auto &d : c.documents)
    docs.push_back(to_json(d));
  nlohmann::ordered_json j;
  j["documents"] = std::move(docs);
  return j;
}

template <class Json> ContextSpec context_from_json(const Json &j) {
  ContextSpec c;
  for (const auto &d : j.at("documents"))
    c.documents.push_back(document_from_json(d));
  return c;
}

inline std::string serialize_context(const ContextSpec &c) { return to_json(c).dump(); }

inline ContextSpec parse_context(std::string_view text) {
  try {
    return context_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception &e) {
    throw ValidationError(std::string("malformed context JSON: ") + e.what());
  }
}

} // namespace ctxrep
