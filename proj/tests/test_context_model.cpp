#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "ctxrep/context_model.hpp"
#include "test_util.hpp"

using namespace ctxrep;
using namespace ctxrep::testing;

namespace {

std::vector<std::string> ids(const std::vector<Document> &docs) {
  std::vector<std::string> out;
  for (const auto &d : docs)
    out.push_back(d.id);
  return out;
}

std::vector<std::string> ids(const ContextSpec &c) { return ids(c.documents); }

// Scatter oracle: d_j goes to the slot i with σ(i) = j.
std::vector<Document> scatter_order(const std::vector<Document> &docs, const std::vector<int> &m) {
  std::vector<Document> out(docs.size());
  for (std::size_t j = 0; j < docs.size(); ++j) {
    const auto it = std::find(m.begin(), m.end(), static_cast<int>(j + 1));
    out[static_cast<std::size_t>(it - m.begin())] = docs[j];
  }
  return out;
}

} // namespace

TEST(Document, Invariants) {
  EXPECT_THROW(Document::supporting("x", "   \n", 1), ValidationError);
  EXPECT_THROW(Document::supporting("x", "text", 0), ValidationError);
  Document bad{"y", std::nullopt, "text", Role::Noisy, 2};
  EXPECT_THROW(bad.validate(), ValidationError);
  Document missing{"z", std::nullopt, "text", Role::Supporting, std::nullopt};
  EXPECT_THROW(missing.validate(), ValidationError);
}

TEST(ContextSpec, HopIndicesMustBeOneToK) {
  ContextSpec c{{sup(1), sup(3)}};
  EXPECT_THROW(c.validate(), ValidationError);
  ContextSpec dup{{sup(1), sup(1)}};
  EXPECT_THROW(dup.validate(), ValidationError);
  ContextSpec ok{{noise(0), sup(2), sup(1)}};
  EXPECT_NO_THROW(ok.validate());
  EXPECT_EQ(ok.k(), 2u);
}

TEST(OrderPermutation, RejectsNonBijections) {
  EXPECT_THROW(OrderPermutation({1, 1}), InvalidPermutation);
  EXPECT_THROW(OrderPermutation({0, 1}), InvalidPermutation);
  EXPECT_THROW(OrderPermutation({1, 3}), InvalidPermutation);
  EXPECT_EQ(OrderPermutation::parse("(3,1,2)").mapping(), (std::vector<int>{3, 1, 2}));
  EXPECT_EQ(OrderPermutation::parse("2,1").to_string(), "(2,1)");
  EXPECT_THROW(OrderPermutation::parse("2,,1"), InvalidPermutation);
}

TEST(ApplyOrder, Examples) {
  const auto d = supporting_set(3);
  const std::vector<Document> two(d.begin(), d.begin() + 2);
  EXPECT_EQ(ids(apply_order(two, OrderPermutation::identity(2))), (std::vector<std::string>{"d1", "d2"}));
  EXPECT_EQ(ids(apply_order(two, OrderPermutation({2, 1}))), (std::vector<std::string>{"d2", "d1"}));
  EXPECT_EQ(ids(apply_order(d, OrderPermutation({3, 1, 2}))),
            (std::vector<std::string>{"d3", "d1", "d2"}));
}

TEST(ApplyOrder, MatchesScatterOracleForAllOrders) {
  for (int k = 1; k <= 5; ++k) {
    const auto d = supporting_set(k);
    for (const auto &sigma : enumerate_orders(static_cast<std::size_t>(k)))
      EXPECT_EQ(apply_order(d, sigma), scatter_order(d, sigma.mapping())) << sigma.to_string();
  }
}

TEST(ApplyOrder, InverseRestoresInput) {
  const auto d = supporting_set(5);
  for (const auto &sigma : enumerate_orders(5))
    EXPECT_EQ(apply_order(apply_order(d, sigma), sigma.inverse()), d);
}

TEST(ApplyOrder, Errors) {
  const auto d = supporting_set(2);
  EXPECT_THROW(apply_order(d, OrderPermutation::identity(3)), InvalidPermutation);
  EXPECT_THROW(apply_order({sup(1), noise(0)}, OrderPermutation::identity(2)), RoleError);
}

TEST(EnumerateOrders, CountsAndOrdering) {
  EXPECT_EQ(enumerate_orders(1).size(), 1u);
  EXPECT_EQ(enumerate_orders(1).front().mapping(), std::vector<int>{1});
  EXPECT_EQ(enumerate_orders(3).size(), 6u);
  const auto five = enumerate_orders(5);
  EXPECT_EQ(five.size(), 120u);
  EXPECT_TRUE(std::is_sorted(five.begin(), five.end()));
  EXPECT_EQ(std::set<OrderPermutation>(five.begin(), five.end()).size(), 120u);
  EXPECT_EQ(enumerate_orders(8).size(), 40320u);
  EXPECT_THROW(enumerate_orders(0), CardinalityGuard);
  EXPECT_THROW(enumerate_orders(9), CardinalityGuard);
}

TEST(BuildContext, NoNoiseIsJustTheOrder) {
  const auto c = build_context(supporting_set(2), {}, OrderPermutation::identity(2), 123);
  EXPECT_EQ(ids(c), (std::vector<std::string>{"d1", "d2"}));
}

TEST(BuildContext, SingleNoiseLandsInOneOfThreeGaps) {
  const std::set<std::vector<std::string>> allowed{
      {"n0", "d2", "d1"}, {"d2", "n0", "d1"}, {"d2", "d1", "n0"}};
  const auto c = build_context(supporting_set(2), noisy_set(1), OrderPermutation({2, 1}), 0);
  EXPECT_TRUE(allowed.count(ids(c))) << ::testing::PrintToString(ids(c));
  EXPECT_EQ(ids(c.supporting()), (std::vector<std::string>{"d2", "d1"}));

  // Over many seeds every gap is used with roughly equal frequency.
  std::map<std::vector<std::string>, int> seen;
  for (std::uint64_t seed = 0; seed < 3000; ++seed)
    ++seen[ids(build_context(supporting_set(2), noisy_set(1), OrderPermutation({2, 1}), seed))];
  ASSERT_EQ(seen.size(), 3u);
  for (const auto &[layout, count] : seen) {
    EXPECT_TRUE(allowed.count(layout));
    EXPECT_NEAR(count, 1000, 120);
  }
}

TEST(BuildContext, CardinalityDeterminismAndSubsequence) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + static_cast<int>(rng() % 5);
    const int m = static_cast<int>(rng() % 7);
    const auto sigma = random_order(rng, k);
    auto supporting = supporting_set(k);
    std::shuffle(supporting.begin(), supporting.end(), rng); // order of the input is irrelevant
    const auto a = build_context(supporting, noisy_set(m), sigma, trial);
    const auto b = build_context(supporting, noisy_set(m), sigma, trial);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.size(), static_cast<std::size_t>(k + m));
    EXPECT_EQ(a.supporting(), apply_order(supporting_set(k), sigma));
    auto noise_ids = ids(a.noisy());
    std::sort(noise_ids.begin(), noise_ids.end());
    EXPECT_EQ(noise_ids, ids(noisy_set(m)));
    EXPECT_NO_THROW(a.validate());
  }
  EXPECT_EQ(build_context(supporting_set(2), noisy_set(3), OrderPermutation::identity(2), 9).size(), 5u);
}

TEST(BuildContext, NoiseLayoutIndependentOfOrder) {
  const auto a = build_context(supporting_set(3), noisy_set(4), OrderPermutation({1, 2, 3}), 42);
  const auto b = build_context(supporting_set(3), noisy_set(4), OrderPermutation({3, 2, 1}), 42);
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_EQ(a.documents[i].is_supporting(), b.documents[i].is_supporting());
  EXPECT_EQ(reorder_supporting(a, OrderPermutation({3, 2, 1})), b);
}

TEST(BuildContext, Errors) {
  EXPECT_THROW(build_context({}, {}, OrderPermutation::identity(1), 0), ValidationError);
  EXPECT_THROW(build_context(supporting_set(2), {}, OrderPermutation::identity(3), 0),
               InvalidPermutation);
  EXPECT_THROW(build_context(supporting_set(2), {sup(1)}, OrderPermutation::identity(2), 0), RoleError);
}

TEST(IsInOrderSet, Examples) {
  const ContextSpec c{{sup(1), sup(2)}};
  EXPECT_TRUE(is_in_order_set(c, OrderPermutation::identity(2)));
  EXPECT_FALSE(is_in_order_set(c, OrderPermutation({2, 1})));
  const ContextSpec twice{{sup(1), sup(2), sup(1), sup(2)}};
  EXPECT_TRUE(is_in_order_set(twice, OrderPermutation({2, 1})));
  EXPECT_TRUE(brute_force_in_order_set(twice, {2, 1}));
}

TEST(IsInOrderSet, AgreesWithBruteForce) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 400; ++trial) {
    const int k = 1 + static_cast<int>(rng() % 4);
    const int m = static_cast<int>(rng() % 4);
    const int reps = 1 + static_cast<int>(rng() % 3);
    auto base = random_context(rng, k, m);
    // Mix repetitions with a reshuffle so copies are not block-structured.
    auto c = repeat_context(base, reps);
    if (trial % 2)
      std::shuffle(c.documents.begin(), c.documents.end(), rng);
    for (const auto &sigma : enumerate_orders(static_cast<std::size_t>(k)))
      ASSERT_EQ(is_in_order_set(c, sigma), brute_force_in_order_set(c, sigma.mapping()))
          << "trial " << trial << " sigma " << sigma.to_string();
  }
}

TEST(IsInOrderSet, DomainMismatchThrows) {
  const ContextSpec c{{sup(1), sup(2)}};
  EXPECT_THROW(is_in_order_set(c, OrderPermutation::identity(3)), InvalidPermutation);
}

TEST(RepeatContext, Examples) {
  const ContextSpec c{{sup(1), sup(2)}};
  EXPECT_EQ(repeat_context(c, 1), c);
  EXPECT_EQ(ids(repeat_context(c, 2)), (std::vector<std::string>{"d1", "d2", "d1", "d2"}));
  std::mt19937_64 rng(3);
  const auto five = random_context(rng, 3, 2);
  const auto r = repeat_context(five, 3);
  ASSERT_EQ(r.size(), 15u);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t i = 0; i < 5; ++i)
      EXPECT_EQ(r.documents[b * 5 + i], five.documents[i]);
  EXPECT_THROW(repeat_context(c, 0), InvalidRepetition);
}

TEST(RepeatContext, ConcatenationAdds) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = random_context(rng, 1 + trial % 4, trial % 5);
    const int a = 1 + trial % 3, b = 1 + trial % 4;
    auto joined = repeat_context(c, a);
    const auto tail = repeat_context(c, b);
    joined.documents.insert(joined.documents.end(), tail.documents.begin(), tail.documents.end());
    EXPECT_EQ(repeat_context(c, a + b), joined);
  }
}

TEST(VerifyOrderCoverage, Examples) {
  std::mt19937_64 rng(17);
  EXPECT_TRUE(verify_order_coverage(random_context(rng, 3, 2), 3));
  const ContextSpec c{{sup(1), sup(2)}};
  EXPECT_FALSE(verify_order_coverage(c, 1));
  for (int i = 0; i < 100; ++i)
    EXPECT_TRUE(verify_order_coverage(random_context(rng, 4, static_cast<int>(rng() % 5)), 4));
}

TEST(VerifyOrderCoverage, CoversEveryOrderUpToFiveHops) {
  std::mt19937_64 rng(23);
  for (int k = 1; k <= 5; ++k)
    for (int trial = 0; trial < 20; ++trial)
      EXPECT_TRUE(verify_order_coverage(random_context(rng, k, static_cast<int>(rng() % 7)), k));
}

TEST(VerifyOrderCoverage, ContiguousSupportNeedsRepetition) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + trial % 4;
    EXPECT_FALSE(verify_order_coverage(contiguous_context(rng, k, trial % 5), 1));
  }
}

TEST(VerifyOrderCoverage, MatchesBruteForceBelowTheBound) {
  // k_hat < k can still cover everything when the layout is favourable; the
  // answer must agree with exhaustive search either way.
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 60; ++trial) {
    const int k = 2 + trial % 3;
    const auto c = random_context(rng, k, trial % 3);
    for (int k_hat = 1; k_hat < k; ++k_hat) {
      const auto rep = repeat_context(c, k_hat);
      bool all = true;
      for (const auto &sigma : enumerate_orders(static_cast<std::size_t>(k)))
        all = all && brute_force_in_order_set(rep, sigma.mapping());
      EXPECT_EQ(verify_order_coverage(c, k_hat), all);
    }
  }
}

TEST(ExtractOrderWitness, OneHopPerRepetitionBlock) {
  const ContextSpec c{{sup(1), sup(2)}};
  const auto swap = extract_order_witness(c, 2, OrderPermutation({2, 1}));
  EXPECT_EQ(swap.positions, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(swap.repetition_of, (std::vector<int>{1, 2}));
  const auto ident = extract_order_witness(c, 2, OrderPermutation::identity(2));
  EXPECT_EQ(ident.positions, (std::vector<std::size_t>{0, 3}));
  EXPECT_EQ(ident.repetition_of, (std::vector<int>{1, 2}));
}

TEST(ExtractOrderWitness, ValidOnRandomContexts) {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + trial % 5;
    const auto c = random_context(rng, k, static_cast<int>(rng() % 6));
    const auto sigma = random_order(rng, k);
    const int k_hat = k + static_cast<int>(rng() % 2);
    const auto w = extract_order_witness(c, k_hat, sigma);
    const auto aug = repeat_context(c, k_hat);
    EXPECT_TRUE(witness_is_valid(aug, w, sigma));
    EXPECT_TRUE(is_in_order_set(aug, sigma));
    for (std::size_t i = 0; i < w.positions.size(); ++i)
      EXPECT_EQ(w.positions[i] / c.size() + 1, static_cast<std::size_t>(w.repetition_of[i]));
  }
}

TEST(ExtractOrderWitness, Errors) {
  const ContextSpec c{{sup(1), sup(2), sup(3)}};
  EXPECT_THROW(extract_order_witness(c, 2, OrderPermutation::identity(3)), WitnessUnavailable);
  EXPECT_THROW(extract_order_witness(c, 3, OrderPermutation::identity(2)), InvalidPermutation);
}

TEST(WitnessIsValid, RejectsBrokenWitnesses) {
  const ContextSpec c{{sup(1), sup(2)}};
  const auto aug = repeat_context(c, 2);
  const OrderPermutation swap({2, 1});
  EXPECT_FALSE(witness_is_valid(aug, {{2, 1}, {1, 2}}, swap)); // not increasing
  EXPECT_FALSE(witness_is_valid(aug, {{0, 1}, {1, 1}}, swap)); // wrong documents
  EXPECT_FALSE(witness_is_valid(aug, {{1, 9}, {1, 2}}, swap)); // out of range
}

TEST(ContextJson, RoundTripPreservesOrderAndBytes) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    auto c = random_context(rng, 1 + trial % 4, trial % 4);
    c.documents.front().text = "quote \" backslash \\ tab\t newline\n unicode \xC3\xA9\xE2\x82\xAC";
    if (trial % 2)
      c.documents.back().title = "Title " + std::to_string(trial);
    const auto text = serialize_context(c);
    const auto back = parse_context(text);
    EXPECT_EQ(back, c);
    EXPECT_EQ(serialize_context(back), text);
  }
}

TEST(ContextJson, Shape) {
  const ContextSpec c{{Document::supporting("a", "x", 1, "T"), noise(0)}};
  EXPECT_EQ(serialize_context(c),
            R"({"documents":[{"id":"a","title":"T","text":"x","role":"supporting","hop_index":1},)"
            R"({"id":"n0","title":null,"text":"distractor text 0","role":"noisy","hop_index":null}]})");
  EXPECT_THROW(parse_context(R"({"documents":[{"id":"a","text":"x","role":"other"}]})"),
               ValidationError);
  EXPECT_THROW(parse_context("{"), ValidationError);
}
