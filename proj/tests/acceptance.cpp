// Prints one PASS/FAIL line per acceptance criterion; exits nonzero if any fail.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <string>

#include "ctxrep/harness/report.hpp"
#include "ctxrep/harness/studies.hpp"
#include "test_util.hpp"

using namespace ctxrep;
using namespace ctxrep::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome order_coverage() {
  std::mt19937_64 rng(101);
  const auto start = Clock::now();
  int covered = 0, checked = 0;
  for (int i = 0; i < 500; ++i) {
    const int k = std::uniform_int_distribution<int>(2, 5)(rng);
    const int m = std::uniform_int_distribution<int>(0, 6)(rng);
    const auto c = random_context(rng, k, m);
    covered += verify_order_coverage(c, k);
    ++checked;
  }
  // Independent check of the membership test on instances small enough to brute force.
  int disagreements = 0;
  for (int i = 0; i < 100; ++i) {
    const int k = std::uniform_int_distribution<int>(2, 3)(rng);
    const auto c = repeat_context(random_context(rng, k, 2), k);
    for (const auto &sigma : enumerate_orders(static_cast<std::size_t>(k)))
      disagreements += is_in_order_set(c, sigma) != brute_force_in_order_set(c, sigma.mapping());
  }
  const double secs = seconds_since(start);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d/%d contexts covered at k_hat=k, %d brute-force disagreements, %.2fs",
                covered, checked, disagreements, secs);
  return {covered == checked && disagreements == 0 && secs < 5.0, buf};
}

Outcome witnesses() {
  std::mt19937_64 rng(202);
  int valid = 0;
  for (int i = 0; i < 200; ++i) {
    const int k = std::uniform_int_distribution<int>(1, 5)(rng);
    const int m = std::uniform_int_distribution<int>(0, 6)(rng);
    const auto c = random_context(rng, k, m);
    const auto sigma = random_order(rng, k);
    const auto augmented = repeat_context(c, k);
    const auto w = extract_order_witness(c, k, sigma);
    bool ok = witness_is_valid(augmented, w, sigma) && is_in_order_set(augmented, sigma);
    // Each pick comes from its own repetition block.
    for (std::size_t j = 0; j < w.positions.size() && ok; ++j)
      ok = w.positions[j] / c.documents.size() + 1 == static_cast<std::size_t>(w.repetition_of[j]) &&
           augmented.documents[w.positions[j]].hop_index == sigma(j + 1);
    valid += ok;
  }
  return {valid == 200, std::to_string(valid) + "/200 witnesses valid"};
}

Outcome contiguity() {
  std::mt19937_64 rng(303);
  int refuted = 0;
  for (int i = 0; i < 100; ++i) {
    const int k = std::uniform_int_distribution<int>(2, 5)(rng);
    const int m = std::uniform_int_distribution<int>(0, 6)(rng);
    refuted += !verify_order_coverage(contiguous_context(rng, k, m), 1);
  }
  return {refuted == 100, std::to_string(refuted) + "/100 contiguous contexts miss an order at k_hat=1"};
}

Outcome synthetic_fidelity() {
  const auto start = Clock::now();
  const auto data = generate_dataset(1000, 10, 3, 2024);
  int good = 0;
  for (const auto &s : data) {
    std::set<int> seen;
    std::vector<std::vector<int>> lists;
    bool ok = s.lists.size() == 10;
    for (const auto &l : s.lists) {
      ok = ok && l.elements.size() == 3;
      for (int e : l.elements) {
        ok = ok && e >= 0 && e <= 9999;
        seen.insert(e);
      }
      lists.push_back(l.elements);
    }
    ok = ok && seen.size() == 30 &&
         brute_force_head(lists, s.query_element) == std::optional<int>(oracle_answer(s));
    good += ok;
  }
  const double secs = seconds_since(start);
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu samples, %d well-formed with matching oracle, %.2fs", data.size(),
                good, secs);
  return {data.size() == 1000 && good == 1000 && secs < 2.0, buf};
}

Outcome two_list_rendering() {
  const auto s = make_sample("two-list", two_list_instance());
  const std::vector<std::string> listing{
      "In the list 0, 381 is positioned immediately before 512.",
      "In the list 1, 7123 is positioned immediately before 34.",
      "In the list 0, 512 is positioned immediately before 1021.",
      "In the list 1, 34 is positioned immediately before 6397.",
  };
  const bool ok = s.fact_lines == listing && oracle_answer(s) == 381;
  return {ok, "fact lines " + std::string(s.fact_lines == listing ? "match" : "differ") +
                  ", oracle " + std::to_string(oracle_answer(s))};
}

std::string curve_text(const std::vector<RepetitionPoint> &curve) {
  std::string s;
  char buf[32];
  for (const auto &pt : curve) {
    std::snprintf(buf, sizeof buf, "%s%.2f", s.empty() ? "" : " ", pt.stat.mean());
    s += buf;
  }
  return s;
}

Outcome repetition_curve() {
  const MockChainReader mock;
  const auto three = repetition_sweep(Dataset(generate_dataset(200, 10, 3, 6)), mock, 3).curve;
  const auto five = repetition_sweep(Dataset(generate_dataset(200, 10, 5, 6)), mock, 4).curve;
  bool ok = three.size() == 4 && five.size() == 5;
  for (const auto &pt : three)
    ok = ok && pt.stat.count == 200 && pt.stat.mean() == (pt.step == 0 ? 0.0 : 1.0);
  int first_full = -1;
  for (const auto &pt : five)
    if (first_full < 0 && pt.stat.mean() == 1.0)
      first_full = pt.step;
  ok = ok && first_full == 3;
  return {ok, "n=3: " + curve_text(three) + "; n=5: " + curve_text(five)};
}

Outcome permutation_mechanics() {
  const auto samples = chain_qa_samples(generate_dataset(4, 3, 6, 7));
  PermutationParams p;
  p.k_hats = {1, 5};
  const auto study = permutation_study(samples, MockChainReader(), p);
  const auto &first = study.curves.at(0), &last = study.curves.at(1);
  std::set<std::string> groups;
  for (const auto &r : study.records)
    if (r.condition.k_hat == 1)
      groups.insert(r.condition.sigma->to_string());
  const double gap1 = first.best().stat.mean() - first.worst().stat.mean();
  const double gap5 = last.best().stat.mean() - last.worst().stat.mean();
  const bool ok = study.k == 5 && groups.size() == 120 && first.spectrum.size() == 120 &&
                  gap1 >= 0 && gap5 == 0.0;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu sigma groups, best-worst gap %.2f at k_hat=1, %.2f at k_hat=5",
                groups.size(), gap1, gap5);
  return {ok, buf};
}

Outcome golden_prompts() {
  const std::string dir = CTXREP_GOLDEN_DIR;
  const std::vector<std::pair<std::string, std::vector<ChatMessage>>> cases{
      {"qa_base_k2.golden",
       render_qa_prompt(dune_question(), dune_context(), {PromptTemplate::QaBase, 2, {}})},
      {"synthetic_base_k3.golden",
       render_synthetic_prompt(make_sample("two-list", two_list_instance()), 3, HeaderWording::InTheBelow)},
      {"qa_cot_k2.golden", render_cot_prompts(dune_question(), dune_context(), 2, std::nullopt)},
      {"qa_cot_extract_k2.golden",
       render_cot_prompts(dune_question(), dune_context(), 2, dune_reasoning())},
      {"qa_user_role.golden", render_user_role_prompt(dune_question(), dune_context())},
      {"decompose.golden", render_decompose_prompt(dune_question())},
  };
  int matched = 0;
  std::string misses;
  for (const auto &[name, messages] : cases) {
    const auto expected = read_file(dir + "/" + name);
    if (!expected.empty() && to_golden_text(messages) == expected)
      ++matched;
    else
      misses += " " + name;
  }
  const auto qa = read_file(dir + "/qa_base_k2.golden");
  const auto syn = read_file(dir + "/synthetic_base_k3.golden");
  const bool wording = qa.find("reconsider the question and the documents once more.") !=
                           std::string::npos &&
                       syn.find("2 times more.") != std::string::npos;
  return {matched == 6 && wording, std::to_string(matched) + "/6 templates byte-identical" +
                                       (misses.empty() ? "" : ", mismatched:" + misses)};
}

Outcome scoring() {
  bool fixtures = token_f1("Paris", "Paris") == 1.0 && token_f1("dog", "cat") == 0.0 &&
                  token_f1("new york city", "york") == 0.5 && normalize_answer("The Cat.") == "cat" &&
                  extract_answer("reasoning... Answer: Paris.") == "Paris" &&
                  exact_match_int("The answer is 0381?", 381);
  std::mt19937_64 rng(909);
  const std::string alphabet = "abcdeTHE .,!'-";
  auto random_text = [&] {
    std::string s;
    const auto n = std::uniform_int_distribution<int>(0, 24)(rng);
    for (int i = 0; i < n; ++i)
      s += alphabet[std::uniform_int_distribution<std::size_t>(0, alphabet.size() - 1)(rng)];
    return s;
  };
  int violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto a = random_text(), b = random_text();
    const auto na = normalize_answer(a);
    violations += normalize_answer(na) != na || na != reference_normalize(a) ||
                  token_f1(a, b) != token_f1(b, a);
  }
  return {fixtures && violations == 0, std::string("fixtures ") + (fixtures ? "exact" : "wrong") +
                                           ", " + std::to_string(violations) +
                                           " property violations over 10000 pairs"};
}

Outcome reproducibility() {
  const auto dir = std::filesystem::temp_directory_path() / "ctxrep_acceptance";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const Dataset qa = chain_qa_samples(generate_dataset(30, 8, 4, 11));
  const Dataset syn = generate_dataset(30, 10, 3, 11);
  Condition qc;
  qc.k_hat = 2;
  qc.num_noisy = 5;
  qc.style = RepetitionStyle::shuffle(4);
  qc.seed = 17;
  Condition sc;
  sc.template_kind = PromptTemplate::SyntheticBase;
  sc.k_hat = 3;

  auto full_run = [&](const std::string &name, std::size_t workers) {
    RunOptions run;
    run.out_path = (dir / name).string();
    run.concurrency = workers;
    run_eval(qa, MockChainReader(), qc, run);
    run_eval(syn, MockChainReader(), sc, run);
    std::string text;
    for (const auto &r : read_records(run.out_path))
      text += stable_record_text(r) + "\n";
    return text;
  };
  const auto a = full_run("a.jsonl", 1);
  const auto b = full_run("b.jsonl", 4);
  std::filesystem::remove_all(dir);
  return {!a.empty() && a == b, std::string("two 60-record runs ") + (a == b ? "identical" : "differ") +
                                    " modulo timestamp and latency"};
}

} // namespace

int main() {
  // k_hat above the evaluated range is expected here; keep the output to one line per criterion.
  warning_sink() = [](std::string_view) {};
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"order coverage at k_hat = k", order_coverage},
      {"order witnesses", witnesses},
      {"contiguous contexts at k_hat = 1", contiguity},
      {"synthetic dataset fidelity", synthetic_fidelity},
      {"two-list instance rendering", two_list_rendering},
      {"mock repetition curve", repetition_curve},
      {"permutation study mechanics", permutation_mechanics},
      {"prompt golden files", golden_prompts},
      {"answer scoring", scoring},
      {"run reproducibility", reproducibility},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception &e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str());
  }
  return failed == 0 ? 0 : 1;
}
