#pragma once

// Multi-condition experiments built on the runner: order permutation,
// supporting-block position, repetition count and distractor-list count.
// Every study writes its records through execute(), so all of them are
// resumable and share one record format.

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "ctxrep/context_model.hpp"
#include "ctxrep/error.hpp"
#include "ctxrep/harness/dataset.hpp"
#include "ctxrep/harness/records.hpp"
#include "ctxrep/harness/runner.hpp"
#include "ctxrep/model_client.hpp"
#include "ctxrep/synthetic_chains.hpp"

namespace ctxrep {

namespace detail {
inline std::string sample_id_of(const QaSample &s) { return s.id; }
inline std::string sample_id_of(const SyntheticSample &s) { return s.sample_id; }

// One job per (condition, sample), conditions outermost.
template <class Sample>
std::vector<Job> grid_jobs(const std::vector<Sample> &samples,
                           const std::vector<Condition> &conditions, const ChatModel &model,
                           const EvalOptions &eval, const std::string &study,
                           std::optional<int> list_count = std::nullopt) {
  std::vector<Job> jobs;
  jobs.reserve(samples.size() * conditions.size());
  for (const auto &c : conditions)
    for (const auto &s : samples) {
      const Sample *sp = &s;
      const Condition *cp = &c;
      jobs.push_back({job_key(study, sample_id_of(s), c), [sp, cp, &model, &eval, study, list_count] {
                        auto r = evaluate(*sp, *cp, model, eval);
                        r.study = study;
                        if (list_count)
                          r.list_count = list_count;
                        return r;
                      }});
    }
  return jobs;
}
} // namespace detail

// ---------------------------------------------------------------------------
// Permutation study

enum class StudyScorer { Auto, LogProb, F1 };

inline std::string_view to_string(StudyScorer s) {
  switch (s) {
  case StudyScorer::Auto:
    return "auto";
  case StudyScorer::LogProb:
    return "logprob";
  case StudyScorer::F1:
    return "f1";
  }
  return "auto";
}

inline StudyScorer study_scorer_from_string(std::string_view s) {
  for (auto v : {StudyScorer::Auto, StudyScorer::LogProb, StudyScorer::F1})
    if (to_string(v) == s)
      return v;
  throw ConfigError("scorer must be auto, logprob or f1, got '" + std::string(s) + "'");
}

struct PermutationParams {
  int num_noisy = 0;
  std::vector<int> k_hats{1};
  StudyScorer scorer = StudyScorer::Auto;
  std::size_t max_k = 5;
  std::uint64_t seed = 0;
  RepetitionStyle style;
};

struct OrderRow {
  OrderPermutation sigma;
  Stat stat;
  std::size_t failures = 0;
};

struct PermutationCurve {
  int k_hat = 1;
  // Worst order first, best order last.
  std::vector<OrderRow> spectrum;
  double mean = 0.0; // over all σ

  const OrderRow &worst() const { return spectrum.front(); }
  const OrderRow &best() const { return spectrum.back(); }
};

struct PermutationStudy {
  std::size_t k = 0;
  // Scorer that produced the ordering: "logprob" or "f1".
  std::string scorer;
  std::vector<PermutationCurve> curves;
  std::vector<RunRecord> records;
};

// Evaluates every sample under every σ of its k supporting documents and
// every k̂. The noisy documents of a sample are drawn once under the seed and
// laid out identically for every σ, so the order is the only varying factor.
// Orders are ranked by mean log-probability of the gold answer when the model
// can score targets (or the F1 scorer was not requested), by mean F1
// otherwise; both scores are recorded whenever available.
inline PermutationStudy permutation_study(const std::vector<QaSample> &samples,
                                          const ChatModel &model, const PermutationParams &p,
                                          const RunOptions &run = {},
                                          const EvalOptions &eval = {}) {
  require_generate(model);
  if (samples.empty())
    throw PreconditionError("permutation study needs at least one sample");
  if (p.k_hats.empty())
    throw ConfigError("permutation study needs at least one k_hat");
  const std::size_t k = samples.front().hop_count();
  for (const auto &s : samples)
    if (s.hop_count() != k)
      throw DatasetError("permutation study needs samples with one hop count; '" + s.id +
                         "' has " + std::to_string(s.hop_count()) + ", expected " +
                         std::to_string(k));
  if (k > p.max_k)
    throw CardinalityGuard(std::to_string(k) + "-hop study exceeds the limit of " +
                           std::to_string(p.max_k) + " supporting documents");
  if (p.num_noisy < 0)
    throw ConfigError("num_noisy must be >= 0");

  const bool can_score = model.handle().has(Capability::ScoreTarget);
  if (p.scorer == StudyScorer::LogProb && !can_score)
    throw CapabilityError(model.handle().name + " does not expose log-probabilities");
  const bool use_logprob = p.scorer != StudyScorer::F1 && can_score;

  PermutationStudy study;
  study.k = k;
  study.scorer = use_logprob ? "logprob" : "f1";

  const auto orders = enumerate_orders(k);
  std::vector<Condition> conditions;
  for (int k_hat : p.k_hats)
    for (const auto &sigma : orders) {
      Condition c;
      c.template_kind = PromptTemplate::QaBase;
      c.k_hat = k_hat;
      c.style = p.style;
      c.sigma = sigma;
      c.num_noisy = p.num_noisy;
      c.seed = p.seed;
      validate_condition(c, false);
      conditions.push_back(std::move(c));
    }

  EvalOptions e = eval;
  e.score_logprob = can_score;
  const auto jobs = detail::grid_jobs(samples, conditions, model, e, "permutation");
  study.records = execute(jobs, run);

  const std::size_t n = samples.size();
  for (std::size_t ki = 0; ki < p.k_hats.size(); ++ki) {
    PermutationCurve curve;
    curve.k_hat = p.k_hats[ki];
    Stat overall;
    for (std::size_t oi = 0; oi < orders.size(); ++oi) {
      OrderRow row{orders[oi], {}, 0};
      for (std::size_t si = 0; si < n; ++si) {
        const auto &r = study.records[(ki * orders.size() + oi) * n + si];
        const auto value = use_logprob ? r.logprob_score : r.f1;
        if (r.failed() || !value) {
          ++row.failures;
          continue;
        }
        detail::add(row.stat, *value);
      }
      detail::add(overall, row.stat.mean());
      curve.spectrum.push_back(std::move(row));
    }
    // Among equal means the lexicographically smallest σ ranks highest.
    std::sort(curve.spectrum.begin(), curve.spectrum.end(),
              [](const OrderRow &a, const OrderRow &b) {
                if (a.stat.mean() != b.stat.mean())
                  return a.stat.mean() < b.stat.mean();
                return b.sigma < a.sigma;
              });
    curve.mean = overall.mean();
    study.curves.push_back(std::move(curve));
  }
  return study;
}

// ---------------------------------------------------------------------------
// Position sweep

inline std::vector<int> default_offsets() {
  std::vector<int> v;
  for (int o = 0; o <= 18; o += 2)
    v.push_back(o);
  return v;
}

struct PositionParams {
  std::vector<int> offsets = default_offsets();
  std::vector<int> k_hats{1, 2};
  // Slots per context; max(offsets) + k for each sample when absent.
  std::optional<int> total_slots;
  // Order inside the supporting block; gold order when absent.
  std::optional<OrderPermutation> block_order;
  std::uint64_t seed = 0;
};

struct PositionCell {
  int offset = 0;
  int k_hat = 1;
  Stat stat;
  std::size_t failures = 0;
};

struct PositionSweep {
  std::vector<PositionCell> cells; // offsets outermost, then k_hats
  std::vector<RunRecord> records;
};

inline PositionSweep position_sweep(const std::vector<QaSample> &samples, const ChatModel &model,
                                    const PositionParams &p, const RunOptions &run = {},
                                    const EvalOptions &eval = {}) {
  require_generate(model);
  if (p.offsets.empty() || p.k_hats.empty())
    throw ConfigError("position sweep needs at least one offset and one k_hat");
  const int max_offset = *std::max_element(p.offsets.begin(), p.offsets.end());
  for (int o : p.offsets)
    if (o < 0)
      throw ConfigError("offset " + std::to_string(o) + " is negative");
  for (const auto &s : samples) {
    const int k = static_cast<int>(s.hop_count());
    const int total = p.total_slots.value_or(max_offset + k);
    if (max_offset > total - k)
      throw ConfigError("offset " + std::to_string(max_offset) + " outside [0, " +
                        std::to_string(total - k) + "] for sample '" + s.id + "' (" +
                        std::to_string(k) + " supporting documents in " +
                        std::to_string(total) + " slots)");
  }

  // Jobs per (offset, k̂, sample); total_slots may differ per sample.
  std::vector<Condition> conditions; // parallel to jobs
  std::vector<Job> jobs;
  std::vector<const QaSample *> job_samples;
  for (int offset : p.offsets)
    for (int k_hat : p.k_hats)
      for (const auto &s : samples) {
        Condition c;
        c.template_kind = PromptTemplate::QaBase;
        c.k_hat = k_hat;
        c.sigma = p.block_order;
        c.offset = offset;
        c.total_slots = p.total_slots.value_or(max_offset + static_cast<int>(s.hop_count()));
        c.seed = p.seed;
        validate_condition(c, false);
        conditions.push_back(std::move(c));
        job_samples.push_back(&s);
      }
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    const QaSample *sp = job_samples[i];
    const Condition *cp = &conditions[i];
    jobs.push_back({job_key("position", sp->id, *cp), [sp, cp, &model, &eval] {
                      auto r = evaluate(*sp, *cp, model, eval);
                      r.study = "position";
                      return r;
                    }});
  }

  PositionSweep sweep;
  sweep.records = execute(jobs, run);
  std::size_t i = 0;
  for (int offset : p.offsets)
    for (int k_hat : p.k_hats) {
      PositionCell cell{offset, k_hat, {}, 0};
      for (std::size_t s = 0; s < samples.size(); ++s, ++i) {
        const auto &r = sweep.records[i];
        if (r.failed() || !r.score)
          ++cell.failures;
        else
          detail::add(cell.stat, *r.score);
      }
      sweep.cells.push_back(cell);
    }
  return sweep;
}

// ---------------------------------------------------------------------------
// Repetition sweep

struct RepetitionPoint {
  int step = 0; // k_hat - 1
  int k_hat = 1;
  Stat stat;
  std::size_t failures = 0;
};

struct RepetitionSweep {
  std::vector<RepetitionPoint> curve;
  std::vector<RunRecord> records;
};

namespace detail {
inline std::vector<RepetitionPoint> repetition_points(const std::vector<RunRecord> &records,
                                                      int max_repetitions, std::size_t n) {
  std::vector<RepetitionPoint> curve;
  std::size_t i = 0;
  for (int step = 0; step <= max_repetitions; ++step) {
    RepetitionPoint pt{step, step + 1, {}, 0};
    for (std::size_t s = 0; s < n; ++s, ++i) {
      const auto &r = records[i];
      if (r.failed() || !r.score)
        ++pt.failures;
      else
        add(pt.stat, *r.score);
    }
    curve.push_back(pt);
  }
  return curve;
}

inline std::vector<Condition> repetition_conditions(const Condition &base, int max_repetitions) {
  std::vector<Condition> out;
  for (int step = 0; step <= max_repetitions; ++step) {
    Condition c = base;
    c.k_hat = step + 1;
    out.push_back(std::move(c));
  }
  return out;
}
} // namespace detail

// Evaluates k̂ = 1..max_repetitions + 1 under `base` (whose k_hat is ignored).
inline RepetitionSweep repetition_sweep(const Dataset &dataset, const ChatModel &model,
                                        int max_repetitions, const Condition &base,
                                        const RunOptions &run = {}, const EvalOptions &eval = {}) {
  require_generate(model);
  if (max_repetitions < 0)
    throw PreconditionError("max_repetitions must be >= 0");
  const auto conditions = detail::repetition_conditions(base, max_repetitions);
  for (const auto &c : conditions)
    validate_condition(c, is_synthetic(dataset));
  const auto jobs = std::visit(
      [&](const auto &samples) {
        return detail::grid_jobs(samples, conditions, model, eval, "repetition");
      },
      dataset);
  RepetitionSweep sweep;
  sweep.records = execute(jobs, run);
  sweep.curve = detail::repetition_points(sweep.records, max_repetitions, dataset_size(dataset));
  return sweep;
}

// Synthetic datasets use the synthetic template, QA datasets the QA template.
inline Condition default_condition(const Dataset &dataset) {
  Condition c;
  c.template_kind = is_synthetic(dataset) ? PromptTemplate::SyntheticBase : PromptTemplate::QaBase;
  return c;
}

inline RepetitionSweep repetition_sweep(const Dataset &dataset, const ChatModel &model,
                                        int max_repetitions, const RunOptions &run = {}) {
  return repetition_sweep(dataset, model, max_repetitions, default_condition(dataset), run);
}

// ---------------------------------------------------------------------------
// Noise sweep

struct NoiseParams {
  std::vector<int> list_counts{6, 3, 1};
  std::size_t elements_per_list = 3;
  int max_repetitions = 3;
  std::size_t samples_per_cell = 100;
  std::uint64_t seed = 0;
};

struct NoiseCell {
  int list_count = 0;
  int step = 0;
  Stat stat;
  std::size_t failures = 0;
};

struct NoiseSweep {
  std::vector<NoiseCell> cells; // list counts outermost, then steps
  std::vector<RunRecord> records;
};

// Generates a synthetic dataset per list count and sweeps repetitions on it.
inline NoiseSweep noise_sweep(const ChatModel &model, const NoiseParams &p,
                              const RunOptions &run = {}, const EvalOptions &eval = {}) {
  require_generate(model);
  if (p.list_counts.empty())
    throw PreconditionError("noise sweep needs at least one list count");
  if (p.max_repetitions < 0)
    throw PreconditionError("max_repetitions must be >= 0");
  for (int l : p.list_counts)
    if (l < 1)
      throw ConfigError("list counts must be >= 1");
  NoiseSweep sweep;
  if (p.samples_per_cell == 0)
    return sweep;

  Condition base;
  base.template_kind = PromptTemplate::SyntheticBase;
  const auto conditions = detail::repetition_conditions(base, p.max_repetitions);
  std::vector<std::vector<SyntheticSample>> datasets;
  for (int l : p.list_counts)
    datasets.push_back(generate_dataset(
        SyntheticParams{p.samples_per_cell, static_cast<std::size_t>(l), p.elements_per_list, p.seed}));

  std::vector<Job> jobs;
  for (std::size_t li = 0; li < datasets.size(); ++li) {
    auto part = detail::grid_jobs(datasets[li], conditions, model, eval, "noise", p.list_counts[li]);
    std::move(part.begin(), part.end(), std::back_inserter(jobs));
  }
  sweep.records = execute(jobs, run);

  const std::size_t per_list = conditions.size() * p.samples_per_cell;
  for (std::size_t li = 0; li < datasets.size(); ++li) {
    const std::vector<RunRecord> part(
        sweep.records.begin() + static_cast<std::ptrdiff_t>(li * per_list),
        sweep.records.begin() + static_cast<std::ptrdiff_t>((li + 1) * per_list));
    for (const auto &pt : detail::repetition_points(part, p.max_repetitions, p.samples_per_cell))
      sweep.cells.push_back({p.list_counts[li], pt.step, pt.stat, pt.failures});
  }
  return sweep;
}

} // namespace ctxrep
