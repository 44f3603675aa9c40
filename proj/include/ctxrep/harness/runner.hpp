#pragma once

// Condition rendering, single-sample evaluation and the concurrent,
// resumable record writer behind every experiment.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <span>
#include <thread>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include "ctxrep/context_model.hpp"
#include "ctxrep/error.hpp"
#include "ctxrep/harness/dataset.hpp"
#include "ctxrep/harness/records.hpp"
#include "ctxrep/model_client.hpp"
#include "ctxrep/prompt_builder.hpp"
#include "ctxrep/random.hpp"
#include "ctxrep/scoring.hpp"
#include "ctxrep/synthetic_chains.hpp"

namespace ctxrep {

// ---------------------------------------------------------------------------
// Condition checks and context construction

inline void validate_condition(const Condition &c, bool synthetic) {
  if (c.k_hat < 1)
    throw InvalidRepetition("k_hat must be >= 1, got " + std::to_string(c.k_hat));
  if (synthetic) {
    if (c.template_kind != PromptTemplate::SyntheticBase)
      throw ConfigError("synthetic datasets use the synthetic_base template, not " +
                        std::string(to_string(c.template_kind)));
    if (c.sigma || c.offset || c.num_noisy)
      throw ConfigError("order, offset and noise settings apply to QA datasets only");
    return;
  }
  switch (c.template_kind) {
  case PromptTemplate::QaBase:
  case PromptTemplate::QaCot:
    break;
  case PromptTemplate::QaUserRole:
    if (c.k_hat != 2)
      throw ConfigError("qa_user_role repeats the context exactly once; use k_hat 2");
    break;
  default:
    throw ConfigError("template " + std::string(to_string(c.template_kind)) +
                      " cannot be evaluated on a QA dataset");
  }
  if (c.offset.has_value() != c.total_slots.has_value())
    throw ConfigError("offset and total_slots must be given together");
  if (c.offset && *c.offset < 0)
    throw ConfigError("offset must be >= 0");
  if (c.num_noisy && *c.num_noisy < 0)
    throw ConfigError("num_noisy must be >= 0");
}

// `count` noisy documents drawn without replacement under (seed, sample id),
// returned in their dataset order. Throws DatasetError when the sample has
// fewer.
inline std::vector<Document> select_noise(const QaSample &s, std::size_t count,
                                          std::uint64_t seed) {
  if (count > s.noisy.size())
    throw DatasetError("sample '" + s.id + "' has " + std::to_string(s.noisy.size()) +
                       " noisy documents, " + std::to_string(count) + " needed");
  if (count == s.noisy.size())
    return s.noisy;
  std::vector<std::size_t> idx(s.noisy.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    idx[i] = i;
  Rng rng(derive_seed(seed, "noise/" + s.id));
  fisher_yates(std::span<std::size_t>(idx), rng);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  std::vector<Document> out;
  for (auto i : idx)
    out.push_back(s.noisy[i]);
  return out;
}

// The context a condition presents for a QA sample.
//
// Position conditions place the supporting block (gold order, or σ order when
// given) at slots [offset, offset + k) of total_slots and fill every other
// slot with noise. Otherwise the supporting documents follow σ (gold when
// absent) and the noisy documents are scattered across the gaps with a layout
// that depends only on (seed, sample id), so changing σ changes nothing else.
inline ContextSpec condition_context(const QaSample &s, const Condition &c) {
  const std::size_t k = s.hop_count();
  const auto sigma = c.sigma ? *c.sigma : OrderPermutation::identity(k);
  if (sigma.size() != k)
    throw DatasetError("sample '" + s.id + "' has " + std::to_string(k) +
                       " supporting documents; order " + sigma.to_string() + " does not fit");

  if (c.offset) {
    const auto total = static_cast<std::size_t>(*c.total_slots);
    const auto offset = static_cast<std::size_t>(*c.offset);
    if (total < k || offset > total - k)
      throw ConfigError("offset " + std::to_string(offset) + " outside [0, " +
                        std::to_string(static_cast<long long>(total) - static_cast<long long>(k)) +
                        "] for a " + std::to_string(k) + "-hop sample in " +
                        std::to_string(total) + " slots");
    const auto noise = select_noise(s, total - k, c.seed);
    const auto block = apply_order(detail::sorted_by_hop(s.supporting), sigma);
    ContextSpec ctx;
    ctx.documents.insert(ctx.documents.end(), noise.begin(),
                         noise.begin() + static_cast<std::ptrdiff_t>(offset));
    ctx.documents.insert(ctx.documents.end(), block.begin(), block.end());
    ctx.documents.insert(ctx.documents.end(), noise.begin() + static_cast<std::ptrdiff_t>(offset),
                         noise.end());
    return ctx;
  }

  const auto noise = c.num_noisy ? select_noise(s, static_cast<std::size_t>(*c.num_noisy), c.seed)
                                 : s.noisy;
  return build_context(s.supporting, noise, sigma, derive_seed(c.seed, "layout/" + s.id));
}

// The prompt a condition produces for a sample. For the two-phase CoT
// template this is the reasoning prompt; the extraction prompt embeds the
// model's reasoning and is not reproducible from the condition alone.
inline std::vector<ChatMessage> render_condition(const QaSample &s, const Condition &c) {
  validate_condition(c, false);
  const auto ctx = condition_context(s, c);
  switch (c.template_kind) {
  case PromptTemplate::QaBase:
    return render_qa_prompt(s.question, ctx, PromptPlan{c.template_kind, c.k_hat, c.style});
  case PromptTemplate::QaCot:
    return render_cot_prompts(s.question, ctx, c.k_hat, std::nullopt, c.style);
  case PromptTemplate::QaUserRole:
    return render_user_role_prompt(s.question, ctx);
  default:
    break;
  }
  throw ConfigError("unsupported template for QA samples");
}

inline std::vector<ChatMessage> render_condition(const SyntheticSample &s, const Condition &c) {
  validate_condition(c, true);
  return render_synthetic_prompt(s, c.k_hat);
}

// ---------------------------------------------------------------------------
// Single-sample evaluation

struct EvalOptions {
  GenerationOptions generation;
  // Token budget of the reasoning phase of the CoT template.
  int cot_max_tokens = 256;
  // Also score the first gold answer with score_target (needs the capability).
  bool score_logprob = false;
};

namespace detail {
// Errors that invalidate the whole run rather than one sample.
inline bool is_run_fatal(const std::exception &e) {
  return dynamic_cast<const ConfigError *>(&e) || dynamic_cast<const CapabilityError *>(&e);
}

template <class Body> void guarded(RunRecord &r, Body &&body) {
  const auto start = std::chrono::steady_clock::now();
  try {
    body();
  } catch (const std::exception &e) {
    if (is_run_fatal(e))
      throw;
    r.error = e.what();
    r.score.reset();
    r.f1.reset();
    r.exact_match.reset();
    r.logprob_score.reset();
  }
  r.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                     std::chrono::steady_clock::now() - start)
                     .count();
  r.timestamp = utc_timestamp();
}
} // namespace detail

inline RunRecord evaluate(const QaSample &s, const Condition &c, const ChatModel &model,
                          const EvalOptions &opt = {}) {
  validate_condition(c, false);
  RunRecord r;
  r.task = "qa";
  r.sample_id = s.id;
  r.condition = c;
  r.model_name = model.handle().name;
  r.hop_count = static_cast<int>(s.hop_count());
  r.type = s.type;
  detail::guarded(r, [&] {
    const auto ctx = condition_context(s, c);
    std::vector<ChatMessage> messages;
    if (c.template_kind == PromptTemplate::QaCot) {
      messages = render_cot_prompts(s.question, ctx, c.k_hat, std::nullopt, c.style);
      r.prompt_hash = prompt_hash(messages);
      const auto reasoning =
          generate(model, messages, opt.cot_max_tokens, opt.generation.temperature);
      messages = render_cot_prompts(s.question, ctx, c.k_hat, reasoning.text, c.style);
    } else {
      messages = render_condition(s, c);
      r.prompt_hash = prompt_hash(messages);
    }
    const auto out =
        generate(model, messages, opt.generation.max_tokens, opt.generation.temperature);
    const auto scored = score_qa(out.text, s.answers);
    r.raw_output = out.text;
    r.extracted = scored.extracted;
    r.f1 = scored.f1;
    r.exact_match = scored.exact_match;
    r.score = scored.f1;
    if (opt.score_logprob && c.template_kind != PromptTemplate::QaCot)
      r.logprob_score = score_target(model, render_condition(s, c), s.answers.front());
  });
  return r;
}

inline RunRecord evaluate(const SyntheticSample &s, const Condition &c, const ChatModel &model,
                          const EvalOptions &opt = {}) {
  validate_condition(c, true);
  RunRecord r;
  r.task = "synthetic";
  r.sample_id = s.sample_id;
  r.condition = c;
  r.model_name = model.handle().name;
  r.hop_count = static_cast<int>(s.elements_per_list()) - 1;
  r.list_count = static_cast<int>(s.lists.size());
  detail::guarded(r, [&] {
    const auto messages = render_condition(s, c);
    r.prompt_hash = prompt_hash(messages);
    const auto out =
        generate(model, messages, opt.generation.max_tokens, opt.generation.temperature);
    const auto scored = score_int(out.text, s.oracle_answer);
    r.raw_output = out.text;
    r.extracted = scored.extracted;
    r.exact_match = scored.exact_match;
    r.score = scored.exact_match ? 1.0 : 0.0;
    if (opt.score_logprob)
      r.logprob_score = score_target(model, messages, std::to_string(s.oracle_answer));
  });
  return r;
}

// ---------------------------------------------------------------------------
// Execution

struct Job {
  std::string key; // identifies the record for resumption
  std::function<RunRecord()> run;
};

inline std::string job_key(const std::string &study, const std::string &sample_id,
                           const Condition &c) {
  return study + "|" + sample_id + "|" + condition_key(c);
}

inline std::string job_key(const RunRecord &r) {
  return job_key(r.study, r.sample_id, r.condition);
}

struct RunOptions {
  std::size_t concurrency = 1;
  // JSONL output; empty keeps records in memory only.
  std::string out_path;
  // Reuse records already present in out_path instead of recomputing them.
  bool resume = true;
};

// Runs jobs on a worker pool and returns their records in job order.
//
// Records are appended to out_path by a single writer in job order, each line
// flushed as soon as every earlier job has finished, so the file content does
// not depend on the worker count. With resume, a truncated final line left by
// an interrupted run is dropped and jobs whose key is already recorded are not
// run again.
inline std::vector<RunRecord> execute(const std::vector<Job> &jobs, const RunOptions &options) {
  std::unordered_map<std::string, RunRecord> done;
  std::ofstream out;
  if (!options.out_path.empty()) {
    const std::filesystem::path path(options.out_path);
    if (options.resume && std::filesystem::exists(path)) {
      const auto keep = valid_records_prefix(options.out_path);
      if (keep != std::filesystem::file_size(path))
        std::filesystem::resize_file(path, keep);
      for (auto &r : read_records(options.out_path))
        done.emplace(job_key(r), std::move(r));
    }
    if (path.has_parent_path())
      std::filesystem::create_directories(path.parent_path());
    out.open(path, options.resume ? (std::ios::binary | std::ios::app)
                                  : (std::ios::binary | std::ios::trunc));
    if (!out)
      throw ConfigError("cannot open '" + options.out_path + "' for writing");
  }

  std::vector<std::optional<RunRecord>> results(jobs.size());
  std::vector<bool> fresh(jobs.size(), false);
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto it = done.find(jobs[i].key);
    if (it != done.end())
      results[i] = it->second;
    else
      pending.push_back(i);
  }

  std::mutex mu;
  std::size_t next_to_write = 0;
  auto flush_ready = [&] {
    while (next_to_write < jobs.size() && results[next_to_write]) {
      if (out.is_open() && fresh[next_to_write])
        out << to_json(*results[next_to_write]).dump() << '\n' << std::flush;
      ++next_to_write;
    }
  };

  std::atomic<std::size_t> cursor{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      if (stop)
        return;
      const auto n = cursor.fetch_add(1);
      if (n >= pending.size())
        return;
      const auto i = pending[n];
      try {
        auto record = jobs[i].run();
        std::lock_guard lock(mu);
        results[i] = std::move(record);
        fresh[i] = true;
        flush_ready();
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure)
          failure = std::current_exception();
        stop = true;
        return;
      }
    }
  };

  {
    std::lock_guard lock(mu);
    flush_ready();
  }
  const std::size_t workers = std::clamp<std::size_t>(options.concurrency, 1, 256);
  if (workers == 1 || pending.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, pending.size()); ++w)
      pool.emplace_back(worker);
    for (auto &t : pool)
      t.join();
  }
  if (failure)
    std::rethrow_exception(failure);

  std::vector<RunRecord> records;
  records.reserve(jobs.size());
  for (auto &r : results)
    records.push_back(std::move(*r));
  return records;
}

// ---------------------------------------------------------------------------
// Summaries

struct Stat {
  std::size_t count = 0;
  double sum = 0.0;
  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
};

namespace detail {
inline void add(Stat &s, double v) {
  ++s.count;
  s.sum += v;
}
} // namespace detail

struct Summary {
  std::string metric = "f1"; // "f1" for QA, "accuracy" for synthetic
  std::size_t count = 0;
  std::size_t failures = 0;
  double mean = 0.0; // over records without an error
  std::map<int, Stat> by_hop;
  std::map<std::string, Stat> by_type;
};

inline Summary summarize(const std::vector<RunRecord> &records) {
  Summary s;
  Stat all;
  for (const auto &r : records) {
    ++s.count;
    if (r.task == "synthetic")
      s.metric = "accuracy";
    if (r.failed() || !r.score) {
      ++s.failures;
      continue;
    }
    detail::add(all, *r.score);
    detail::add(s.by_hop[r.hop_count], *r.score);
    if (r.type)
      detail::add(s.by_type[*r.type], *r.score);
  }
  s.mean = all.mean();
  return s;
}

struct RunResult {
  std::vector<RunRecord> records;
  Summary summary;
};

inline void require_generate(const ChatModel &model) {
  if (!model.handle().has(Capability::Generate))
    throw CapabilityError(model.handle().name + " cannot generate");
}

// One record per sample under `condition`.
inline RunResult run_eval(const Dataset &dataset, const ChatModel &model,
                          const Condition &condition, const RunOptions &run = {},
                          const EvalOptions &eval = {}, const std::string &study = "run") {
  require_generate(model);
  validate_condition(condition, is_synthetic(dataset));
  if (eval.score_logprob && !model.handle().has(Capability::ScoreTarget))
    throw CapabilityError(model.handle().name + " does not expose log-probabilities");
  std::vector<Job> jobs;
  std::visit(
      [&](const auto &samples) {
        for (const auto &s : samples) {
          const auto *sp = &s;
          std::string id;
          if constexpr (std::is_same_v<std::decay_t<decltype(s)>, QaSample>)
            id = s.id;
          else
            id = s.sample_id;
          jobs.push_back({job_key(study, id, condition), [sp, &condition, &model, &eval, study] {
                            auto r = evaluate(*sp, condition, model, eval);
                            r.study = study;
                            return r;
                          }});
        }
      },
      dataset);
  RunResult result;
  result.records = execute(jobs, run);
  result.summary = summarize(result.records);
  return result;
}

inline RunResult run_eval(const Dataset &dataset, const ChatModel &model, const PromptPlan &plan,
                          const RunOptions &run = {}) {
  plan.validate();
  Condition c;
  c.template_kind = plan.template_kind;
  c.k_hat = plan.k_hat;
  c.style = plan.style;
  return run_eval(dataset, model, c, run);
}

} // namespace ctxrep
