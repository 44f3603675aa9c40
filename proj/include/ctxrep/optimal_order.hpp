#pragma once

// Sample-mean estimate of the order of supporting documents a model handles
// best: every σ is scored by rebuilding each sample's context with its
// supporting slots filled in σ order (noise left in place) and averaging the
// model's score over samples.

#include <string>
#include <utility>
#include <vector>

#include "ctxrep/context_model.hpp"
#include "ctxrep/error.hpp"
#include "ctxrep/model_client.hpp"
#include "ctxrep/prompt_builder.hpp"
#include "ctxrep/scoring.hpp"

namespace ctxrep {

struct OrderSample {
  std::string query;
  ContextSpec context;
  std::string answer;
};

enum class OrderScorer { LogProb, F1 };

struct OrderScore {
  OrderPermutation sigma;
  double mean = 0.0;
};

// Mean score per σ, σ in lexicographic order.
inline std::vector<OrderScore> score_orders(const std::vector<OrderSample> &samples,
                                            const ChatModel &model, OrderScorer scorer,
                                            const GenerationOptions &options = {}) {
  if (samples.empty())
    throw PreconditionError("score_orders: no samples");
  const std::size_t k = samples.front().context.k();
  for (const auto &s : samples)
    if (s.context.k() != k)
      throw DatasetError("all samples must have the same number of supporting documents");
  if (scorer == OrderScorer::LogProb && !model.handle().has(Capability::ScoreTarget))
    throw CapabilityError(model.handle().name + " cannot score targets; use the F1 scorer");

  const PromptPlan plan{PromptTemplate::QaBase, 1, {}};
  std::vector<OrderScore> out;
  for (auto &sigma : enumerate_orders(k)) {
    double total = 0.0;
    for (const auto &s : samples) {
      const auto messages = render_qa_prompt(s.query, reorder_supporting(s.context, sigma), plan);
      if (scorer == OrderScorer::LogProb) {
        total += score_target(model, messages, s.answer);
      } else {
        const auto r = generate(model, messages, options.max_tokens, options.temperature);
        total += token_f1(extract_answer(r.text), s.answer);
      }
    }
    out.push_back({std::move(sigma), total / static_cast<double>(samples.size())});
  }
  return out;
}

// argmax over σ; ties go to the lexicographically smallest σ.
inline OrderPermutation estimate_optimal_order(const std::vector<OrderSample> &samples,
                                               const ChatModel &model, OrderScorer scorer,
                                               const GenerationOptions &options = {}) {
  const auto scores = score_orders(samples, model, scorer, options);
  const OrderScore *best = &scores.front();
  for (const auto &s : scores)
    if (s.mean > best->mean)
      best = &s;
  return best->sigma;
}

} // namespace ctxrep
