// ctxrep: command-line front end for the context-repetition experiments.
//
// Exit status: 0 success, 1 configuration / input error, 2 run finished but
// some records carry an error (or a replay found mismatching prompts).

#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctxrep/ctxrep.hpp"

namespace {

using namespace ctxrep;

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitPartial = 2;

// JSON config files: top-level keys set global options, nested objects set
// the options of the subcommand they are named after. Underscores in keys are
// read as dashes, so "k_hat" and "k-hat" both reach --k-hat.
class JsonConfig : public CLI::Config {
public:
  std::string to_config(const CLI::App *, bool, bool, std::string) const override {
    throw CLI::ConfigError("writing JSON config files is not supported");
  }

  std::vector<CLI::ConfigItem> from_config(std::istream &in) const override {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
      throw CLI::ConfigError(std::string("malformed JSON config: ") + e.what());
    }
    if (!j.is_object())
      throw CLI::ConfigError("JSON config must be an object");
    std::vector<CLI::ConfigItem> items;
    walk(j, {}, items);
    return items;
  }

private:
  static std::string scalar(const nlohmann::json &v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
  }

  static void walk(const nlohmann::json &obj, const std::vector<std::string> &parents,
                   std::vector<CLI::ConfigItem> &items) {
    for (const auto &[key, value] : obj.items()) {
      std::string name = key;
      for (auto &c : name)
        if (c == '_')
          c = '-';
      if (value.is_object()) {
        auto sub = parents;
        sub.push_back(name);
        walk(value, sub, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = name;
      if (value.is_array())
        for (const auto &v : value)
          item.inputs.push_back(scalar(v));
      else
        item.inputs.push_back(scalar(value));
      items.push_back(std::move(item));
    }
  }
};

struct Globals {
  std::string config;
  std::string model = "mock";
  std::string endpoint;
  std::string api_key_env;
  std::uint64_t seed = 0;
  std::size_t concurrency = 1;
  std::string out;
  std::string log_io;
  bool logprobs = false;
  bool fresh = false;
  int max_tokens = 64;
  double temperature = 0.0;
};

// Owns the backend and, with --log-io on the mock, the logging wrapper.
struct ModelStack {
  std::unique_ptr<ChatModel> base;
  std::unique_ptr<LoggedModel> logged;
  const ChatModel &get() const { return logged ? *logged : *base; }
};

ModelStack open_model(const Globals &g) {
  ModelStack m;
  if (g.model == "mock") {
    m.base = std::make_unique<MockChainReader>();
    if (!g.log_io.empty())
      m.logged = std::make_unique<LoggedModel>(*m.base, g.log_io);
    return m;
  }
  if (g.endpoint.empty())
    throw ConfigError("--model " + g.model + " needs --endpoint (or use --model mock)");
  HttpBackend b;
  b.endpoint = g.endpoint;
  b.model_id = g.model;
  b.auth_env = g.api_key_env;
  b.logprobs = g.logprobs;
  b.audit_log = g.log_io;
  m.base = make_model(ModelHandle::http(g.model, b));
  return m;
}

RunOptions run_options(const Globals &g) {
  RunOptions r;
  r.concurrency = g.concurrency;
  r.out_path = g.out;
  r.resume = !g.fresh;
  return r;
}

EvalOptions eval_options(const Globals &g) {
  EvalOptions e;
  e.generation.max_tokens = g.max_tokens;
  e.generation.temperature = g.temperature;
  return e;
}

std::vector<QaSample> qa_samples(const Dataset &d) {
  if (const auto *syn = std::get_if<std::vector<SyntheticSample>>(&d))
    return chain_qa_samples(*syn);
  return std::get<std::vector<QaSample>>(d);
}

int exit_for(const std::vector<RunRecord> &records) {
  for (const auto &r : records)
    if (r.failed())
      return kExitPartial;
  return kExitOk;
}

void write_csv_file(const std::string &path, const ReportTable &t) {
  if (path.empty())
    return;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw ConfigError("cannot open '" + path + "' for writing");
  write_csv(out, t);
}

std::string fmt(double v) { return detail::fmt4(v); }

// Fields shared by the subcommands that build conditions.
struct ConditionFlags {
  std::string template_name = "auto";
  int k_hat = 1;
  std::string rep_style = "verbatim";
  std::string sigma;
  std::optional<int> num_noisy;

  Condition build(const Dataset &d, std::uint64_t seed) const {
    Condition c = default_condition(d);
    if (template_name != "auto")
      c.template_kind = prompt_template_from_string(template_name);
    c.k_hat = k_hat;
    c.style = RepetitionStyle::parse(rep_style);
    if (!sigma.empty())
      c.sigma = OrderPermutation::parse(sigma);
    c.num_noisy = num_noisy;
    c.seed = seed;
    return c;
  }
};

void add_condition_flags(CLI::App *cmd, ConditionFlags &f, bool with_k_hat) {
  cmd->add_option("--template", f.template_name,
                  "qa_base, qa_cot, qa_user_role, synthetic_base or auto")
      ->capture_default_str();
  if (with_k_hat)
    cmd->add_option("--k-hat", f.k_hat, "Context repetitions (1 = no repetition)")
        ->capture_default_str();
  cmd->add_option("--rep-style", f.rep_style, "verbatim, reverse or shuffle:<seed>")
      ->capture_default_str();
  if (with_k_hat) {
    cmd->add_option("--sigma", f.sigma, "Supporting-document order, e.g. 2,1,3 (QA only)");
    cmd->add_option("--num-noisy", f.num_noisy, "Noisy documents drawn per sample (QA only)");
  }
}

// ---------------------------------------------------------------------------
// Subcommands

struct GenSyntheticArgs {
  SyntheticParams params;
  std::string fact_order = "round_robin";
  std::string format = "synthetic";
};

int cmd_gen_synthetic(const Globals &g, GenSyntheticArgs a) {
  if (g.out.empty())
    throw ConfigError("gen-synthetic needs --out");
  a.params.seed = g.seed;
  FactOrder order;
  if (a.fact_order == "round_robin")
    order = FactOrder::RoundRobin;
  else if (a.fact_order == "grouped_by_list")
    order = FactOrder::GroupedByList;
  else
    throw ConfigError("--fact-order must be round_robin or grouped_by_list");
  const auto samples = generate_dataset(a.params, order);
  if (a.format == "synthetic")
    write_synthetic_dataset(g.out, a.params, samples, order);
  else if (a.format == "qa")
    write_qa_dataset(g.out, chain_qa_samples(samples));
  else
    throw ConfigError("--format must be synthetic or qa");
  std::cout << "wrote " << samples.size() << " samples to " << g.out << "\n";
  return kExitOk;
}

struct RunArgs {
  std::string dataset;
  ConditionFlags cond;
  bool score_logprob = false;
  std::string csv;
};

int cmd_run(const Globals &g, const RunArgs &a) {
  const auto dataset = load_dataset(a.dataset);
  const auto model = open_model(g);
  auto eval = eval_options(g);
  eval.score_logprob = a.score_logprob;
  const auto result =
      run_eval(dataset, model.get(), a.cond.build(dataset, g.seed), run_options(g), eval);
  const auto &s = result.summary;
  std::cout << "records: " << s.count << "  failures: " << s.failures << "  mean " << s.metric
            << ": " << fmt(s.mean) << "\n\n";
  const auto table = report(result.records, {"hop_count"});
  write_table(std::cout, table);
  if (!s.by_type.empty()) {
    std::cout << "\n";
    write_table(std::cout, report(result.records, {"type"}));
  }
  write_csv_file(a.csv, table);
  return exit_for(result.records);
}

struct PermuteArgs {
  std::string dataset;
  PermutationParams params;
  std::string scorer = "auto";
  std::string rep_style = "verbatim";
  std::string csv;
  bool spectrum = false;
};

int cmd_permute(const Globals &g, PermuteArgs a) {
  const auto samples = qa_samples(load_dataset(a.dataset));
  const auto model = open_model(g);
  a.params.scorer = study_scorer_from_string(a.scorer);
  a.params.style = RepetitionStyle::parse(a.rep_style);
  a.params.seed = g.seed;
  const auto study = permutation_study(samples, model.get(), a.params, run_options(g),
                                       eval_options(g));

  std::cout << study.k << "-hop samples: " << samples.size() << "  orders: "
            << study.curves.front().spectrum.size() << "  scorer: " << study.scorer << "\n\n";
  ReportTable summary{{"k_hat", "worst_sigma", "worst", "best_sigma", "best", "mean"}, {}};
  ReportTable full{{"k_hat", "rank", "sigma", "mean", "count", "failures"}, {}};
  for (const auto &c : study.curves) {
    summary.rows.push_back({std::to_string(c.k_hat), c.worst().sigma.to_string(),
                            fmt(c.worst().stat.mean()), c.best().sigma.to_string(),
                            fmt(c.best().stat.mean()), fmt(c.mean)});
    for (std::size_t i = 0; i < c.spectrum.size(); ++i) {
      const auto &row = c.spectrum[i];
      full.rows.push_back({std::to_string(c.k_hat), std::to_string(i + 1), row.sigma.to_string(),
                           fmt(row.stat.mean()), std::to_string(row.stat.count),
                           std::to_string(row.failures)});
    }
  }
  write_table(std::cout, summary);
  if (a.spectrum) {
    std::cout << "\n";
    write_table(std::cout, full);
  }
  write_csv_file(a.csv, full);
  return exit_for(study.records);
}

struct PositionArgs {
  std::string dataset;
  PositionParams params;
  std::string block_order;
  std::string csv;
};

int cmd_position(const Globals &g, PositionArgs a) {
  const auto samples = qa_samples(load_dataset(a.dataset));
  const auto model = open_model(g);
  if (!a.block_order.empty())
    a.params.block_order = OrderPermutation::parse(a.block_order);
  a.params.seed = g.seed;
  const auto sweep = position_sweep(samples, model.get(), a.params, run_options(g),
                                    eval_options(g));
  ReportTable t{{"offset", "k_hat", "mean_score", "count", "failures"}, {}};
  for (const auto &c : sweep.cells)
    t.rows.push_back({std::to_string(c.offset), std::to_string(c.k_hat), fmt(c.stat.mean()),
                      std::to_string(c.stat.count), std::to_string(c.failures)});
  write_table(std::cout, t);
  write_csv_file(a.csv, t);
  return exit_for(sweep.records);
}

struct RepetitionArgs {
  std::string dataset;
  int max_repetitions = 3;
  ConditionFlags cond;
  std::string csv;
};

int cmd_repetition(const Globals &g, const RepetitionArgs &a) {
  const auto dataset = load_dataset(a.dataset);
  const auto model = open_model(g);
  const auto sweep = repetition_sweep(dataset, model.get(), a.max_repetitions,
                                      a.cond.build(dataset, g.seed), run_options(g),
                                      eval_options(g));
  ReportTable t{{"step", "k_hat", "mean_score", "count", "failures"}, {}};
  for (const auto &p : sweep.curve)
    t.rows.push_back({std::to_string(p.step), std::to_string(p.k_hat), fmt(p.stat.mean()),
                      std::to_string(p.stat.count), std::to_string(p.failures)});
  write_table(std::cout, t);
  write_csv_file(a.csv, t);
  return exit_for(sweep.records);
}

struct NoiseArgs {
  NoiseParams params;
  std::string csv;
};

int cmd_noise(const Globals &g, NoiseArgs a) {
  const auto model = open_model(g);
  a.params.seed = g.seed;
  const auto sweep = noise_sweep(model.get(), a.params, run_options(g), eval_options(g));
  ReportTable t{{"list_count", "step", "accuracy", "count", "failures"}, {}};
  for (const auto &c : sweep.cells)
    t.rows.push_back({std::to_string(c.list_count), std::to_string(c.step), fmt(c.stat.mean()),
                      std::to_string(c.stat.count), std::to_string(c.failures)});
  write_table(std::cout, t);
  write_csv_file(a.csv, t);
  return exit_for(sweep.records);
}

struct ReportArgs {
  std::string records;
  std::vector<std::string> group_by{"k_hat"};
  std::string csv;
};

int cmd_report(const ReportArgs &a) {
  const auto table = report(a.records, a.group_by);
  write_table(std::cout, table);
  write_csv_file(a.csv, table);
  return kExitOk;
}

struct ReplayArgs {
  std::string records;
  std::string dataset;
};

int cmd_replay(const ReplayArgs &a) {
  const auto rep = replay_check(read_records(a.records), load_dataset(a.dataset));
  std::cout << "checked: " << rep.checked << "  skipped: " << rep.skipped
            << "  mismatches: " << rep.mismatches.size() << "\n";
  for (const auto &id : rep.mismatches)
    std::cout << "  " << id << "\n";
  return rep.mismatches.empty() ? kExitOk : kExitPartial;
}

struct RenderArgs {
  std::string dataset;
  std::size_t index = 0;
  ConditionFlags cond;
};

int cmd_render(const Globals &g, const RenderArgs &a) {
  const auto dataset = load_dataset(a.dataset);
  if (a.index >= dataset_size(dataset))
    throw ConfigError("--index " + std::to_string(a.index) + " out of range (dataset has " +
                      std::to_string(dataset_size(dataset)) + " samples)");
  const auto c = a.cond.build(dataset, g.seed);
  std::visit([&](const auto &samples) { std::cout << to_golden_text(render_condition(samples[a.index], c)); },
             dataset);
  return kExitOk;
}

// Chooses the config reader before parsing: JSON for *.json, TOML otherwise.
void select_config_format(CLI::App &app, int argc, char **argv) {
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i], path;
    if (arg == "--config" && i + 1 < argc)
      path = argv[i + 1];
    else if (arg.rfind("--config=", 0) == 0)
      path = arg.substr(9);
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json")
      app.config_formatter(std::make_shared<JsonConfig>());
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Context-repetition experiments for multi-hop reasoning over documents", "ctxrep"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.set_config("--config", "", "TOML or JSON file with option values");
  app.add_option("--model", g.model, "mock, or a model id served at --endpoint")
      ->capture_default_str();
  app.add_option("--endpoint", g.endpoint, "OpenAI-compatible base URL, e.g. http://host:8000/v1");
  app.add_option("--api-key-env", g.api_key_env,
                 "Environment variable holding the bearer token");
  app.add_option("--seed", g.seed, "Seed for generation and noise sampling")->capture_default_str();
  app.add_option("--concurrency", g.concurrency, "Parallel model calls")
      ->check(CLI::Range(std::size_t{1}, std::size_t{256}))
      ->capture_default_str();
  app.add_option("--out", g.out, "Output file (records JSONL, or the generated dataset)");
  app.add_option("--log-io", g.log_io, "Append every model request and response to this JSONL");
  app.add_flag("--logprobs", g.logprobs, "The endpoint returns token log-probabilities");
  app.add_flag("--fresh", g.fresh, "Overwrite --out instead of resuming from it");
  app.add_option("--max-tokens", g.max_tokens, "Answer token budget")->capture_default_str();
  app.add_option("--temperature", g.temperature)->capture_default_str();

  GenSyntheticArgs gen;
  auto *c_gen = app.add_subcommand("gen-synthetic", "Generate a chained-list dataset");
  c_gen->add_option("--num-samples", gen.params.num_samples)->capture_default_str();
  c_gen->add_option("--num-lists", gen.params.num_lists)->capture_default_str();
  c_gen->add_option("--elements-per-list", gen.params.elements_per_list)->capture_default_str();
  c_gen->add_option("--fact-order", gen.fact_order, "round_robin or grouped_by_list")
      ->capture_default_str();
  c_gen->add_option("--format", gen.format,
                    "synthetic, or qa for chain-derived multi-hop QA samples")
      ->capture_default_str();

  RunArgs run;
  auto *c_run = app.add_subcommand("run", "Evaluate one condition on a dataset");
  c_run->add_option("--dataset", run.dataset)->required();
  add_condition_flags(c_run, run.cond, true);
  c_run->add_flag("--score-logprob", run.score_logprob,
                  "Also record the log-probability of the gold answer");
  c_run->add_option("--csv", run.csv, "Per-hop summary as CSV");

  PermuteArgs perm;
  auto *c_perm = app.add_subcommand("permute-study", "Score every order of the supporting documents");
  c_perm->add_option("--dataset", perm.dataset)->required();
  c_perm->add_option("--num-noisy", perm.params.num_noisy, "Noisy documents per context")
      ->capture_default_str();
  c_perm->add_option("--k-hats", perm.params.k_hats, "Repetition counts to evaluate")
      ->delimiter(',')
      ->capture_default_str();
  c_perm->add_option("--scorer", perm.scorer, "auto, logprob or f1")->capture_default_str();
  c_perm->add_option("--max-k", perm.params.max_k, "Largest hop count accepted")
      ->capture_default_str();
  c_perm->add_option("--rep-style", perm.rep_style)->capture_default_str();
  c_perm->add_flag("--spectrum", perm.spectrum, "Print every order, worst to best");
  c_perm->add_option("--csv", perm.csv, "Full sorted spectrum as CSV");

  PositionArgs pos;
  auto *c_pos = app.add_subcommand("position-sweep", "Move the supporting block through the context");
  c_pos->add_option("--dataset", pos.dataset)->required();
  c_pos->add_option("--offsets", pos.params.offsets)->delimiter(',')->capture_default_str();
  c_pos->add_option("--k-hats", pos.params.k_hats)->delimiter(',')->capture_default_str();
  c_pos->add_option("--total-slots", pos.params.total_slots,
                    "Documents per context (default: max offset + k)");
  c_pos->add_option("--block-order", pos.block_order, "Order inside the supporting block");
  c_pos->add_option("--csv", pos.csv);

  RepetitionArgs rep;
  auto *c_rep = app.add_subcommand("repetition-sweep", "Evaluate k_hat = 1 .. max-repetitions + 1");
  c_rep->add_option("--dataset", rep.dataset)->required();
  c_rep->add_option("--max-repetitions", rep.max_repetitions)->capture_default_str();
  add_condition_flags(c_rep, rep.cond, false);
  c_rep->add_option("--csv", rep.csv);

  NoiseArgs noise;
  auto *c_noise = app.add_subcommand("noise-sweep", "Repetition curves per number of lists");
  c_noise->add_option("--list-counts", noise.params.list_counts)
      ->delimiter(',')
      ->capture_default_str();
  c_noise->add_option("--elements-per-list", noise.params.elements_per_list)->capture_default_str();
  c_noise->add_option("--max-repetitions", noise.params.max_repetitions)->capture_default_str();
  c_noise->add_option("--samples-per-cell", noise.params.samples_per_cell)->capture_default_str();
  c_noise->add_option("--csv", noise.csv);

  ReportArgs rpt;
  auto *c_rpt = app.add_subcommand("report", "Aggregate a records file");
  c_rpt->add_option("--records", rpt.records)->required();
  c_rpt->add_option("--group-by", rpt.group_by)->delimiter(',')->capture_default_str();
  c_rpt->add_option("--csv", rpt.csv);

  ReplayArgs replay;
  auto *c_replay = app.add_subcommand("replay", "Re-derive every record's prompt hash");
  c_replay->add_option("--records", replay.records)->required();
  c_replay->add_option("--dataset", replay.dataset)->required();

  RenderArgs render;
  auto *c_render = app.add_subcommand("render-prompt", "Print the prompt for one sample");
  c_render->add_option("--dataset", render.dataset)->required();
  c_render->add_option("--index", render.index)->capture_default_str();
  add_condition_flags(c_render, render.cond, true);

  select_config_format(app, argc, argv);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitFatal;
  }

  try {
    if (c_gen->parsed())
      return cmd_gen_synthetic(g, gen);
    if (c_run->parsed())
      return cmd_run(g, run);
    if (c_perm->parsed())
      return cmd_permute(g, perm);
    if (c_pos->parsed())
      return cmd_position(g, pos);
    if (c_rep->parsed())
      return cmd_repetition(g, rep);
    if (c_noise->parsed())
      return cmd_noise(g, noise);
    if (c_rpt->parsed())
      return cmd_report(rpt);
    if (c_replay->parsed())
      return cmd_replay(replay);
    if (c_render->parsed())
      return cmd_render(g, render);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFatal;
  }
  return kExitFatal;
}
