#pragma once

// Experimental conditions and the per-(sample, condition) result record.
//
// Records are JSON Lines. A record's fields are written in a fixed order so
// two runs of the same configuration produce byte-identical files apart from
// "timestamp" and "latency_ms".

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxrep/context_model.hpp"
#include "ctxrep/error.hpp"
#include "ctxrep/prompt_builder.hpp"
#include "ctxrep/random.hpp"

namespace ctxrep {

// Everything besides the sample that determines the prompt.
struct Condition {
  PromptTemplate template_kind = PromptTemplate::QaBase;
  int k_hat = 1;
  RepetitionStyle style;
  // Order of the supporting documents; gold (hop) order when absent.
  std::optional<OrderPermutation> sigma;
  // Position sweep: index of the first supporting slot, and the slot count.
  std::optional<int> offset;
  std::optional<int> total_slots;
  // Number of noisy documents drawn from the sample; all of them when absent.
  std::optional<int> num_noisy;
  std::uint64_t seed = 0;

  friend bool operator==(const Condition &, const Condition &) = default;
};

inline nlohmann::ordered_json to_json(const Condition &c) {
  using oj = nlohmann::ordered_json;
  oj j;
  j["template"] = std::string(to_string(c.template_kind));
  j["k_hat"] = c.k_hat;
  j["rep_style"] = c.style.to_string();
  j["sigma"] = c.sigma ? oj(c.sigma->to_string()) : oj(nullptr);
  j["offset"] = c.offset ? oj(*c.offset) : oj(nullptr);
  j["total_slots"] = c.total_slots ? oj(*c.total_slots) : oj(nullptr);
  j["num_noisy"] = c.num_noisy ? oj(*c.num_noisy) : oj(nullptr);
  j["seed"] = c.seed;
  return j;
}

template <class Json> Condition condition_from_json(const Json &j) {
  auto opt_int = [&](const char *key) -> std::optional<int> {
    if (!j.contains(key) || j.at(key).is_null())
      return std::nullopt;
    return j.at(key).template get<int>();
  };
  Condition c;
  c.template_kind = prompt_template_from_string(j.at("template").template get<std::string>());
  c.k_hat = j.at("k_hat").template get<int>();
  c.style = RepetitionStyle::parse(j.value("rep_style", std::string("verbatim")));
  if (j.contains("sigma") && !j.at("sigma").is_null())
    c.sigma = OrderPermutation::parse(j.at("sigma").template get<std::string>());
  c.offset = opt_int("offset");
  c.total_slots = opt_int("total_slots");
  c.num_noisy = opt_int("num_noisy");
  c.seed = j.value("seed", std::uint64_t{0});
  return c;
}

// Canonical text of a condition; two conditions are equal iff their keys are.
inline std::string condition_key(const Condition &c) { return to_json(c).dump(); }

struct RunRecord {
  std::string study = "run"; // run | permutation | position | repetition | noise
  std::string task = "qa";   // qa | synthetic
  std::string sample_id;
  Condition condition;
  std::string model_name;
  std::string prompt_hash;
  std::string raw_output;
  std::string extracted;
  // F1 for QA, 0/1 accuracy for synthetic; absent when the sample failed.
  std::optional<double> score;
  std::optional<double> f1;
  std::optional<bool> exact_match;
  std::optional<double> logprob_score;
  int hop_count = 0;
  std::optional<std::string> type;
  std::optional<int> list_count;
  std::optional<std::string> error;
  std::string timestamp;
  std::int64_t latency_ms = 0;

  bool failed() const { return error.has_value(); }
  std::string key() const { return sample_id + "|" + condition_key(condition); }
};

inline std::string prompt_hash(const std::vector<ChatMessage> &messages) {
  return hex64(fnv1a64(to_golden_text(messages)));
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::ordered_json to_json(const RunRecord &r) {
  using oj = nlohmann::ordered_json;
  auto opt = [](const auto &v) { return v ? oj(*v) : oj(nullptr); };
  oj j;
  j["study"] = r.study;
  j["task"] = r.task;
  j["sample_id"] = r.sample_id;
  j["condition"] = to_json(r.condition);
  j["model_name"] = r.model_name;
  j["prompt_hash"] = r.prompt_hash;
  j["raw_output"] = r.raw_output;
  j["extracted"] = r.extracted;
  j["score"] = opt(r.score);
  j["f1"] = opt(r.f1);
  j["exact_match"] = opt(r.exact_match);
  j["logprob_score"] = opt(r.logprob_score);
  j["hop_count"] = r.hop_count;
  j["type"] = opt(r.type);
  j["list_count"] = opt(r.list_count);
  j["error"] = opt(r.error);
  j["timestamp"] = r.timestamp;
  j["latency_ms"] = r.latency_ms;
  return j;
}

template <class Json> RunRecord run_record_from_json(const Json &j) {
  auto opt_double = [&](const char *key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null())
      return std::nullopt;
    return j.at(key).template get<double>();
  };
  RunRecord r;
  r.study = j.value("study", std::string("run"));
  r.task = j.value("task", std::string("qa"));
  r.sample_id = j.at("sample_id").template get<std::string>();
  r.condition = condition_from_json(j.at("condition"));
  r.model_name = j.value("model_name", std::string());
  r.prompt_hash = j.value("prompt_hash", std::string());
  r.raw_output = j.value("raw_output", std::string());
  r.extracted = j.value("extracted", std::string());
  r.score = opt_double("score");
  r.f1 = opt_double("f1");
  if (j.contains("exact_match") && !j.at("exact_match").is_null())
    r.exact_match = j.at("exact_match").template get<bool>();
  r.logprob_score = opt_double("logprob_score");
  r.hop_count = j.value("hop_count", 0);
  if (j.contains("type") && !j.at("type").is_null())
    r.type = j.at("type").template get<std::string>();
  if (j.contains("list_count") && !j.at("list_count").is_null())
    r.list_count = j.at("list_count").template get<int>();
  if (j.contains("error") && !j.at("error").is_null())
    r.error = j.at("error").template get<std::string>();
  r.timestamp = j.value("timestamp", std::string());
  r.latency_ms = j.value("latency_ms", std::int64_t{0});
  return r;
}

// Reads a records file. A final line without a trailing newline that does not
// parse is treated as an interrupted write and ignored; any other malformed
// line is an IngestError.
inline std::vector<RunRecord> read_records(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ConfigError("cannot open records file '" + path + "'");
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<RunRecord> out;
  std::size_t pos = 0, lineno = 0;
  while (pos < data.size()) {
    ++lineno;
    const auto eol = data.find('\n', pos);
    const bool complete = eol != std::string::npos;
    const auto line = data.substr(pos, complete ? eol - pos : std::string::npos);
    pos = complete ? eol + 1 : data.size();
    if (detail::is_blank(line))
      continue;
    try {
      out.push_back(run_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception &e) {
      if (!complete)
        break;
      throw IngestError(lineno, e.what());
    } catch (const Error &e) {
      throw IngestError(lineno, e.what());
    }
  }
  return out;
}

// Byte length of the prefix of the file made of complete, parseable lines.
inline std::size_t valid_records_prefix(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    return 0;
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  while (pos < data.size()) {
    const auto eol = data.find('\n', pos);
    if (eol == std::string::npos)
      break;
    const auto line = data.substr(pos, eol - pos);
    if (!detail::is_blank(line) && !nlohmann::json::accept(line))
      break;
    pos = eol + 1;
  }
  return pos;
}

// Serialized record with the run-dependent fields removed.
inline std::string stable_record_text(const RunRecord &r) {
  auto j = to_json(r);
  j.erase("timestamp");
  j.erase("latency_ms");
  return j.dump();
}

} // namespace ctxrep
