#pragma once

// Model boundary. Everything that talks to a model goes through ChatModel;
// the HTTP backend lives in http_model.hpp so that users of the mock do not
// pay for the HTTP client.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ctxrep/error.hpp"
#include "ctxrep/prompt_builder.hpp"
#include "ctxrep/scoring.hpp"
#include "ctxrep/synthetic_chains.hpp"

namespace ctxrep {

enum class Capability { Generate, ScoreTarget };

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
  // Each wait is scaled by a factor drawn from [1 - jitter, 1 + jitter].
  double jitter = 0.25;
};

struct HttpBackend {
  std::string endpoint; // e.g. https://api.openai.com/v1
  std::string model_id;
  std::string auth_env; // name of the environment variable holding the bearer token
  bool logprobs = false;
  RetryPolicy retry;
  std::string audit_log; // JSONL path; empty disables
  int timeout_seconds = 120;
};

struct MockChainReaderConfig {
  std::string unknown_answer = "unknown";
};

struct ModelHandle {
  std::string name;
  std::set<Capability> capabilities;
  std::variant<HttpBackend, MockChainReaderConfig> backend;

  bool has(Capability c) const { return capabilities.count(c) > 0; }

  static ModelHandle mock(std::string name = "mock-chain-reader",
                          MockChainReaderConfig config = {}) {
    return {std::move(name), {Capability::Generate, Capability::ScoreTarget}, std::move(config)};
  }

  static ModelHandle http(std::string name, HttpBackend backend) {
    std::set<Capability> caps{Capability::Generate};
    if (backend.logprobs)
      caps.insert(Capability::ScoreTarget);
    return {std::move(name), std::move(caps), std::move(backend)};
  }
};

struct GenerationResult {
  std::string text;
  std::string finish_reason;
  std::optional<std::vector<double>> token_logprobs;
  std::int64_t latency_ms = 0;
};

struct GenerationOptions {
  int max_tokens = 64;
  double temperature = 0.0;
};

// Implementations must be safe to call concurrently.
class ChatModel {
public:
  virtual ~ChatModel() = default;
  virtual const ModelHandle &handle() const = 0;
  virtual GenerationResult generate(const std::vector<ChatMessage> &messages,
                                    const GenerationOptions &options) const = 0;
  // Mean per-token log-probability of `target` as the continuation.
  virtual double score_target(const std::vector<ChatMessage> &,
                              std::string_view) const {
    throw CapabilityError(handle().name + " cannot score targets");
  }
};

inline GenerationResult generate(const ChatModel &model, const std::vector<ChatMessage> &messages,
                                 int max_tokens, double temperature) {
  if (!model.handle().has(Capability::Generate))
    throw CapabilityError(model.handle().name + " cannot generate");
  if (messages.empty())
    throw PreconditionError("generate: no messages");
  return model.generate(messages, GenerationOptions{max_tokens, temperature});
}

inline double score_target(const ChatModel &model, const std::vector<ChatMessage> &messages,
                           std::string_view target) {
  if (!model.handle().has(Capability::ScoreTarget))
    throw CapabilityError(model.handle().name + " does not expose log-probabilities");
  if (target.empty())
    throw PreconditionError("score_target: empty target");
  if (messages.empty())
    throw PreconditionError("score_target: no messages");
  return model.score_target(messages, target);
}

// ---------------------------------------------------------------------------
// Single-register chain reader.
//
// Reads every chain fact in the prompt, all repetitions included, as one
// left-to-right stream. A register starts at the question's element; a fact
// "a before b" with b equal to the register moves it to a. The answer is the
// register if nothing precedes it (a list head), otherwise unknown. One
// backward hop can resolve per pass over the facts, so a chain whose facts
// appear head-first needs one pass per hop.

inline std::string mock_chain_read(const MockChainReaderConfig &config,
                                   const std::vector<ChatMessage> &messages) {
  std::string stream;
  for (const auto &m : messages) {
    stream += m.content;
    stream += '\n';
  }
  const auto target = scan_question_target(stream);
  if (!target)
    throw MockParseError("no chain question found in prompt");
  const auto facts = scan_facts(stream);
  if (facts.empty())
    throw MockParseError("no chain facts found in prompt");

  int sought = *target;
  for (const auto &f : facts)
    if (f.after == sought)
      sought = f.before;
  for (const auto &f : facts)
    if (f.after == sought)
      return config.unknown_answer;
  return std::to_string(sought);
}

class MockChainReader final : public ChatModel {
public:
  explicit MockChainReader(ModelHandle handle) : handle_(std::move(handle)) {
    if (!std::holds_alternative<MockChainReaderConfig>(handle_.backend))
      throw ConfigError("MockChainReader needs a mock backend handle");
  }
  MockChainReader() : MockChainReader(ModelHandle::mock()) {}

  const ModelHandle &handle() const override { return handle_; }

  GenerationResult generate(const std::vector<ChatMessage> &messages,
                            const GenerationOptions &) const override {
    GenerationResult r;
    r.text = "Answer: " + mock_chain_read(config(), messages);
    r.finish_reason = "stop";
    return r;
  }

  // 0.0 when the reader's answer is the target, -1.0 otherwise.
  double score_target(const std::vector<ChatMessage> &messages,
                      std::string_view target) const override {
    return mock_chain_read(config(), messages) == detail::trim(target) ? 0.0 : -1.0;
  }

private:
  const MockChainReaderConfig &config() const {
    return std::get<MockChainReaderConfig>(handle_.backend);
  }
  ModelHandle handle_;
};

// ---------------------------------------------------------------------------
// Appends every call on the wrapped model to a JSONL file: the messages, the
// output (or score) and the error text when the call throws.

class LoggedModel final : public ChatModel {
public:
  LoggedModel(const ChatModel &inner, std::string path) : inner_(inner), path_(std::move(path)) {}

  const ModelHandle &handle() const override { return inner_.handle(); }

  GenerationResult generate(const std::vector<ChatMessage> &messages,
                            const GenerationOptions &options) const override {
    auto entry = request("generate", messages);
    entry["max_tokens"] = options.max_tokens;
    entry["temperature"] = options.temperature;
    try {
      auto r = inner_.generate(messages, options);
      entry["text"] = r.text;
      entry["finish_reason"] = r.finish_reason;
      append(entry);
      return r;
    } catch (const std::exception &e) {
      entry["error"] = e.what();
      append(entry);
      throw;
    }
  }

  double score_target(const std::vector<ChatMessage> &messages,
                      std::string_view target) const override {
    auto entry = request("score_target", messages);
    entry["target"] = std::string(target);
    try {
      const double v = inner_.score_target(messages, target);
      entry["score"] = v;
      append(entry);
      return v;
    } catch (const std::exception &e) {
      entry["error"] = e.what();
      append(entry);
      throw;
    }
  }

private:
  nlohmann::ordered_json request(const char *call, const std::vector<ChatMessage> &messages) const {
    nlohmann::ordered_json j;
    j["model"] = inner_.handle().name;
    j["call"] = call;
    auto msgs = nlohmann::ordered_json::array();
    for (const auto &m : messages)
      msgs.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    j["messages"] = std::move(msgs);
    return j;
  }

  void append(const nlohmann::ordered_json &entry) const {
    std::lock_guard lock(mu_);
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    out << entry.dump() << '\n';
  }

  const ChatModel &inner_;
  std::string path_;
  mutable std::mutex mu_;
};

} // namespace ctxrep
