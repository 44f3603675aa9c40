#pragma once

// OpenAI-compatible chat-completions backend.
//
//   POST {endpoint}/chat/completions
//   {"model":..., "messages":[{"role":...,"content":...}], "max_tokens":...,
//    "temperature":..., "logprobs":...}
//
// Fields are always emitted in this order so identical inputs give identical
// request bytes. The bearer token is read from the environment variable named
// by HttpBackend::auth_env at call time and never written anywhere.
//
// Target scoring asks the server to echo the prompt with log-probabilities:
// the target is appended to the final assistant turn, the request carries
// "echo": true and "max_tokens": 1, and the mean log-probability of the echoed
// tokens spanning the target is returned. Servers that do not echo prompt
// log-probabilities cannot score targets.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "ctxrep/error.hpp"
#include "ctxrep/model_client.hpp"

namespace ctxrep {

struct ParsedEndpoint {
  std::string base; // scheme://host[:port]
  std::string path_prefix;
};

inline ParsedEndpoint parse_endpoint(const std::string &endpoint) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos)
    throw ConfigError("endpoint must start with http:// or https://: '" + endpoint + "'");
  const auto scheme = endpoint.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https")
    throw ConfigError("unsupported endpoint scheme '" + scheme + "'");
  const auto path_start = endpoint.find('/', scheme_end + 3);
  ParsedEndpoint p;
  p.base = endpoint.substr(0, path_start);
  if (path_start != std::string::npos)
    p.path_prefix = endpoint.substr(path_start);
  while (!p.path_prefix.empty() && p.path_prefix.back() == '/')
    p.path_prefix.pop_back();
  return p;
}

inline std::string build_chat_request(const std::string &model_id,
                                      const std::vector<ChatMessage> &messages, int max_tokens,
                                      double temperature, bool logprobs, bool echo = false) {
  nlohmann::ordered_json body;
  body["model"] = model_id;
  auto msgs = nlohmann::ordered_json::array();
  for (const auto &m : messages) {
    nlohmann::ordered_json jm;
    jm["role"] = std::string(to_string(m.role));
    jm["content"] = m.content;
    msgs.push_back(std::move(jm));
  }
  body["messages"] = std::move(msgs);
  body["max_tokens"] = max_tokens;
  body["temperature"] = temperature;
  body["logprobs"] = logprobs;
  if (echo)
    body["echo"] = true;
  return body.dump();
}

class HttpChatModel final : public ChatModel {
public:
  explicit HttpChatModel(ModelHandle handle) : handle_(std::move(handle)) {
    if (!std::holds_alternative<HttpBackend>(handle_.backend))
      throw ConfigError("HttpChatModel needs an http backend handle");
    endpoint_ = parse_endpoint(backend().endpoint);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (endpoint_.base.rfind("https://", 0) == 0)
      throw ConfigError("https endpoints need a build with OpenSSL support");
#endif
  }

  const ModelHandle &handle() const override { return handle_; }

  GenerationResult generate(const std::vector<ChatMessage> &messages,
                            const GenerationOptions &options) const override {
    const auto body = build_chat_request(backend().model_id, messages, options.max_tokens,
                                         options.temperature, backend().logprobs);
    const auto start = std::chrono::steady_clock::now();
    const auto reply = post(body);
    GenerationResult r;
    r.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - start)
                       .count();
    try {
      const auto &choice = reply.at("choices").at(0);
      const auto &content = choice.at("message").at("content");
      r.text = content.is_null() ? std::string() : content.get<std::string>();
      r.finish_reason = choice.value("finish_reason", std::string("stop"));
      if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
          choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
        std::vector<double> lps;
        for (const auto &t : choice["logprobs"]["content"])
          lps.push_back(t.at("logprob").get<double>());
        r.token_logprobs = std::move(lps);
      }
    } catch (const nlohmann::json::exception &e) {
      throw FatalError(std::string("unexpected chat-completions response: ") + e.what());
    }
    return r;
  }

  double score_target(const std::vector<ChatMessage> &messages,
                      std::string_view target) const override {
    auto forced = messages;
    if (!forced.empty() && forced.back().role == MessageRole::Assistant)
      forced.back().content += " " + std::string(target);
    else
      forced.emplace_back(MessageRole::Assistant, std::string(target));
    const auto body = build_chat_request(backend().model_id, forced, 1, 0.0, true, true);
    const auto reply = post(body);
    try {
      const auto &choice = reply.at("choices").at(0);
      if (!choice.contains("logprobs") || !choice["logprobs"].is_object() ||
          !choice["logprobs"].contains("content"))
        throw CapabilityError(handle_.name + ": endpoint returned no log-probabilities");
      const auto &tokens = choice["logprobs"]["content"];
      std::size_t generated = 1;
      if (reply.contains("usage") && reply["usage"].contains("completion_tokens"))
        generated = reply["usage"]["completion_tokens"].get<std::size_t>();
      const std::size_t echoed = tokens.size() > generated ? tokens.size() - generated : 0;

      std::string text;
      std::vector<std::size_t> starts;
      for (std::size_t i = 0; i < echoed; ++i) {
        starts.push_back(text.size());
        text += tokens[i].at("token").get<std::string>();
      }
      const auto at = text.rfind(target);
      if (at == std::string::npos)
        throw CapabilityError(handle_.name + ": target not found in echoed prompt tokens");
      const auto end = at + target.size();
      double sum = 0.0;
      std::size_t count = 0;
      for (std::size_t i = 0; i < echoed; ++i) {
        const auto tok_end = starts[i] + tokens[i].at("token").get<std::string>().size();
        if (tok_end <= at || starts[i] >= end)
          continue;
        const auto &lp = tokens[i].at("logprob");
        if (lp.is_null())
          continue;
        sum += lp.get<double>();
        ++count;
      }
      if (count == 0)
        throw CapabilityError(handle_.name + ": no log-probabilities cover the target");
      return sum / static_cast<double>(count);
    } catch (const nlohmann::json::exception &e) {
      throw FatalError(std::string("unexpected chat-completions response: ") + e.what());
    }
  }

private:
  const HttpBackend &backend() const { return std::get<HttpBackend>(handle_.backend); }

  nlohmann::json post(const std::string &body) const {
    const auto &cfg = backend();
    const std::string path = endpoint_.path_prefix + "/chat/completions";
    httplib::Headers headers;
    if (!cfg.auth_env.empty()) {
      const char *token = std::getenv(cfg.auth_env.c_str());
      if (!token || !*token)
        throw ConfigError("environment variable '" + cfg.auth_env + "' is not set");
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }

    std::string last_failure;
    const int attempts = std::max(1, cfg.retry.max_attempts);
    for (int attempt = 1; attempt <= attempts; ++attempt) {
      httplib::Client client(endpoint_.base);
      client.set_connection_timeout(cfg.timeout_seconds, 0);
      client.set_read_timeout(cfg.timeout_seconds, 0);
      client.set_write_timeout(cfg.timeout_seconds, 0);
      auto res = client.Post(path, headers, body, "application/json");
      if (!res) {
        last_failure = "transport error: " + httplib::to_string(res.error());
        audit(body, 0, last_failure);
      } else {
        audit(body, res->status, res->body);
        if (res->status == 429 || res->status >= 500) {
          last_failure = "HTTP " + std::to_string(res->status) + ": " + excerpt(res->body);
        } else if (res->status >= 400) {
          throw FatalError("HTTP " + std::to_string(res->status) + ": " + excerpt(res->body));
        } else {
          try {
            return nlohmann::json::parse(res->body);
          } catch (const nlohmann::json::exception &e) {
            throw FatalError(std::string("response is not JSON: ") + e.what());
          }
        }
      }
      if (attempt < attempts)
        std::this_thread::sleep_for(backoff(attempt));
    }
    throw RetryableError("giving up after " + std::to_string(attempts) +
                         " attempts: " + last_failure);
  }

  std::chrono::milliseconds backoff(int attempt) const {
    const auto &r = backend().retry;
    double ms = static_cast<double>(r.initial_backoff.count()) *
                std::pow(r.multiplier, static_cast<double>(attempt - 1));
    if (r.jitter > 0) {
      thread_local std::mt19937 jitter_rng{std::random_device{}()};
      std::uniform_real_distribution<double> u(1.0 - r.jitter, 1.0 + r.jitter);
      ms *= u(jitter_rng);
    }
    return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
  }

  static std::string excerpt(const std::string &body) {
    constexpr std::size_t kMax = 300;
    return body.size() <= kMax ? body : body.substr(0, kMax) + "...";
  }

  void audit(const std::string &request, int status, const std::string &response) const {
    const auto &path = backend().audit_log;
    if (path.empty())
      return;
    nlohmann::ordered_json line;
    line["endpoint"] = endpoint_.base + endpoint_.path_prefix + "/chat/completions";
    line["request"] = nlohmann::ordered_json::parse(request);
    line["status"] = status;
    try {
      line["response"] = nlohmann::ordered_json::parse(response);
    } catch (const nlohmann::json::exception &) {
      line["response"] = response;
    }
    std::lock_guard lock(audit_mutex_);
    std::ofstream out(path, std::ios::app | std::ios::binary);
    out << line.dump() << '\n';
  }

  ModelHandle handle_;
  ParsedEndpoint endpoint_;
  mutable std::mutex audit_mutex_;
};

inline std::unique_ptr<ChatModel> make_model(const ModelHandle &handle) {
  if (std::holds_alternative<MockChainReaderConfig>(handle.backend))
    return std::make_unique<MockChainReader>(handle);
  return std::make_unique<HttpChatModel>(handle);
}

} // namespace ctxrep
