#pragma once
// Chat-completion dispatch: an OpenAI-compatible HTTP backend plus three deterministic
// mocks.
//
//   mock-echo       label word of the first demo, "unknown" without demos
//   mock-threshold  ad_word iff conf_hint >= 0.5, hc_word below, "unknown" without a hint
//   mock-fixed      always `fixed_word`

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ekicl/common.hpp"
#include "ekicl/prompting.hpp"
#include "ekicl/rng.hpp"

namespace ekicl {

enum class Backend : std::uint8_t { Http, MockEcho, MockThreshold, MockFixed };

inline std::string_view to_string(Backend b) {
  switch (b) {
    case Backend::Http: return "http";
    case Backend::MockEcho: return "mock-echo";
    case Backend::MockThreshold: return "mock-threshold";
    case Backend::MockFixed: return "mock-fixed";
  }
  return "http";
}

inline std::optional<Backend> parse_backend(std::string_view s) {
  for (auto b : {Backend::Http, Backend::MockEcho, Backend::MockThreshold, Backend::MockFixed}) {
    if (s == to_string(b)) return b;
  }
  return std::nullopt;
}

struct GatewayConfig {
  Backend backend = Backend::MockEcho;
  std::string base_url = "http://127.0.0.1:8000";
  std::string api_key_env = "OPENAI_API_KEY";
  std::string model_name = "llama3.1-8b-instruct";
  double temperature = 0.0;
  int max_tokens = 8;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 2;
  int max_in_flight = 4;
  std::string fixed_word = "unknown";
  std::chrono::milliseconds backoff_base{250};
  std::uint64_t seed = 0;

  void validate() const {
    if (max_in_flight < 1) throw usage_error("gateway: max_in_flight must be >= 1");
    if (timeout.count() <= 0) throw usage_error("gateway: timeout must be > 0");
    if (max_retries < 0) throw usage_error("gateway: max_retries must be >= 0");
  }
};

struct Completion {
  std::string text;
  double latency_ms = 0.0;
  int retries = 0;
};

struct CompletionRequest {
  std::string prompt;
  PromptSpec spec;
};

struct BatchResult {
  std::optional<Completion> completion;
  std::string error;
  ErrorKind error_kind = ErrorKind::Transport;

  bool ok() const noexcept { return completion.has_value(); }
};

inline std::string chat_request_body(std::string_view prompt, const GatewayConfig& config) {
  nlohmann::json body = {{"model", config.model_name},
                         {"temperature", config.temperature},
                         {"max_tokens", config.max_tokens},
                         {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
  return body.dump();
}

namespace gateway_detail {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline Endpoint split_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw usage_error("gateway: base_url needs a scheme: " + base_url);
  const auto path_start = base_url.find('/', scheme_end + 3);
  Endpoint ep;
  ep.origin = base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  ep.path = prefix + "/v1/chat/completions";
  return ep;
}

inline std::string mock_reply(const PromptSpec& spec, const GatewayConfig& config) {
  switch (config.backend) {
    case Backend::MockEcho: return spec.demos.empty() ? "unknown" : spec.demos.front().label;
    case Backend::MockThreshold:
      if (!spec.conf_hint) return "unknown";
      return *spec.conf_hint >= 0.5 ? spec.label_pair.ad_word() : spec.label_pair.hc_word();
    case Backend::MockFixed: return config.fixed_word;
    case Backend::Http: break;
  }
  throw usage_error("mock_reply called for the http backend");
}

inline std::string extract_content(const std::string& body) {
  try {
    const auto j = nlohmann::json::parse(body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Transport, std::string("malformed completion response: ") + e.what());
  }
}

inline Completion http_complete(const std::string& prompt, const GatewayConfig& config) {
  const auto ep = split_url(config.base_url);
  httplib::Client client(ep.origin);
  const auto secs = config.timeout.count() / 1000;
  const auto usecs = (config.timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (const char* key = std::getenv(config.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const std::string body = chat_request_body(prompt, config);
  Rng jitter(mix_seed(config.seed, fnv1a64(prompt)));

  const auto start = std::chrono::steady_clock::now();
  std::string last_error;
  ErrorKind last_kind = ErrorKind::Transport;
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    if (attempt > 0) {
      const double scale = std::ldexp(1.0, attempt - 1) * (1.0 + 0.5 * jitter.uniform01());
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(
          static_cast<double>(config.backoff_base.count()) * scale));
    }
    const auto attempt_start = std::chrono::steady_clock::now();
    auto res = client.Post(ep.path, headers, body, "application/json");
    if (!res) {
      const auto elapsed = std::chrono::steady_clock::now() - attempt_start;
      const bool timed_out = res.error() == httplib::Error::ConnectionTimeout ||
                             (res.error() == httplib::Error::Read && elapsed >= config.timeout);
      last_kind = timed_out ? ErrorKind::Timeout : ErrorKind::Transport;
      last_error = (timed_out ? "timeout: " : "transport: ") + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) {
      Completion c;
      c.text = extract_content(res->body);
      c.retries = attempt;
      c.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      return c;
    }
    last_kind = ErrorKind::Transport;
    last_error = "http status " + std::to_string(res->status);
    const bool retryable = res->status >= 500 || res->status == 429;
    if (!retryable) break;
  }
  throw Error(last_kind, last_error);
}

}  // namespace gateway_detail

inline Completion complete(const std::string& prompt, const PromptSpec& spec, const GatewayConfig& config) {
  config.validate();
  if (config.backend == Backend::Http) return gateway_detail::http_complete(prompt, config);
  return Completion{gateway_detail::mock_reply(spec, config), 0.0, 0};
}

// Completions in request order. HTTP requests run on at most max_in_flight threads; per-item
// failures are reported in place.
inline std::vector<BatchResult> complete_batch(std::span<const CompletionRequest> requests,
                                               const GatewayConfig& config) {
  config.validate();
  std::vector<BatchResult> results(requests.size());
  auto run_one = [&](std::size_t i) {
    try {
      results[i].completion = complete(requests[i].prompt, requests[i].spec, config);
    } catch (const Error& e) {
      results[i].error = e.what();
      results[i].error_kind = e.kind();
    } catch (const std::exception& e) {
      results[i].error = e.what();
    }
  };
  if (config.backend != Backend::Http) {
    for (std::size_t i = 0; i < requests.size(); ++i) run_one(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config.max_in_flight), requests.size());
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < requests.size(); i = next++) run_one(i);
    });
  }
  for (auto& t : pool) t.join();
  return results;
}

}  // namespace ekicl
