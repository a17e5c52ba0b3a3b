#include <cstdlib>
#include <filesystem>

#include <gtest/gtest.h>

#include "ekicl/llm_gateway.hpp"
#include "support/mock_server.hpp"

namespace fs = std::filesystem;
using namespace ekicl;
using namespace std::chrono_literals;

namespace {

const fs::path kSource(EKICL_SOURCE_DIR);

PromptSpec spec_with(std::vector<Demo> demos, std::optional<double> conf = std::nullopt) {
  PromptSpec s;
  s.demos = std::move(demos);
  s.query_text = "q";
  s.conf_hint = conf;
  return s;
}

GatewayConfig http_config(const testsupport::MockServer& server) {
  GatewayConfig c;
  c.backend = Backend::Http;
  c.base_url = server.url();
  c.backoff_base = 1ms;
  c.timeout = 5000ms;
  c.api_key_env = "EKICL_TEST_KEY_UNSET";
  return c;
}

std::vector<CompletionRequest> requests(const std::vector<std::string>& prompts) {
  std::vector<CompletionRequest> out;
  for (const auto& p : prompts) out.push_back({p, spec_with({})});
  return out;
}

}  // namespace

TEST(Mocks, Contracts) {
  GatewayConfig c;
  c.backend = Backend::MockEcho;
  EXPECT_EQ(complete("x", spec_with({{"d", "Bad"}}), c).text, "Bad");
  EXPECT_EQ(complete("x", spec_with({}), c).text, "unknown");
  c.backend = Backend::MockThreshold;
  EXPECT_EQ(complete("x", spec_with({}, 0.87), c).text, "Bad");
  EXPECT_EQ(complete("x", spec_with({}, 0.2), c).text, "Good");
  EXPECT_EQ(complete("x", spec_with({}, 0.5), c).text, "Bad");
  EXPECT_EQ(complete("x", spec_with({}), c).text, "unknown");
  c.backend = Backend::MockFixed;
  c.fixed_word = "Healthy";
  const auto batch = complete_batch(requests(std::vector<std::string>(10, "p")), c);
  ASSERT_EQ(batch.size(), 10u);
  for (const auto& r : batch) {
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.completion->text, "Healthy");
  }
}

TEST(Config, Validation) {
  GatewayConfig c;
  c.max_in_flight = 0;
  EXPECT_THROW(complete("x", spec_with({}), c), Error);
  c.max_in_flight = 1;
  c.timeout = 0ms;
  EXPECT_THROW(complete("x", spec_with({}), c), Error);
  EXPECT_EQ(parse_backend("mock-threshold"), Backend::MockThreshold);
  EXPECT_FALSE(parse_backend("gpt"));
  EXPECT_THROW(gateway_detail::split_url("localhost:80"), Error);
  EXPECT_EQ(gateway_detail::split_url("http://h:1/api/").path, "/api/v1/chat/completions");
  EXPECT_EQ(gateway_detail::split_url("http://h:1").origin, "http://h:1");
}

TEST(Http, BodyIsByteStableAndMatchesGolden) {
  testsupport::MockServer server;
  const auto cfg = http_config(server);
  const std::string prompt = "Description: the \"boy\" falls\nAnswer:";
  EXPECT_EQ(complete(prompt, spec_with({}), cfg).text, "Bad");
  EXPECT_EQ(complete(prompt, spec_with({}), cfg).text, "Bad");
  const auto bodies = server.bodies();
  ASSERT_EQ(bodies.size(), 2u);
  EXPECT_EQ(bodies[0], bodies[1]);
  EXPECT_EQ(bodies[0], read_file(kSource / "tests/golden/chat_request.json"));
  EXPECT_EQ(bodies[0], chat_request_body(prompt, cfg));
}

TEST(Http, BearerTokenFromEnvironment) {
  testsupport::MockServer server;
  auto cfg = http_config(server);
  complete("a", spec_with({}), cfg);
  ::setenv("EKICL_TEST_KEY", "sk-test", 1);
  cfg.api_key_env = "EKICL_TEST_KEY";
  complete("b", spec_with({}), cfg);
  ::unsetenv("EKICL_TEST_KEY");
  const auto auth = server.auth_headers();
  ASSERT_EQ(auth.size(), 2u);
  EXPECT_EQ(auth[0], "");
  EXPECT_EQ(auth[1], "Bearer sk-test");
}

TEST(Http, SingleInFlightIsSequential) {
  testsupport::MockServer server;
  server.set_delay(20ms);
  auto cfg = http_config(server);
  cfg.max_in_flight = 1;
  const auto out = complete_batch(requests({"a", "b", "c", "d", "e", "f"}), cfg);
  for (const auto& r : out) EXPECT_TRUE(r.ok()) << r.error;
  EXPECT_EQ(server.peak_concurrency(), 1);
}

TEST(Http, ConcurrencyIsBounded) {
  testsupport::MockServer server;
  server.set_delay(50ms);
  auto cfg = http_config(server);
  cfg.max_in_flight = 3;
  std::vector<std::string> prompts;
  for (int i = 0; i < 12; ++i) prompts.push_back("p" + std::to_string(i));
  const auto out = complete_batch(requests(prompts), cfg);
  ASSERT_EQ(out.size(), 12u);
  for (const auto& r : out) EXPECT_TRUE(r.ok()) << r.error;
  EXPECT_LE(server.peak_concurrency(), 3);
  EXPECT_GE(server.peak_concurrency(), 2);
}

TEST(Http, FailingItemReportedInPlace) {
  testsupport::MockServer server;
  auto cfg = http_config(server);
  cfg.max_retries = 1;
  std::vector<std::string> prompts;
  for (int i = 0; i < 10; ++i) prompts.push_back(i == 6 ? "please FAIL" : "ok " + std::to_string(i));
  const auto out = complete_batch(requests(prompts), cfg);
  ASSERT_EQ(out.size(), 10u);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i == 6) {
      EXPECT_FALSE(out[i].ok());
      EXPECT_EQ(out[i].error_kind, ErrorKind::Transport);
      EXPECT_EQ(out[i].error, "http status 500");
    } else {
      EXPECT_TRUE(out[i].ok()) << i;
    }
  }
  // One original attempt plus one retry for the failing prompt.
  EXPECT_EQ(server.bodies().size(), 11u);
}

TEST(Http, RetriesThenSucceeds) {
  testsupport::MockServer server;
  auto cfg = http_config(server);
  const auto c = complete("FLAKY once", spec_with({}), cfg);
  EXPECT_EQ(c.text, "Bad");
  EXPECT_EQ(c.retries, 1);
  cfg.max_retries = 0;
  EXPECT_THROW(complete("FLAKY twice", spec_with({}), cfg), Error);
}

TEST(Http, ClientErrorIsNotRetried) {
  testsupport::MockServer server;
  auto cfg = http_config(server);
  try {
    complete("MISSING", spec_with({}), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Transport);
  }
  EXPECT_EQ(server.bodies().size(), 1u);
}

TEST(Http, TimeoutKind) {
  testsupport::MockServer server;
  auto cfg = http_config(server);
  cfg.timeout = 150ms;
  cfg.max_retries = 0;
  try {
    complete("SLOW", spec_with({}), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Timeout) << e.what();
  }
}

TEST(Http, UnreachableHostIsTransportError) {
  GatewayConfig cfg;
  cfg.backend = Backend::Http;
  cfg.base_url = "http://127.0.0.1:1";
  cfg.max_retries = 0;
  cfg.timeout = 500ms;
  try {
    complete("x", spec_with({}), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Transport);
  }
}
