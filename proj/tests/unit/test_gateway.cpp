#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "profsim/error.hpp"
#include "profsim/gateway.hpp"
#include "profsim/judge.hpp"

using namespace profsim;

namespace {

const std::vector<ChatMessage> kPrompt{{Role::System, "You are a client."}, {Role::User, "How are you?"}};

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::UnknownSubcommand;
}

// Chat-completions stand-in whose behaviour is switched per test.
class FakeEndpoint {
 public:
  enum class Mode { Ok, RateLimit, ServerError, NotJson, NoLogprobs, FailTwiceThenOk, BadRequest };

  FakeEndpoint() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits_;
      last_auth_ = req.get_header_value("Authorization");
      last_idem_ = req.get_header_value("Idempotency-Key");
      const auto body = json::parse(req.body);
      switch (mode_.load()) {
        case Mode::RateLimit: res.status = 429; return;
        case Mode::ServerError: res.status = 503; return;
        case Mode::BadRequest: res.status = 400; return;
        case Mode::NotJson: res.set_content("<html>", "text/html"); return;
        case Mode::FailTwiceThenOk:
          if (hits_ <= 2) {
            res.status = 500;
            return;
          }
          break;
        default: break;
      }
      json choice{{"message", {{"role", "assistant"}, {"content", "reply to " + body["messages"].back()["content"].get<std::string>()}}}};
      if (body.value("logprobs", false) && mode_ != Mode::NoLogprobs) {
        choice["logprobs"]["content"] = json::array({{{"token", "I"}, {"logprob", -0.5}}, {{"token", "am"}, {"logprob", -1.5}}});
      }
      res.set_content(json{{"choices", json::array({choice})}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }

  HttpProviderConfig config() const {
    HttpProviderConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port_);
    c.model = "m";
    c.api_key_env = "PROFSIM_TEST_KEY";
    c.max_retries = 2;
    c.initial_backoff_ms = 1;
    c.timeout_s = 5;
    return c;
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<Mode> mode_{Mode::Ok};
  std::atomic<int> hits_{0};
  std::string last_auth_;
  std::string last_idem_;
};

class HttpProviderTest : public ::testing::Test {
 protected:
  void SetUp() override { ::setenv("PROFSIM_TEST_KEY", "secret", 1); }
  FakeEndpoint ep;
};

}  // namespace

TEST(Decoding, DefaultsValidateAndRoundTrip) {
  DecodingConfig c;
  EXPECT_NO_THROW(c.validate());
  c.sample_seed = 9;
  c.top_p = 0.5;
  EXPECT_EQ(decoding_config_from_json(to_json(c)), c);
  c.top_p = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.eos_decay_factor = 0.9;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Mock, DeterministicAndSeedSensitive) {
  MockProvider a(1), b(1), c(2);
  DecodingConfig cfg;
  EXPECT_EQ(a.chat(kPrompt, cfg), b.chat(kPrompt, cfg));
  int differ = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    cfg.sample_seed = s;
    differ += a.chat(kPrompt, cfg) != c.chat(kPrompt, cfg);
  }
  EXPECT_GT(differ, 10);
  EXPECT_EQ(a.chat_calls(), 21u);
}

TEST(Mock, ScoresAreValidAndPromptBound) {
  MockProvider p(3);
  const auto s = p.score(kPrompt, "I am fine thanks");
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(s.tokens.size(), 4u);
  EXPECT_EQ(s.prompt_fingerprint, prompt_fingerprint(kPrompt));
  EXPECT_EQ(s, p.score(kPrompt, "I am fine thanks"));
  auto other = kPrompt;
  other[0].content = "You are someone else.";
  EXPECT_NE(p.score(other, "I am fine thanks").logprobs, s.logprobs);
  EXPECT_EQ(code_of([&] { p.score(kPrompt, "   "); }), ErrorCode::EmptySequence);
  std::vector<ChatMessage> no_system{{Role::User, "hi"}};
  EXPECT_EQ(code_of([&] { p.chat(no_system, {}); }), ErrorCode::InvalidArgument);
}

TEST(Bodies, ChatAndScoreRequestShapes) {
  HttpProviderConfig c;
  c.model = "sim";
  HttpProvider p(c);
  DecodingConfig d;
  d.sample_seed = 5;
  const auto chat = p.chat_body(kPrompt, d);
  EXPECT_EQ(chat["model"], "sim");
  EXPECT_EQ(chat["messages"].size(), 2u);
  EXPECT_EQ(chat["seed"], 5);
  EXPECT_FALSE(chat.contains("eos_bias"));
  c.logit_processing = true;
  EXPECT_TRUE(HttpProvider(c).chat_body(kPrompt, d).contains("eos_decay_factor"));

  const auto score = p.score_body(kPrompt, "I am tired");
  EXPECT_EQ(score["messages"].back()["role"], "assistant");
  EXPECT_EQ(score["messages"].back()["content"], "I am tired");
  EXPECT_EQ(score["echo"], true);
  EXPECT_EQ(score["max_tokens"], 0);
}

TEST(Parsing, ResponsesAndTheirFailureModes) {
  EXPECT_EQ(extract_chat_text(json::parse(R"({"choices":[{"message":{"content":"hi"}}]})")), "hi");
  EXPECT_EQ(code_of([] { extract_chat_text(json::parse(R"({"choices":[]})")); }), ErrorCode::MalformedResponse);
  EXPECT_EQ(code_of([] { extract_token_logprobs(json::parse(R"({"choices":[{"message":{}}]})")); }),
            ErrorCode::ScoringUnsupported);
  EXPECT_EQ(code_of([] {
              extract_token_logprobs(json::parse(R"({"choices":[{"logprobs":{"content":[{"token":"a","logprob":0.5}]}}]})"));
            }),
            ErrorCode::MalformedResponse);
  const auto seq = extract_token_logprobs(
      json::parse(R"({"choices":[{"logprobs":{"content":[{"token":"a","logprob":-0.25},{"token":"b","logprob":-1}]}}]})"));
  EXPECT_EQ(seq.tokens, (std::vector<std::string>{"a", "b"}));
  EXPECT_DOUBLE_EQ(seq.logprobs[1], -1.0);
}

TEST_F(HttpProviderTest, ChatAndScoreAgainstLocalEndpoint) {
  HttpProvider p(ep.config());
  EXPECT_EQ(p.chat(kPrompt, {}), "reply to How are you?");
  EXPECT_EQ(ep.last_auth_, "Bearer secret");
  EXPECT_EQ(ep.last_idem_.size(), 32u);
  const auto s = p.score(kPrompt, "I am");
  EXPECT_EQ(s.logprobs, (std::vector<double>{-0.5, -1.5}));
  EXPECT_EQ(s.prompt_fingerprint, prompt_fingerprint(kPrompt));
}

TEST_F(HttpProviderTest, RetriesTransientFailures) {
  ep.mode_ = FakeEndpoint::Mode::FailTwiceThenOk;
  HttpProvider p(ep.config());
  EXPECT_EQ(p.chat(kPrompt, {}), "reply to How are you?");
  EXPECT_EQ(ep.hits_.load(), 3);
}

TEST_F(HttpProviderTest, MapsPersistentFailuresToCodes) {
  HttpProvider p(ep.config());
  ep.mode_ = FakeEndpoint::Mode::RateLimit;
  EXPECT_EQ(code_of([&] { p.chat(kPrompt, {}); }), ErrorCode::RateLimited);
  EXPECT_EQ(ep.hits_.load(), 3);
  ep.mode_ = FakeEndpoint::Mode::ServerError;
  EXPECT_EQ(code_of([&] { p.chat(kPrompt, {}); }), ErrorCode::EndpointUnreachable);
  ep.mode_ = FakeEndpoint::Mode::BadRequest;
  EXPECT_EQ(code_of([&] { p.chat(kPrompt, {}); }), ErrorCode::EndpointUnreachable);
  ep.mode_ = FakeEndpoint::Mode::NotJson;
  EXPECT_EQ(code_of([&] { p.chat(kPrompt, {}); }), ErrorCode::MalformedResponse);
  ep.mode_ = FakeEndpoint::Mode::NoLogprobs;
  EXPECT_EQ(code_of([&] { p.score(kPrompt, "I am"); }), ErrorCode::ScoringUnsupported);
}

TEST_F(HttpProviderTest, MissingCredentialOrHostIsUnreachable) {
  auto c = ep.config();
  c.api_key_env = "PROFSIM_TEST_KEY_UNSET";
  ::unsetenv("PROFSIM_TEST_KEY_UNSET");
  EXPECT_EQ(code_of([&] { HttpProvider(c).chat(kPrompt, {}); }), ErrorCode::EndpointUnreachable);
  EXPECT_EQ(ep.hits_.load(), 0);
  c = ep.config();
  c.base_url = "http://127.0.0.1:9";
  c.max_retries = 0;
  EXPECT_EQ(code_of([&] { HttpProvider(c).chat(kPrompt, {}); }), ErrorCode::EndpointUnreachable);
}

TEST(ProviderJudgeTest, MapsGatewayErrorsToJudgeUnavailable) {
  HttpProviderConfig c;
  c.base_url = "http://127.0.0.1:9";
  c.api_key_env = "PROFSIM_TEST_KEY_UNSET";
  HttpProvider p(c);
  ProviderJudge j(p, {});
  EXPECT_EQ(code_of([&] { j.ask({JudgeTask::Rate, "", "rate this", 0}); }), ErrorCode::JudgeUnavailable);
}
