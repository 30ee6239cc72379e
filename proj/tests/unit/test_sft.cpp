#include <gtest/gtest.h>

#include "profsim/error.hpp"
#include "profsim/sft.hpp"
#include "testkit.hpp"

using namespace profsim;

namespace {

Conversation conv_of(std::initializer_list<std::pair<Speaker, const char*>> turns) {
  Conversation c;
  c.id = "c";
  std::size_t i = 0;
  for (const auto& [s, t] : turns) c.turns.push_back({s, t, i++});
  return c;
}

constexpr auto S = Speaker::Supporter;
constexpr auto C = Speaker::Client;

}  // namespace

TEST(Sessions, ShortConversationIsOneSession) {
  Rng rng(1);
  const auto c = testkit::synthetic_conversation(rng, "a", Source::RED, 40);
  const auto s = plan_sessions(c, 40);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].begin, 0u);
  EXPECT_EQ(s[0].end, 40u);
}

TEST(Sessions, SplitsBeforeASupporterTurnWithinTheLimit) {
  Rng rng(2);
  for (int k = 0; k < 100; ++k) {
    const auto c = testkit::synthetic_conversation(rng, "a", Source::RED, 5 + rng.uniform_index(120));
    const auto s = plan_sessions(c, 10);
    ASSERT_FALSE(s.empty());
    EXPECT_EQ(s.front().begin, 0u);
    EXPECT_EQ(s.back().end, c.turns.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      EXPECT_LE(s[i].end - s[i].begin, 10u);
      EXPECT_GT(s[i].end, s[i].begin);
      if (i > 0) {
        EXPECT_EQ(s[i].begin, s[i - 1].end);
        EXPECT_EQ(c.turns[s[i].begin].speaker, Speaker::Supporter);
      }
    }
  }
  EXPECT_THROW(plan_sessions(testkit::synthetic_conversation(rng, "a", Source::RED, 8), 3), Error);
}

TEST(Sessions, LaterSessionsGetSummaries) {
  Rng rng(3);
  const auto c = testkit::synthetic_conversation(rng, "long", Source::RED, 95);
  MockJudge judge(1);
  const auto split = segment_sessions(c, 40, judge);
  ASSERT_GE(split.sessions.size(), 3u);
  EXPECT_FALSE(split.sessions[0].counseling_history);
  for (std::size_t k = 1; k < split.sessions.size(); ++k) {
    ASSERT_TRUE(split.sessions[k].counseling_history);
    EXPECT_EQ(split.sessions[k].counseling_history->find('\n'), std::string::npos);
  }
  EXPECT_EQ(judge.calls(), split.sessions.size() - 1);

  ScriptedJudge down([](const JudgeRequest&) -> std::string { throw Error(ErrorCode::JudgeUnavailable, "x"); });
  try {
    segment_sessions(c, 40, down);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SummarizerUnavailable);
  }
  ScriptedJudge blank([](const JudgeRequest&) { return std::string("  "); });
  EXPECT_THROW(segment_sessions(c, 40, blank), Error);
  EXPECT_EQ(blank.calls(), 1u + kJudgeRetries);
}

TEST(Summary, PromptContainsEarlierTurns) {
  const auto c = conv_of({{S, "hello"}, {C, "I am sad"}});
  EXPECT_NE(summary_prompt(c.turns).find("Client: I am sad"), std::string::npos);
}

TEST(Record, MapsRolesAndMergesRuns) {
  Rng rng(4);
  const auto profile = testkit::random_profile(rng);
  const auto c = conv_of({{C, "I can't sleep."}, {C, "Again."}, {S, "Tell me more."}, {C, "It's work."}});
  const auto r = build_sft_record(c.turns, profile);
  ASSERT_EQ(r.messages.size(), 5u);
  EXPECT_EQ(r.messages[0].role, Role::System);
  EXPECT_EQ(r.messages[0].content, render_system_prompt(profile));
  EXPECT_EQ(r.messages[1].role, Role::User);
  EXPECT_EQ(r.messages[1].content, kNeutralOpener);
  EXPECT_EQ(r.messages[2].content, "I can't sleep.\nAgain.");
  EXPECT_EQ(r.messages[3].role, Role::User);
  EXPECT_EQ(r.loss_mask, (std::vector<bool>{false, false, true, false, true}));
}

TEST(Record, CounselingHistoryIsRenderedIntoTheSystemPrompt) {
  Rng rng(5);
  auto profile = testkit::random_profile(rng);
  profile.counseling_history.reset();
  const auto c = conv_of({{S, "Hi"}, {C, "Hi."}});
  const auto r = build_sft_record(c.turns, profile, "We talked about\nsleep.");
  auto expected = profile;
  expected.counseling_history = "We talked about sleep.";
  EXPECT_EQ(parse_system_prompt(r.messages[0].content), expected);
}

TEST(Record, ValidatesAndRoundTrips) {
  Rng rng(6);
  for (int k = 0; k < 50; ++k) {
    const auto profile = testkit::random_profile(rng);
    const auto c = testkit::synthetic_conversation(rng, "x", Source::RED, 3 + rng.uniform_index(60));
    for (const auto& s : plan_sessions(c, 40)) {
      auto r = build_sft_record(std::span(c.turns).subspan(s.begin, s.end - s.begin), profile);
      r.id = "x#s1";
      EXPECT_NO_THROW(validate_chat_record(r));
      EXPECT_EQ(chat_record_from_json(to_json(r)), r);
    }
  }
  EXPECT_THROW(build_sft_record({}, testkit::random_profile(rng)), Error);
  EXPECT_THROW(build_sft_record(conv_of({{S, "a"}, {C, "b"}}).turns, PsychologicalProfile::blank()), Error);

  ChatRecord bad;
  bad.messages = {{Role::User, "hi"}, {Role::Assistant, "hey"}};
  bad.loss_mask = {false, true};
  EXPECT_THROW(validate_chat_record(bad), Error);
  bad.messages.insert(bad.messages.begin(), {Role::System, "sys"});
  bad.loss_mask = {false, true, true};
  EXPECT_THROW(validate_chat_record(bad), Error);
}
