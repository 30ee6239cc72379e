#include <gtest/gtest.h>

#include <set>

#include "profsim/annotation.hpp"
#include "profsim/error.hpp"
#include "testkit.hpp"

using namespace profsim;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::UnknownSubcommand;
}

std::vector<ProfileRecord> pool(std::size_t n = 4) {
  Rng rng(1);
  std::vector<ProfileRecord> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({"pool-" + std::to_string(i), testkit::random_profile(rng)});
  return out;
}

AnnotationStore::Clock fixed_clock() {
  return [] { return std::string("2024-05-01T10:00:00Z"); };
}

AnnotationConfig config_at(const testkit::TempDir& dir) {
  AnnotationConfig c;
  c.data_dir = dir.path();
  c.seed = 3;
  return c;
}

}  // namespace

TEST(Likert, AcceptsObjectOrArrayOfFive) {
  json obj{{"scores", json::object()}, {"annotator", "e1"}};
  for (std::size_t i = 0; i < 5; ++i) obj["scores"][std::string(kLikertDimensions[i])] = static_cast<int>(i + 1);
  const auto a = likert_from_json("s", obj);
  EXPECT_EQ(a.scores, (std::array<int, 5>{1, 2, 3, 4, 5}));
  EXPECT_EQ(a.annotator, "e1");
  EXPECT_EQ(likert_from_json("s", json{{"scores", {5, 4, 3, 2, 1}}}).scores, (std::array<int, 5>{5, 4, 3, 2, 1}));
  EXPECT_EQ(code_of([] { likert_from_json("s", json{{"scores", {5, 4, 3, 2}}}); }), ErrorCode::ScoreOutOfRange);
  EXPECT_EQ(code_of([] { likert_from_json("s", json{{"scores", {5, 4, 3, 2, 6}}}); }), ErrorCode::ScoreOutOfRange);
  EXPECT_EQ(code_of([] { likert_from_json("s", json{{"scores", {5, 4, 3, 2, 2.5}}}); }), ErrorCode::ScoreOutOfRange);
  obj["scores"].erase(std::string(kLikertDimensions[0]));
  obj["scores"]["Other"] = 3;
  EXPECT_EQ(code_of([&] { likert_from_json("s", obj); }), ErrorCode::ScoreOutOfRange);
}

TEST(Store, PreferenceFlowCommitsTheChosenCandidate) {
  testkit::TempDir dir("annot_flow");
  MockProvider provider(1);
  AnnotationStore store(config_at(dir), pool(), provider, nullptr, fixed_clock());
  const auto s = store.create_session(SessionMode::PreferenceAnnotation);
  EXPECT_EQ(s.status, SessionStatus::Active);

  const auto reply = store.post_message(s.id, "  Hello there  ");
  ASSERT_EQ(reply["candidates"].size(), 2u);
  std::set<std::string> labels;
  for (const auto& c : reply["candidates"]) labels.insert(c["label"].get<std::string>());
  EXPECT_EQ(labels, (std::set<std::string>{"A", "B"}));
  EXPECT_EQ(code_of([&] { store.post_message(s.id, "again"); }), ErrorCode::PendingChoice);
  EXPECT_EQ(code_of([&] { store.record_choice(s.id, 1, "A", "e"); }), ErrorCode::NoPendingPair);
  EXPECT_EQ(code_of([&] { store.record_choice(s.id, 0, "C", "e"); }), ErrorCode::InvalidVerdict);

  const auto pending = store.get_session(s.id).pending;
  ASSERT_TRUE(pending);
  const auto choice = store.record_choice(s.id, 0, "B", "e");
  EXPECT_EQ(choice["text"], pending->b);
  EXPECT_EQ(choice["random_draw"], false);
  const auto st = store.get_session(s.id);
  ASSERT_EQ(st.history.size(), 2u);
  EXPECT_EQ(st.history[0].content, "Hello there");
  EXPECT_EQ(st.history[1].content, pending->b);
  ASSERT_EQ(st.choices.size(), 1u);
  EXPECT_EQ(st.choices[0].prompt.back().content, "Hello there");
  EXPECT_EQ(st.choices[0].prompt.front().role, Role::System);

  store.complete_session(s.id);
  EXPECT_EQ(code_of([&] { store.post_message(s.id, "more"); }), ErrorCode::SessionCompleted);
  EXPECT_EQ(code_of([&] { store.get_session("nope"); }), ErrorCode::SessionNotFound);
}

TEST(Store, TiesDrawTheContinuationDeterministically) {
  std::map<char, int> draws;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    MockProvider provider(1);
    AnnotationConfig cfg;
    cfg.seed = seed;
    AnnotationStore store(cfg, pool(), provider);
    const auto id = store.create_session(SessionMode::PreferenceAnnotation).id;
    store.post_message(id, "hi");
    const auto r = store.record_choice(id, 0, seed % 2 ? "EquallyGood" : "EquallyBad", "e");
    EXPECT_EQ(r["random_draw"], true);
    draws[r["continuation"].get<std::string>()[0]]++;

    MockProvider again(1);
    AnnotationStore twin(cfg, pool(), again);
    const auto id2 = twin.create_session(SessionMode::PreferenceAnnotation).id;
    twin.post_message(id2, "hi");
    EXPECT_EQ(twin.record_choice(id2, 0, seed % 2 ? "EquallyGood" : "EquallyBad", "e")["continuation"],
              r["continuation"]);
  }
  EXPECT_GT(draws['A'], 5);
  EXPECT_GT(draws['B'], 5);
}

TEST(Store, LogsReplayToTheSameStateAndReload) {
  testkit::TempDir dir("annot_replay");
  MockProvider provider(2);
  std::string id;
  SessionState before;
  {
    AnnotationStore store(config_at(dir), pool(), provider, nullptr, fixed_clock());
    id = store.create_session(SessionMode::PreferenceAnnotation).id;
    for (std::size_t t = 0; t < 3; ++t) {
      store.post_message(id, "message " + std::to_string(t));
      store.record_choice(id, t, t == 1 ? "EquallyBad" : "A", "e");
    }
    before = store.get_session(id);
    EXPECT_EQ(replay_session(store.events(id)), before);
  }
  AnnotationStore reloaded(config_at(dir), pool(), provider, nullptr, fixed_clock());
  EXPECT_EQ(reloaded.get_session(id), before);
  EXPECT_NE(reloaded.create_session(SessionMode::Evaluation).id, id);

  auto log = reloaded.events(id);
  std::swap(log[1], log[2]);
  EXPECT_EQ(code_of([&] { replay_session(log); }), ErrorCode::SchemaViolation);
}

TEST(Store, IdempotencyKeysReturnTheFirstResult) {
  MockProvider provider(3);
  AnnotationStore store({}, pool(), provider);
  const auto a = store.create_session(SessionMode::PreferenceAnnotation, "k-create");
  const auto b = store.create_session(SessionMode::PreferenceAnnotation, "k-create");
  EXPECT_EQ(a.id, b.id);
  EXPECT_EQ(store.session_ids().size(), 1u);
  const auto m1 = store.post_message(a.id, "hi", "k-msg");
  const auto m2 = store.post_message(a.id, "hi", "k-msg");
  EXPECT_EQ(m1, m2);
  const auto c1 = store.record_choice(a.id, 0, "A", "e", "k-choice");
  EXPECT_EQ(store.record_choice(a.id, 0, "A", "e", "k-choice"), c1);
  EXPECT_EQ(store.get_session(a.id).history.size(), 2u);
}

TEST(Store, EvaluationModeRepliesDirectlyAndLikertCompletes) {
  MockProvider provider(4);
  AnnotationStore store({}, pool(), provider);
  const auto id = store.create_session(SessionMode::Evaluation).id;
  const auto r = store.post_message(id, "how are you");
  EXPECT_TRUE(r.contains("response"));
  EXPECT_EQ(code_of([&] { store.record_choice(id, 0, "A", "e"); }), ErrorCode::WrongMode);
  LikertSubmission bad{id, {1, 2, 3, 4, 9}, "e"};
  EXPECT_EQ(code_of([&] { store.submit_evaluation(bad); }), ErrorCode::ScoreOutOfRange);
  store.submit_evaluation({id, {5, 4, 4, 3, 5}, "e"});
  EXPECT_EQ(store.get_session(id).status, SessionStatus::Completed);
  EXPECT_EQ(code_of([&] { store.submit_evaluation({id, {5, 4, 4, 3, 5}, "e"}); }), ErrorCode::SessionCompleted);

  const auto pid = store.create_session(SessionMode::PreferenceAnnotation).id;
  EXPECT_EQ(code_of([&] { store.submit_evaluation({pid, {5, 4, 4, 3, 5}, "e"}); }), ErrorCode::WrongMode);

  const auto ex = store.export_evaluations();
  EXPECT_EQ(ex["count"], 1);
  EXPECT_DOUBLE_EQ(ex["means"][std::string(kLikertDimensions[3])].get<double>(), 3.0);
}

TEST(Store, ExportCountsVerdictsAndFeedsIngest) {
  MockProvider provider(5);
  AnnotationStore store({}, pool(), provider, nullptr, fixed_clock());
  const std::vector<std::string> verdicts{"A", "B", "EquallyGood", "EquallyBad", "A"};
  for (int s = 0; s < 2; ++s) {
    const auto id = store.create_session(SessionMode::PreferenceAnnotation).id;
    for (std::size_t t = 0; t < verdicts.size(); ++t) {
      store.post_message(id, "turn " + std::to_string(t));
      store.record_choice(id, t, verdicts[t], "e" + std::to_string(s));
    }
  }
  const auto ex = store.export_preferences();
  ASSERT_EQ(ex.events.size(), 10u);
  EXPECT_EQ(ex.clear, 6u);
  EXPECT_EQ(ex.equally_good, 2u);
  EXPECT_EQ(ex.equally_bad, 2u);
  EXPECT_EQ(ex.summary(), "10 annotations: 60.0% clear preference, 20.0% equally good, 20.0% equally bad");
  for (const auto& e : ex.events) EXPECT_EQ(expert_event_from_json(to_json(e)), e);
  const auto ingested = ingest_expert_annotations(ex.events);
  EXPECT_EQ(ingested.records.size(), 6u);
  EXPECT_EQ(ingested.ties_excluded, 4u);
}

TEST(Store, EmptyPoolIsRejected) {
  MockProvider provider(6);
  AnnotationStore store({}, {}, provider);
  EXPECT_EQ(code_of([&] { store.create_session(SessionMode::PreferenceAnnotation); }), ErrorCode::EmptyPool);
}

TEST(Store, SeparateCandidateProviderIsUsedForB) {
  MockProvider a(7), b(8);
  AnnotationStore store({}, pool(), a, &b);
  const auto id = store.create_session(SessionMode::PreferenceAnnotation).id;
  store.post_message(id, "hi");
  EXPECT_EQ(a.chat_calls(), 1u);
  EXPECT_EQ(b.chat_calls(), 1u);
}
