#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "profsim/dpo.hpp"
#include "profsim/error.hpp"
#include "profsim/preference.hpp"
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

struct Dataset {
  std::vector<Conversation> conversations;
  std::vector<ProfileRecord> profiles;
};

Dataset dataset(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "c" + std::to_string(100 + i);
    d.conversations.push_back(testkit::synthetic_conversation(rng, id, Source::Synthetic, 6 + rng.uniform_index(30)));
    d.profiles.push_back({id, testkit::random_profile(rng)});
  }
  return d;
}

}  // namespace

TEST(Terciles, SizesDifferByAtMostOneAndCoverTheRange) {
  for (std::size_t n = 0; n < 50; ++n) {
    const auto b = tercile_bounds(n);
    EXPECT_EQ(b[0].first, 0u);
    EXPECT_EQ(b[2].second, n);
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_EQ(b[k].second - b[k].first, n / 3 + (k < n % 3 ? 1 : 0));
      if (k > 0) EXPECT_EQ(b[k].first, b[k - 1].second);
    }
  }
}

TEST(Contexts, PositionsAreClientTurnsAfterSupporterTurns) {
  Rng rng(1);
  for (int k = 0; k < 50; ++k) {
    const auto c = testkit::synthetic_conversation(rng, "x", Source::RED, 2 + rng.uniform_index(40));
    std::vector<std::size_t> brute;
    for (std::size_t i = 1; i < c.turns.size(); ++i) {
      if (c.turns[i].speaker == Speaker::Client && c.turns[i - 1].speaker == Speaker::Supporter) brute.push_back(i);
    }
    EXPECT_EQ(client_response_positions(c), brute);
  }
}

TEST(Contexts, OnePerNonEmptyTercileEndingWithSupporterTurn) {
  Rng rng(2);
  for (int k = 0; k < 60; ++k) {
    const auto c = testkit::synthetic_conversation(rng, "conv" + std::to_string(k), Source::RED, 4 + rng.uniform_index(50));
    const auto profile = testkit::random_profile(rng);
    const auto positions = client_response_positions(c);
    const auto ctxs = sample_turn_contexts(c, profile, 9);
    EXPECT_EQ(ctxs.size(), std::min<std::size_t>(3, positions.size()));
    const auto bounds = tercile_bounds(positions.size());
    for (const auto& ctx : ctxs) {
      const auto [b, e] = bounds[static_cast<std::size_t>(ctx.section)];
      const auto it = std::find(positions.begin() + b, positions.begin() + e, ctx.cut_index);
      EXPECT_NE(it, positions.begin() + e);
      EXPECT_EQ(ctx.messages.front().content, render_system_prompt(profile));
      EXPECT_EQ(ctx.messages.back().role, Role::User);
      EXPECT_EQ(turn_context_from_json(to_json(ctx)), ctx);
    }
    EXPECT_EQ(ctxs, sample_turn_contexts(c, profile, 9));
  }
  Conversation clients_only;
  clients_only.id = "q";
  clients_only.turns = {{Speaker::Client, "a", 0}, {Speaker::Client, "b", 1}};
  EXPECT_EQ(code_of([&] { sample_turn_contexts(clients_only, testkit::random_profile(rng), 1); }),
            ErrorCode::NoSampleableTurns);
}

TEST(Candidates, OnlyTheSystemMessageDiffers) {
  Rng rng(3);
  const auto c = testkit::synthetic_conversation(rng, "c", Source::RED, 12);
  const auto profile = testkit::random_profile(rng);
  const auto noisy = perturb_profile(profile, 0.3, 4).noisy;
  const auto ctx = sample_turn_contexts(c, profile, 1).at(0);
  std::vector<std::vector<ChatMessage>> seen;
  struct Spy : Provider {
    MockProvider inner{1};
    std::vector<std::vector<ChatMessage>>* seen;
    explicit Spy(std::vector<std::vector<ChatMessage>>* s) : seen(s) {}
    std::string chat(std::span<const ChatMessage> m, const DecodingConfig& cfg) override {
      seen->emplace_back(m.begin(), m.end());
      return inner.chat(m, cfg);
    }
    TokenLogprobSeq score(std::span<const ChatMessage> p, std::string_view r) override { return inner.score(p, r); }
    std::string name() const override { return "spy"; }
  } spy(&seen);
  generate_candidate_pair(ctx, profile, noisy, spy, {});
  ASSERT_EQ(seen.size(), 2u);
  EXPECT_EQ(seen[0].front().content, render_system_prompt(profile));
  EXPECT_EQ(seen[1].front().content, render_system_prompt(noisy));
  EXPECT_TRUE(std::equal(seen[0].begin() + 1, seen[0].end(), seen[1].begin() + 1, seen[1].end()));
}

TEST(Adherence, ScoreIsCompliantShareOverApplicable) {
  Rng rng(4);
  for (int k = 0; k < 200; ++k) {
    std::vector<std::pair<std::string, Verdict>> v;
    int yes = 0, no = 0;
    for (int i = 0; i < 10; ++i) {
      const auto r = static_cast<Verdict>(rng.uniform_index(3));
      yes += r == Verdict::Compliant;
      no += r == Verdict::NonCompliant;
      v.emplace_back("a" + std::to_string(i), r);
    }
    const auto rep = make_adherence_report(v);
    EXPECT_DOUBLE_EQ(rep.score, yes + no == 0 ? 1.0 : double(yes) / double(yes + no));
    EXPECT_EQ(rep.full_match, no == 0);
  }
}

TEST(Adherence, CallsTheJudgeOncePerIdentifiedAttribute) {
  Rng rng(5);
  const auto c = testkit::synthetic_conversation(rng, "c", Source::RED, 12);
  auto profile = testkit::random_profile(rng);
  profile.name.reset();
  const auto ctx = sample_turn_contexts(c, profile, 1).at(0);
  std::set<std::string> asked;
  ScriptedJudge judge([&](const JudgeRequest& r) {
    asked.insert(r.attribute);
    if (r.attribute == "situation") return std::string("gibberish");
    return std::string(r.attribute.rfind("symptoms.", 0) == 0 ? "Inconsistent" : "Consistent.");
  });
  const auto rep = adherence_score("I feel tired.", ctx, profile, judge);
  std::size_t identified = 0;
  for (const auto& path : adherence_paths()) identified += describe_attribute(profile, path).has_value();
  EXPECT_EQ(asked.size(), identified);
  EXPECT_FALSE(asked.count("name"));
  EXPECT_EQ(rep.verdicts.size(), adherence_paths().size());
  EXPECT_EQ(rep.warnings.size(), 1u);
  EXPECT_EQ(judge.calls(), identified + kJudgeRetries);
  EXPECT_EQ(parse_verdict("Not applicable"), Verdict::NotApplicable);
  EXPECT_EQ(parse_verdict("inconsistent, because"), Verdict::NonCompliant);
  EXPECT_EQ(parse_verdict("perhaps"), std::nullopt);
}

TEST(Run, FilterDecisionsMatchAnIndependentRecomputation) {
  const auto d = dataset(12, 6);
  MockProvider provider(2);
  MockJudge judge(3);
  PreferenceConfig cfg;
  cfg.seed = 11;
  cfg.concurrency = 3;
  const auto run = run_preference_generation(d.conversations, d.profiles, provider, judge, cfg);
  ASSERT_FALSE(run.candidates.empty());
  EXPECT_TRUE(run.failures.empty());
  std::size_t kept = 0;
  for (const auto& r : run.candidates) {
    const bool expect = r.s_o > r.s_n && r.p_avg_o / r.p_avg_n < cfg.tau;
    EXPECT_EQ(r.kept, expect);
    EXPECT_EQ(r.drop_reason.has_value(), !expect);
    if (r.drop_reason == DropReason::AdherenceTie) EXPECT_LE(r.s_o, r.s_n);
    EXPECT_NEAR(r.ratio, r.p_avg_o / r.p_avg_n, 1e-12);
    EXPECT_FALSE(r.diff.changed.empty());
    EXPECT_EQ(candidate_record_from_json(to_json(r)), r);
    const auto pref = preference_record(r);
    EXPECT_EQ(pref["meta"]["source"], "model");
    kept += r.kept;
  }
  EXPECT_EQ(run.kept_count(), kept);
  for (std::size_t i = 1; i < run.candidates.size(); ++i) {
    const auto& a = run.candidates[i - 1].context;
    const auto& b = run.candidates[i].context;
    EXPECT_TRUE(a.conversation_id < b.conversation_id ||
                (a.conversation_id == b.conversation_id && a.section < b.section));
  }
}

TEST(Run, DeterministicAcrossConcurrency) {
  const auto d = dataset(8, 7);
  PreferenceConfig cfg;
  cfg.seed = 5;
  auto once = [&](int threads) {
    MockProvider provider(2);
    MockJudge judge(3);
    cfg.concurrency = threads;
    return run_preference_generation(d.conversations, d.profiles, provider, judge, cfg).candidates;
  };
  EXPECT_EQ(once(1), once(4));
}

TEST(Run, DataProblemsAreCollectedAndOutagesAbort) {
  auto d = dataset(4, 8);
  d.profiles.pop_back();
  d.conversations[1].turns = {{Speaker::Client, "alone", 0}};
  MockProvider provider(2);
  MockJudge judge(3);
  const auto run = run_preference_generation(d.conversations, d.profiles, provider, judge, {});
  ASSERT_EQ(run.failures.size(), 2u);
  EXPECT_EQ(run.failures[0].code, ErrorCode::NoSampleableTurns);
  EXPECT_EQ(run.failures[1].code, ErrorCode::InvalidProfile);

  ScriptedJudge down([](const JudgeRequest&) -> std::string { throw Error(ErrorCode::JudgeUnavailable, "x"); });
  EXPECT_EQ(code_of([&] { run_preference_generation(d.conversations, d.profiles, provider, down, {}); }),
            ErrorCode::JudgeUnavailable);
  PreferenceConfig bad;
  bad.noise_ratio = 0.0;
  EXPECT_EQ(code_of([&] { run_preference_generation(d.conversations, d.profiles, provider, judge, bad); }),
            ErrorCode::InvalidArgument);
}

namespace {

ExpertAnnotationEvent event(std::string session, std::size_t turn, ExpertVerdict v, std::string annotator) {
  ExpertAnnotationEvent e;
  e.session_id = std::move(session);
  e.turn = turn;
  e.candidate_a = "answer a";
  e.candidate_b = "answer b";
  e.verdict = v;
  const bool tie = v == ExpertVerdict::EquallyGood || v == ExpertVerdict::EquallyBad;
  e.random_draw = tie;
  e.continuation_choice = v == ExpertVerdict::B ? 'B' : 'A';
  e.annotator = std::move(annotator);
  e.prompt = {{Role::System, "profile"}, {Role::User, "hello"}};
  return e;
}

}  // namespace

TEST(Expert, ClearVerdictsBecomePairsAndFiltersCount) {
  std::vector<ExpertAnnotationEvent> events{
      event("s1", 0, ExpertVerdict::A, "x"),          event("s1", 1, ExpertVerdict::B, "x"),
      event("s1", 2, ExpertVerdict::EquallyGood, "x"), event("s2", 0, ExpertVerdict::A, "y"),
      event("s3", 0, ExpertVerdict::B, "x"),
  };
  const auto all = ingest_expert_annotations(events);
  ASSERT_EQ(all.records.size(), 4u);
  EXPECT_EQ(all.ties_excluded, 1u);
  EXPECT_EQ(all.records[0]["chosen"], "answer a");
  EXPECT_EQ(all.records[1]["chosen"], "answer b");
  EXPECT_EQ(all.records[1]["rejected"], "answer a");
  EXPECT_EQ(all.records[0]["meta"]["source"], "expert");

  ExpertFilterConfig cfg;
  cfg.excluded_annotators = {"y"};
  cfg.min_session_turns = 2;
  const auto filtered = ingest_expert_annotations(events, cfg);
  EXPECT_EQ(filtered.records.size(), 2u);
  EXPECT_EQ(filtered.annotator_excluded, 1u);
  EXPECT_EQ(filtered.short_session_excluded, 1u);
  EXPECT_EQ(filtered.input_events, 5u);

  events[0].prompt.clear();
  EXPECT_EQ(code_of([&] { ingest_expert_annotations(events); }), ErrorCode::UnresolvableSession);
}

TEST(Expert, EventJsonEnforcesTieDrawConsistency) {
  const auto e = event("s", 3, ExpertVerdict::EquallyBad, "z");
  EXPECT_EQ(expert_event_from_json(to_json(e)), e);
  auto j = to_json(e);
  j["random_draw"] = false;
  EXPECT_EQ(code_of([&] { expert_event_from_json(j); }), ErrorCode::SchemaViolation);
  j = to_json(event("s", 0, ExpertVerdict::A, "z"));
  j["continuation_choice"] = "B";
  EXPECT_EQ(code_of([&] { expert_event_from_json(j); }), ErrorCode::SchemaViolation);
  j["verdict"] = "Both";
  EXPECT_EQ(code_of([&] { expert_event_from_json(j); }), ErrorCode::InvalidVerdict);
}

TEST(Expert, FixtureEventsParse) {
  const auto text = read_text_file(testkit::fixtures_dir() / "expert_events.jsonl");
  std::vector<ExpertAnnotationEvent> events;
  for (const auto& line : split_lines(text)) {
    if (!line.empty()) events.push_back(expert_event_from_json(json::parse(line)));
  }
  ASSERT_EQ(events.size(), 10u);
  const auto r = ingest_expert_annotations(events);
  EXPECT_EQ(r.records.size() + r.ties_excluded, events.size());
}
