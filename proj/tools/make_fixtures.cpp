// Regenerates the checked-in fixture set: make_fixtures [out_dir]

#include <fmt/format.h>

#include <iostream>

#include "profsim/annotation.hpp"
#include "profsim/corpus.hpp"
#include "testkit.hpp"

using namespace profsim;

namespace {

void write_corpus_fixture(const std::filesystem::path& dir) {
  Rng rng(20240501);
  std::vector<Conversation> convs;
  for (int i = 0; i < 50; ++i) {
    Source source = i < 20 ? Source::RED : i < 35 ? Source::ESC : Source::Synthetic;
    // every eighth conversation runs past one session
    const std::size_t turns = i % 8 == 5 ? 44 + rng.uniform_index(30) : 8 + rng.uniform_index(24);
    auto c = testkit::synthetic_conversation(rng, fmt::format("conv-{:03d}", i), source, turns);
    if (source == Source::ESC) c.labels["problem_type"] = i % 5 == 0 ? "job crisis" : "depression";
    convs.push_back(std::move(c));
  }
  write_corpus(dir / "corpus_50.jsonl", convs);
}

void write_profile_fixtures(const std::filesystem::path& dir) {
  Rng rng(77);
  std::vector<ProfileRecord> eval;
  const DepressionSeverity levels[] = {DepressionSeverity::Severe, DepressionSeverity::Moderate,
                                       DepressionSeverity::Mild};
  for (int i = 0; i < 12; ++i) {
    eval.push_back({fmt::format("eval-{:02d}", i + 1), testkit::random_profile(rng, levels[i / 4])});
  }
  write_profiles(dir / "eval_profiles.jsonl", eval);

  std::vector<ProfileRecord> pool;
  for (int i = 0; i < 6; ++i) pool.push_back({fmt::format("pool-{:02d}", i + 1), testkit::random_profile(rng)});
  write_profiles(dir / "profile_pool.jsonl", pool);

  std::vector<ProfileRecord> three;
  for (int i = 0; i < 3; ++i) three.push_back({fmt::format("p{}", i + 1), testkit::random_profile(rng)});
  write_profiles(dir / "profiles_3.jsonl", three);
}

void write_expert_fixture(const std::filesystem::path& dir) {
  testkit::TempDir data("fixture_annotation");
  MockProvider provider(11);
  int tick = 0;
  AnnotationStore store({data.path(), 11, {}}, read_profiles(dir / "profile_pool.jsonl"), provider, nullptr,
                        [&] { return fmt::format("2024-05-01T10:{:02d}:00Z", tick++ % 60); });
  const char* verdicts[] = {"A", "B", "EquallyGood", "A", "EquallyBad", "B"};
  const char* annotators[] = {"expert-1", "expert-2", "expert-3"};
  const char* openers[] = {"Hi, what brings you here today?", "How has your week been?",
                           "Tell me a bit about how you are feeling.", "What would you like to talk about?",
                           "How did that make you feel?", "What happened next?"};
  int v = 0;
  for (int s = 0; s < 3; ++s) {
    const auto id = store.create_session(SessionMode::PreferenceAnnotation).id;
    const std::size_t turns = s == 2 ? 2 : 4;
    for (std::size_t t = 0; t < turns; ++t) {
      const auto reply = store.post_message(id, openers[(s + t) % 6]);
      store.record_choice(id, reply["turn"].get<std::size_t>(), verdicts[v++ % 6], annotators[s]);
    }
    store.complete_session(id);
  }
  std::vector<json> rows;
  for (const auto& e : store.export_preferences().events) rows.push_back(to_json(e));
  write_jsonl(dir / "expert_events.jsonl", rows);
}

void write_pipeline_config(const std::filesystem::path& dir) {
  json cfg{
      {"seed", 7},
      {"concurrency", 4},
      {"inputs", {{{"path", "corpus_50.jsonl"}}}},
      {"work_dir", "work"},
      {"max_turns", 40},
      {"rebalance", {{"stratum_key", "depression_severity"}, {"caps", {{"Minimal", 4}}}}},
      {"noise_ratio", 0.3},
      {"tau", 2.0},
      {"beta", 0.1},
      {"endpoints",
       {{"simulator", {{"base_url", "http://127.0.0.1:9"}, {"model", "profsim-sim"}, {"max_retries", 0}}},
        {"judge", {{"base_url", "http://127.0.0.1:9"}, {"model", "profsim-judge"}, {"max_retries", 0}}}}},
      {"eval_profiles", "eval_profiles.jsonl"},
      {"profile_pool", "profile_pool.jsonl"},
      {"expert", {{"events", "expert_events.jsonl"}}},
      {"annotation", {{"data_dir", "annotation_data"}}},
  };
  write_text_file(dir / "pipeline.json", cfg.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path dir = argc > 1 ? argv[1] : "fixtures";
  try {
    std::filesystem::create_directories(dir);
    write_corpus_fixture(dir);
    write_profile_fixtures(dir);
    write_expert_fixture(dir);
    write_pipeline_config(dir);
  } catch (const std::exception& e) {
    std::cerr << "make_fixtures: " << e.what() << "\n";
    return 1;
  }
  std::cout << "fixtures written to " << dir.string() << "\n";
  return 0;
}
