// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.
#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "profsim/annotation.hpp"
#include "profsim/corpus.hpp"
#include "profsim/dpo.hpp"
#include "profsim/error.hpp"
#include "profsim/extraction.hpp"
#include "profsim/filter.hpp"
#include "profsim/interviewer.hpp"
#include "profsim/pipeline.hpp"
#include "profsim/preference.hpp"
#include "profsim/profile.hpp"
#include "testkit.hpp"

using namespace profsim;

namespace {

// Collects failed expectations of one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    failed_ |= !ok;
  }
  bool failed() const { return failed_; }
  std::string detail() const {
    std::string out;
    for (const auto& f : failures_) out += (out.empty() ? "" : "; ") + f;
    return out;
  }

 private:
  bool failed_ = false;
  std::vector<std::string> failures_;
};

struct Criterion {
  int number;
  std::string title;
  double budget_s;
  std::function<void(Check&)> body;
};

// ---- 1 --------------------------------------------------------------------

void zero_margin_identity(Check& c) {
  Rng rng(101);
  std::vector<ScoredPair> batch;
  for (int i = 0; i < 64; ++i) {
    const double lc = -50.0 * rng.uniform01(), lr = -50.0 * rng.uniform01();
    batch.push_back({lc, lc, lr, lr});
  }
  for (double beta : {0.01, 0.1, 1.0, 5.0}) {
    const double loss = dpo_loss(batch, {beta});
    c.expect(std::abs(loss - std::log(2.0)) < 1e-9, fmt::format("policy = reference gives {} at beta {}", loss, beta));
  }
  for (int i = 0; i < 1000; ++i) {
    const double beta = 0.01 + rng.uniform01();
    const double delta = 40.0 * (rng.uniform01() - 0.5);
    const ScoredPair p{delta, 0.0, 0.0, 0.0};
    const ScoredPair p2{2.0 * delta, 0.0, 0.0, 0.0};
    const double a = dpo_loss(std::span(&p, 1), {2.0 * beta});
    const double b = dpo_loss(std::span(&p2, 1), {beta});
    c.expect(a == b, fmt::format("scale law: loss(2b, d) = {} but loss(b, 2d) = {}", a, b));
  }
}

// ---- 2 --------------------------------------------------------------------

// Toy model: every log-probability is linear in a shared parameter vector.
struct ToyModel {
  static constexpr std::size_t kDim = 6;
  std::vector<std::array<double, kDim>> x_chosen, x_rejected;
  std::vector<double> ref_chosen, ref_rejected;

  std::vector<ScoredPair> pairs(const std::array<double, kDim>& theta) const {
    std::vector<ScoredPair> out;
    for (std::size_t i = 0; i < x_chosen.size(); ++i) {
      double pc = 0, pr = 0;
      for (std::size_t k = 0; k < kDim; ++k) pc += theta[k] * x_chosen[i][k], pr += theta[k] * x_rejected[i][k];
      out.push_back({pc, ref_chosen[i], pr, ref_rejected[i]});
    }
    return out;
  }
};

void gradient_check(Check& c) {
  Rng rng(202);
  const DpoConfig cfg{0.1};
  for (int point = 0; point < 100; ++point) {
    ToyModel m;
    for (int i = 0; i < 8; ++i) {
      std::array<double, ToyModel::kDim> xc{}, xr{};
      for (auto& v : xc) v = 4.0 * (rng.uniform01() - 0.5);
      for (auto& v : xr) v = 4.0 * (rng.uniform01() - 0.5);
      m.x_chosen.push_back(xc);
      m.x_rejected.push_back(xr);
      m.ref_chosen.push_back(-10.0 * rng.uniform01());
      m.ref_rejected.push_back(-10.0 * rng.uniform01());
    }
    std::array<double, ToyModel::kDim> theta{};
    for (auto& v : theta) v = 6.0 * (rng.uniform01() - 0.5);

    const auto g = dpo_loss_gradient(m.pairs(theta), cfg);
    std::array<double, ToyModel::kDim> analytic{};
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (std::size_t k = 0; k < ToyModel::kDim; ++k) {
        analytic[k] += g[i].logp_policy_chosen * m.x_chosen[i][k] + g[i].logp_policy_rejected * m.x_rejected[i][k];
      }
    }
    const double h = 1e-5;
    double num = 0, den = 0;
    for (std::size_t k = 0; k < ToyModel::kDim; ++k) {
      auto up = theta, down = theta;
      up[k] += h;
      down[k] -= h;
      const double fd = (dpo_loss(m.pairs(up), cfg) - dpo_loss(m.pairs(down), cfg)) / (2 * h);
      num += (fd - analytic[k]) * (fd - analytic[k]);
      den += analytic[k] * analytic[k];
    }
    const double rel = std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
    c.expect(rel < 1e-4, fmt::format("point {}: relative error {:.3g}", point, rel));
  }
}

// ---- 3 --------------------------------------------------------------------

void probability_and_filter_oracle(Check& c) {
  Rng rng(303);
  for (int i = 0; i < 1000; ++i) {
    TokenLogprobSeq seq;
    const std::size_t n = 1 + rng.uniform_index(200);
    for (std::size_t k = 0; k < n; ++k) {
      seq.tokens.push_back("t");
      seq.logprobs.push_back(-8.0 * rng.uniform01());
    }
    double sum = 0;
    for (double v : seq.logprobs) sum += v;
    const double expected = std::exp(sum / static_cast<double>(n));
    const double got = avg_token_prob(seq);
    c.expect(std::abs(got - expected) <= 1e-12, fmt::format("seq {}: {} vs {}", i, got, expected));
  }
  auto oracle = [](double so, double sn, double po, double pn, double tau) { return so > sn && po / pn < tau; };
  for (int i = 0; i < 1000; ++i) {
    const double so = static_cast<double>(rng.uniform_index(11)) / 10.0;
    const double sn = static_cast<double>(rng.uniform_index(11)) / 10.0;
    const double pn = 0.01 + rng.uniform01();
    const double po = rng.uniform_index(5) == 0 ? 2.0 * pn : pn * 4.0 * rng.uniform01();
    const auto d = filter_pair(so, sn, po, pn, 2.0);
    c.expect(d.kept == oracle(so, sn, po, pn, 2.0), fmt::format("filter({}, {}, {}, {})", so, sn, po, pn));
  }
  const auto tie = filter_pair(0.8, 0.8, 0.3, 0.3, 2.0);
  c.expect(!tie.kept && tie.reason == DropReason::AdherenceTie, "S_o = S_n must be dropped as a tie");
  const auto edge = filter_pair(1.0, 0.5, 0.5, 0.25, 2.0);
  c.expect(!edge.kept && edge.reason == DropReason::RatioExceeded, "ratio = tau = 2 must be dropped");
  c.expect(filter_pair(1.0, 0.5, 0.5, 0.2500001, 2.0).kept, "ratio just under tau must be kept");
}

// ---- 4 --------------------------------------------------------------------

void perturbation_law(Check& c) {
  Rng rng(404);
  for (int i = 0; i < 500; ++i) {
    const auto p = testkit::random_profile(rng);
    const auto eligible = eligible_attributes(p).size();
    const auto want = std::max<std::size_t>(1, (3 * eligible + 5) / 10);
    const auto original = profile_to_json(p);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto r = perturb_profile(p, 0.3, seed * 7919 + i);
      c.expect(r.diff.changed.size() == want,
               fmt::format("profile {} seed {}: {} changes, expected {}", i, seed, r.diff.changed.size(), want));
      c.expect(validate_profile(r.noisy).empty(), "perturbed profile left the domain");
      auto a = original, b = profile_to_json(r.noisy);
      for (const auto& ch : r.diff.changed) {
        const auto attr = attribute_from_path(ch.path);
        c.expect(attr && get_label(p, *attr) != get_label(r.noisy, *attr), ch.path + " did not change");
        const auto dot = ch.path.find('.');
        if (dot == std::string::npos) {
          a.erase(ch.path), b.erase(ch.path);
        } else {
          a[ch.path.substr(0, dot)].erase(ch.path.substr(dot + 1));
          b[ch.path.substr(0, dot)].erase(ch.path.substr(dot + 1));
        }
      }
      c.expect(a.dump() == b.dump(), "untouched attributes differ");
    }
  }
}

// ---- 5 --------------------------------------------------------------------

PipelineConfig mock_config(const std::filesystem::path& work) {
  return load_config(testkit::fixtures_dir() / "pipeline.json",
                     {"mock=true", "work_dir=\"" + work.generic_string() + "\""});
}

void preference_funnel(Check& c) {
  testkit::TempDir a("acc_pref_a"), b("acc_pref_b");
  run_pipeline(mock_config(a.path()));
  run_pipeline(mock_config(b.path()));
  for (std::string_view f : {files::kAudit, files::kModelPreferences, files::kPreferenceFailures}) {
    c.expect(read_text_file(a / f) == read_text_file(b / f), std::string(f) + " differs between runs");
  }
  std::size_t kept = 0, dropped = 0, total = 0;
  std::map<std::string, std::size_t> per_conversation;
  std::vector<std::string> oracle_kept;
  for (const auto& j : read_jsonl_strict(a / files::kAudit)) {
    ++total;
    const bool k = j.at("kept").get<bool>();
    k ? ++kept : ++dropped;
    per_conversation[j.at("conversation_id").get<std::string>()]++;
    const double so = j.at("S_o"), sn = j.at("S_n"), po = j.at("p_avg_o"), pn = j.at("p_avg_n");
    const double tau = j.at("tau").is_null() ? INFINITY : j.at("tau").get<double>();
    if (so > sn && po / pn < tau) oracle_kept.push_back(j.at("chosen").get<std::string>() + "\x1f" + j.at("rejected").get<std::string>());
  }
  c.expect(total > 0, "no candidates generated");
  c.expect(kept + dropped == total, "kept + dropped != candidates");
  for (const auto& [id, n] : per_conversation) c.expect(n <= 3, id + " has more than 3 candidates");
  std::vector<std::string> actual;
  for (const auto& j : read_jsonl_strict(a / files::kModelPreferences)) {
    actual.push_back(j.at("chosen").get<std::string>() + "\x1f" + j.at("rejected").get<std::string>());
  }
  c.expect(actual == oracle_kept, fmt::format("oracle keeps {} pairs, run kept {}", oracle_kept.size(), actual.size()));
  c.expect(actual.size() == kept, "kept flag count differs from the preference file");
}

// ---- 6 --------------------------------------------------------------------

void profile_round_trip(Check& c) {
  Rng rng(606);
  for (int i = 0; i < 1000; ++i) {
    const auto p = testkit::random_profile(rng);
    c.expect(parse_system_prompt(render_system_prompt(p)) == p, fmt::format("profile {} does not round-trip", i));
  }
  for (int i = 0; i < 100; ++i) {
    auto conv = testkit::synthetic_conversation(rng, "x" + std::to_string(i), Source::Synthetic, 6 + i % 20);
    conv.depression_related = true;
    MockJudge mock(i);
    const auto r = extract_profile(conv, mock);
    c.expect(validate_profile(r.profile).empty(), "mock judge extraction is invalid");
    // Scripted judge answering with arbitrary option labels, some garbled.
    Rng answers(1000 + i);
    ScriptedJudge scripted([&](const JudgeRequest& req) -> std::string {
      if (answers.uniform_index(10) == 0) return "no idea";
      const auto attr = attribute_from_path(req.attribute);
      if (!attr) return "Someone";
      const auto labels = domain_labels(*attr, true);
      return labels[answers.uniform_index(labels.size())];
    });
    c.expect(validate_profile(extract_profile(conv, scripted).profile).empty(), "scripted extraction is invalid");
  }
}

// ---- 7 --------------------------------------------------------------------

void rebalance_exactness(Check& c) {
  Rng rng(707);
  const auto labels = domain_labels(*attribute_from_path("depression_severity"), true);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ProfileRecord> items;
    const auto n = 20 + rng.uniform_index(200);
    for (std::size_t i = 0; i < n; ++i) items.push_back({fmt::format("r{:04d}", i), testkit::random_profile(rng)});
    std::map<std::string, std::uint64_t> avail;
    for (const auto& r : items) avail[std::string(enum_label(r.profile.depression_severity))]++;
    RebalanceConfig cfg;
    cfg.seed = rng.uniform_index(1u << 30);
    for (const auto& l : labels) {
      if (rng.uniform_index(2)) cfg.caps[l] = rng.uniform_index(30);
    }
    const auto r = rebalance(items, cfg);
    std::map<std::string, std::uint64_t> kept;
    for (const auto& k : r.retained) kept[std::string(enum_label(k.profile.depression_severity))]++;
    for (const auto& [label, count] : avail) {
      const auto want = cfg.caps.count(label) ? std::min(count, cfg.caps.at(label)) : count;
      c.expect(kept[label] == want, fmt::format("trial {} {}: kept {} want {}", trial, label, kept[label], want));
    }
    std::set<std::string> ids;
    for (const auto& k : r.retained) ids.insert(k.conversation_id);
    for (const auto& d : r.dropped) c.expect(ids.insert(d.id).second, "an item is both kept and dropped");
    c.expect(ids.size() == items.size() && r.retained.size() + r.dropped.size() == items.size(),
             "drop report does not partition the input");
    const auto again = rebalance(items, cfg);
    c.expect(again.retained.size() == r.retained.size() &&
                 std::equal(again.retained.begin(), again.retained.end(), r.retained.begin(),
                            [](const auto& x, const auto& y) { return x.conversation_id == y.conversation_id; }),
             "selection is not seed-deterministic");
  }
}

// ---- 8 --------------------------------------------------------------------

void interviewer_aggregation(Check& c) {
  const auto profiles = read_profiles(testkit::fixtures_dir() / "eval_profiles.jsonl");
  c.expect(profiles.size() == 12, "expected 12 evaluation profiles");
  for (const auto& p : profiles) {
    for (const auto& d : interview_dimensions(p.profile)) {
      const auto plan = plan_interview(p.profile, d);
      for (const auto& q : plan.questions) {
        c.expect(q.find("SYMPTOM") == std::string::npos && q.find("COGNITIVE DISTORTION") == std::string::npos,
                 "unsubstituted placeholder: " + q);
      }
    }
  }
  MockProvider bot(808);
  Rng script(809);
  std::mutex mu;
  ScriptedJudge judge([&](const JudgeRequest&) {
    std::lock_guard lock(mu);
    return std::to_string(1 + script.uniform_index(5));
  });
  EvaluationConfig cfg;
  const auto entries = run_evaluation(profiles, bot, judge, cfg);
  std::map<DimensionKind, std::pair<double, double>> brute;
  std::map<DimensionKind, std::size_t> counts;
  for (const auto& e : entries) {
    brute[e.dimension.kind].first += e.rating;
    brute[e.dimension.kind].second += e.rating == 5;
    counts[e.dimension.kind]++;
  }
  const auto card = aggregate_scores(entries);
  c.expect(card.rows.size() == 3, "expected three dimension rows");
  for (const auto& row : card.rows) {
    const double n = static_cast<double>(counts[row.dimension]);
    c.expect(row.average == brute[row.dimension].first / n, "average differs from brute force");
    c.expect(row.full_alignment == brute[row.dimension].second / n, "full alignment differs from brute force");
  }
  std::vector<int> reference(61, 5);
  reference.insert(reference.end(), 58, 4);
  reference.insert(reference.end(), 21, 3);
  const auto ref = format_scorecard(
      aggregate_scores(std::map<DimensionKind, std::vector<int>>{{DimensionKind::SymptomSeverity, reference}}));
  c.expect(ref == "| Dimension | Average Rating | Full Alignment Percentage |\n|---|---|---|\n"
                  "| Symptom Severity | 4.286 | 0.436 |\n",
           "reference row renders as " + ref);
}

// ---- 9 --------------------------------------------------------------------

void service_state_machine(Check& c) {
  testkit::TempDir dir("acc_service");
  const auto pool = read_profiles(testkit::fixtures_dir() / "profile_pool.jsonl");
  const std::vector<std::string> verdicts{"A", "EquallyGood", "B", "EquallyBad", "B", "A", "EquallyGood"};
  std::vector<std::string> clear_submitted;

  auto drive = [&](const std::filesystem::path& data, std::vector<std::string>* clear, std::vector<std::string>* conts) {
    MockProvider provider(909);
    AnnotationConfig cfg;
    cfg.data_dir = data;
    cfg.seed = 910;
    AnnotationStore store(cfg, pool, provider, nullptr, [] { return std::string("2024-05-01T10:00:00Z"); });
    AnnotationServerConfig scfg;
    scfg.port = 0;
    scfg.token = "acc";
    AnnotationServer server(store, scfg);
    const int port = server.start();
    httplib::Client http("127.0.0.1", port);
    http.set_bearer_token_auth("acc");
    for (int s = 0; s < 3; ++s) {
      auto created = http.Post("/sessions", json{{"mode", "PreferenceAnnotation"}}.dump(), "application/json");
      c.expect(created && created->status == 201, "session creation failed");
      const auto id = json::parse(created->body)["id"].get<std::string>();
      for (std::size_t t = 0; t < verdicts.size(); ++t) {
        auto m = http.Post("/sessions/" + id + "/message", json{{"text", fmt::format("turn {} of {}", t, s)}}.dump(),
                           "application/json");
        c.expect(m && m->status == 200, "message failed");
        const auto& v = verdicts[(t + s) % verdicts.size()];
        auto r = http.Post("/sessions/" + id + "/choice",
                           json{{"turn", t}, {"verdict", v}, {"annotator", "expert"}}.dump(), "application/json");
        c.expect(r && r->status == 200, "choice failed");
        const auto body = json::parse(r->body);
        if (conts) conts->push_back(body["continuation"].get<std::string>());
        if (clear && (v == "A" || v == "B")) clear->push_back(fmt::format("{}#{}#{}", id, t, v));
      }
      http.Post("/sessions/" + id + "/complete", "{}", "application/json");
    }
    server.stop();
    return store.export_preferences();
  };

  std::vector<std::string> conts_a, conts_b;
  const auto exported = drive(dir / "a", &clear_submitted, &conts_a);
  drive(dir / "b", nullptr, &conts_b);
  c.expect(conts_a == conts_b, "tie continuations are not seed-reproducible");

  MockProvider unused(0);
  AnnotationStore reloaded(AnnotationConfig{dir / "a", 910, {}}, pool, unused);
  for (const auto& id : reloaded.session_ids()) {
    std::vector<json> log;
    for (const auto& line : split_lines(read_text_file(dir / "a" / "sessions" / (id + ".jsonl")))) {
      if (!line.empty()) log.push_back(json::parse(line));
    }
    c.expect(to_json(replay_session(log)).dump() == to_json(reloaded.get_session(id)).dump(),
             id + ": replay differs from the live state");
  }

  std::vector<std::string> clear_exported;
  for (const auto& e : exported.events) {
    if (e.verdict == ExpertVerdict::A || e.verdict == ExpertVerdict::B) {
      clear_exported.push_back(fmt::format("{}#{}#{}", e.session_id, e.turn, to_string(e.verdict)));
    }
  }
  std::sort(clear_submitted.begin(), clear_submitted.end());
  std::sort(clear_exported.begin(), clear_exported.end());
  c.expect(clear_exported == clear_submitted, "exported clear preferences are not the submitted A/B verdicts");
  const auto ingested = ingest_expert_annotations(exported.events);
  c.expect(ingested.records.size() == clear_submitted.size(), "ingest pair count differs");
  for (const auto& r : ingested.records) {
    try {
      validate_preference_record(r);
    } catch (const Error& e) {
      c.expect(false, e.what());
    }
  }
}

// ---- 10 -------------------------------------------------------------------

int run_cli(const std::string& args, std::string& out) {
  const std::string cmd = "SOURCE_DATE_EPOCH=1714557600 \"" PROFSIM_CLI "\" " + args + " 2>/dev/null";
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return -1;
  char buf[4096];
  std::size_t n = 0;
  out.clear();
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
  const int raw = ::pclose(p);
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

void end_to_end(Check& c) {
  testkit::TempDir dir("acc_e2e");
  const std::string args = "-c \"" + (testkit::fixtures_dir() / "pipeline.json").string() + "\" --mock --work-dir \"" +
                           dir.path().string() + "\" run-pipeline";
  std::string out1, out2;
  c.expect(run_cli(args, out1) == 0, "first run did not exit 0");
  const auto manifest = read_manifest(dir / files::kManifest);
  const auto first = read_text_file(dir / files::kManifest);
  c.expect(manifest.stages.size() == 7, "manifest does not list seven stages");
  c.expect(manifest.funnel_is_monotone(), "funnel is not monotone");
  c.expect(run_cli(args, out2) == 0, "second run did not exit 0");
  c.expect(read_text_file(dir / files::kManifest) == first, "re-run manifest differs");
  c.expect(out1 == out2, "re-run funnel output differs");
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<Criterion> criteria{
      {1, "DPO zero-margin identity and scale law", 1, zero_margin_identity},
      {2, "DPO gradient matches finite differences", 10, gradient_check},
      {3, "average token probability and filter oracle", 5, probability_and_filter_oracle},
      {4, "perturbation law", 30, perturbation_law},
      {5, "preference-generation funnel", 60, preference_funnel},
      {6, "profile round-trip and extraction validity", 10, profile_round_trip},
      {7, "rebalance exactness", 5, rebalance_exactness},
      {8, "interviewer aggregation and report layout", 30, interviewer_aggregation},
      {9, "annotation service state machine", 30, service_state_machine},
      {10, "end-to-end mock pipeline", 120, end_to_end},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Check check;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cr.body(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    check.expect(secs < cr.budget_s, fmt::format("took {:.2f} s, budget {} s", secs, cr.budget_s));
    const bool ok = !check.failed();
    failed += !ok;
    std::cout << fmt::format("criterion {:>2}: {} ({:.2f} s) {}", cr.number, ok ? "PASS" : "FAIL", secs, cr.title);
    if (!ok) std::cout << " :: " << check.detail();
    std::cout << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
