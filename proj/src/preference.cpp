#include "profsim/preference.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>

#include "profsim/sft.hpp"

namespace profsim {

namespace {

constexpr std::string_view kSectionNames[] = {"First", "Second", "Third"};

Section section_from_string(std::string_view s) {
  for (std::size_t i = 0; i < 3; ++i) {
    if (iequals(s, kSectionNames[i])) return static_cast<Section>(i);
  }
  throw Error(ErrorCode::SchemaViolation, fmt::format("unknown section '{}'", s));
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j, double fallback_for_null) {
  return j.is_null() ? fallback_for_null : j.get<double>();
}

bool aborts_stage(ErrorCode c) {
  switch (c) {
    case ErrorCode::EndpointUnreachable:
    case ErrorCode::RateLimited:
    case ErrorCode::MalformedResponse:
    case ErrorCode::ScoringUnsupported:
    case ErrorCode::JudgeUnavailable:
      return true;
    default:
      return false;
  }
}

}  // namespace

std::string_view to_string(Section s) noexcept { return kSectionNames[static_cast<std::size_t>(s)]; }

json to_json(const TurnContext& c) {
  return json{{"conversation_id", c.conversation_id},
              {"profile_id", c.profile_id},
              {"section", to_string(c.section)},
              {"cut_index", c.cut_index},
              {"messages", to_json(std::span<const ChatMessage>(c.messages))}};
}

TurnContext turn_context_from_json(const json& j) {
  try {
    TurnContext c;
    c.conversation_id = j.at("conversation_id").get<std::string>();
    c.profile_id = j.value("profile_id", c.conversation_id);
    c.section = section_from_string(j.at("section").get<std::string>());
    c.cut_index = j.at("cut_index").get<std::size_t>();
    c.messages = chat_messages_from_json(j.at("messages"));
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("turn context: ") + e.what());
  }
}

std::vector<std::size_t> client_response_positions(const Conversation& conv) {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i < conv.turns.size(); ++i) {
    if (conv.turns[i].speaker == Speaker::Client && conv.turns[i - 1].speaker == Speaker::Supporter) {
      out.push_back(i);
    }
  }
  return out;
}

std::array<std::pair<std::size_t, std::size_t>, 3> tercile_bounds(std::size_t n) {
  std::array<std::pair<std::size_t, std::size_t>, 3> out{};
  std::size_t begin = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t size = n / 3 + (k < n % 3 ? 1 : 0);
    out[k] = {begin, begin + size};
    begin += size;
  }
  return out;
}

std::vector<TurnContext> sample_turn_contexts(const Conversation& conv, const PsychologicalProfile& profile,
                                              std::uint64_t seed) {
  const auto positions = client_response_positions(conv);
  if (positions.empty()) {
    throw Error(ErrorCode::NoSampleableTurns, conv.id + ": no client turn follows a supporter turn");
  }
  Rng rng(mix_seed(seed, conv.id));
  const std::span<const Turn> turns(conv.turns);
  std::vector<TurnContext> out;
  const auto bounds = tercile_bounds(positions.size());
  for (std::size_t k = 0; k < 3; ++k) {
    const auto [b, e] = bounds[k];
    if (b == e) continue;
    const std::size_t cut = positions[b + rng.uniform_index(e - b)];
    ChatRecord history = build_sft_record(turns.first(cut), profile);
    out.push_back({conv.id, conv.id, std::move(history.messages), static_cast<Section>(k), cut});
  }
  return out;
}

CandidatePair generate_candidate_pair(const TurnContext& ctx, const PsychologicalProfile& profile,
                                      const PsychologicalProfile& noisy, Provider& provider,
                                      const DecodingConfig& cfg) {
  if (ctx.messages.size() < 2 || ctx.messages.back().role != Role::User) {
    throw Error(ErrorCode::InvalidArgument, ctx.conversation_id + ": context must end with a user message");
  }
  std::vector<ChatMessage> messages = ctx.messages;
  messages.front() = {Role::System, render_system_prompt(profile)};
  CandidatePair pair;
  pair.original = provider.chat(messages, cfg);
  messages.front() = {Role::System, render_system_prompt(noisy)};
  pair.noisy = provider.chat(messages, cfg);
  return pair;
}

// ---- adherence -----------------------------------------------------------

std::string_view to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::Compliant: return "Compliant";
    case Verdict::NonCompliant: return "NonCompliant";
    case Verdict::NotApplicable: return "NotApplicable";
  }
  return "NotApplicable";
}

AdherenceReport make_adherence_report(std::vector<std::pair<std::string, Verdict>> verdicts) {
  AdherenceReport r;
  r.verdicts = std::move(verdicts);
  std::size_t yes = 0, no = 0;
  for (const auto& [path, v] : r.verdicts) {
    if (v == Verdict::Compliant) ++yes;
    if (v == Verdict::NonCompliant) ++no;
  }
  r.score = yes + no == 0 ? 1.0 : static_cast<double>(yes) / static_cast<double>(yes + no);
  r.full_match = no == 0;
  return r;
}

json to_json(const AdherenceReport& r) {
  json verdicts = json::object();
  json order = json::array();
  for (const auto& [path, v] : r.verdicts) {
    verdicts[path] = to_string(v);
    order.push_back(path);
  }
  return json{{"verdicts", verdicts}, {"order", order}, {"S", r.score}, {"full_match", r.full_match},
              {"warnings", r.warnings}};
}

namespace {

AdherenceReport adherence_report_from_json(const json& j) {
  std::vector<std::pair<std::string, Verdict>> verdicts;
  const auto& v = j.at("verdicts");
  for (const auto& path : j.at("order")) {
    const auto p = path.get<std::string>();
    const auto label = v.at(p).get<std::string>();
    Verdict verdict = Verdict::NotApplicable;
    if (label == "Compliant") verdict = Verdict::Compliant;
    else if (label == "NonCompliant") verdict = Verdict::NonCompliant;
    else if (label != "NotApplicable") throw Error(ErrorCode::SchemaViolation, "unknown verdict '" + label + "'");
    verdicts.emplace_back(p, verdict);
  }
  auto r = make_adherence_report(std::move(verdicts));
  r.warnings = j.value("warnings", std::vector<std::string>{});
  return r;
}

}  // namespace

std::vector<std::string> adherence_paths() {
  std::vector<std::string> out{"name",       "gender",    "age_bracket",        "marital_status",
                               "occupation", "situation", "counseling_history", "resistance"};
  for (const auto& s : symptom_table()) out.push_back("symptoms." + std::string(s.key));
  for (const auto& d : distortion_table()) out.push_back("distortions." + std::string(d.key));
  out.insert(out.end(), {"depression_severity", "suicidal_ideation", "homicidal_ideation"});
  return out;
}

std::optional<std::string> describe_attribute(const PsychologicalProfile& p, std::string_view path) {
  auto text = [](std::string_view label, const std::optional<std::string>& v) -> std::optional<std::string> {
    if (!v) return std::nullopt;
    return fmt::format("{}: {}", label, *v);
  };
  if (path == "name") return text("Name", p.name);
  if (path == "gender") return text("Gender", p.gender);
  if (path == "occupation") return text("Occupation", p.occupation);
  if (path == "counseling_history") return text("Counseling History", p.counseling_history);
  if (path == "situation") {
    if (p.situation.empty()) return std::nullopt;
    return fmt::format("Situation of the Client: {}", p.situation);
  }
  const auto attr = attribute_from_path(path);
  if (!attr) throw Error(ErrorCode::InvalidArgument, fmt::format("unknown attribute '{}'", path));
  const std::string label = get_label(p, *attr);
  if (label == kUnidentified) return std::nullopt;
  switch (attr->kind) {
    case AttributeKind::Symptom:
      return fmt::format("Symptom Severity of {}: {}", symptom_info(static_cast<SymptomKind>(attr->index)).name,
                         label);
    case AttributeKind::Distortion:
      return fmt::format("Cognitive Distortion ({}): {}",
                         distortion_info(static_cast<DistortionKind>(attr->index)).name, label);
    case AttributeKind::DepressionSeverity: return "Depression Severity: " + label;
    case AttributeKind::SuicidalIdeation: return "Suicidal Ideation Severity: " + label;
    case AttributeKind::HomicidalIdeation: return "Homicidal Ideation Severity: " + label;
    case AttributeKind::Resistance: return "Resistance Toward the Support: " + label;
    case AttributeKind::AgeBracket: return "Age: " + label;
    case AttributeKind::MaritalStatus: return "Marital Status: " + label;
  }
  return std::nullopt;
}

std::string adherence_prompt(const TurnContext& ctx, std::string_view response, std::string_view attribute_line) {
  std::string transcript;
  for (std::size_t i = 1; i < ctx.messages.size(); ++i) {
    const auto& m = ctx.messages[i];
    transcript += m.role == Role::User ? "Supporter: " : "Client: ";
    transcript += m.content;
    transcript += '\n';
  }
  return fmt::format(
      "Here is a conversation between a supporter and a client.\n\n{}\nThe client's next response is:\n"
      "Client: {}\n\nOne attribute of the client's profile is:\n{}\n\nIs the client's next response consistent "
      "with this attribute? Answer with one of the following options: 'Consistent', 'Inconsistent', or "
      "'Not applicable' if the response gives no evidence either way.",
      transcript, collapse_whitespace(response), attribute_line);
}

std::optional<Verdict> parse_verdict(std::string_view answer) {
  static const std::vector<std::string> kOptions{
      "Consistent",     "Compliant",      "Inconsistent", "Not consistent", "Non-compliant",
      "NonCompliant",   "Not compliant",  "Not applicable", "NotApplicable", "N/A",
  };
  static const Verdict kVerdicts[] = {
      Verdict::Compliant,    Verdict::Compliant,    Verdict::NonCompliant,  Verdict::NonCompliant,
      Verdict::NonCompliant, Verdict::NonCompliant, Verdict::NonCompliant,  Verdict::NotApplicable,
      Verdict::NotApplicable, Verdict::NotApplicable,
  };
  auto k = match_option(answer, kOptions);
  if (!k) return std::nullopt;
  return kVerdicts[*k];
}

AdherenceReport adherence_score(std::string_view response, const TurnContext& ctx,
                                const PsychologicalProfile& profile, Judge& judge) {
  if (auto r = validate_profile(profile); !r.empty()) throw Error(ErrorCode::InvalidProfile, format_report(r));
  std::vector<std::pair<std::string, Verdict>> verdicts;
  std::vector<std::string> warnings;
  for (const auto& path : adherence_paths()) {
    const auto line = describe_attribute(profile, path);
    if (!line) {
      verdicts.emplace_back(path, Verdict::NotApplicable);
      continue;
    }
    JudgeRequest req{JudgeTask::Adherence, path, adherence_prompt(ctx, response, *line), 0};
    try {
      verdicts.emplace_back(path, ask_parsed<Verdict>(judge, req, parse_verdict));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::JudgeUnparseable) throw;
      verdicts.emplace_back(path, Verdict::NotApplicable);
      warnings.push_back(e.what());
    }
  }
  auto report = make_adherence_report(std::move(verdicts));
  report.warnings = std::move(warnings);
  return report;
}

// ---- records -------------------------------------------------------------

json to_json(const CandidateRecord& r) {
  json j = to_json(r.context);
  j["chosen"] = r.chosen;
  j["rejected"] = r.rejected;
  j["diff"] = to_json(r.diff);
  j["adherence_o"] = to_json(r.adherence_o);
  j["adherence_n"] = to_json(r.adherence_n);
  j["S_o"] = r.s_o;
  j["S_n"] = r.s_n;
  j["p_avg_o"] = r.p_avg_o;
  j["p_avg_n"] = r.p_avg_n;
  j["ratio"] = number_or_null(r.ratio);
  j["tau"] = number_or_null(r.tau);
  j["kept"] = r.kept;
  j["drop_reason"] = r.drop_reason ? json(to_string(*r.drop_reason)) : json(nullptr);
  return j;
}

CandidateRecord candidate_record_from_json(const json& j) {
  try {
    CandidateRecord r;
    r.context = turn_context_from_json(j);
    r.chosen = j.at("chosen").get<std::string>();
    r.rejected = j.at("rejected").get<std::string>();
    r.diff = profile_diff_from_json(j.at("diff"));
    r.adherence_o = adherence_report_from_json(j.at("adherence_o"));
    r.adherence_n = adherence_report_from_json(j.at("adherence_n"));
    r.s_o = j.at("S_o").get<double>();
    r.s_n = j.at("S_n").get<double>();
    r.p_avg_o = j.at("p_avg_o").get<double>();
    r.p_avg_n = j.at("p_avg_n").get<double>();
    r.ratio = number_from(j.at("ratio"), std::numeric_limits<double>::infinity());
    r.tau = number_from(j.at("tau"), std::numeric_limits<double>::infinity());
    r.kept = j.at("kept").get<bool>();
    if (!j.at("drop_reason").is_null()) {
      r.drop_reason = drop_reason_from_string(j.at("drop_reason").get<std::string>());
      if (!r.drop_reason) throw Error(ErrorCode::SchemaViolation, "unknown drop_reason");
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("candidate record: ") + e.what());
  }
}

json preference_record(const CandidateRecord& r) {
  return json{{"prompt", to_json(std::span<const ChatMessage>(r.context.messages))},
              {"chosen", r.chosen},
              {"rejected", r.rejected},
              {"meta",
               {{"S_o", r.s_o},
                {"S_n", r.s_n},
                {"ratio", r.ratio},
                {"diff", to_json(r.diff)},
                {"source", "model"},
                {"conversation_id", r.context.conversation_id},
                {"section", to_string(r.context.section)},
                {"cut_index", r.context.cut_index}}}};
}

json to_json(const ItemFailure& f) {
  return json{{"id", f.id}, {"code", to_string(f.code)}, {"message", f.message}};
}

std::size_t PreferenceRun::kept_count() const {
  return static_cast<std::size_t>(
      std::count_if(candidates.begin(), candidates.end(), [](const CandidateRecord& c) { return c.kept; }));
}

// ---- the run -------------------------------------------------------------

namespace {

struct ConversationOutcome {
  std::vector<CandidateRecord> candidates;
  std::vector<ItemFailure> failures;
};

CandidateRecord run_context(const TurnContext& ctx, const PsychologicalProfile& profile, Provider& provider,
                            Judge& judge, const PreferenceConfig& cfg) {
  CandidateRecord rec;
  rec.context = ctx;
  rec.tau = cfg.tau;
  const std::uint64_t noise_seed = mix_seed(cfg.seed, ctx.conversation_id + "#" + std::string(to_string(ctx.section)));
  auto perturbed = perturb_profile(profile, cfg.noise_ratio, noise_seed);
  rec.diff = perturbed.diff;

  const auto pair = generate_candidate_pair(ctx, profile, perturbed.noisy, provider, cfg.decoding);
  rec.chosen = pair.original;
  rec.rejected = pair.noisy;

  rec.adherence_o = adherence_score(rec.chosen, ctx, profile, judge);
  rec.adherence_n = adherence_score(rec.rejected, ctx, perturbed.noisy, judge);
  rec.s_o = rec.adherence_o.score;
  rec.s_n = rec.adherence_n.score;

  // Both continuations are scored under the original prompt.
  rec.p_avg_o = avg_token_prob(provider.score(ctx.messages, rec.chosen));
  rec.p_avg_n = avg_token_prob(provider.score(ctx.messages, rec.rejected));

  const auto d = filter_pair(rec.s_o, rec.s_n, rec.p_avg_o, rec.p_avg_n, cfg.tau);
  rec.kept = d.kept;
  rec.drop_reason = d.reason;
  rec.ratio = d.ratio;
  return rec;
}

}  // namespace

PreferenceRun run_preference_generation(std::span<const Conversation> conversations,
                                        std::span<const ProfileRecord> profiles, Provider& provider, Judge& judge,
                                        const PreferenceConfig& cfg) {
  if (!(cfg.noise_ratio > 0.0 && cfg.noise_ratio <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "noise ratio must be in (0, 1]");
  }
  if (!(cfg.tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "tau must be positive");
  cfg.decoding.validate();

  std::map<std::string, const PsychologicalProfile*> by_id;
  for (const auto& p : profiles) by_id.emplace(p.conversation_id, &p.profile);

  // Contexts are sampled up front so that per-context work can fan out.
  struct Job {
    std::size_t conversation;
    TurnContext context;
    const PsychologicalProfile* profile;
  };
  std::vector<Job> jobs;
  std::vector<ConversationOutcome> outcomes(conversations.size());
  for (std::size_t i = 0; i < conversations.size(); ++i) {
    const auto& conv = conversations[i];
    auto it = by_id.find(conv.id);
    if (it == by_id.end()) {
      outcomes[i].failures.push_back({conv.id, ErrorCode::InvalidProfile, "no profile for conversation"});
      continue;
    }
    try {
      for (auto& ctx : sample_turn_contexts(conv, *it->second, cfg.seed)) jobs.push_back({i, std::move(ctx), it->second});
    } catch (const Error& e) {
      if (aborts_stage(e.code())) throw;
      outcomes[i].failures.push_back({conv.id, e.code(), e.what()});
    }
  }

  std::vector<std::optional<CandidateRecord>> results(jobs.size());
  std::vector<std::optional<ItemFailure>> job_failures(jobs.size());
  parallel_for(jobs.size(), cfg.concurrency, [&](std::size_t k) {
    const auto& job = jobs[k];
    try {
      results[k] = run_context(job.context, *job.profile, provider, judge, cfg);
    } catch (const Error& e) {
      if (aborts_stage(e.code())) throw;
      job_failures[k] = ItemFailure{job.context.conversation_id + "#" + std::string(to_string(job.context.section)),
                                    e.code(), e.what()};
    }
  });

  for (std::size_t k = 0; k < jobs.size(); ++k) {
    auto& out = outcomes[jobs[k].conversation];
    if (results[k]) out.candidates.push_back(std::move(*results[k]));
    if (job_failures[k]) out.failures.push_back(std::move(*job_failures[k]));
  }

  PreferenceRun run;
  for (auto& o : outcomes) {
    for (auto& c : o.candidates) run.candidates.push_back(std::move(c));
    for (auto& f : o.failures) run.failures.push_back(std::move(f));
  }
  std::stable_sort(run.candidates.begin(), run.candidates.end(), [](const CandidateRecord& a, const CandidateRecord& b) {
    if (a.context.conversation_id != b.context.conversation_id) {
      return a.context.conversation_id < b.context.conversation_id;
    }
    return a.context.section < b.context.section;
  });
  return run;
}

// ---- expert annotations --------------------------------------------------

std::string_view to_string(ExpertVerdict v) noexcept {
  switch (v) {
    case ExpertVerdict::A: return "A";
    case ExpertVerdict::B: return "B";
    case ExpertVerdict::EquallyGood: return "EquallyGood";
    case ExpertVerdict::EquallyBad: return "EquallyBad";
  }
  return "A";
}

std::optional<ExpertVerdict> expert_verdict_from_string(std::string_view s) {
  for (auto v : {ExpertVerdict::A, ExpertVerdict::B, ExpertVerdict::EquallyGood, ExpertVerdict::EquallyBad}) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

json to_json(const ExpertAnnotationEvent& e) {
  return json{{"session_id", e.session_id},
              {"turn", e.turn},
              {"candidate_a", e.candidate_a},
              {"candidate_b", e.candidate_b},
              {"verdict", to_string(e.verdict)},
              {"continuation_choice", std::string(1, e.continuation_choice)},
              {"random_draw", e.random_draw},
              {"timestamp", e.timestamp},
              {"annotator", e.annotator},
              {"prompt", to_json(std::span<const ChatMessage>(e.prompt))}};
}

ExpertAnnotationEvent expert_event_from_json(const json& j) {
  ExpertAnnotationEvent e;
  try {
    e.session_id = j.at("session_id").get<std::string>();
    e.turn = j.at("turn").get<std::size_t>();
    e.candidate_a = j.at("candidate_a").get<std::string>();
    e.candidate_b = j.at("candidate_b").get<std::string>();
    const auto verdict = j.at("verdict").get<std::string>();
    const auto v = expert_verdict_from_string(verdict);
    if (!v) throw Error(ErrorCode::InvalidVerdict, "unknown verdict '" + verdict + "'");
    e.verdict = *v;
    const auto choice = j.at("continuation_choice").get<std::string>();
    if (choice != "A" && choice != "B") throw Error(ErrorCode::SchemaViolation, "continuation_choice must be A or B");
    e.continuation_choice = choice[0];
    e.random_draw = j.value("random_draw", false);
    e.timestamp = j.value("timestamp", std::string());
    e.annotator = j.value("annotator", std::string());
    if (j.contains("prompt") && !j.at("prompt").is_null()) e.prompt = chat_messages_from_json(j.at("prompt"));
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::SchemaViolation, std::string("annotation event: ") + ex.what());
  }
  const bool tie = e.verdict == ExpertVerdict::EquallyGood || e.verdict == ExpertVerdict::EquallyBad;
  if (tie != e.random_draw) throw Error(ErrorCode::SchemaViolation, "random_draw must be set exactly on tie verdicts");
  if (!tie && std::string(1, e.continuation_choice) != to_string(e.verdict)) {
    throw Error(ErrorCode::SchemaViolation, "continuation_choice must follow a clear verdict");
  }
  return e;
}

ExpertIngestResult ingest_expert_annotations(std::span<const ExpertAnnotationEvent> events,
                                             const ExpertFilterConfig& cfg) {
  ExpertIngestResult out;
  out.input_events = events.size();
  std::map<std::string, std::size_t> session_turns;
  for (const auto& e : events) {
    auto& n = session_turns[e.session_id];
    n = std::max(n, e.turn + 1);
  }
  for (const auto& e : events) {
    const auto& p = e.prompt;
    if (p.size() < 2 || p.front().role != Role::System || p.back().role != Role::User) {
      throw Error(ErrorCode::UnresolvableSession,
                  fmt::format("session '{}' turn {}: no transcript ending in a user message", e.session_id, e.turn));
    }
    if (e.verdict == ExpertVerdict::EquallyGood || e.verdict == ExpertVerdict::EquallyBad) {
      ++out.ties_excluded;
      continue;
    }
    if (cfg.excluded_annotators.count(e.annotator)) {
      ++out.annotator_excluded;
      continue;
    }
    if (session_turns[e.session_id] < cfg.min_session_turns) {
      ++out.short_session_excluded;
      continue;
    }
    const bool a = e.verdict == ExpertVerdict::A;
    out.records.push_back(json{{"prompt", to_json(std::span<const ChatMessage>(p))},
                               {"chosen", a ? e.candidate_a : e.candidate_b},
                               {"rejected", a ? e.candidate_b : e.candidate_a},
                               {"meta",
                                {{"S_o", nullptr},
                                 {"S_n", nullptr},
                                 {"ratio", nullptr},
                                 {"diff", nullptr},
                                 {"source", "expert"},
                                 {"session_id", e.session_id},
                                 {"turn", e.turn},
                                 {"verdict", to_string(e.verdict)},
                                 {"annotator", e.annotator}}}});
  }
  return out;
}

}  // namespace profsim
