#include "profsim/annotation.hpp"

#include <fmt/format.h>

#include <chrono>
#include <ctime>

namespace profsim {

namespace {

std::optional<std::string> key_of(const json& e) {
  if (auto it = e.find("idempotency_key"); it != e.end() && it->is_string()) return it->get<std::string>();
  return std::nullopt;
}

json candidates_view(const PendingPair& p) {
  json c = json::array();
  for (char label : p.display_order) {
    c.push_back({{"label", std::string(1, label)}, {"text", label == 'A' ? p.a : p.b}});
  }
  return c;
}

json scores_json(const std::array<int, 5>& scores) {
  json j = json::object();
  for (std::size_t i = 0; i < kLikertDimensions.size(); ++i) j[std::string(kLikertDimensions[i])] = scores[i];
  return j;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string_view to_string(SessionMode m) noexcept {
  return m == SessionMode::PreferenceAnnotation ? "PreferenceAnnotation" : "Evaluation";
}

std::string_view to_string(SessionStatus s) noexcept { return s == SessionStatus::Active ? "Active" : "Completed"; }

std::optional<SessionMode> session_mode_from_string(std::string_view s) {
  if (iequals(s, "PreferenceAnnotation") || iequals(s, "preference")) return SessionMode::PreferenceAnnotation;
  if (iequals(s, "Evaluation")) return SessionMode::Evaluation;
  return std::nullopt;
}

LikertSubmission likert_from_json(std::string session_id, const json& body) {
  LikertSubmission sub;
  sub.session_id = std::move(session_id);
  if (body.contains("annotator") && body["annotator"].is_string()) sub.annotator = body["annotator"].get<std::string>();
  const json* scores = body.contains("scores") ? &body["scores"] : nullptr;
  auto read_score = [](const json& v, std::string_view name) {
    if (!v.is_number_integer()) throw Error(ErrorCode::ScoreOutOfRange, fmt::format("{}: score must be an integer", name));
    const int x = v.get<int>();
    if (x < 1 || x > 5) throw Error(ErrorCode::ScoreOutOfRange, fmt::format("{}: score {} outside 1..5", name, x));
    return x;
  };
  if (scores && scores->is_array()) {
    if (scores->size() != kLikertDimensions.size()) {
      throw Error(ErrorCode::ScoreOutOfRange, fmt::format("expected 5 scores, got {}", scores->size()));
    }
    for (std::size_t i = 0; i < 5; ++i) sub.scores[i] = read_score((*scores)[i], kLikertDimensions[i]);
    return sub;
  }
  if (!scores || !scores->is_object()) throw Error(ErrorCode::ScoreOutOfRange, "scores missing");
  if (scores->size() != kLikertDimensions.size()) {
    throw Error(ErrorCode::ScoreOutOfRange, fmt::format("expected 5 scores, got {}", scores->size()));
  }
  for (std::size_t i = 0; i < 5; ++i) {
    const std::string name(kLikertDimensions[i]);
    if (!scores->contains(name)) throw Error(ErrorCode::ScoreOutOfRange, "missing score for " + name);
    sub.scores[i] = read_score(scores->at(name), name);
  }
  return sub;
}

// ---- state fold ----------------------------------------------------------

std::size_t SessionState::turn() const {
  return static_cast<std::size_t>(
      std::count_if(history.begin(), history.end(), [](const ChatMessage& m) { return m.role == Role::Assistant; }));
}

json to_json(const SessionState& s) {
  json choices = json::array();
  for (const auto& c : s.choices) {
    choices.push_back({{"turn", c.turn},
                       {"a", c.a},
                       {"b", c.b},
                       {"verdict", to_string(c.verdict)},
                       {"continuation", std::string(1, c.continuation)},
                       {"random_draw", c.random_draw},
                       {"annotator", c.annotator},
                       {"timestamp", c.timestamp},
                       {"prompt", to_json(std::span<const ChatMessage>(c.prompt))}});
  }
  json evals = json::array();
  for (const auto& e : s.evaluations) {
    evals.push_back({{"scores", scores_json(e.scores)}, {"annotator", e.annotator}, {"timestamp", e.timestamp}});
  }
  json pending = nullptr;
  if (s.pending) {
    pending = {{"turn", s.pending->turn},
               {"a", s.pending->a},
               {"b", s.pending->b},
               {"display_order", s.pending->display_order}};
  }
  json results = json::object();
  for (const auto& [k, v] : s.idempotent_results) results[k] = v;
  return json{{"id", s.id},
              {"mode", to_string(s.mode)},
              {"status", to_string(s.status)},
              {"seed", s.seed},
              {"profile_id", s.profile_id},
              {"profile", profile_to_json(s.profile)},
              {"created_at", s.created_at},
              {"history", to_json(std::span<const ChatMessage>(s.history))},
              {"pending", pending},
              {"choices", choices},
              {"evaluations", evals},
              {"idempotent_results", results},
              {"event_count", s.event_count}};
}

void apply_event(SessionState& s, const json& e) {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::SchemaViolation, fmt::format("session '{}' event {}: {}", s.id, s.event_count, why));
  };
  try {
    const auto type = e.at("type").get<std::string>();
    if (e.at("seq").get<std::size_t>() != s.event_count) fail("out of order");
    if (s.event_count == 0 && type != "created") fail("log must start with 'created'");
    if (s.event_count > 0 && s.status == SessionStatus::Completed) fail("event after completion");
    const auto key = key_of(e);

    if (type == "created") {
      if (s.event_count != 0) fail("duplicate 'created'");
      s.id = e.at("session_id").get<std::string>();
      const auto mode = session_mode_from_string(e.at("mode").get<std::string>());
      if (!mode) fail("unknown mode");
      s.mode = *mode;
      s.seed = e.at("seed").get<std::uint64_t>();
      s.profile_id = e.at("profile_id").get<std::string>();
      s.profile = profile_from_json(e.at("profile"));
      s.created_at = e.value("timestamp", std::string());
    } else if (type == "user_message") {
      if (s.pending) fail("user message while a pair is pending");
      if (e.at("turn").get<std::size_t>() != s.turn()) fail("turn mismatch");
      if (!s.history.empty() && s.history.back().role == Role::User) fail("two user messages in a row");
      s.history.push_back({Role::User, e.at("text").get<std::string>()});
    } else if (type == "candidates") {
      if (s.mode != SessionMode::PreferenceAnnotation) fail("candidates in evaluation mode");
      if (s.history.empty() || s.history.back().role != Role::User) fail("candidates without a user message");
      PendingPair p{e.at("turn").get<std::size_t>(), e.at("a").get<std::string>(), e.at("b").get<std::string>(),
                    e.at("display_order").get<std::string>()};
      if (p.turn != s.turn()) fail("turn mismatch");
      if (p.display_order != "AB" && p.display_order != "BA") fail("bad display order");
      s.pending = p;
      if (key) s.idempotent_results[*key] = json{{"turn", p.turn}, {"candidates", candidates_view(p)}};
    } else if (type == "assistant") {
      if (s.mode != SessionMode::Evaluation) fail("direct assistant turn in preference mode");
      if (s.history.empty() || s.history.back().role != Role::User) fail("assistant turn without a user message");
      const auto turn = e.at("turn").get<std::size_t>();
      if (turn != s.turn()) fail("turn mismatch");
      const auto text = e.at("text").get<std::string>();
      s.history.push_back({Role::Assistant, text});
      if (key) s.idempotent_results[*key] = json{{"turn", turn}, {"response", text}};
    } else if (type == "choice") {
      if (!s.pending) fail("choice without a pending pair");
      const auto turn = e.at("turn").get<std::size_t>();
      if (turn != s.pending->turn) fail("choice for the wrong turn");
      const auto verdict = expert_verdict_from_string(e.at("verdict").get<std::string>());
      if (!verdict) fail("unknown verdict");
      const auto cont = e.at("continuation").get<std::string>();
      if (cont != "A" && cont != "B") fail("bad continuation");
      ResolvedPair r;
      r.turn = turn;
      r.a = s.pending->a;
      r.b = s.pending->b;
      r.verdict = *verdict;
      r.continuation = cont[0];
      r.random_draw = e.at("random_draw").get<bool>();
      r.annotator = e.value("annotator", std::string());
      r.timestamp = e.value("timestamp", std::string());
      r.prompt.push_back({Role::System, render_system_prompt(s.profile)});
      r.prompt.insert(r.prompt.end(), s.history.begin(), s.history.end());
      const std::string text = r.continuation == 'A' ? r.a : r.b;
      s.history.push_back({Role::Assistant, text});
      s.pending.reset();
      if (key) {
        s.idempotent_results[*key] = json{{"turn", turn},
                                          {"verdict", to_string(r.verdict)},
                                          {"continuation", cont},
                                          {"random_draw", r.random_draw},
                                          {"text", text}};
      }
      s.choices.push_back(std::move(r));
    } else if (type == "evaluation") {
      if (s.mode != SessionMode::Evaluation) fail("evaluation in preference mode");
      StoredEvaluation ev;
      const auto& sc = e.at("scores");
      if (sc.size() != 5) fail("expected five scores");
      for (std::size_t i = 0; i < 5; ++i) ev.scores[i] = sc[i].get<int>();
      ev.annotator = e.value("annotator", std::string());
      ev.timestamp = e.value("timestamp", std::string());
      s.evaluations.push_back(ev);
      if (key) s.idempotent_results[*key] = json{{"stored", true}, {"scores", scores_json(ev.scores)}};
    } else if (type == "completed") {
      if (s.pending) fail("completion with a pending pair");
      s.status = SessionStatus::Completed;
    } else {
      fail("unknown event type '" + type + "'");
    }
  } catch (const json::exception& ex) {
    fail(ex.what());
  }
  ++s.event_count;
}

SessionState replay_session(const std::vector<json>& events) {
  SessionState s;
  for (const auto& e : events) apply_event(s, e);
  return s;
}

std::string PreferenceExport::summary() const {
  const std::size_t n = events.size();
  if (n == 0) return "0 annotations";
  auto pct = [&](std::size_t k) { return 100.0 * static_cast<double>(k) / static_cast<double>(n); };
  return fmt::format("{} annotations: {:.1f}% clear preference, {:.1f}% equally good, {:.1f}% equally bad", n,
                     pct(clear), pct(equally_good), pct(equally_bad));
}

json to_json(const PreferenceExport& e) {
  json events = json::array();
  for (const auto& ev : e.events) events.push_back(to_json(ev));
  return json{{"events", events},
              {"counts", {{"total", e.events.size()}, {"clear", e.clear}, {"equally_good", e.equally_good},
                          {"equally_bad", e.equally_bad}}},
              {"summary", e.summary()}};
}

// ---- store ---------------------------------------------------------------

AnnotationStore::AnnotationStore(AnnotationConfig cfg, std::vector<ProfileRecord> pool, Provider& provider,
                                 Provider* candidate_b, Clock clock)
    : cfg_(std::move(cfg)), pool_(std::move(pool)), provider_(provider), candidate_b_(candidate_b),
      clock_(std::move(clock)) {
  cfg_.decoding.validate();
  if (cfg_.data_dir.empty()) return;
  const auto dir = cfg_.data_dir / "sessions";
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) return;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto slot = std::make_unique<Slot>();
    slot->log = read_jsonl_strict(f);
    slot->state = replay_session(slot->log);
    if (auto k = key_of(slot->log.front())) create_keys_[*k] = slot->state.id;
    const auto& id = slot->state.id;
    if (id.size() > 1 && id[0] == 's') {
      try {
        counter_ = std::max<std::uint64_t>(counter_, std::stoull(id.substr(1)) + 1);
      } catch (const std::exception&) {
      }
    }
    sessions_.emplace(id, std::move(slot));
  }
}

std::string AnnotationStore::now() const { return clock_ ? clock_() : utc_now(); }

AnnotationStore::Slot& AnnotationStore::slot(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::SessionNotFound, "no session '" + id + "'");
  return *it->second;
}

void AnnotationStore::append(Slot& s, json event) {
  event["seq"] = s.state.event_count;
  if (!event.contains("timestamp")) event["timestamp"] = now();
  SessionState next = s.state;
  apply_event(next, event);
  if (!cfg_.data_dir.empty()) append_jsonl(cfg_.data_dir / "sessions" / (next.id + ".jsonl"), event);
  s.state = std::move(next);
  s.log.push_back(std::move(event));
}

SessionState AnnotationStore::create_session(SessionMode mode, const std::optional<std::string>& idempotency_key) {
  if (pool_.empty()) throw Error(ErrorCode::EmptyPool, "the profile pool is empty");
  std::unique_lock lock(mu_);
  if (idempotency_key) {
    if (auto it = create_keys_.find(*idempotency_key); it != create_keys_.end()) {
      const auto& s = *sessions_.at(it->second);
      std::lock_guard slock(s.mu);
      return s.state;
    }
  }
  const std::string id = fmt::format("s{:06d}", counter_++);
  const std::uint64_t seed = mix_seed(cfg_.seed, id);
  const auto& rec = pool_[Rng(seed).uniform_index(pool_.size())];
  auto slot = std::make_unique<Slot>();
  json created{{"type", "created"},
               {"session_id", id},
               {"mode", to_string(mode)},
               {"seed", seed},
               {"profile_id", rec.conversation_id},
               {"profile", profile_to_json(rec.profile)}};
  if (idempotency_key) created["idempotency_key"] = *idempotency_key;
  append(*slot, std::move(created));
  if (idempotency_key) create_keys_[*idempotency_key] = id;
  auto state = slot->state;
  sessions_.emplace(id, std::move(slot));
  return state;
}

SessionState AnnotationStore::get_session(const std::string& id) const {
  auto& s = slot(id);
  std::lock_guard lock(s.mu);
  return s.state;
}

std::vector<std::string> AnnotationStore::session_ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, _] : sessions_) out.push_back(id);
  return out;
}

std::vector<json> AnnotationStore::events(const std::string& id) const {
  auto& s = slot(id);
  std::lock_guard lock(s.mu);
  return s.log;
}

json AnnotationStore::post_message(const std::string& id, const std::string& text,
                                   const std::optional<std::string>& idempotency_key) {
  auto& s = slot(id);
  std::lock_guard lock(s.mu);
  if (idempotency_key) {
    if (auto it = s.state.idempotent_results.find(*idempotency_key); it != s.state.idempotent_results.end()) {
      return it->second;
    }
  }
  const auto& st = s.state;
  if (st.status == SessionStatus::Completed) throw Error(ErrorCode::SessionCompleted, id + " is completed");
  if (st.pending) throw Error(ErrorCode::PendingChoice, fmt::format("{}: turn {} awaits a choice", id, st.pending->turn));
  const std::string msg = trim(text);
  if (msg.empty()) throw Error(ErrorCode::InvalidArgument, "message text is empty");

  const std::size_t turn = st.turn();
  std::vector<ChatMessage> messages{{Role::System, render_system_prompt(st.profile)}};
  messages.insert(messages.end(), st.history.begin(), st.history.end());
  messages.push_back({Role::User, msg});

  json user{{"type", "user_message"}, {"turn", turn}, {"text", msg}};
  json reply;
  if (st.mode == SessionMode::PreferenceAnnotation) {
    DecodingConfig cfg_a = cfg_.decoding, cfg_b = cfg_.decoding;
    cfg_a.sample_seed = mix_seed(st.seed, fmt::format("candidate#{}#A", turn));
    cfg_b.sample_seed = mix_seed(st.seed, fmt::format("candidate#{}#B", turn));
    const std::string a = provider_.chat(messages, cfg_a);
    const std::string b = (candidate_b_ ? *candidate_b_ : provider_).chat(messages, cfg_b);
    const bool flip = Rng(mix_seed(st.seed, fmt::format("order#{}", turn))).uniform_index(2) == 1;
    reply = {{"type", "candidates"}, {"turn", turn}, {"a", a}, {"b", b}, {"display_order", flip ? "BA" : "AB"}};
  } else {
    DecodingConfig cfg = cfg_.decoding;
    cfg.sample_seed = mix_seed(st.seed, fmt::format("reply#{}", turn));
    reply = {{"type", "assistant"}, {"turn", turn}, {"text", provider_.chat(messages, cfg)}};
  }
  if (idempotency_key) {
    user["idempotency_key"] = *idempotency_key;
    reply["idempotency_key"] = *idempotency_key;
  }
  append(s, std::move(user));
  append(s, std::move(reply));
  if (idempotency_key) return s.state.idempotent_results.at(*idempotency_key);
  if (s.state.pending) return json{{"turn", turn}, {"candidates", candidates_view(*s.state.pending)}};
  return json{{"turn", turn}, {"response", s.state.history.back().content}};
}

json AnnotationStore::record_choice(const std::string& id, std::size_t turn, std::string_view verdict_text,
                                    const std::string& annotator, const std::optional<std::string>& idempotency_key) {
  auto& s = slot(id);
  std::lock_guard lock(s.mu);
  if (idempotency_key) {
    if (auto it = s.state.idempotent_results.find(*idempotency_key); it != s.state.idempotent_results.end()) {
      return it->second;
    }
  }
  const auto& st = s.state;
  if (st.status == SessionStatus::Completed) throw Error(ErrorCode::SessionCompleted, id + " is completed");
  if (st.mode != SessionMode::PreferenceAnnotation) throw Error(ErrorCode::WrongMode, id + " is an evaluation session");
  const auto verdict = expert_verdict_from_string(verdict_text);
  if (!verdict) throw Error(ErrorCode::InvalidVerdict, fmt::format("unknown verdict '{}'", verdict_text));
  if (!st.pending || st.pending->turn != turn) {
    throw Error(ErrorCode::NoPendingPair, fmt::format("{}: no pending pair at turn {}", id, turn));
  }
  char cont = 'A';
  bool drawn = false;
  switch (*verdict) {
    case ExpertVerdict::A: cont = 'A'; break;
    case ExpertVerdict::B: cont = 'B'; break;
    default:
      cont = Rng(mix_seed(st.seed, fmt::format("tie#{}", turn))).uniform_index(2) == 0 ? 'A' : 'B';
      drawn = true;
  }
  json ev{{"type", "choice"},
          {"turn", turn},
          {"verdict", to_string(*verdict)},
          {"continuation", std::string(1, cont)},
          {"random_draw", drawn},
          {"annotator", annotator}};
  if (idempotency_key) ev["idempotency_key"] = *idempotency_key;
  append(s, std::move(ev));
  const auto& r = s.state.choices.back();
  return json{{"turn", r.turn},
              {"verdict", to_string(r.verdict)},
              {"continuation", std::string(1, r.continuation)},
              {"random_draw", r.random_draw},
              {"text", s.state.history.back().content}};
}

json AnnotationStore::submit_evaluation(const LikertSubmission& sub, const std::optional<std::string>& idempotency_key) {
  auto& s = slot(sub.session_id);
  std::lock_guard lock(s.mu);
  if (idempotency_key) {
    if (auto it = s.state.idempotent_results.find(*idempotency_key); it != s.state.idempotent_results.end()) {
      return it->second;
    }
  }
  const auto& st = s.state;
  if (st.status == SessionStatus::Completed) throw Error(ErrorCode::SessionCompleted, st.id + " is completed");
  if (st.mode != SessionMode::Evaluation) throw Error(ErrorCode::WrongMode, st.id + " is not an evaluation session");
  for (std::size_t i = 0; i < 5; ++i) {
    if (sub.scores[i] < 1 || sub.scores[i] > 5) {
      throw Error(ErrorCode::ScoreOutOfRange, fmt::format("{}: score {} outside 1..5", kLikertDimensions[i], sub.scores[i]));
    }
  }
  json ev{{"type", "evaluation"}, {"scores", sub.scores}, {"annotator", sub.annotator}};
  if (idempotency_key) ev["idempotency_key"] = *idempotency_key;
  append(s, std::move(ev));
  append(s, json{{"type", "completed"}});
  return json{{"stored", true}, {"scores", scores_json(sub.scores)}};
}

SessionState AnnotationStore::complete_session(const std::string& id) {
  auto& s = slot(id);
  std::lock_guard lock(s.mu);
  if (s.state.status == SessionStatus::Completed) return s.state;
  if (s.state.pending) throw Error(ErrorCode::PendingChoice, id + " has a pending pair");
  append(s, json{{"type", "completed"}});
  return s.state;
}

PreferenceExport AnnotationStore::export_preferences() const {
  PreferenceExport out;
  for (const auto& id : session_ids()) {
    const auto st = get_session(id);
    for (const auto& c : st.choices) {
      ExpertAnnotationEvent ev;
      ev.session_id = st.id;
      ev.turn = c.turn;
      ev.candidate_a = c.a;
      ev.candidate_b = c.b;
      ev.verdict = c.verdict;
      ev.continuation_choice = c.continuation;
      ev.random_draw = c.random_draw;
      ev.timestamp = c.timestamp;
      ev.annotator = c.annotator;
      ev.prompt = c.prompt;
      switch (c.verdict) {
        case ExpertVerdict::A:
        case ExpertVerdict::B: ++out.clear; break;
        case ExpertVerdict::EquallyGood: ++out.equally_good; break;
        case ExpertVerdict::EquallyBad: ++out.equally_bad; break;
      }
      out.events.push_back(std::move(ev));
    }
  }
  return out;
}

json AnnotationStore::export_evaluations() const {
  json subs = json::array();
  std::array<double, 5> sums{};
  std::size_t n = 0;
  for (const auto& id : session_ids()) {
    const auto st = get_session(id);
    for (const auto& e : st.evaluations) {
      subs.push_back({{"session_id", st.id},
                      {"profile_id", st.profile_id},
                      {"annotator", e.annotator},
                      {"timestamp", e.timestamp},
                      {"scores", scores_json(e.scores)}});
      for (std::size_t i = 0; i < 5; ++i) sums[i] += e.scores[i];
      ++n;
    }
  }
  json means = json::object();
  for (std::size_t i = 0; i < 5; ++i) {
    means[std::string(kLikertDimensions[i])] = n == 0 ? json(nullptr) : json(sums[i] / static_cast<double>(n));
  }
  return json{{"submissions", subs}, {"count", n}, {"means", means}};
}

}  // namespace profsim

namespace profsim {

json session_view(const SessionState& s) {
  json pending = nullptr;
  if (s.pending) pending = {{"turn", s.pending->turn}, {"candidates", candidates_view(*s.pending)}};
  return json{{"id", s.id},
              {"mode", to_string(s.mode)},
              {"status", to_string(s.status)},
              {"profile_id", s.profile_id},
              {"profile", profile_to_json(s.profile)},
              {"system_prompt", render_system_prompt(s.profile)},
              {"transcript", to_json(std::span<const ChatMessage>(s.history))},
              {"turn", s.turn()},
              {"pending", pending},
              {"evaluations_submitted", s.evaluations.size()}};
}

}  // namespace profsim
