#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "profsim/chat.hpp"
#include "profsim/gateway.hpp"
#include "profsim/preference.hpp"
#include "profsim/profile.hpp"

namespace profsim {

enum class SessionMode { PreferenceAnnotation, Evaluation };
enum class SessionStatus { Active, Completed };

std::string_view to_string(SessionMode m) noexcept;
std::string_view to_string(SessionStatus s) noexcept;
std::optional<SessionMode> session_mode_from_string(std::string_view s);

inline constexpr std::array<std::string_view, 5> kLikertDimensions = {
    "Contrast with AI-Like Responses", "Linguistic Authenticity", "Cognitive Pattern Authenticity",
    "Subtle Emotional Expression",     "Profile Adherence and Personalization",
};

struct LikertSubmission {
  std::string session_id;
  std::array<int, 5> scores{};  // kLikertDimensions order
  std::string annotator;
};

/// Accepts {"scores": {dimension: int, ...}} with exactly the five dimensions,
/// or {"scores": [int x5]}. Throws ScoreOutOfRange on arity or range problems.
LikertSubmission likert_from_json(std::string session_id, const json& body);

struct PendingPair {
  std::size_t turn = 0;
  std::string a;
  std::string b;
  std::string display_order;  // "AB" or "BA"

  bool operator==(const PendingPair&) const = default;
};

struct ResolvedPair {
  std::size_t turn = 0;
  std::string a;
  std::string b;
  ExpertVerdict verdict = ExpertVerdict::A;
  char continuation = 'A';
  bool random_draw = false;
  std::string annotator;
  std::string timestamp;
  std::vector<ChatMessage> prompt;  // System + committed history + the user message of this turn

  bool operator==(const ResolvedPair&) const = default;
};

struct StoredEvaluation {
  std::array<int, 5> scores{};
  std::string annotator;
  std::string timestamp;

  bool operator==(const StoredEvaluation&) const = default;
};

/// Session state; always the fold of the session's event log.
struct SessionState {
  std::string id;
  SessionMode mode = SessionMode::PreferenceAnnotation;
  SessionStatus status = SessionStatus::Active;
  std::uint64_t seed = 0;
  std::string profile_id;
  PsychologicalProfile profile;
  std::string created_at;
  std::vector<ChatMessage> history;  // committed User/Assistant turns
  std::optional<PendingPair> pending;
  std::vector<ResolvedPair> choices;
  std::vector<StoredEvaluation> evaluations;
  std::map<std::string, json> idempotent_results;  // idempotency key -> response body
  std::size_t event_count = 0;

  /// Number of committed assistant turns.
  std::size_t turn() const;
  bool operator==(const SessionState&) const = default;
};

json to_json(const SessionState& s);
/// Client-facing view: rendered system prompt, transcript, and the pending
/// pair in display order (candidate labels kept so verdicts refer to A/B).
json session_view(const SessionState& s);
/// Replays an event log. Throws SchemaViolation on an out-of-order or malformed event.
SessionState replay_session(const std::vector<json>& events);
void apply_event(SessionState& s, const json& event);

struct AnnotationConfig {
  std::filesystem::path data_dir;
  std::uint64_t seed = 0;
  DecodingConfig decoding;
};

struct PreferenceExport {
  std::vector<ExpertAnnotationEvent> events;  // (session id, turn) order
  std::size_t clear = 0;
  std::size_t equally_good = 0;
  std::size_t equally_bad = 0;

  /// "N annotations: x% clear preference, y% equally good, z% equally bad".
  std::string summary() const;
};

json to_json(const PreferenceExport& e);

/// Event-sourced annotation backend. Each session is an append-only JSONL
/// log under data_dir/sessions/<id>.jsonl. Sessions are independent; calls on
/// one session are serialized.
class AnnotationStore {
 public:
  using Clock = std::function<std::string()>;

  /// Loads existing session logs from data_dir. candidate_b may be null, in
  /// which case both candidates come from `provider`.
  AnnotationStore(AnnotationConfig cfg, std::vector<ProfileRecord> pool, Provider& provider,
                  Provider* candidate_b = nullptr, Clock clock = {});

  /// Throws EmptyPool.
  SessionState create_session(SessionMode mode, const std::optional<std::string>& idempotency_key = std::nullopt);
  SessionState get_session(const std::string& id) const;
  std::vector<std::string> session_ids() const;

  /// Returns {"turn", "candidates":[{label, text} in display order]} in preference
  /// mode or {"turn", "response"} in evaluation mode.
  /// Throws SessionNotFound, SessionCompleted, PendingChoice; gateway errors propagate.
  json post_message(const std::string& id, const std::string& text,
                    const std::optional<std::string>& idempotency_key = std::nullopt);

  /// Throws SessionNotFound, SessionCompleted, NoPendingPair, InvalidVerdict, WrongMode.
  json record_choice(const std::string& id, std::size_t turn, std::string_view verdict, const std::string& annotator,
                     const std::optional<std::string>& idempotency_key = std::nullopt);

  /// Stores the scores and completes the session.
  /// Throws SessionNotFound, SessionCompleted, WrongMode, ScoreOutOfRange.
  json submit_evaluation(const LikertSubmission& submission,
                         const std::optional<std::string>& idempotency_key = std::nullopt);

  /// Throws SessionNotFound, PendingChoice.
  SessionState complete_session(const std::string& id);

  PreferenceExport export_preferences() const;
  json export_evaluations() const;

  /// Raw event log of a session.
  std::vector<json> events(const std::string& id) const;

 private:
  struct Slot {
    mutable std::mutex mu;
    SessionState state;
    std::vector<json> log;
  };

  Slot& slot(const std::string& id) const;
  void append(Slot& s, json event);
  std::string now() const;

  AnnotationConfig cfg_;
  std::vector<ProfileRecord> pool_;
  Provider& provider_;
  Provider* candidate_b_;
  Clock clock_;

  mutable std::mutex mu_;
  std::map<std::string, std::unique_ptr<Slot>> sessions_;
  std::map<std::string, std::string> create_keys_;
  std::uint64_t counter_ = 0;
};

/// HTTP front end over an AnnotationStore.
struct AnnotationServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 binds any free port
  std::string token;  // bearer token; empty disables auth
  std::optional<std::filesystem::path> static_dir;
};

class AnnotationServer {
 public:
  AnnotationServer(AnnotationStore& store, AnnotationServerConfig cfg);
  ~AnnotationServer();

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  /// Binds and serves on the calling thread until stop().
  void run();
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace profsim
