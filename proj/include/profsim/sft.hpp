#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "profsim/chat.hpp"
#include "profsim/corpus.hpp"
#include "profsim/judge.hpp"
#include "profsim/profile.hpp"

namespace profsim {

inline constexpr std::size_t kDefaultMaxTurns = 40;
inline constexpr std::string_view kNeutralOpener = "Hi, how are you doing today?";

struct SessionRange {
  std::size_t begin = 0;  // turn indices [begin, end)
  std::size_t end = 0;
  std::optional<std::string> counseling_history;

  bool operator==(const SessionRange&) const = default;
};

struct SessionSplit {
  std::string conversation_id;
  std::vector<SessionRange> sessions;
};

std::string summary_prompt(std::span<const Turn> earlier);

/// Session boundaries only; no summaries. Each session holds at most max_turns
/// turns and ends right before the latest Supporter turn that keeps it within
/// the limit (or at max_turns when the window has no such turn).
std::vector<SessionRange> plan_sessions(const Conversation& conv, std::size_t max_turns);

/// plan_sessions plus a summary of all earlier turns for every session after the first.
/// Throws InvalidArgument (max_turns < 4), SummarizerUnavailable.
SessionSplit segment_sessions(const Conversation& conv, std::size_t max_turns, Judge& summarizer);

struct ChatRecord {
  std::string id;
  std::vector<ChatMessage> messages;
  std::vector<bool> loss_mask;

  bool operator==(const ChatRecord&) const = default;
};

/// Throws SchemaViolation: System first, then User/Assistant alternating from
/// User, loss_mask true exactly on Assistant messages.
void validate_chat_record(const ChatRecord& r);

/// Supporter -> User, Client -> Assistant; same-speaker runs merged with "\n";
/// a Client-first session gets kNeutralOpener as the first User message.
/// Throws EmptySession, InvalidProfile.
ChatRecord build_sft_record(std::span<const Turn> session, const PsychologicalProfile& profile,
                            const std::optional<std::string>& counseling_history = std::nullopt);

json to_json(const ChatRecord& r);
ChatRecord chat_record_from_json(const json& j);

}  // namespace profsim
