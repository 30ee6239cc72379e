#include "profsim/sft.hpp"

#include <fmt/format.h>

namespace profsim {

std::string summary_prompt(std::span<const Turn> earlier) {
  return "Here are the earlier sessions between a supporter and a client.\n\n" + format_transcript(earlier) +
         "\nProvide a brief and clear summary that includes the following elements: Content Covered, "
         "Interventions Used, and Client Response.";
}

std::vector<SessionRange> plan_sessions(const Conversation& conv, std::size_t max_turns) {
  if (max_turns < 4) throw Error(ErrorCode::InvalidArgument, "max_turns must be at least 4");
  std::vector<SessionRange> out;
  const std::size_t n = conv.turns.size();
  std::size_t begin = 0;
  while (begin < n) {
    if (n - begin <= max_turns) {
      out.push_back({begin, n, std::nullopt});
      break;
    }
    std::size_t end = begin + max_turns;
    while (end > begin + 1 && conv.turns[end].speaker != Speaker::Supporter) --end;
    if (end == begin + 1 && conv.turns[end].speaker != Speaker::Supporter) end = begin + max_turns;
    out.push_back({begin, end, std::nullopt});
    begin = end;
  }
  return out;
}

SessionSplit segment_sessions(const Conversation& conv, std::size_t max_turns, Judge& summarizer) {
  SessionSplit split{conv.id, plan_sessions(conv, max_turns)};
  const std::span<const Turn> turns(conv.turns);
  for (std::size_t k = 1; k < split.sessions.size(); ++k) {
    const auto earlier = turns.first(split.sessions[k].begin);
    JudgeRequest req{JudgeTask::Summarize, "counseling_history", summary_prompt(earlier), 0};
    try {
      split.sessions[k].counseling_history = ask_parsed<std::string>(
          summarizer, req, [](std::string_view a) -> std::optional<std::string> {
            auto s = collapse_whitespace(a);
            if (s.empty()) return std::nullopt;
            return s;
          });
    } catch (const Error& e) {
      if (e.code() == ErrorCode::JudgeUnavailable || e.code() == ErrorCode::JudgeUnparseable) {
        throw Error(ErrorCode::SummarizerUnavailable, fmt::format("{} session {}: {}", conv.id, k + 1, e.what()));
      }
      throw;
    }
  }
  return split;
}

void validate_chat_record(const ChatRecord& r) {
  auto fail = [&](const std::string& why) { throw Error(ErrorCode::SchemaViolation, r.id + ": " + why); };
  if (r.messages.size() < 2) fail("needs a system message and at least one turn");
  if (r.loss_mask.size() != r.messages.size()) fail("loss_mask length differs from messages");
  if (r.messages.front().role != Role::System) fail("first message must be system");
  for (std::size_t i = 1; i < r.messages.size(); ++i) {
    const Role expected = i % 2 == 1 ? Role::User : Role::Assistant;
    if (r.messages[i].role != expected) fail(fmt::format("message {} breaks user/assistant alternation", i));
  }
  for (std::size_t i = 0; i < r.messages.size(); ++i) {
    if (r.loss_mask[i] != (r.messages[i].role == Role::Assistant)) {
      fail(fmt::format("loss_mask[{}] must be true exactly on assistant messages", i));
    }
  }
}

ChatRecord build_sft_record(std::span<const Turn> session, const PsychologicalProfile& profile,
                            const std::optional<std::string>& counseling_history) {
  if (session.empty()) throw Error(ErrorCode::EmptySession, "session has no turns");
  PsychologicalProfile p = profile;
  if (counseling_history) p.counseling_history = collapse_whitespace(*counseling_history);
  ChatRecord r;
  r.messages.push_back({Role::System, render_system_prompt(p)});
  if (session.front().speaker == Speaker::Client) r.messages.push_back({Role::User, std::string(kNeutralOpener)});
  for (const auto& t : session) {
    const Role role = t.speaker == Speaker::Supporter ? Role::User : Role::Assistant;
    const std::string text = trim(t.text);
    if (r.messages.size() > 1 && r.messages.back().role == role) {
      r.messages.back().content += "\n" + text;
    } else {
      r.messages.push_back({role, text});
    }
  }
  for (const auto& m : r.messages) r.loss_mask.push_back(m.role == Role::Assistant);
  return r;
}

json to_json(const ChatRecord& r) {
  json mask = json::array();
  for (bool b : r.loss_mask) mask.push_back(b);
  return json{{"id", r.id}, {"messages", to_json(std::span<const ChatMessage>(r.messages))}, {"loss_mask", mask}};
}

ChatRecord chat_record_from_json(const json& j) {
  ChatRecord r;
  try {
    r.id = j.value("id", std::string());
    r.messages = chat_messages_from_json(j.at("messages"));
    for (const auto& b : j.at("loss_mask")) r.loss_mask.push_back(b.get<bool>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("chat record: ") + e.what());
  }
  validate_chat_record(r);
  return r;
}

}  // namespace profsim
