#include "profsim/chat.hpp"

#include "profsim/error.hpp"

namespace profsim {

std::string_view to_string(Role role) noexcept {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Role role_from_string(std::string_view s) {
  if (s == "system") return Role::System;
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  throw Error(ErrorCode::SchemaViolation, "unknown role '" + std::string(s) + "'");
}

json to_json(const ChatMessage& m) {
  return json{{"role", to_string(m.role)}, {"content", m.content}};
}

ChatMessage chat_message_from_json(const json& j) {
  if (!j.is_object() || !j.contains("role") || !j.contains("content") ||
      !j["role"].is_string() || !j["content"].is_string()) {
    throw Error(ErrorCode::SchemaViolation, "message needs string fields role and content");
  }
  return ChatMessage{role_from_string(j["role"].get<std::string>()),
                     j["content"].get<std::string>()};
}

json to_json(std::span<const ChatMessage> messages) {
  json arr = json::array();
  for (const auto& m : messages) arr.push_back(to_json(m));
  return arr;
}

std::vector<ChatMessage> chat_messages_from_json(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::SchemaViolation, "messages must be an array");
  std::vector<ChatMessage> out;
  out.reserve(j.size());
  for (const auto& m : j) out.push_back(chat_message_from_json(m));
  return out;
}

std::uint64_t prompt_fingerprint(std::span<const ChatMessage> messages) {
  std::uint64_t h = fnv1a64("prompt");
  for (const auto& m : messages) {
    const std::string head = std::string(to_string(m.role)) + ":" + std::to_string(m.content.size()) + ":";
    h = fnv1a64(head, h);
    h = fnv1a64(m.content, h);
  }
  return h;
}

}  // namespace profsim
