#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "profsim/util.hpp"

namespace profsim {

enum class Role { System, User, Assistant };

std::string_view to_string(Role role) noexcept;
Role role_from_string(std::string_view s);

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

json to_json(const ChatMessage& m);
ChatMessage chat_message_from_json(const json& j);
json to_json(std::span<const ChatMessage> messages);
std::vector<ChatMessage> chat_messages_from_json(const json& j);

/// Stable fingerprint of a message list (role and content, length-delimited).
std::uint64_t prompt_fingerprint(std::span<const ChatMessage> messages);

}  // namespace profsim
