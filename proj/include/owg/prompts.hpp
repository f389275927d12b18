#pragma once
#include <optional>
#include <string>
#include <vector>

#include "owg/markers.hpp"
#include "owg/parsing.hpp"

namespace owg::prompts {

using parsing::Stage;

struct MessagePart {
  enum class Kind { text, image } kind = Kind::text;
  std::string text;
  std::vector<uint8_t> png;

  static MessagePart make_text(std::string t) {
    return {Kind::text, std::move(t), {}};
  }
  static MessagePart make_image(std::vector<uint8_t> bytes) {
    return {Kind::image, {}, std::move(bytes)};
  }
};

enum class Role { system, user, assistant };

const char* role_name(Role r);

struct ChatMessage {
  Role role = Role::user;
  std::vector<MessagePart> parts;

  int image_count() const;
};

struct PromptBundle {
  std::vector<ChatMessage> messages;
  Stage stage = Stage::ground;
  std::string expected_format;

  // The live query is always the last user message.
  const ChatMessage& live_query() const;
  void validate() const;
};

struct IcExample {
  std::vector<uint8_t> image;
  std::string exemplar_response;
  bool positive = true;
};

struct TemplateSet {
  std::string system_text;
  std::string ground_text;
  std::string plan_text;
  std::string rank_text;
  std::string hash;

  static TemplateSet builtin();
  static TemplateSet load(const std::string& dir);
  void rehash();
};

PromptBundle build_ground_prompt(const std::vector<uint8_t>& reference_png,
                                 const markers::MarkedImage& marked,
                                 const std::string& user_input, const TemplateSet& ts,
                                 bool without_reference = false);

PromptBundle build_plan_prompt(const markers::MarkedImage& marked, int target,
                               const std::vector<IcExample>& examples, const TemplateSet& ts);

PromptBundle build_rank_prompt(const markers::MarkedImage& marked_crop,
                               const std::optional<std::string>& target_category_hint,
                               const TemplateSet& ts);

// Fixed multi-template expansions used by the embedding ranker.
std::vector<std::string> text_templates(const std::string& query);

}  // namespace owg::prompts
