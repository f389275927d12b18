#include "owg/prompts.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "owg/digest.hpp"
#include "owg/png_io.hpp"

namespace owg::prompts {

namespace {

constexpr const char* kSystemText =
    "For any marker IDs mentioned in your answer, please highlight them with [].";

constexpr const char* kGroundText =
    "You are given two images of the same tabletop scene. The first image is the original "
    "reference. The second image is the same scene with every segmented object filled in a "
    "distinct color and annotated with its numeric marker ID.\n"
    "\n"
    "Instruction: {user_input}\n"
    "\n"
    "Decompose the instruction step by step. If it refers to other objects in order to "
    "disambiguate the target, for example through spatial or semantic relations, first identify "
    "those intermediate objects and their marker IDs, then reason toward the target object.\n"
    "\n"
    "When you are done reasoning, state your final answer on its own line in exactly this "
    "format, naming the single marker ID of the target object:\n"
    "ANSWER: [id]\n";

constexpr const char* kPlanText =
    "The image shows a tabletop scene where every segmented object is annotated with its "
    "numeric marker ID. The object to retrieve is marker [{target}].\n"
    "\n"
    "Two primitive actions are available:\n"
    "- remove(id): grasp the object with that marker ID and move it to a free region off to "
    "the side.\n"
    "- pick(id): grasp the object with that marker ID and place it in the container.\n"
    "\n"
    "First, list the marker IDs of all objects blocking the target, meaning objects in contact "
    "with it or lying over it so that a straight top-down grasp of the target would touch them. "
    "Then give the order in which objects should be grasped: each blocker to remove first, the "
    "target last.\n"
    "\n"
    "When you are done reasoning, state your final answer on its own line in exactly this "
    "format, the ordered marker IDs ending with the target:\n"
    "ANSWER: [id, id, ...]\n";

constexpr const char* kRankText =
    "The image shows a close-up of the object to grasp. {k} candidate grasps are drawn as "
    "oriented rectangles, labeled with grasp IDs 1 to {k}.{hint}\n"
    "\n"
    "Decompose the problem in three steps:\n"
    "1. Describe the object's category and what a good stable grasp on this object looks "
    "like.\n"
    "2. Identify the grasp IDs that will most likely lead to contact with surrounding objects "
    "or clutter.\n"
    "3. Rank all candidate grasps from best to worst, preferring stable grasps that avoid "
    "contact.\n"
    "\n"
    "When you are done reasoning, state your final answer on its own line in exactly this "
    "format, ranking all {k} grasp IDs from best to worst:\n"
    "ANSWER: [id, id, ...]\n";

std::string replace_all(std::string text, const std::string& slot, const std::string& value) {
  size_t pos = 0;
  while ((pos = text.find(slot, pos)) != std::string::npos) {
    text.replace(pos, slot.size(), value);
    pos += value.size();
  }
  return text;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) raise(Err::MissingFile, path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

ChatMessage system_message(const TemplateSet& ts) {
  return {Role::system, {MessagePart::make_text(ts.system_text)}};
}

}  // namespace

const char* role_name(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "?";
}

int ChatMessage::image_count() const {
  int n = 0;
  for (const MessagePart& p : parts)
    if (p.kind == MessagePart::Kind::image) ++n;
  return n;
}

const ChatMessage& PromptBundle::live_query() const {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it)
    if (it->role == Role::user) return *it;
  raise(Err::FormatError, "bundle has no user message");
}

void PromptBundle::validate() const {
  if (messages.empty() || messages.front().role != Role::system)
    raise(Err::FormatError, "bundle must start with the system message");
  for (const MessagePart& p : messages.front().parts)
    if (p.kind != MessagePart::Kind::text)
      raise(Err::FormatError, "system message must be text only");
  for (const ChatMessage& m : messages)
    if (m.parts.empty()) raise(Err::FormatError, "empty message in bundle");
  const int live_images = live_query().image_count();
  const int want = stage == Stage::ground ? 2 : 1;
  if (live_images != want && !(stage == Stage::ground && live_images == 1))
    raise(Err::FormatError, "live query carries the wrong number of images");
}

void TemplateSet::rehash() {
  hash = sha256_hex(system_text + "\x1f" + ground_text + "\x1f" + plan_text + "\x1f" + rank_text);
}

TemplateSet TemplateSet::builtin() {
  TemplateSet ts;
  ts.system_text = kSystemText;
  ts.ground_text = kGroundText;
  ts.plan_text = kPlanText;
  ts.rank_text = kRankText;
  ts.rehash();
  return ts;
}

TemplateSet TemplateSet::load(const std::string& dir) {
  namespace fs = std::filesystem;
  TemplateSet ts;
  ts.system_text = read_file((fs::path(dir) / "system.txt").string());
  ts.ground_text = read_file((fs::path(dir) / "ground.txt").string());
  ts.plan_text = read_file((fs::path(dir) / "plan.txt").string());
  ts.rank_text = read_file((fs::path(dir) / "rank.txt").string());
  ts.rehash();
  return ts;
}

PromptBundle build_ground_prompt(const std::vector<uint8_t>& reference_png,
                                 const markers::MarkedImage& marked,
                                 const std::string& user_input, const TemplateSet& ts,
                                 bool without_reference) {
  if (user_input.empty()) raise(Err::EmptyQuery, "grounding query is empty");
  if (marked.placements.empty())
    raise(Err::FormatError, "marked image carries no placements to reference");

  PromptBundle b;
  b.stage = Stage::ground;
  b.expected_format = "single-id";
  b.messages.push_back(system_message(ts));

  ChatMessage live{Role::user, {}};
  if (!without_reference) live.parts.push_back(MessagePart::make_image(reference_png));
  live.parts.push_back(MessagePart::make_image(encode_png(marked.raster)));
  live.parts.push_back(
      MessagePart::make_text(replace_all(ts.ground_text, "{user_input}", user_input)));
  b.messages.push_back(std::move(live));
  b.validate();
  return b;
}

PromptBundle build_plan_prompt(const markers::MarkedImage& marked, int target,
                               const std::vector<IcExample>& examples, const TemplateSet& ts) {
  if (std::find(marked.source_ids.begin(), marked.source_ids.end(), target) ==
      marked.source_ids.end())
    raise(Err::UnknownTarget, "target " + std::to_string(target) + " is not an annotated ID");

  PromptBundle b;
  b.stage = Stage::plan;
  b.expected_format = "id-sequence";
  b.messages.push_back(system_message(ts));

  const std::string body = replace_all(ts.plan_text, "{target}", std::to_string(target));
  for (const IcExample& ex : examples) {
    ChatMessage q{Role::user, {}};
    q.parts.push_back(MessagePart::make_image(ex.image));
    q.parts.push_back(MessagePart::make_text(
        std::string(ex.positive ? "Example" : "Counter-example") + " scene:"));
    b.messages.push_back(std::move(q));
    b.messages.push_back({Role::assistant, {MessagePart::make_text(ex.exemplar_response)}});
  }

  ChatMessage live{Role::user, {}};
  live.parts.push_back(MessagePart::make_image(encode_png(marked.raster)));
  live.parts.push_back(MessagePart::make_text(body));
  b.messages.push_back(std::move(live));
  b.validate();
  return b;
}

PromptBundle build_rank_prompt(const markers::MarkedImage& marked_crop,
                               const std::optional<std::string>& target_category_hint,
                               const TemplateSet& ts) {
  const int k = static_cast<int>(marked_crop.placements.size());
  if (k < 1) raise(Err::NoGrasps, "marked crop carries no grasp annotations");

  std::string body = replace_all(ts.rank_text, "{k}", std::to_string(k));
  const std::string hint = target_category_hint
                               ? " The object is expected to be: " + *target_category_hint + "."
                               : "";
  body = replace_all(body, "{hint}", hint);

  PromptBundle b;
  b.stage = Stage::rank;
  b.expected_format = "permutation-of-" + std::to_string(k);
  b.messages.push_back(system_message(ts));
  ChatMessage live{Role::user, {}};
  live.parts.push_back(MessagePart::make_image(encode_png(marked_crop.raster)));
  live.parts.push_back(MessagePart::make_text(body));
  b.messages.push_back(std::move(live));
  b.validate();
  return b;
}

std::vector<std::string> text_templates(const std::string& query) {
  if (query.empty()) raise(Err::EmptyQuery, "template query is empty");
  return {
      "a photo of " + query,
      query,
      "an image of " + query,
      "a cropped photo of " + query,
      "a close-up photo of " + query,
  };
}

}  // namespace owg::prompts
