#include "owg/parsing.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace owg::parsing {

namespace {

bool parse_bracket_int(const std::string& text, size_t open, size_t close, int& out) {
  size_t i = open + 1;
  while (i < close && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  size_t j = close;
  while (j > i && std::isspace(static_cast<unsigned char>(text[j - 1]))) --j;
  if (i == j) return false;
  long value = 0;
  for (size_t k = i; k < j; ++k) {
    if (!std::isdigit(static_cast<unsigned char>(text[k]))) return false;
    value = value * 10 + (text[k] - '0');
    if (value > 1000000) return false;
  }
  out = static_cast<int>(value);
  return true;
}

// Integers inside the bracket payload, in order; non-digit runs are separators.
std::vector<int> split_ints(const std::string& payload) {
  std::vector<int> out;
  size_t i = 0;
  while (i < payload.size()) {
    if (!std::isdigit(static_cast<unsigned char>(payload[i]))) {
      ++i;
      continue;
    }
    long value = 0;
    while (i < payload.size() && std::isdigit(static_cast<unsigned char>(payload[i]))) {
      value = value * 10 + (payload[i] - '0');
      ++i;
    }
    out.push_back(static_cast<int>(std::min(value, 1000000l)));
  }
  return out;
}

size_t last_answer_pos(const std::string& text) {
  return text.rfind("ANSWER:");
}

}  // namespace

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::ground: return "ground";
    case Stage::plan: return "plan";
    case Stage::rank: return "rank";
  }
  return "?";
}

std::vector<int> extract_marked_ids(const std::string& text) {
  std::vector<int> out;
  size_t pos = 0;
  while ((pos = text.find('[', pos)) != std::string::npos) {
    const size_t close = text.find(']', pos + 1);
    if (close == std::string::npos) break;
    int id = 0;
    if (parse_bracket_int(text, pos, close, id)) out.push_back(id);
    pos = pos + 1;
  }
  return out;
}

std::vector<int> parse_final_answer(const std::string& text, Stage stage) {
  const size_t at = last_answer_pos(text);
  if (at == std::string::npos)
    raise(Err::MissingAnswerBlock, "no ANSWER line in " + std::string(stage_name(stage)) +
                                       " response");
  const size_t eol = text.find('\n', at);
  const std::string line = text.substr(at, eol == std::string::npos ? std::string::npos
                                                                    : eol - at);
  const size_t open = line.find('[');
  const size_t close = line.rfind(']');
  if (open == std::string::npos || close == std::string::npos || close < open)
    raise(Err::MissingAnswerBlock, "ANSWER line carries no bracketed list");
  const std::vector<int> ids = split_ints(line.substr(open + 1, close - open - 1));
  if (ids.empty()) raise(Err::MissingAnswerBlock, "ANSWER list is empty");
  if (stage == Stage::ground && ids.size() != 1)
    raise(Err::ArityViolation, "ground answer must contain exactly one ID, got " +
                                   std::to_string(ids.size()));
  return ids;
}

GroundResult parse_ground(const std::string& text) {
  GroundResult r;
  r.raw = text;
  r.mentioned_ids = extract_marked_ids(text);
  r.target_id = parse_final_answer(text, Stage::ground)[0];
  return r;
}

PlanResult parse_plan(const std::string& text, int target) {
  PlanResult r;
  r.raw = text;
  std::vector<int> ids = parse_final_answer(text, Stage::plan);

  std::set<int> seen;
  for (int id : ids)
    if (seen.insert(id).second) {
      r.sequence.push_back(id);
      if (id == target) break;
    }
  if (r.sequence.empty() || r.sequence.back() != target)
    raise(Err::UnknownTarget, "plan answer never reaches the target " + std::to_string(target));

  // The plan prompt demands blockers first, target last, so everything
  // before the target is a blocker.
  for (int id : r.sequence)
    if (id != target) r.blockers.insert(id);
  return r;
}

RankResult parse_rank(const std::string& text, int k) {
  if (k < 1) raise(Err::FormatError, "candidate count must be >= 1");
  RankResult r;
  r.raw = text;
  const std::vector<int> ids = parse_final_answer(text, Stage::rank);

  std::set<int> seen;
  for (int id : ids) {
    if (id < 1 || id > k)
      raise(Err::OutOfRangeId, "rank answer names ID " + std::to_string(id) + " outside 1.." +
                                   std::to_string(k));
    if (seen.insert(id).second) r.order.push_back(id);
  }
  for (int id = 1; id <= k; ++id)
    if (!seen.count(id)) r.order.push_back(id);

  const size_t at = last_answer_pos(text);
  for (int id : extract_marked_ids(text.substr(0, at)))
    if (id >= 1 && id <= k) r.contact_flagged.insert(id);
  return r;
}

int majority_vote(const std::vector<int>& values) {
  if (values.empty()) raise(Err::FormatError, "majority_vote over empty input");
  std::map<int, int> counts;
  for (int v : values) ++counts[v];
  int best = values[0], best_count = 0;
  for (const auto& [value, count] : counts)
    if (count > best_count) {
      best = value;
      best_count = count;
    }
  return best;
}

}  // namespace owg::parsing
