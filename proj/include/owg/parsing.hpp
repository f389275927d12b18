#pragma once
#include <set>
#include <string>
#include <vector>

#include "owg/errors.hpp"

namespace owg::parsing {

enum class Stage { ground, plan, rank };

const char* stage_name(Stage s);

struct GroundResult {
  int target_id = 0;
  std::vector<int> mentioned_ids;
  std::string raw;
};

struct PlanResult {
  std::vector<int> sequence;
  std::set<int> blockers;
  std::string raw;
};

struct RankResult {
  std::vector<int> order;
  std::set<int> contact_flagged;
  std::string raw;
};

// Every single-integer [id] occurrence, in order, duplicates preserved.
std::vector<int> extract_marked_ids(const std::string& text);

// IDs from the last ANSWER: [..] line. Ground demands exactly one ID.
std::vector<int> parse_final_answer(const std::string& text, Stage stage);

GroundResult parse_ground(const std::string& text);

// Dedupes keeping first occurrence and truncates at the commanded target;
// raises UnknownTarget when the answer never reaches the target.
PlanResult parse_plan(const std::string& text, int target);

RankResult parse_rank(const std::string& text, int k);

// Most frequent value; ties broken toward the smallest.
int majority_vote(const std::vector<int>& values);

}  // namespace owg::parsing
