#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <map>
#include <vector>

#include "doctest.h"
#include "owg/parsing.hpp"
#include "owg/rng.hpp"

using namespace owg;
using namespace owg::parsing;

namespace {

// Counting oracle: frequency map, max count, smallest value among ties.
int vote_oracle(const std::vector<int>& values) {
  std::map<int, int> freq;
  for (int v : values) ++freq[v];
  int best = values.front();
  int best_count = 0;
  for (auto [v, c] : freq) {
    if (c > best_count) {
      best = v;
      best_count = c;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("extract_marked_ids pulls bracketed integers in order") {
  CHECK(extract_marked_ids("The target is [7].") == std::vector<int>{7});
  CHECK(extract_marked_ids("Remove [3], then [12].") == std::vector<int>{3, 12});
  CHECK(extract_marked_ids("choose [a] then [4]") == std::vector<int>{4});
  CHECK(extract_marked_ids("dupes [2] and [2]") == std::vector<int>{2, 2});
  CHECK(extract_marked_ids("no ids here").empty());
}

TEST_CASE("parse_final_answer reads the last ANSWER line") {
  CHECK(parse_final_answer("reasoning first\nANSWER: [4]", Stage::ground) ==
        std::vector<int>{4});
  CHECK(parse_final_answer("ANSWER: [2, 5, 1]", Stage::plan) ==
        std::vector<int>{2, 5, 1});
  CHECK(parse_final_answer("ANSWER: [9]\nmore\nANSWER: [3]", Stage::ground) ==
        std::vector<int>{3});
  CHECK_THROWS_WITH_AS(parse_final_answer("no block", Stage::plan),
                       doctest::Contains("MissingAnswerBlock"), Error);
  CHECK_THROWS_AS(parse_final_answer("ANSWER: [1, 2]", Stage::ground), Error);
}

TEST_CASE("parse_ground wants exactly one id") {
  auto g = parse_ground("The mug is marker [3].\nANSWER: [3]");
  CHECK(g.target_id == 3);
  CHECK(g.mentioned_ids == std::vector<int>{3, 3});
  CHECK_THROWS_AS(parse_ground("ANSWER: []"), Error);
  try {
    parse_ground("ANSWER: [1, 2]");
    FAIL("expected ArityViolation");
  } catch (const Error& e) {
    CHECK(e.code() == Err::ArityViolation);
  }
}

TEST_CASE("parse_plan dedupes and truncates at the target") {
  auto p = parse_plan("ANSWER: [4, 4, 2, 9]", 2);
  CHECK(p.sequence == std::vector<int>{4, 2});
  CHECK(p.blockers == std::set<int>{4});

  auto direct = parse_plan("ANSWER: [2]", 2);
  CHECK(direct.sequence == std::vector<int>{2});
  CHECK(direct.blockers.empty());

  try {
    parse_plan("ANSWER: [4, 5]", 2);
    FAIL("expected UnknownTarget");
  } catch (const Error& e) {
    CHECK(e.code() == Err::UnknownTarget);
  }
}

TEST_CASE("parse_rank completes partial orders stably") {
  CHECK(parse_rank("ANSWER: [2, 3, 1]", 3).order == std::vector<int>{2, 3, 1});
  // Stable completion: listed ids first, missing ids appended ascending.
  CHECK(parse_rank("ANSWER: [2]", 3).order == std::vector<int>{2, 1, 3});
  try {
    parse_rank("ANSWER: [4]", 3);
    FAIL("expected OutOfRangeId");
  } catch (const Error& e) {
    CHECK(e.code() == Err::OutOfRangeId);
  }
}

TEST_CASE("parse_rank collects contact flags") {
  auto r = parse_rank("Candidate [2] touches a neighbor (contact).\nANSWER: [1, 2]", 2);
  CHECK(r.order == std::vector<int>{1, 2});
  CHECK(r.contact_flagged == std::set<int>{2});
}

TEST_CASE("majority_vote spot values") {
  CHECK(majority_vote({3, 3, 5}) == 3);
  CHECK(majority_vote({1, 2, 2, 1, 4}) == 1);  // tie {1,2} -> smallest
  CHECK(majority_vote({9}) == 9);
}

TEST_CASE("majority_vote equals the counting oracle on 1000 random multisets") {
  Rng rng(20260814);
  for (int i = 0; i < 1000; ++i) {
    const int len = 1 + int(rng.below(9));
    std::vector<int> values(len);
    for (auto& v : values) v = 1 + int(rng.below(9));
    CHECK(majority_vote(values) == vote_oracle(values));
  }
}
