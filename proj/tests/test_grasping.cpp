#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>

#include "doctest.h"
#include "owg/grasping.hpp"
#include "owg/png_io.hpp"
#include "owg/rng.hpp"

using namespace owg;
using namespace owg::grasping;
using imaging::Heightmap;
using imaging::SceneObservation;
using imaging::SegmentStats;

namespace {

Heightmap make_hm(int w, int h, double res = 0.005, double table_z = 1.0) {
  Heightmap hm;
  hm.cells = GrayF32(w, h, 0.0f);
  hm.resolution = res;
  hm.origin_x = -w * res / 2;
  hm.origin_y = -h * res / 2;
  hm.table_z = table_z;
  return hm;
}

GraspMaps random_maps(Rng& rng, int w, int h) {
  GraspMaps m;
  m.quality = GrayF32(w, h);
  m.angle = GrayF32(w, h);
  m.width = GrayF32(w, h);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      m.quality.at(u, v) = float(rng.uniform01());
      m.angle.at(u, v) = float(rng.uniform(-M_PI_2, M_PI_2));
      m.width.at(u, v) = float(rng.uniform(1.0, 30.0));
    }
  return m;
}

// Greedy NMS oracle: local maxima above threshold, quality-descending with
// (v, u) tie order, greedily keeping peaks farther than the radius.
std::vector<Grasp4Dof> greedy_nms_oracle(const GraspMaps& m, int k, double radius,
                                         double min_q) {
  struct P {
    float q;
    int u, v;
  };
  std::vector<P> peaks;
  const int w = m.quality.width(), h = m.quality.height();
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const float q = m.quality.at(u, v);
      if (q < min_q) continue;
      bool is_max = true;
      for (int dv = -1; dv <= 1; ++dv)
        for (int du = -1; du <= 1; ++du) {
          if (!du && !dv) continue;
          if (m.quality.in_bounds(u + du, v + dv) && m.quality.at(u + du, v + dv) > q)
            is_max = false;
        }
      if (is_max) peaks.push_back({q, u, v});
    }
  std::sort(peaks.begin(), peaks.end(), [](const P& a, const P& b) {
    if (a.q != b.q) return a.q > b.q;
    if (a.v != b.v) return a.v < b.v;
    return a.u < b.u;
  });
  std::vector<Grasp4Dof> out;
  for (const P& p : peaks) {
    if (int(out.size()) >= k) break;
    bool close = false;
    for (const auto& g : out)
      if (std::hypot(p.u - g.u, p.v - g.v) <= radius) close = true;
    if (close) continue;
    Grasp4Dof g;
    g.u = p.u;
    g.v = p.v;
    g.quality = p.q;
    g.yaw = normalize_yaw(m.angle.at(p.u, p.v));
    g.width_px = m.width.at(p.u, p.v);
    out.push_back(g);
  }
  return out;
}

// Exhaustive minimum over injective pairings between regions and groups.
void brute_force_match(const std::vector<std::vector<double>>& cost, int n, int m,
                       std::map<int, int>& best_pairs, double& best_total) {
  best_total = std::numeric_limits<double>::infinity();
  std::map<int, int> current;
  std::vector<char> used(std::max(n, m), 0);
  const bool rows_small = n <= m;
  const int small = rows_small ? n : m, large = rows_small ? m : n;
  std::vector<int> pick(small, -1);
  const auto recurse = [&](auto&& self, int i) -> void {
    if (i == small) {
      std::map<int, int> pairs;
      for (int a = 0; a < small; ++a) {
        const int r = rows_small ? a : pick[a];
        const int c = rows_small ? pick[a] : a;
        pairs[r] = c;
      }
      double total = 0;
      for (const auto& [r, c] : pairs) total += cost[r][c];
      if (total < best_total) {
        best_total = total;
        best_pairs = pairs;
      }
      return;
    }
    for (int j = 0; j < large; ++j) {
      if (used[j]) continue;
      used[j] = 1;
      pick[i] = j;
      self(self, i + 1);
      used[j] = 0;
    }
  };
  recurse(recurse, 0);
}

SegmentStats region_at(int id, Vec3 p) {
  SegmentStats s;
  s.id = id;
  s.world_centroid = p;
  return s;
}

}  // namespace

TEST_CASE("normalize_yaw folds gripper symmetry into [-pi/2, pi/2)") {
  CHECK(normalize_yaw(0.3) == doctest::Approx(0.3));
  CHECK(normalize_yaw(0.3 + M_PI) == doctest::Approx(0.3));
  CHECK(normalize_yaw(-0.3 - M_PI) == doctest::Approx(-0.3));
  CHECK(normalize_yaw(M_PI_2) == doctest::Approx(-M_PI_2));
  CHECK(normalize_yaw(-M_PI_2) == doctest::Approx(-M_PI_2));
}

TEST_CASE("decode_grasps single peak") {
  GraspMaps m;
  m.quality = GrayF32(64, 64, 0.0f);
  m.angle = GrayF32(64, 64, 0.0f);
  m.width = GrayF32(64, 64, 0.0f);
  m.quality.at(20, 10) = 0.9f;  // row 10, column 20
  m.angle.at(20, 10) = 0.5f;
  m.width.at(20, 10) = 40.0f;

  auto out = decode_grasps(m, 5, 10.0, 0.2);
  REQUIRE(out.size() == 1);
  CHECK(out[0].u == doctest::Approx(20));
  CHECK(out[0].v == doctest::Approx(10));
  CHECK(out[0].yaw == doctest::Approx(0.5));
  CHECK(out[0].width_px == doctest::Approx(40.0));
  CHECK(out[0].quality == doctest::Approx(0.9));
}

TEST_CASE("decode_grasps suppresses nearby peaks") {
  GraspMaps m;
  m.quality = GrayF32(64, 64, 0.0f);
  m.angle = GrayF32(64, 64, 0.0f);
  m.width = GrayF32(64, 64, 1.0f);
  m.quality.at(30, 30) = 0.9f;
  m.quality.at(33, 30) = 0.8f;  // 3 px away, radius 5 swallows it
  auto out = decode_grasps(m, 5, 5.0, 0.2);
  REQUIRE(out.size() == 1);
  CHECK(out[0].u == doctest::Approx(30));
  CHECK(out[0].quality == doctest::Approx(0.9));
}

TEST_CASE("decode_grasps with an empty map raises NoViableGrasp") {
  GraspMaps m;
  m.quality = GrayF32(32, 32, 0.0f);
  m.angle = GrayF32(32, 32, 0.0f);
  m.width = GrayF32(32, 32, 0.0f);
  try {
    decode_grasps(m, 5, 10.0, 0.1);
    FAIL("expected NoViableGrasp");
  } catch (const Error& e) {
    CHECK(e.code() == Err::NoViableGrasp);
  }
}

TEST_CASE("decode_grasps equals the greedy-NMS oracle on 200 random maps") {
  Rng rng(333);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 200; ++i) {
    GraspMaps m = random_maps(rng, 64, 64);
    auto got = decode_grasps(m, 5, 10.0, 0.2);
    auto want = greedy_nms_oracle(m, 5, 10.0, 0.2);
    REQUIRE(!got.empty());
    REQUIRE(got.size() == want.size());
    // Exact top-1 agreement, and the full list while we are here.
    for (size_t j = 0; j < got.size(); ++j) {
      CHECK(got[j].u == want[j].u);
      CHECK(got[j].v == want[j].v);
      CHECK(got[j].yaw == want[j].yaw);
      CHECK(got[j].width_px == want[j].width_px);
    }
    // Output invariants: quality-sorted, pairwise separation, count cap.
    for (size_t j = 1; j < got.size(); ++j) CHECK(got[j - 1].quality >= got[j].quality);
    for (size_t a = 0; a < got.size(); ++a)
      for (size_t b = a + 1; b < got.size(); ++b)
        CHECK(std::hypot(got[a].u - got[b].u, got[a].v - got[b].v) > 10.0);
    CHECK(got.size() <= 5);
  }
  const auto elapsed = std::chrono::steady_clock::now() - start;
  CHECK(std::chrono::duration_cast<std::chrono::seconds>(elapsed).count() < 5);
}

TEST_CASE("synthesize_antipodal puts the best grasp at an isolated box center") {
  Heightmap hm = make_hm(60, 60);
  GrayU8 mask(60, 60, 0);
  for (int v = 24; v <= 36; ++v)
    for (int u = 24; u <= 36; ++u) {
      hm.cells.at(u, v) = 0.05f;
      mask.at(u, v) = 1;
    }
  auto maps = synthesize_antipodal(hm, mask);

  int bu = -1, bv = -1;
  float bq = -1;
  for (int v = 0; v < 60; ++v)
    for (int u = 0; u < 60; ++u)
      if (maps.quality.at(u, v) > bq) {
        bq = maps.quality.at(u, v);
        bu = u;
        bv = v;
      }
  CHECK(bu == 30);
  CHECK(bv == 30);
  CHECK(bq == doctest::Approx(1.0));
  // 13 member cells plus one finger cell on each side.
  CHECK(maps.width.at(30, 30) == doctest::Approx(15.0));
  for (int v = 0; v < 60; ++v)
    for (int u = 0; u < 60; ++u)
      if (!mask.at(u, v)) CHECK(maps.quality.at(u, v) == 0.0f);
}

TEST_CASE("equally tall walls on both u sides force the v-axis grasp") {
  Heightmap hm = make_hm(60, 60);
  GrayU8 mask(60, 60, 0);
  for (int v = 24; v <= 36; ++v)
    for (int u = 24; u <= 36; ++u) {
      hm.cells.at(u, v) = 0.05f;
      mask.at(u, v) = 1;
    }
  // Full-height wall columns flush against the box on the left and right.
  for (int v = 0; v < 60; ++v)
    for (int u : {20, 21, 22, 23, 37, 38, 39, 40}) hm.cells.at(u, v) = 0.05f;

  auto maps = synthesize_antipodal(hm, mask);
  CHECK(maps.quality.at(30, 30) > 0.0f);
  CHECK(maps.angle.at(30, 30) == doctest::Approx(-M_PI_2));

  SUBCASE("walls on all four sides leave nothing viable at the center") {
    for (int u = 0; u < 60; ++u)
      for (int v : {20, 21, 22, 23, 37, 38, 39, 40}) hm.cells.at(u, v) = 0.05f;
    auto blocked = synthesize_antipodal(hm, mask);
    CHECK(blocked.quality.at(30, 30) == 0.0f);
  }
}

TEST_CASE("synthesize_antipodal on an empty mask raises EmptyTarget") {
  Heightmap hm = make_hm(32, 32);
  GrayU8 mask(32, 32, 0);
  try {
    synthesize_antipodal(hm, mask);
    FAIL("expected EmptyTarget");
  } catch (const Error& e) {
    CHECK(e.code() == Err::EmptyTarget);
  }
}

TEST_CASE("synthesize_antipodal is equivariant under 90 degree rotation") {
  Heightmap hm = make_hm(48, 48);
  GrayU8 mask(48, 48, 0);
  // Asymmetric rectangle: 9 cells along u, 17 along v.
  for (int v = 14; v <= 30; ++v)
    for (int u = 20; u <= 28; ++u) {
      hm.cells.at(u, v) = 0.06f;
      mask.at(u, v) = 1;
    }
  auto maps = synthesize_antipodal(hm, mask);

  // Rotate the scene a quarter turn counterclockwise.
  const int W = 48, H = 48;
  Heightmap rhm = make_hm(H, W);
  GrayU8 rmask(H, W, 0);
  const auto src_of = [&](int un, int vn) { return std::pair<int, int>{vn, H - 1 - un}; };
  for (int vn = 0; vn < W; ++vn)
    for (int un = 0; un < H; ++un) {
      const auto [uo, vo] = src_of(un, vn);
      rhm.cells.at(un, vn) = hm.cells.at(uo, vo);
      rmask.at(un, vn) = mask.at(uo, vo);
    }
  auto rmaps = synthesize_antipodal(rhm, rmask);

  // Angles are excluded: direction bins can tie in rasterized extent and the
  // tie-break follows scan order, which does not commute with rotation.
  for (int vn = 0; vn < W; ++vn)
    for (int un = 0; un < H; ++un) {
      const auto [uo, vo] = src_of(un, vn);
      CHECK(rmaps.quality.at(un, vn) == maps.quality.at(uo, vo));
      CHECK(rmaps.width.at(un, vn) == maps.width.at(uo, vo));
    }
}

TEST_CASE("solve_assignment matches brute force on the worked examples") {
  auto p = solve_assignment({{1, 2}, {2, 1}});
  CHECK(p == std::vector<int>{0, 1});

  CHECK_THROWS_AS(solve_assignment({{1, 2, 3}, {4, 5, 6}}), Error);
}

TEST_CASE("match_regions pairs one region to one group at their distance") {
  std::vector<SegmentStats> regions = {region_at(1, {0.1, 0.2, 1.0})};
  std::vector<Vec3> groups = {{0.1, 0.2, 0.7}};
  auto r = match_regions(regions, groups);
  REQUIRE(r.pairs.size() == 1);
  CHECK(r.pairs.at(0) == 0);
  CHECK(r.total_cost == doctest::Approx(0.3));
  CHECK(r.unmatched_regions.empty());
  CHECK(r.unmatched_groups.empty());
}

TEST_CASE("match_regions on the 2x3 constructed-distance instance") {
  // Points chosen so the distance matrix is exactly [[5,1,9],[2,8,3]].
  const double x2 = 121.0 / 14.0;
  const double y2 = std::sqrt(81.0 - x2 * x2);
  std::vector<SegmentStats> regions = {region_at(1, {0, 0, 0}), region_at(2, {7, 0, 0})};
  std::vector<Vec3> groups = {{5, 0, 0}, {-1, 0, 0}, {x2, y2, 0}};

  auto r = match_regions(regions, groups);
  CHECK(r.pairs.at(0) == 1);
  CHECK(r.pairs.at(1) == 0);
  CHECK(r.total_cost == doctest::Approx(3.0));
  CHECK(r.unmatched_groups == std::set<int>{2});
  CHECK(r.unmatched_regions.empty());
}

TEST_CASE("match_regions without a world centroid raises") {
  SegmentStats s;
  s.id = 1;
  try {
    match_regions({s}, {{0, 0, 0}});
    FAIL("expected MissingWorldCentroid");
  } catch (const Error& e) {
    CHECK(e.code() == Err::MissingWorldCentroid);
  }
}

TEST_CASE("match_regions equals brute force over 100 random instances") {
  Rng rng(4242);
  const auto start = std::chrono::steady_clock::now();
  for (int inst = 0; inst < 100; ++inst) {
    const int n = 1 + int(rng.below(7));
    const int m = 1 + int(rng.below(7));
    std::vector<SegmentStats> regions;
    std::vector<Vec3> groups;
    std::vector<std::vector<double>> cost(n, std::vector<double>(m));
    for (int i = 0; i < n; ++i)
      regions.push_back(region_at(i + 1, {rng.uniform(-1, 1), rng.uniform(-1, 1),
                                          rng.uniform(0.5, 1.5)}));
    for (int j = 0; j < m; ++j)
      groups.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.5, 1.5)});
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j)
        cost[i][j] = distance(*regions[i].world_centroid, groups[j]);

    std::map<int, int> want_pairs;
    double want_total;
    brute_force_match(cost, n, m, want_pairs, want_total);

    auto got = match_regions(regions, groups);
    CHECK(got.pairs == want_pairs);
    CHECK(got.total_cost == doctest::Approx(want_total).epsilon(1e-12));
    CHECK(int(got.pairs.size() + got.unmatched_regions.size()) == n);
  }
  const auto elapsed = std::chrono::steady_clock::now() - start;
  CHECK(std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count() < 1000);
}

TEST_CASE("grasp_group_centers averages each connected component") {
  Heightmap hm = make_hm(20, 20, 0.01);
  GraspMaps m;
  m.quality = GrayF32(20, 20, 0.0f);
  m.angle = GrayF32(20, 20, 0.0f);
  m.width = GrayF32(20, 20, 0.0f);
  for (int v = 2; v <= 3; ++v)
    for (int u = 2; u <= 4; ++u) {
      m.quality.at(u, v) = 0.9f;
      hm.cells.at(u, v) = 0.05f;
    }
  for (int u = 10; u <= 12; ++u) {
    m.quality.at(u, 8) = 0.8f;
    hm.cells.at(u, 8) = 0.03f;
  }

  auto centers = grasp_group_centers(m, 0.5, hm);
  REQUIRE(centers.size() == 2);

  Vec3 want_a{}, want_b{};
  int na = 0, nb = 0;
  for (int v = 2; v <= 3; ++v)
    for (int u = 2; u <= 4; ++u) {
      want_a = want_a + Vec3{hm.cell_center_x(u), hm.cell_center_y(v), 1.0 - 0.05};
      ++na;
    }
  for (int u = 10; u <= 12; ++u) {
    want_b = want_b + Vec3{hm.cell_center_x(u), hm.cell_center_y(8), 1.0 - 0.03};
    ++nb;
  }
  want_a = want_a * (1.0 / na);
  want_b = want_b * (1.0 / nb);
  CHECK(centers[0].x == doctest::Approx(want_a.x));
  CHECK(centers[0].y == doctest::Approx(want_a.y));
  CHECK(centers[0].z == doctest::Approx(want_a.z));
  CHECK(centers[1].x == doctest::Approx(want_b.x));
  CHECK(centers[1].z == doctest::Approx(want_b.z));
}

TEST_CASE("grasp_to_world conversions") {
  SUBCASE("heightmap path scales width by resolution") {
    Heightmap hm = make_hm(40, 40, 0.005);
    hm.cells.at(20, 20) = 0.05f;
    Grasp4Dof g;
    g.u = 20;
    g.v = 20;
    g.yaw = 0.4;
    g.width_px = 40;
    auto out = grasp_to_world(g, hm);
    REQUIRE(out.world.has_value());
    CHECK(out.world->width_m == doctest::Approx(0.200));
    CHECK(out.world->z == doctest::Approx(1.0 - 0.05));
    CHECK(out.world->x == doctest::Approx(hm.origin_x + 20.5 * 0.005));
  }

  SUBCASE("camera path at the principal point lands on the axis") {
    SceneObservation obs;
    obs.camera.fx = obs.camera.fy = 300.0;
    obs.camera.cx = 160.0;
    obs.camera.cy = 120.0;
    obs.rgb = RgbImage(320, 240);
    obs.depth_m = GrayF32(320, 240, 0.8f);
    Grasp4Dof g;
    g.u = 160.0;
    g.v = 120.0;
    g.yaw = 0.1;
    g.width_px = 30;
    auto out = grasp_to_world(g, obs);
    CHECK(out.world->x == doctest::Approx(0.0));
    CHECK(out.world->y == doctest::Approx(0.0));
    CHECK(out.world->z == doctest::Approx(0.8));
    CHECK(out.world->width_m == doctest::Approx(30 * 0.8 / 300.0));

    SUBCASE("projection recovers the pixel center") {
      Rng rng(5);
      for (int i = 0; i < 200; ++i) {
        Grasp4Dof r;
        r.u = rng.uniform(1.0, 318.0);
        r.v = rng.uniform(1.0, 238.0);
        r.yaw = rng.uniform(-1.5, 1.5);
        r.width_px = 20;
        auto w = grasp_to_world(r, obs);
        const auto [pu, pv] =
            project({w.world->x, w.world->y, w.world->z}, obs.camera);
        CHECK(std::abs(pu - r.u) <= 0.5);
        CHECK(std::abs(pv - r.v) <= 0.5);
      }
    }
  }

  SUBCASE("zero depth raises InvalidDepthAtGrasp") {
    SceneObservation obs;
    obs.camera.fx = obs.camera.fy = 300.0;
    obs.camera.cx = 32;
    obs.camera.cy = 32;
    obs.rgb = RgbImage(64, 64);
    obs.depth_m = GrayF32(64, 64, 0.0f);
    Grasp4Dof g;
    g.u = 30;
    g.v = 30;
    try {
      grasp_to_world(g, obs);
      FAIL("expected InvalidDepthAtGrasp");
    } catch (const Error& e) {
      CHECK(e.code() == Err::InvalidDepthAtGrasp);
    }
  }
}

TEST_CASE("grasp maps round-trip through the plane container") {
  Rng rng(11);
  GraspMaps m = random_maps(rng, 17, 9);
  const auto dir = std::filesystem::temp_directory_path() / "owg_grasp_maps";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "maps.bin").string();
  save_grasp_maps(path, m);
  auto loaded = load_grasp_maps(path);
  CHECK(loaded.quality == m.quality);
  CHECK(loaded.angle == m.angle);
  CHECK(loaded.width == m.width);

  SUBCASE("truncated file raises FormatError") {
    auto bytes = read_bytes(path);
    bytes.resize(bytes.size() - 5);
    write_bytes(path, bytes);
    try {
      load_grasp_maps(path);
      FAIL("expected FormatError");
    } catch (const Error& e) {
      CHECK(e.code() == Err::FormatError);
    }
  }
}
