#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "reloc/geometry.hpp"
#include "reloc/synth.hpp"
#include "reloc/tensor.hpp"
#include "reloc/train.hpp"

using namespace reloc;

namespace {

SynthConfig tiny_config() {
  SynthConfig cfg;
  cfg.scene_count = 2;
  cfg.point_count = 400;
  cfg.extent = 10.0;
  cfg.desc_width = 8;
  cfg.noise_sigma = 0.05;
  cfg.mapping.frame_count = 6;
  cfg.query.frame_count = 3;
  return cfg;
}

bool frames_bit_equal(const FrameTokens& a, const FrameTokens& b) {
  if (!bit_equal(a.tokens, b.tokens)) return false;
  if (a.gt_valid != b.gt_valid) return false;
  for (size_t i = 0; i < a.gt_points.size(); ++i)
    if (a.gt_points[i] != b.gt_points[i]) return false;
  return a.pose.t == b.pose.t && a.pose.R == b.pose.R;
}

}  // namespace

TEST_CASE("generate_scene fills the configured cube") {
  const SyntheticScene scene = generate_scene(5, 500, 10.0, 16);
  REQUIRE(scene.points.size() == 500);
  CHECK(scene.extent == 10.0);
  // Diagonal extent means every coordinate lies within extent / (2 sqrt(3)).
  const double half_side = 10.0 / (2.0 * std::sqrt(3.0));
  for (const ScenePoint& p : scene.points) {
    CHECK(p.position.cwiseAbs().maxCoeff() <= half_side + 1e-12);
    REQUIRE(p.descriptor.size() == 16);
    double n = 0.0;
    for (double v : p.descriptor) n += v * v;
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("generate_scene is seed-deterministic") {
  const SyntheticScene a = generate_scene(9, 100, 5.0, 8);
  const SyntheticScene b = generate_scene(9, 100, 5.0, 8);
  const SyntheticScene c = generate_scene(10, 100, 5.0, 8);
  for (size_t i = 0; i < a.points.size(); ++i) {
    CHECK(a.points[i].position == b.points[i].position);
    CHECK(a.points[i].descriptor == b.points[i].descriptor);
  }
  CHECK(a.points[0].position != c.points[0].position);
}

TEST_CASE("sample_cameras produces valid orbiting poses") {
  const SyntheticScene scene = generate_scene(6, 800, 10.0, 8);
  TrajectoryConfig cfg;
  cfg.frame_count = 12;
  cfg.intrinsics.fx = 200.0;
  cfg.intrinsics.fy = 200.0;
  cfg.intrinsics.cx = 128.0;
  cfg.intrinsics.cy = 96.0;
  cfg.intrinsics.width = 256;
  cfg.intrinsics.height = 192;
  const std::vector<Pose> poses = sample_cameras(scene, cfg, 3);
  REQUIRE(poses.size() == 12);
  for (const Pose& p : poses) {
    CHECK(orthogonality_defect(p.R) < 1e-9);
    // Every camera must see at least 10% of the points.
    int visible = 0;
    for (const ScenePoint& pt : scene.points) {
      const Projection proj = project(p, cfg.intrinsics, pt.position);
      if (proj.ok && proj.u >= 0 && proj.u < cfg.intrinsics.width && proj.v >= 0 &&
          proj.v < cfg.intrinsics.height)
        visible++;
    }
    CHECK(visible >= static_cast<int>(scene.points.size()) / 10);
  }
}

TEST_CASE("render_tokens ground truth projects into its own cell") {
  const SyntheticScene scene = generate_scene(7, 1500, 10.0, 8);
  TrajectoryConfig cfg;
  cfg.intrinsics.fx = 200.0;
  cfg.intrinsics.fy = 200.0;
  cfg.intrinsics.cx = 128.0;
  cfg.intrinsics.cy = 96.0;
  cfg.intrinsics.width = 256;
  cfg.intrinsics.height = 192;
  const std::vector<Pose> poses = sample_cameras(scene, cfg, 11);
  const FrameTokens frame = render_tokens(scene, poses[0], cfg, 0.05, 13);
  REQUIRE(frame.token_count() == cfg.grid_rows * cfg.grid_cols);
  REQUIRE(frame.gt_points.size() == static_cast<size_t>(frame.token_count()));
  REQUIRE(frame.gt_valid.size() == static_cast<size_t>(frame.token_count()));

  int valid = 0;
  for (int r = 0; r < cfg.grid_rows; ++r)
    for (int c = 0; c < cfg.grid_cols; ++c) {
      const int idx = frame.token_index(r, c);
      if (!frame.gt_valid[idx]) continue;
      valid++;
      const Projection proj = project(frame.pose, frame.intrinsics, frame.gt_points[idx]);
      REQUIRE(proj.ok);
      CHECK(proj.u >= c * cfg.patch - 1e-9);
      CHECK(proj.u < (c + 1) * cfg.patch + 1e-9);
      CHECK(proj.v >= r * cfg.patch - 1e-9);
      CHECK(proj.v < (r + 1) * cfg.patch + 1e-9);
    }
  // An orbit camera over a dense cube should populate a healthy share.
  CHECK(valid > frame.token_count() / 4);
}

TEST_CASE("render_tokens descriptors are unit norm on valid tokens") {
  const SyntheticScene scene = generate_scene(8, 1200, 10.0, 12);
  TrajectoryConfig cfg;
  cfg.intrinsics.fx = 200.0;
  cfg.intrinsics.fy = 200.0;
  cfg.intrinsics.cx = 128.0;
  cfg.intrinsics.cy = 96.0;
  cfg.intrinsics.width = 256;
  cfg.intrinsics.height = 192;
  const std::vector<Pose> poses = sample_cameras(scene, cfg, 17);
  const FrameTokens frame = render_tokens(scene, poses[1], cfg, 0.05, 19);
  for (int i = 0; i < frame.token_count(); ++i) {
    double n = 0.0;
    for (int j = 0; j < frame.tokens.cols; ++j)
      n += frame.tokens.at(i, j) * frame.tokens.at(i, j);
    if (frame.gt_valid[i]) {
      CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-12));
    } else {
      CHECK(n == 0.0);
    }
  }
}

TEST_CASE("render_tokens is seed-deterministic and noise-seed sensitive") {
  const SyntheticScene scene = generate_scene(3, 600, 10.0, 8);
  TrajectoryConfig cfg;
  cfg.intrinsics.fx = 200.0;
  cfg.intrinsics.fy = 200.0;
  cfg.intrinsics.cx = 128.0;
  cfg.intrinsics.cy = 96.0;
  cfg.intrinsics.width = 256;
  cfg.intrinsics.height = 192;
  const std::vector<Pose> poses = sample_cameras(scene, cfg, 23);
  const FrameTokens a = render_tokens(scene, poses[0], cfg, 0.05, 7);
  const FrameTokens b = render_tokens(scene, poses[0], cfg, 0.05, 7);
  const FrameTokens c = render_tokens(scene, poses[0], cfg, 0.05, 8);
  CHECK(frames_bit_equal(a, b));
  CHECK(!bit_equal(a.tokens, c.tokens));  // different noise
  CHECK(a.gt_valid == c.gt_valid);        // same geometry
}

TEST_CASE("make_dataset splits train and test eight to one") {
  SynthConfig cfg = tiny_config();
  cfg.scene_count = 9;
  cfg.point_count = 300;
  const Dataset ds = make_dataset(cfg, 0);
  REQUIRE(ds.scenes.size() == 9);
  CHECK(ds.train_scene_indices().size() == 8);
  CHECK(ds.test_scene_indices().size() == 1);
  // Test scenes come from the tail of the id range.
  CHECK(ds.scenes[8].is_test);
  std::set<int> ids;
  for (const SceneData& s : ds.scenes) ids.insert(s.scene_id);
  CHECK(ids.size() == 9);
}

TEST_CASE("make_dataset keeps at least one test scene") {
  SynthConfig cfg = tiny_config();
  cfg.scene_count = 2;
  const Dataset ds = make_dataset(cfg, 1);
  CHECK(ds.test_scene_indices().size() == 1);
  CHECK(ds.train_scene_indices().size() == 1);
}

TEST_CASE("make_dataset honors frame counts and grids") {
  const SynthConfig cfg = tiny_config();
  const Dataset ds = make_dataset(cfg, 2);
  for (const SceneData& s : ds.scenes) {
    REQUIRE(s.mapping_frames.size() == 6);
    REQUIRE(s.query_frames.size() == 3);
    CHECK(s.extent == cfg.extent);
    for (const FrameTokens& f : s.mapping_frames) {
      CHECK(f.scene_id == s.scene_id);
      CHECK(f.grid_rows == cfg.mapping.grid_rows);
      CHECK(f.grid_cols == cfg.mapping.grid_cols);
      CHECK(f.tokens.rows == f.token_count());
      CHECK(f.tokens.cols == cfg.desc_width);
    }
  }
  // Frame ids unique within a scene across both trajectories.
  std::set<int> ids;
  for (const FrameTokens& f : ds.scenes[0].mapping_frames) ids.insert(f.frame_id);
  for (const FrameTokens& f : ds.scenes[0].query_frames) ids.insert(f.frame_id);
  CHECK(ids.size() == 9);
}

TEST_CASE("make_dataset is bit-reproducible by seed") {
  const SynthConfig cfg = tiny_config();
  const Dataset a = make_dataset(cfg, 5);
  const Dataset b = make_dataset(cfg, 5);
  const Dataset c = make_dataset(cfg, 6);
  REQUIRE(a.scenes.size() == b.scenes.size());
  for (size_t s = 0; s < a.scenes.size(); ++s) {
    for (size_t f = 0; f < a.scenes[s].mapping_frames.size(); ++f)
      CHECK(frames_bit_equal(a.scenes[s].mapping_frames[f],
                             b.scenes[s].mapping_frames[f]));
    for (size_t f = 0; f < a.scenes[s].query_frames.size(); ++f)
      CHECK(frames_bit_equal(a.scenes[s].query_frames[f], b.scenes[s].query_frames[f]));
  }
  CHECK(!bit_equal(a.scenes[0].mapping_frames[0].tokens,
                   c.scenes[0].mapping_frames[0].tokens));
}

TEST_CASE("overlap_score bounds and self-overlap") {
  const SynthConfig cfg = tiny_config();
  const Dataset ds = make_dataset(cfg, 3);
  const SceneData& scene = ds.scenes[0];
  for (const FrameTokens& a : scene.mapping_frames) {
    const double self = overlap_score(a, a);
    CHECK(self == doctest::Approx(1.0).epsilon(1e-12));
    for (const FrameTokens& b : scene.mapping_frames) {
      const double s = overlap_score(a, b);
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
    }
  }
}

TEST_CASE("overlap_score rejects frames from different scenes") {
  const SynthConfig cfg = tiny_config();
  const Dataset ds = make_dataset(cfg, 4);
  const FrameTokens& a = ds.scenes[0].mapping_frames[0];
  const FrameTokens& b = ds.scenes[1].mapping_frames[0];
  CHECK_THROWS_AS(overlap_score(a, b), std::invalid_argument);
}
