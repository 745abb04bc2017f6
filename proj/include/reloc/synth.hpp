#pragma once

#include <cstdint>
#include <vector>

#include "reloc/frame.hpp"
#include "reloc/geometry.hpp"

namespace reloc {

struct ScenePoint {
  Eigen::Vector3d position;
  std::vector<double> descriptor;  // unit norm, shared across views
};

struct SyntheticScene {
  std::vector<ScenePoint> points;
  double extent = 0.0;  // bounding-box diagonal
  uint64_t seed = 0;
};

// Orbit trajectory parameters. Radius and height are fractions of the scene
// extent so regenerating a scene at a different extent scales the whole
// geometry coherently.
struct TrajectoryConfig {
  int frame_count = 32;
  double radius_min = 0.85, radius_max = 1.15;  // x extent
  double height_min = 0.15, height_max = 0.55;  // x extent
  double lookat_jitter = 0.06;                  // radians
  Intrinsics intrinsics;
  int grid_rows = 12, grid_cols = 16;
  int patch = 16;
};

struct SynthConfig {
  int scene_count = 9;
  int point_count = 2000;
  double extent = 10.0;
  int desc_width = 32;
  double noise_sigma = 0.05;
  TrajectoryConfig mapping;  // frame_count 32
  TrajectoryConfig query;    // frame_count 16

  SynthConfig();
};

struct SceneData {
  int scene_id = 0;
  bool is_test = false;
  double extent = 0.0;
  std::vector<FrameTokens> mapping_frames;
  std::vector<FrameTokens> query_frames;
};

struct Dataset {
  uint64_t seed = 0;
  SynthConfig config;
  std::vector<SceneData> scenes;

  std::vector<int> train_scene_indices() const;
  std::vector<int> test_scene_indices() const;
};

// Points uniform in a cube whose diagonal equals `extent`, centered at the
// origin; descriptors i.i.d. normal then unit-normalized.
SyntheticScene generate_scene(uint64_t seed, int point_count, double extent,
                              int desc_width);

// Jittered orbit around the centroid; every camera must see at least 10% of
// the points (100 resample attempts per frame before giving up).
std::vector<Pose> sample_cameras(const SyntheticScene& scene,
                                 const TrajectoryConfig& cfg, uint64_t seed);

// Token-grid rendering with exact ground truth. Per token: members are the
// surviving points projecting into its patch; descriptor = inverse-depth
// weighted member mean + Gaussian noise, renormalized; ground truth = the
// nearest member's position. A point is occluded when another point projects
// within half a patch of it at a depth at least 20% nearer.
FrameTokens render_tokens(const SyntheticScene& scene, const Pose& pose,
                          const TrajectoryConfig& cfg, double noise_sigma,
                          uint64_t seed);

// Train/test split is 8:1 (at least one test scene, taken from the tail of
// the id range). Mapping and query trajectories use distinct seed streams.
Dataset make_dataset(const SynthConfig& cfg, uint64_t seed);

}  // namespace reloc
