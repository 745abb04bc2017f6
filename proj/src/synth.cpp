#include "reloc/synth.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_map>

#include "reloc/rng.hpp"

namespace reloc {
namespace {

constexpr double kOcclusionDepthRatio = 0.8;   // occluder at least 20% nearer
constexpr int kCameraAttempts = 100;
constexpr uint64_t kSceneStream = 0;
constexpr uint64_t kMappingTrajStream = 1;
constexpr uint64_t kQueryTrajStream = 2;
constexpr uint64_t kMappingRenderBase = 0x100;
constexpr uint64_t kQueryRenderBase = 0x10000;

Eigen::Matrix3d look_at_rotation(const Eigen::Vector3d& forward) {
  Eigen::Vector3d up(0.0, 0.0, 1.0);
  if (forward.cross(up).norm() < 1e-6) up = Eigen::Vector3d(1.0, 0.0, 0.0);
  Eigen::Vector3d right = forward.cross(up).normalized();
  Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return r;
}

int visible_count(const SyntheticScene& scene, const Pose& pose,
                  const Intrinsics& k) {
  int count = 0;
  for (const ScenePoint& p : scene.points) {
    Projection pr = project(pose, k, p.position);
    if (pr.ok && pr.u >= 0.0 && pr.u < k.width && pr.v >= 0.0 && pr.v < k.height)
      ++count;
  }
  return count;
}

}  // namespace

SynthConfig::SynthConfig() {
  Intrinsics k;
  k.fx = 200.0;
  k.fy = 200.0;
  k.cx = 128.0;
  k.cy = 96.0;
  k.width = 256;
  k.height = 192;
  mapping.intrinsics = k;
  query.intrinsics = k;
  mapping.frame_count = 32;
  query.frame_count = 16;
}

std::vector<int> Dataset::train_scene_indices() const {
  std::vector<int> out;
  for (size_t i = 0; i < scenes.size(); ++i)
    if (!scenes[i].is_test) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<int> Dataset::test_scene_indices() const {
  std::vector<int> out;
  for (size_t i = 0; i < scenes.size(); ++i)
    if (scenes[i].is_test) out.push_back(static_cast<int>(i));
  return out;
}

SyntheticScene generate_scene(uint64_t seed, int point_count, double extent,
                              int desc_width) {
  if (point_count <= 0 || extent <= 0.0 || desc_width <= 0)
    throw std::invalid_argument("generate_scene: bad parameters");
  Rng rng(seed);
  const double half = extent / std::sqrt(3.0) / 2.0;
  SyntheticScene scene;
  scene.extent = extent;
  scene.seed = seed;
  scene.points.resize(point_count);
  for (ScenePoint& p : scene.points) {
    p.position.x() = rng.uniform(-half, half);
    p.position.y() = rng.uniform(-half, half);
    p.position.z() = rng.uniform(-half, half);
    p.descriptor.resize(desc_width);
    double sq = 0.0;
    for (double& d : p.descriptor) {
      d = rng.normal();
      sq += d * d;
    }
    const double norm = std::sqrt(sq);
    if (norm > 0.0)
      for (double& d : p.descriptor) d /= norm;
  }
  return scene;
}

std::vector<Pose> sample_cameras(const SyntheticScene& scene,
                                 const TrajectoryConfig& cfg, uint64_t seed) {
  if (scene.points.empty()) throw std::invalid_argument("sample_cameras: empty scene");
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const ScenePoint& p : scene.points) centroid += p.position;
  centroid /= static_cast<double>(scene.points.size());

  Rng rng(seed);
  std::vector<Pose> poses;
  poses.reserve(cfg.frame_count);
  for (int f = 0; f < cfg.frame_count; ++f) {
    bool placed = false;
    for (int attempt = 0; attempt < kCameraAttempts && !placed; ++attempt) {
      const double az = 2.0 * std::numbers::pi * (f + rng.uniform()) / cfg.frame_count;
      const double radius = rng.uniform(cfg.radius_min, cfg.radius_max) * scene.extent;
      const double height = rng.uniform(cfg.height_min, cfg.height_max) * scene.extent;
      Pose pose;
      pose.t = centroid + Eigen::Vector3d(radius * std::cos(az),
                                          radius * std::sin(az), height);
      Eigen::Vector3d forward = (centroid - pose.t).normalized();
      Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
      const double axis_norm = axis.norm();
      axis = axis_norm > 1e-12 ? Eigen::Vector3d(axis / axis_norm)
                               : Eigen::Vector3d(1.0, 0.0, 0.0);
      const double angle = rng.uniform(0.0, cfg.lookat_jitter);
      forward = (Eigen::AngleAxisd(angle, axis) * forward).normalized();
      pose.R = look_at_rotation(forward);
      // Every frame must cover at least a tenth of the scene points.
      if (10 * visible_count(scene, pose, cfg.intrinsics) >=
          static_cast<int>(scene.points.size())) {
        poses.push_back(pose);
        placed = true;
      }
    }
    if (!placed)
      throw std::runtime_error("sample_cameras: no viable pose for frame " +
                               std::to_string(f));
  }
  return poses;
}

FrameTokens render_tokens(const SyntheticScene& scene, const Pose& pose,
                          const TrajectoryConfig& cfg, double noise_sigma,
                          uint64_t seed) {
  const Intrinsics& k = cfg.intrinsics;
  if (cfg.grid_cols * cfg.patch != k.width || cfg.grid_rows * cfg.patch != k.height)
    throw std::invalid_argument("render_tokens: grid does not tile the image");
  const int desc_width = static_cast<int>(scene.points[0].descriptor.size());

  struct Hit {
    int point = 0;
    double u = 0.0, v = 0.0, depth = 0.0;
  };
  std::vector<Hit> hits;
  hits.reserve(scene.points.size());
  for (size_t i = 0; i < scene.points.size(); ++i) {
    Projection pr = project(pose, k, scene.points[i].position);
    if (pr.ok && pr.u >= 0.0 && pr.u < k.width && pr.v >= 0.0 && pr.v < k.height)
      hits.push_back({static_cast<int>(i), pr.u, pr.v, pr.depth});
  }

  // Occlusion: drop a hit when some other hit lands within half a patch of it
  // in pixels at a depth at least 20% nearer. Bucketing by half-patch cells
  // keeps the neighbor scan local.
  const double occlusion_radius = 0.5 * cfg.patch;
  const double radius_sq = occlusion_radius * occlusion_radius;
  auto bucket_key = [&](double u, double v) {
    const int bu = static_cast<int>(u / occlusion_radius);
    const int bv = static_cast<int>(v / occlusion_radius);
    return static_cast<int64_t>(bv) * 4096 + bu;
  };
  std::unordered_map<int64_t, std::vector<int>> buckets;
  for (size_t h = 0; h < hits.size(); ++h)
    buckets[bucket_key(hits[h].u, hits[h].v)].push_back(static_cast<int>(h));
  std::vector<uint8_t> occluded(hits.size(), 0);
  for (size_t h = 0; h < hits.size(); ++h) {
    const Hit& a = hits[h];
    const int bu = static_cast<int>(a.u / occlusion_radius);
    const int bv = static_cast<int>(a.v / occlusion_radius);
    for (int dv = -1; dv <= 1 && !occluded[h]; ++dv) {
      for (int du = -1; du <= 1 && !occluded[h]; ++du) {
        auto it = buckets.find(static_cast<int64_t>(bv + dv) * 4096 + (bu + du));
        if (it == buckets.end()) continue;
        for (int other : it->second) {
          if (other == static_cast<int>(h)) continue;
          const Hit& b = hits[other];
          const double pdu = a.u - b.u;
          const double pdv = a.v - b.v;
          if (pdu * pdu + pdv * pdv < radius_sq &&
              b.depth <= kOcclusionDepthRatio * a.depth) {
            occluded[h] = 1;
            break;
          }
        }
      }
    }
  }

  FrameTokens frame;
  frame.grid_rows = cfg.grid_rows;
  frame.grid_cols = cfg.grid_cols;
  frame.patch = cfg.patch;
  frame.intrinsics = k;
  frame.pose = pose;
  const int token_count = frame.token_count();
  frame.tokens = Tensor::zeros(token_count, desc_width);
  frame.gt_points.assign(token_count, Eigen::Vector3d::Zero());
  frame.gt_valid.assign(token_count, 0);

  std::vector<std::vector<int>> members(token_count);
  for (size_t h = 0; h < hits.size(); ++h) {
    if (occluded[h]) continue;
    const int col = static_cast<int>(hits[h].u / cfg.patch);
    const int row = static_cast<int>(hits[h].v / cfg.patch);
    members[frame.token_index(row, col)].push_back(static_cast<int>(h));
  }

  // Noise is drawn for every token slot in row-major order so the stream
  // layout never depends on which tokens ended up populated.
  Rng rng(seed);
  std::vector<double> noise(desc_width);
  for (int t = 0; t < token_count; ++t) {
    for (int d = 0; d < desc_width; ++d) noise[d] = rng.normal();
    if (members[t].empty()) continue;
    double weight_sum = 0.0;
    std::vector<double> acc(desc_width, 0.0);
    int nearest = members[t][0];
    for (int h : members[t]) {
      const Hit& hit = hits[h];
      const double w = 1.0 / hit.depth;
      weight_sum += w;
      const std::vector<double>& desc = scene.points[hit.point].descriptor;
      for (int d = 0; d < desc_width; ++d) acc[d] += w * desc[d];
      if (hit.depth < hits[nearest].depth) nearest = h;
    }
    double sq = 0.0;
    for (int d = 0; d < desc_width; ++d) {
      acc[d] = acc[d] / weight_sum + noise_sigma * noise[d];
      sq += acc[d] * acc[d];
    }
    const double norm = std::sqrt(sq);
    for (int d = 0; d < desc_width; ++d)
      frame.tokens.at(t, d) = norm > 1e-12 ? acc[d] / norm : acc[d];
    frame.gt_points[t] = scene.points[hits[nearest].point].position;
    frame.gt_valid[t] = 1;
  }
  return frame;
}

Dataset make_dataset(const SynthConfig& cfg, uint64_t seed) {
  if (cfg.scene_count <= 0) throw std::invalid_argument("make_dataset: no scenes");
  Dataset ds;
  ds.seed = seed;
  ds.config = cfg;
  const int test_count = std::max(1, cfg.scene_count / 9);
  ds.scenes.resize(cfg.scene_count);
  for (int sid = 0; sid < cfg.scene_count; ++sid) {
    const uint64_t scene_seed = derive_seed(seed, static_cast<uint64_t>(sid));
    SyntheticScene scene = generate_scene(derive_seed(scene_seed, kSceneStream),
                                          cfg.point_count, cfg.extent, cfg.desc_width);
    std::vector<Pose> mapping_poses =
        sample_cameras(scene, cfg.mapping, derive_seed(scene_seed, kMappingTrajStream));
    std::vector<Pose> query_poses =
        sample_cameras(scene, cfg.query, derive_seed(scene_seed, kQueryTrajStream));

    SceneData& data = ds.scenes[sid];
    data.scene_id = sid;
    data.is_test = sid >= cfg.scene_count - test_count;
    data.extent = cfg.extent;
    data.mapping_frames.reserve(mapping_poses.size());
    for (size_t i = 0; i < mapping_poses.size(); ++i) {
      FrameTokens f = render_tokens(scene, mapping_poses[i], cfg.mapping,
                                    cfg.noise_sigma,
                                    derive_seed(scene_seed, kMappingRenderBase + i));
      f.frame_id = static_cast<int>(i);
      f.scene_id = sid;
      data.mapping_frames.push_back(std::move(f));
    }
    data.query_frames.reserve(query_poses.size());
    for (size_t i = 0; i < query_poses.size(); ++i) {
      FrameTokens f = render_tokens(scene, query_poses[i], cfg.query,
                                    cfg.noise_sigma,
                                    derive_seed(scene_seed, kQueryRenderBase + i));
      f.frame_id = static_cast<int>(mapping_poses.size() + i);
      f.scene_id = sid;
      data.query_frames.push_back(std::move(f));
    }
  }
  return ds;
}

}  // namespace reloc
