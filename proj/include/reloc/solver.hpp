#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "reloc/geometry.hpp"

namespace reloc {

// Which frame the 3D side of the correspondences lives in. The solver is
// frame-agnostic; the tag exists so scale recovery is applied exactly once.
enum class PointFrame : uint8_t { kNormalized = 0, kScene = 1 };

struct Correspondence {
  double u = 0.0, v = 0.0;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  double confidence = 1.0;
};

struct CorrespondenceSet {
  std::vector<Correspondence> records;
  PointFrame frame = PointFrame::kScene;
};

struct SolverConfig {
  double tau = 1.5;            // confidence threshold, keep C >= tau
  size_t cap = 100000;         // max correspondences fed to RANSAC
  double inlier_px = 10.0;     // reprojection inlier threshold
  int max_iterations = 10000;
  double success_confidence = 0.999;
  int refine_iterations = 20;
  uint64_t seed = 0;
};

// Drops records with C < tau; if more than cap survive, keeps the cap
// highest-confidence ones (ties by original position) in original order.
CorrespondenceSet filter_correspondences(const CorrespondenceSet& set,
                                         const SolverConfig& cfg);

// Minimal absolute-pose solver (Grunert's distance formulation). Returns all
// physically valid candidates (positive depths); each reprojects the three
// input points exactly on noiseless data. Throws std::invalid_argument when
// the scene points are collinear (triangle area <= 1e-9) or coincident.
std::vector<Pose> p3p(const std::array<Correspondence, 3>& corr, const Intrinsics& k);

struct RansacResult {
  bool ok = false;
  Pose pose;
  std::vector<uint8_t> inlier = {};  // parallel to the input set
  int inlier_count = 0;
  int iterations = 0;
  double mean_inlier_err = 0.0;  // pixels, under the returned pose
  bool refine_degraded = false;
};

// P3P hypotheses disambiguated by a 4th sampled point, adaptive iteration
// count from the best inlier ratio, best model by (inlier count, mean error,
// iteration index), then Levenberg-Marquardt refinement on the inliers.
// Inlier flags are recomputed under the refined pose, so every flagged record
// satisfies the threshold under the pose actually returned.
RansacResult ransac_pnp(const CorrespondenceSet& set, const Intrinsics& k,
                        const SolverConfig& cfg);

// One LM pass over the given correspondences (all of them; pass inliers).
// Cost is guaranteed non-increasing: steps are only accepted on decrease.
// Singular normal equations set *degraded and return the input pose.
Pose refine(const Pose& pose, const std::vector<Correspondence>& corr,
            const Intrinsics& k, int iterations, bool* degraded);

// Full query-pose recovery from normalized-frame correspondences: multiply
// points by s, solve in the metric reference frame, then map through P0.
RansacResult localize_pose(const CorrespondenceSet& normalized, double s,
                           const Pose& p0, const Intrinsics& k,
                           const SolverConfig& cfg);

}  // namespace reloc
