#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace reloc {

// Rigid camera-to-scene transform: x_scene = R * x_cam + t.
struct Pose {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static Pose identity() { return Pose{}; }
  Eigen::Vector3d apply(const Eigen::Vector3d& x) const { return R * x + t; }
};

struct Intrinsics {
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
};

struct NormalizedScene {
  int reference_index = 0;
  std::vector<Pose> normalized_poses;  // translations already divided by s
  double scale = 1.0;                  // s
  Pose reference_pose;                 // P0, original frame
};

// a then b from the argument's view: result maps x to a(b(x)). Rotation is
// re-orthonormalized when the orthogonality defect exceeds 1e-9, which keeps
// long trajectory composition chains clean.
Pose compose(const Pose& a, const Pose& b);

Pose inverse(const Pose& p);

double orthogonality_defect(const Eigen::Matrix3d& R);

// Nearest orthonormal matrix with determinant +1.
Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& R);

// Re-expresses all poses relative to poses[reference_index] and divides the
// translations by s = max_k max(|x|,|y|,|z|). A degenerate scene (all
// cameras in one spot, s < 1e-9) floors s to 1 so division stays safe.
NormalizedScene normalize_scene(const std::vector<Pose>& poses, int reference_index);

// Unit ray through pixel (u,v) expressed in the frame the pose maps into:
// normalize(R * K^-1 [u,v,1]). Points t + d*r with d > 0 project to (u,v).
Eigen::Vector3d ray_direction(const Intrinsics& k, const Pose& p, double u, double v);

struct Projection {
  double u = 0.0, v = 0.0;
  double depth = 0.0;
  bool ok = false;  // false: point at or behind the camera plane
};

Projection project(const Pose& p, const Intrinsics& k, const Eigen::Vector3d& x);

// (translation error, rotation error in degrees).
std::pair<double, double> pose_error(const Pose& estimate, const Pose& ground_truth);

// Patch-center pixel of a token cell.
std::pair<double, double> token_center(int row, int col, int patch);

// Hamilton scalar-first unit quaternion, qw kept non-negative in text output.
Eigen::Vector4d pose_to_quaternion(const Pose& p);
Pose pose_from_quaternion(const Eigen::Vector4d& q, const Eigen::Vector3d& t);

// Text format: one `frame_id qw qx qy qz tx ty tz` line per pose, `#` starts
// a comment. Doubles serialized with %.17g so round trips are exact.
std::string poses_to_text(const std::vector<std::pair<int, Pose>>& poses);
std::vector<std::pair<int, Pose>> poses_from_text(const std::string& text);

}  // namespace reloc
