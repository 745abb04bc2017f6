#include "reloc/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace reloc {

namespace {
constexpr double kDegPerRad = 180.0 / std::numbers::pi;

void append_g17(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}
}  // namespace

double orthogonality_defect(const Eigen::Matrix3d& R) {
  return (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
}

Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& R) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d U = svd.matrixU();
  const Eigen::Matrix3d V = svd.matrixV();
  if ((U * V.transpose()).determinant() < 0.0) U.col(2) *= -1.0;
  return U * V.transpose();
}

Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.R = a.R * b.R;
  out.t = a.R * b.t + a.t;
  if (orthogonality_defect(out.R) > 1e-9) out.R = orthonormalize(out.R);
  return out;
}

Pose inverse(const Pose& p) {
  Pose out;
  out.R = p.R.transpose();
  out.t = -(out.R * p.t);
  return out;
}

NormalizedScene normalize_scene(const std::vector<Pose>& poses, int reference_index) {
  if (poses.empty()) throw std::invalid_argument("normalize_scene: empty pose list");
  if (reference_index < 0 || reference_index >= static_cast<int>(poses.size())) {
    throw std::invalid_argument("normalize_scene: reference index out of range");
  }
  NormalizedScene out;
  out.reference_index = reference_index;
  out.reference_pose = poses[reference_index];
  const Pose p0_inv = inverse(out.reference_pose);

  out.normalized_poses.reserve(poses.size());
  double s = 0.0;
  for (const Pose& p : poses) {
    Pose rel;
    rel.R = p0_inv.R * p.R;
    rel.t = p0_inv.R * p.t + p0_inv.t;
    s = std::max(s, rel.t.cwiseAbs().maxCoeff());
    out.normalized_poses.push_back(rel);
  }
  if (s < 1e-9) s = 1.0;
  out.scale = s;
  for (Pose& p : out.normalized_poses) p.t /= s;
  return out;
}

Eigen::Vector3d ray_direction(const Intrinsics& k, const Pose& p, double u, double v) {
  if (u < 0.0 || u > k.width || v < 0.0 || v > k.height) {
    throw std::invalid_argument("ray_direction: pixel outside image bounds");
  }
  const Eigen::Vector3d cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
  return (p.R * cam).normalized();
}

Projection project(const Pose& p, const Intrinsics& k, const Eigen::Vector3d& x) {
  const Eigen::Vector3d cam = p.R.transpose() * (x - p.t);
  Projection out;
  out.depth = cam.z();
  if (cam.z() <= 1e-9) return out;
  out.u = k.fx * (cam.x() / cam.z()) + k.cx;
  out.v = k.fy * (cam.y() / cam.z()) + k.cy;
  out.ok = true;
  return out;
}

std::pair<double, double> pose_error(const Pose& estimate, const Pose& ground_truth) {
  const double e_t = (estimate.t - ground_truth.t).norm();
  const double c = ((ground_truth.R.transpose() * estimate.R).trace() - 1.0) / 2.0;
  const double e_r = std::acos(std::clamp(c, -1.0, 1.0)) * kDegPerRad;
  return {e_t, e_r};
}

std::pair<double, double> token_center(int row, int col, int patch) {
  if (row < 0 || col < 0) throw std::invalid_argument("token_center: negative index");
  return {col * patch + patch / 2.0, row * patch + patch / 2.0};
}

Eigen::Vector4d pose_to_quaternion(const Pose& p) {
  Eigen::Quaterniond q(p.R);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return {q.w(), q.x(), q.y(), q.z()};
}

Pose pose_from_quaternion(const Eigen::Vector4d& q, const Eigen::Vector3d& t) {
  Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
  quat.normalize();
  Pose p;
  p.R = quat.toRotationMatrix();
  p.t = t;
  return p;
}

std::string poses_to_text(const std::vector<std::pair<int, Pose>>& poses) {
  std::string out = "# frame_id qw qx qy qz tx ty tz\n";
  for (const auto& [id, pose] : poses) {
    const Eigen::Vector4d q = pose_to_quaternion(pose);
    out += std::to_string(id);
    for (int i = 0; i < 4; ++i) {
      out += ' ';
      append_g17(out, q[i]);
    }
    for (int i = 0; i < 3; ++i) {
      out += ' ';
      append_g17(out, pose.t[i]);
    }
    out += '\n';
  }
  return out;
}

std::vector<std::pair<int, Pose>> poses_from_text(const std::string& text) {
  std::vector<std::pair<int, Pose>> out;
  std::istringstream stream(text);
  std::string line;
  while (std::getline(stream, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    int id;
    double qw, qx, qy, qz, tx, ty, tz;
    if (!(ls >> id >> qw >> qx >> qy >> qz >> tx >> ty >> tz)) continue;
    out.emplace_back(id, pose_from_quaternion({qw, qx, qy, qz}, {tx, ty, tz}));
  }
  return out;
}

}  // namespace reloc
