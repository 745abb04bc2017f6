#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <vector>

#include "reloc/geometry.hpp"
#include "reloc/rng.hpp"

using namespace reloc;

namespace {

Eigen::Matrix3d random_rotation(Rng& rng) {
  // Uniformly random axis, uniform angle; plenty for coverage purposes.
  Eigen::Vector3d axis(rng.normal(), rng.normal(), rng.normal());
  axis.normalize();
  const double angle = rng.uniform(-std::numbers::pi, std::numbers::pi);
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

Pose random_pose(Rng& rng, double span = 5.0) {
  Pose p;
  p.R = random_rotation(rng);
  p.t = Eigen::Vector3d(rng.uniform(-span, span), rng.uniform(-span, span),
                        rng.uniform(-span, span));
  return p;
}

Intrinsics desk_intrinsics() {
  Intrinsics k;
  k.fx = 200.0;
  k.fy = 200.0;
  k.cx = 128.0;
  k.cy = 96.0;
  k.width = 256;
  k.height = 192;
  return k;
}

double pose_diff(const Pose& a, const Pose& b) {
  return (a.R - b.R).cwiseAbs().maxCoeff() + (a.t - b.t).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("compose applies right-to-left and matches direct evaluation") {
  Rng rng(41);
  for (int i = 0; i < 100; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng);
    const Pose ab = compose(a, b);
    const Eigen::Vector3d x(rng.normal(), rng.normal(), rng.normal());
    CHECK((ab.apply(x) - a.apply(b.apply(x))).norm() < 1e-9);
  }
}

TEST_CASE("inverse undoes a pose to identity precision") {
  Rng rng(42);
  for (int i = 0; i < 100; ++i) {
    const Pose p = random_pose(rng);
    const Pose id = compose(p, inverse(p));
    CHECK((id.R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(id.t.cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("long composition chains stay orthonormal") {
  Rng rng(43);
  Pose acc = Pose::identity();
  for (int i = 0; i < 2000; ++i) acc = compose(acc, random_pose(rng, 0.1));
  CHECK(orthogonality_defect(acc.R) < 1e-9);
}

TEST_CASE("orthonormalize projects a perturbed rotation back") {
  Rng rng(44);
  for (int i = 0; i < 50; ++i) {
    Eigen::Matrix3d r = random_rotation(rng);
    Eigen::Matrix3d noisy = r;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) noisy(a, b) += rng.uniform(-1e-4, 1e-4);
    const Eigen::Matrix3d fixed = orthonormalize(noisy);
    CHECK(orthogonality_defect(fixed) < 1e-12);
    CHECK(fixed.determinant() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK((fixed - r).cwiseAbs().maxCoeff() < 1e-3);
    // A clean rotation passes through unchanged.
    CHECK((orthonormalize(r) - r).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("normalize_scene sends the reference to identity") {
  Rng rng(45);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Pose> poses;
    for (int i = 0; i < 6; ++i) poses.push_back(random_pose(rng));
    const int ref = static_cast<int>(rng.uniform_index(6));
    const NormalizedScene ns = normalize_scene(poses, ref);
    CHECK(ns.reference_index == ref);
    CHECK((ns.normalized_poses[ref].R - Eigen::Matrix3d::Identity())
              .cwiseAbs()
              .maxCoeff() < 1e-12);
    CHECK(ns.normalized_poses[ref].t.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(pose_diff(ns.reference_pose, poses[ref]) == 0.0);
  }
}

TEST_CASE("normalize_scene preserves relative poses") {
  // P_j^-1 P_k must be unchanged by the normalization up to the scale on t.
  Rng rng(46);
  std::vector<Pose> poses;
  for (int i = 0; i < 5; ++i) poses.push_back(random_pose(rng));
  const NormalizedScene ns = normalize_scene(poses, 0);
  for (int j = 0; j < 5; ++j)
    for (int k = 0; k < 5; ++k) {
      const Pose rel = compose(inverse(poses[j]), poses[k]);
      const Pose rel_n =
          compose(inverse(ns.normalized_poses[j]), ns.normalized_poses[k]);
      CHECK((rel.R - rel_n.R).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((rel.t - ns.scale * rel_n.t).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("normalize_scene scale is the max translation component") {
  Rng rng(47);
  std::vector<Pose> poses;
  for (int i = 0; i < 7; ++i) poses.push_back(random_pose(rng));
  const NormalizedScene ns = normalize_scene(poses, 2);
  double max_comp = 0.0;
  for (const Pose& p : poses) {
    const Pose rel = compose(inverse(poses[2]), p);
    max_comp = std::max(max_comp, rel.t.cwiseAbs().maxCoeff());
  }
  CHECK(ns.scale == doctest::Approx(max_comp).epsilon(1e-12));
  // After division no component exceeds one.
  for (const Pose& p : ns.normalized_poses)
    CHECK(p.t.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
}

TEST_CASE("normalize_scene floors the degenerate scale to one") {
  Pose p = Pose::identity();
  p.t = Eigen::Vector3d(3.0, -1.0, 2.0);
  const std::vector<Pose> poses(4, p);  // all cameras in one spot
  const NormalizedScene ns = normalize_scene(poses, 0);
  CHECK(ns.scale == 1.0);
  for (const Pose& q : ns.normalized_poses) CHECK(q.t.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("normalization is bit-exact under power-of-two scene scaling") {
  Rng rng(48);
  for (const double lambda : {2.0, 4.0}) {
    std::vector<Pose> poses, scaled;
    for (int i = 0; i < 6; ++i) {
      const Pose p = random_pose(rng);
      poses.push_back(p);
      Pose s = p;
      s.t *= lambda;
      scaled.push_back(s);
    }
    const NormalizedScene a = normalize_scene(poses, 0);
    const NormalizedScene b = normalize_scene(scaled, 0);
    CHECK(b.scale == lambda * a.scale);
    for (int i = 0; i < 6; ++i) {
      // Dividing lambda*t by lambda*s is exact when lambda is a power of two.
      CHECK(a.normalized_poses[i].t == b.normalized_poses[i].t);
      CHECK(a.normalized_poses[i].R == b.normalized_poses[i].R);
    }
  }
}

TEST_CASE("ray and projection round trip over random cases") {
  Rng rng(49);
  const Intrinsics k = desk_intrinsics();
  for (int i = 0; i < 1000; ++i) {
    const Pose p = random_pose(rng);
    const double u = rng.uniform(0.0, k.width);
    const double v = rng.uniform(0.0, k.height);
    const double depth = rng.uniform(0.5, 50.0);
    const Eigen::Vector3d dir = ray_direction(k, p, u, v);
    CHECK(dir.norm() == doctest::Approx(1.0).epsilon(1e-12));
    // Points along the ray hit the original pixel. The ray is unit length so
    // the projection depth is the parameter scaled by the axis cosine.
    const Eigen::Vector3d x = p.t + depth * dir;
    const Projection proj = project(p, k, x);
    REQUIRE(proj.ok);
    CHECK(std::abs(proj.u - u) < 1e-9);
    CHECK(std::abs(proj.v - v) < 1e-9);
    CHECK(proj.depth > 0.0);
  }
}

TEST_CASE("principal ray is the camera forward axis") {
  Rng rng(50);
  const Intrinsics k = desk_intrinsics();
  const Pose p = random_pose(rng);
  const Eigen::Vector3d dir = ray_direction(k, p, k.cx, k.cy);
  CHECK((dir - p.R.col(2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("projection rejects points behind the camera") {
  const Intrinsics k = desk_intrinsics();
  const Pose p = Pose::identity();
  CHECK(!project(p, k, Eigen::Vector3d(0.0, 0.0, -1.0)).ok);
  CHECK(!project(p, k, Eigen::Vector3d(0.0, 0.0, 0.0)).ok);
  const Projection front = project(p, k, Eigen::Vector3d(0.0, 0.0, 2.0));
  REQUIRE(front.ok);
  CHECK(front.u == doctest::Approx(k.cx).epsilon(1e-12));
  CHECK(front.v == doctest::Approx(k.cy).epsilon(1e-12));
  CHECK(front.depth == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("pose_error matches the quaternion angle oracle") {
  Rng rng(51);
  for (int i = 0; i < 300; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng);
    const auto [et, er] = pose_error(a, b);
    CHECK(et == doctest::Approx((a.t - b.t).norm()).epsilon(1e-12));
    // Oracle: relative rotation angle through the quaternion double cover.
    const Eigen::Quaterniond qa(a.R), qb(b.R);
    const double dot = std::min(1.0, std::abs(qa.dot(qb)));
    const double oracle_deg = 2.0 * std::acos(dot) * 180.0 / std::numbers::pi;
    CHECK(std::abs(er - oracle_deg) < 1e-6);
  }
}

TEST_CASE("pose_error reports exact known angles") {
  for (const double deg : {0.5, 5.0, 90.0, 179.0}) {
    Pose a = Pose::identity(), b = Pose::identity();
    b.R = Eigen::AngleAxisd(deg * std::numbers::pi / 180.0, Eigen::Vector3d::UnitY())
              .toRotationMatrix();
    const auto [et, er] = pose_error(a, b);
    CHECK(et == 0.0);
    CHECK(er == doctest::Approx(deg).epsilon(1e-9));
  }
}

TEST_CASE("quaternion round trip and sign convention") {
  Rng rng(52);
  for (int i = 0; i < 200; ++i) {
    const Pose p = random_pose(rng);
    const Eigen::Vector4d q = pose_to_quaternion(p);
    CHECK(q[0] >= 0.0);
    CHECK(q.norm() == doctest::Approx(1.0).epsilon(1e-12));
    const Pose back = pose_from_quaternion(q, p.t);
    CHECK((back.R - p.R).cwiseAbs().maxCoeff() < 1e-9);
    const auto [et, er] = pose_error(back, p);
    CHECK(et == 0.0);
    // acos resolves angles near zero only to about 1e-8 rad, so the angle
    // readout saturates around 1e-6 degrees even for an exact round trip.
    CHECK(er < 1e-5);
  }
}

TEST_CASE("token_center is the patch midpoint") {
  CHECK(token_center(0, 0, 16) == std::pair<double, double>(8.0, 8.0));
  CHECK(token_center(2, 5, 16) == std::pair<double, double>(88.0, 40.0));
  CHECK(token_center(1, 1, 8) == std::pair<double, double>(12.0, 12.0));
  CHECK_THROWS_AS(token_center(-1, 0, 16), std::invalid_argument);
}

TEST_CASE("pose text round trip is exact") {
  Rng rng(53);
  std::vector<std::pair<int, Pose>> poses;
  for (int i = 0; i < 10; ++i) poses.emplace_back(i * 3, random_pose(rng));
  const std::string text = poses_to_text(poses);
  const auto back = poses_from_text(text);
  REQUIRE(back.size() == poses.size());
  for (size_t i = 0; i < poses.size(); ++i) {
    CHECK(back[i].first == poses[i].first);
    CHECK(back[i].second.t == poses[i].second.t);
    const auto [et, er] = pose_error(back[i].second, poses[i].second);
    CHECK(et == 0.0);
    CHECK(er < 1e-9);
  }
}

TEST_CASE("pose text parser skips comments and blank lines") {
  const std::string text =
      "# header comment\n\n1 1 0 0 0 0.5 -1 2\n# trailing comment\n";
  const auto poses = poses_from_text(text);
  REQUIRE(poses.size() == 1);
  CHECK(poses[0].first == 1);
  CHECK(poses[0].second.t == Eigen::Vector3d(0.5, -1.0, 2.0));
  CHECK((poses[0].second.R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <
        1e-12);
}
