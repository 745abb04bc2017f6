#include "reloc/solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "reloc/rng.hpp"

namespace reloc {

namespace {

// Real roots of x^4 + p3 x^3 + p2 x^2 + p1 x + p0 via the companion matrix,
// polished with a few Newton steps to clean up eigensolver noise.
std::vector<double> quartic_roots(double p3, double p2, double p1, double p0) {
  Eigen::Matrix4d companion = Eigen::Matrix4d::Zero();
  companion(0, 3) = -p0;
  companion(1, 3) = -p1;
  companion(2, 3) = -p2;
  companion(3, 3) = -p3;
  companion(1, 0) = companion(2, 1) = companion(3, 2) = 1.0;
  const Eigen::EigenSolver<Eigen::Matrix4d> es(companion, false);

  std::vector<double> roots;
  for (int i = 0; i < 4; ++i) {
    const std::complex<double> z = es.eigenvalues()[i];
    if (std::abs(z.imag()) > 1e-6 * (1.0 + std::abs(z.real()))) continue;
    double x = z.real();
    for (int it = 0; it < 3; ++it) {
      const double f = (((x + p3) * x + p2) * x + p1) * x + p0;
      const double df = ((4.0 * x + 3.0 * p3) * x + 2.0 * p2) * x + p1;
      if (std::abs(df) < 1e-30) break;
      x -= f / df;
    }
    bool dup = false;
    for (double r : roots) {
      if (std::abs(r - x) < 1e-9 * std::max(1.0, std::abs(x))) dup = true;
    }
    if (!dup) roots.push_back(x);
  }
  return roots;
}

// Exact rigid alignment of three non-collinear point pairs via orthonormal
// triads: cheaper and fully deterministic compared to an SVD fit, and exact
// on congruent triangles, which P3P guarantees.
bool align_triads(const std::array<Eigen::Vector3d, 3>& from,
                  const std::array<Eigen::Vector3d, 3>& to, Pose* out) {
  auto triad = [](const std::array<Eigen::Vector3d, 3>& p, Eigen::Matrix3d* m) {
    const Eigen::Vector3d v1 = p[1] - p[0];
    const Eigen::Vector3d v2 = p[2] - p[0];
    const Eigen::Vector3d n = v1.cross(v2);
    if (n.norm() < 1e-12 || v1.norm() < 1e-12) return false;
    const Eigen::Vector3d e1 = v1.normalized();
    const Eigen::Vector3d e3 = n.normalized();
    m->col(0) = e1;
    m->col(1) = e3.cross(e1);
    m->col(2) = e3;
    return true;
  };
  Eigen::Matrix3d mf, mt;
  if (!triad(from, &mf) || !triad(to, &mt)) return false;
  out->R = mt * mf.transpose();
  out->t = to[0] - out->R * from[0];
  return true;
}

double reprojection_error(const Pose& pose, const Intrinsics& k,
                          const Correspondence& c) {
  const Projection pr = project(pose, k, c.point);
  if (!pr.ok) return std::numeric_limits<double>::infinity();
  const double du = pr.u - c.u;
  const double dv = pr.v - c.v;
  return std::sqrt(du * du + dv * dv);
}

Eigen::Matrix3d rodrigues(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  Eigen::Matrix3d wx;
  wx << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  if (theta < 1e-12) return Eigen::Matrix3d::Identity() + wx;
  const double s = std::sin(theta) / theta;
  const double c = (1.0 - std::cos(theta)) / (theta * theta);
  return Eigen::Matrix3d::Identity() + s * wx + c * wx * wx;
}

}  // namespace

CorrespondenceSet filter_correspondences(const CorrespondenceSet& set,
                                         const SolverConfig& cfg) {
  CorrespondenceSet out;
  out.frame = set.frame;
  out.records.reserve(set.records.size());
  for (const Correspondence& c : set.records) {
    if (c.confidence >= cfg.tau) out.records.push_back(c);
  }
  if (out.records.size() <= cfg.cap) return out;

  std::vector<size_t> idx(out.records.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    return out.records[a].confidence > out.records[b].confidence;
  });
  idx.resize(cfg.cap);
  std::sort(idx.begin(), idx.end());
  CorrespondenceSet capped;
  capped.frame = out.frame;
  capped.records.reserve(cfg.cap);
  for (size_t i : idx) capped.records.push_back(out.records[i]);
  return capped;
}

std::vector<Pose> p3p(const std::array<Correspondence, 3>& corr, const Intrinsics& k) {
  const Eigen::Vector3d x1 = corr[0].point;
  const Eigen::Vector3d x2 = corr[1].point;
  const Eigen::Vector3d x3 = corr[2].point;
  if ((x2 - x1).cross(x3 - x1).norm() * 0.5 <= 1e-9) {
    throw std::invalid_argument("p3p: collinear or coincident scene points");
  }

  std::array<Eigen::Vector3d, 3> f;
  for (int i = 0; i < 3; ++i) {
    f[i] = Eigen::Vector3d((corr[i].u - k.cx) / k.fx, (corr[i].v - k.cy) / k.fy, 1.0)
               .normalized();
  }
  // Squared distances between scene points and cosines between bearings;
  // side a faces vertex 1, b faces vertex 2, c faces vertex 3.
  const double a2 = (x2 - x3).squaredNorm();
  const double b2 = (x1 - x3).squaredNorm();
  const double c2 = (x1 - x2).squaredNorm();
  const double ca = f[1].dot(f[2]);
  const double cb = f[0].dot(f[2]);
  const double cg = f[0].dot(f[1]);

  // Grunert's quartic in v = d3/d1 after eliminating u = d2/d1 (resultant
  // form, common factor a2^2 divided out).
  const double ca2 = ca * ca, cb2 = cb * cb, cg2 = cg * cg;
  const double A4 = a2 * a2 - 2 * a2 * b2 - 2 * a2 * c2 + b2 * b2 -
                    4 * b2 * c2 * ca2 + 2 * b2 * c2 + c2 * c2;
  const double A3 =
      4 * (-a2 * a2 * cb + a2 * b2 * (ca * cg + cb) + 2 * a2 * c2 * cb -
           b2 * b2 * ca * cg + b2 * c2 * (2 * ca2 * cb + ca * cg - cb) -
           c2 * c2 * cb);
  const double A2 =
      2 * (2 * a2 * a2 * cb2 + a2 * a2 - 4 * a2 * b2 * ca * cb * cg -
           2 * a2 * b2 * cg2 - 4 * a2 * c2 * cb2 - 2 * a2 * c2 +
           2 * b2 * b2 * ca2 + 2 * b2 * b2 * cg2 - b2 * b2 -
           2 * b2 * c2 * ca2 - 4 * b2 * c2 * ca * cb * cg + 2 * c2 * c2 * cb2 +
           c2 * c2);
  const double A1 =
      4 * (-a2 * a2 * cb + a2 * b2 * (ca * cg + 2 * cb * cg2 - cb) +
           2 * a2 * c2 * cb - b2 * b2 * ca * cg + b2 * c2 * (ca * cg + cb) -
           c2 * c2 * cb);
  const double A0 = a2 * a2 - 4 * a2 * b2 * cg2 + 2 * a2 * b2 - 2 * a2 * c2 +
                    b2 * b2 - 2 * b2 * c2 + c2 * c2;

  if (std::abs(A4) < 1e-18) return {};

  std::vector<Pose> poses;
  for (double v : quartic_roots(A3 / A4, A2 / A4, A1 / A4, A0 / A4)) {
    if (!(v > 1e-12)) continue;
    // Back-substitution, linear in u after the u^2 terms cancel.
    const double u_den = 2.0 * b2 * (ca * v - cg);
    if (std::abs(u_den) < 1e-14) continue;
    const double u_num =
        v * v * (b2 + c2 - a2) + 2.0 * v * cb * (a2 - c2) + (c2 - a2 - b2);
    const double u = u_num / u_den;
    if (!(u > 1e-12)) continue;
    const double denom = u * u + v * v - 2.0 * u * v * ca;
    if (!(denom > 1e-18)) continue;
    const double d1 = std::sqrt(a2 / denom);
    const std::array<Eigen::Vector3d, 3> cam = {d1 * f[0], (u * d1) * f[1],
                                                (v * d1) * f[2]};
    Pose pose;
    if (!align_triads(cam, {x1, x2, x3}, &pose)) continue;
    poses.push_back(pose);
  }
  return poses;
}

RansacResult ransac_pnp(const CorrespondenceSet& set, const Intrinsics& k,
                        const SolverConfig& cfg) {
  RansacResult best;
  const size_t n = set.records.size();
  if (n < 4) {
    throw std::invalid_argument("ransac_pnp: need at least 4 correspondences");
  }

  Rng rng(cfg.seed);
  double required = static_cast<double>(cfg.max_iterations);
  int iter = 0;
  for (; iter < cfg.max_iterations && iter < required; ++iter) {
    const auto pick = rng.sample_without_replacement(static_cast<uint32_t>(n), 4);
    std::array<Correspondence, 3> minimal = {set.records[pick[0]],
                                             set.records[pick[1]],
                                             set.records[pick[2]]};
    const Correspondence& check = set.records[pick[3]];

    std::vector<Pose> candidates;
    try {
      candidates = p3p(minimal, k);
    } catch (const std::invalid_argument&) {
      continue;  // degenerate sample, spend the iteration
    }
    if (candidates.empty()) continue;

    const Pose* chosen = nullptr;
    double chosen_err = std::numeric_limits<double>::infinity();
    for (const Pose& cand : candidates) {
      const double err = reprojection_error(cand, k, check);
      if (err < chosen_err) {
        chosen_err = err;
        chosen = &cand;
      }
    }
    if (chosen == nullptr || !std::isfinite(chosen_err)) continue;

    int count = 0;
    double err_sum = 0.0;
    for (const Correspondence& c : set.records) {
      const double err = reprojection_error(*chosen, k, c);
      if (err < cfg.inlier_px) {
        ++count;
        err_sum += err;
      }
    }
    const double mean_err = count > 0 ? err_sum / count : 0.0;
    if (count > best.inlier_count ||
        (count == best.inlier_count && count > 0 && mean_err < best.mean_inlier_err)) {
      best.pose = *chosen;
      best.inlier_count = count;
      best.mean_inlier_err = mean_err;
      // Sample is 3 points + 1 disambiguator; all four must be clean for a
      // trustworthy hypothesis, hence the 4th-power inlier ratio.
      const double w = static_cast<double>(count) / static_cast<double>(n);
      if (w >= 1.0) {
        required = 0.0;
      } else if (w > 0.0) {
        const double denom = std::log1p(-w * w * w * w);
        if (denom < 0.0) {
          required = std::min(required,
                              std::log(1.0 - cfg.success_confidence) / denom);
        }
      }
    }
  }
  best.iterations = iter + 1;

  if (best.inlier_count < 4) return best;

  std::vector<Correspondence> inlier_set;
  for (const Correspondence& c : set.records) {
    if (reprojection_error(best.pose, k, c) < cfg.inlier_px) inlier_set.push_back(c);
  }
  best.pose = refine(best.pose, inlier_set, k, cfg.refine_iterations,
                     &best.refine_degraded);

  best.inlier.assign(n, 0);
  best.inlier_count = 0;
  double err_sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double err = reprojection_error(best.pose, k, set.records[i]);
    if (err < cfg.inlier_px) {
      best.inlier[i] = 1;
      ++best.inlier_count;
      err_sum += err;
    }
  }
  best.mean_inlier_err = best.inlier_count > 0 ? err_sum / best.inlier_count : 0.0;
  best.ok = best.inlier_count >= 4;
  return best;
}

Pose refine(const Pose& pose, const std::vector<Correspondence>& corr,
            const Intrinsics& k, int iterations, bool* degraded) {
  if (degraded) *degraded = false;
  Pose cur = pose;

  auto cost_of = [&](const Pose& p) {
    double c = 0.0;
    for (const Correspondence& rec : corr) {
      const double e = reprojection_error(p, k, rec);
      if (!std::isfinite(e)) return std::numeric_limits<double>::infinity();
      c += e * e;
    }
    return c;
  };

  double cost = cost_of(cur);
  double lambda = 0x1.0p-10;
  for (int it = 0; it < iterations; ++it) {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    const Eigen::Matrix3d rt = cur.R.transpose();
    for (const Correspondence& rec : corr) {
      const Eigen::Vector3d y = rt * (rec.point - cur.t);
      if (y.z() <= 1e-9) continue;
      const double iz = 1.0 / y.z();
      const Eigen::Vector2d r(k.fx * y.x() * iz + k.cx - rec.u,
                              k.fy * y.y() * iz + k.cy - rec.v);
      Eigen::Matrix<double, 2, 3> dpi;
      dpi << k.fx * iz, 0.0, -k.fx * y.x() * iz * iz, 0.0, k.fy * iz,
          -k.fy * y.y() * iz * iz;
      // Right-multiplied rotation increment R' = R exp([w]x) gives
      // y' = exp(-[w]x) y, hence dy/dw = [y]x at w = 0.
      Eigen::Matrix<double, 3, 6> dy;
      dy.block<3, 3>(0, 0) << 0.0, -y.z(), y.y(), y.z(), 0.0, -y.x(), -y.y(),
          y.x(), 0.0;
      dy.block<3, 3>(0, 3) = -rt;
      const Eigen::Matrix<double, 2, 6> j = dpi * dy;
      h += j.transpose() * j;
      g += j.transpose() * r;
    }

    Eigen::Matrix<double, 6, 6> damped = h;
    for (int i = 0; i < 6; ++i) damped(i, i) += lambda * h(i, i);
    const Eigen::LLT<Eigen::Matrix<double, 6, 6>> llt(damped);
    if (llt.info() != Eigen::Success) {
      if (degraded) *degraded = true;
      return cur;
    }
    const Eigen::Matrix<double, 6, 1> delta = llt.solve(-g);
    if (!delta.allFinite()) {
      if (degraded) *degraded = true;
      return cur;
    }

    Pose next;
    next.R = cur.R * rodrigues(delta.head<3>());
    next.t = cur.t + delta.tail<3>();
    const double next_cost = cost_of(next);
    if (next_cost < cost) {
      cur = next;
      cost = next_cost;
      lambda *= 0.5;
      if (delta.norm() < 1e-14) break;
    } else {
      lambda *= 4.0;
      if (lambda > 1e12) break;
    }
  }
  return cur;
}

RansacResult localize_pose(const CorrespondenceSet& normalized, double s,
                           const Pose& p0, const Intrinsics& k,
                           const SolverConfig& cfg) {
  CorrespondenceSet metric;
  metric.frame = PointFrame::kScene;
  metric.records = normalized.records;
  for (Correspondence& c : metric.records) c.point *= s;

  const CorrespondenceSet kept = filter_correspondences(metric, cfg);
  RansacResult res;
  if (kept.records.size() < 4) {
    res.iterations = 0;
    return res;
  }
  res = ransac_pnp(kept, k, cfg);
  if (res.ok) res.pose = compose(p0, res.pose);
  return res;
}

}  // namespace reloc
