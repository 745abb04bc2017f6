#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "reloc/model.hpp"
#include "reloc/rng.hpp"
#include "reloc/synth.hpp"
#include "reloc/tape.hpp"
#include "reloc/train.hpp"

using namespace reloc;

namespace {

// One prediction per ground-truth row; confidence defaults to exactly one.
std::vector<CoordinatePrediction> preds_from(const Tensor& coords,
                                             const std::vector<double>& conf) {
  std::vector<CoordinatePrediction> out(coords.rows);
  for (int i = 0; i < coords.rows; ++i) {
    out[i].point = Eigen::Vector3d(coords.at(i, 0), coords.at(i, 1), coords.at(i, 2));
    out[i].confidence = conf.empty() ? 1.0 : conf[i];
  }
  return out;
}

GroundTruth random_gt(int n, Rng& rng, double mask_prob = 1.0) {
  GroundTruth gt;
  gt.coords = Tensor(n, 3);
  gt.mask = Tensor(n, 1);
  for (int i = 0; i < n; ++i) {
    const bool keep = rng.uniform() < mask_prob;
    gt.mask.at(i, 0) = keep ? 1.0 : 0.0;
    if (keep)
      for (int j = 0; j < 3; ++j) gt.coords.at(i, j) = rng.uniform(-1.0, 1.0);
  }
  return gt;
}

Tensor random_tensor(int r, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (double& x : t.data) x = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("regression_loss is the euclidean distance") {
  CHECK(regression_loss({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == 0.0);
  CHECK(regression_loss({3.0, 4.0, 0.0}, {0.0, 0.0, 0.0}) == doctest::Approx(5.0).epsilon(1e-15));
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    Eigen::Vector3d a(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    Eigen::Vector3d b(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    CHECK(regression_loss(a, b) == (a - b).norm());
  }
}

TEST_CASE("ground_truth_coords divides out the reference pose and scale") {
  SynthConfig cfg;
  cfg.scene_count = 2;
  cfg.point_count = 500;
  cfg.desc_width = 8;
  cfg.mapping.frame_count = 5;
  cfg.query.frame_count = 2;
  const Dataset ds = make_dataset(cfg, 41);
  const SceneData& scene = ds.scenes[0];
  std::vector<Pose> poses;
  for (const FrameTokens& f : scene.mapping_frames) poses.push_back(f.pose);
  const NormalizedScene norm = normalize_scene(poses, 0);

  const FrameTokens& query = scene.query_frames[0];
  const GroundTruth gt = ground_truth_coords(query, norm);
  REQUIRE(gt.coords.rows == query.token_count());
  REQUIRE(gt.mask.rows == query.token_count());
  const Pose inv = inverse(norm.reference_pose);
  int valid = 0;
  for (int i = 0; i < query.token_count(); ++i) {
    if (!query.gt_valid[i]) {
      CHECK(gt.mask.at(i, 0) == 0.0);
      CHECK(gt.coords.at(i, 0) == 0.0);
      CHECK(gt.coords.at(i, 1) == 0.0);
      CHECK(gt.coords.at(i, 2) == 0.0);
      continue;
    }
    ++valid;
    CHECK(gt.mask.at(i, 0) == 1.0);
    const Eigen::Vector3d x = inv.apply(query.gt_points[i]) / norm.scale;
    CHECK(gt.coords.at(i, 0) == x.x());
    CHECK(gt.coords.at(i, 1) == x.y());
    CHECK(gt.coords.at(i, 2) == x.z());
  }
  CHECK(valid > 0);

  FrameTokens broken = query;
  broken.gt_points.pop_back();
  CHECK_THROWS_AS(ground_truth_coords(broken, norm), std::invalid_argument);
}

TEST_CASE("normalized_entry_gt applies the same normalization to map entries") {
  SynthConfig cfg;
  cfg.scene_count = 2;
  cfg.point_count = 500;
  cfg.desc_width = 8;
  cfg.mapping.frame_count = 5;
  cfg.query.frame_count = 2;
  const Dataset ds = make_dataset(cfg, 42);
  const SceneData& scene = ds.scenes[0];
  std::vector<const FrameTokens*> frames;
  for (const FrameTokens& f : scene.mapping_frames) frames.push_back(&f);
  const MapPlan plan = plan_map(frames, 60, 2, 7);
  const GroundTruth gt =
      normalized_entry_gt(plan.entries, plan.scale, plan.reference_pose);
  REQUIRE(gt.coords.rows == 60);
  const Pose inv = inverse(plan.reference_pose);
  for (int i = 0; i < 60; ++i) {
    const MapEntry& e = plan.entries[i];
    CHECK(gt.mask.at(i, 0) == (e.gt_valid ? 1.0 : 0.0));
    if (!e.gt_valid) continue;
    const Eigen::Vector3d x = inv.apply(e.gt_point) / plan.scale;
    CHECK(gt.coords.at(i, 0) == x.x());
    CHECK(gt.coords.at(i, 1) == x.y());
    CHECK(gt.coords.at(i, 2) == x.z());
  }
}

TEST_CASE("unit confidence reduces the loss to a plain sum of distances") {
  Rng rng(6);
  const GroundTruth qgt = random_gt(5, rng);
  const GroundTruth mgt = random_gt(4, rng);
  const Tensor qpred = random_tensor(5, 3, rng);
  const Tensor mpred = random_tensor(4, 3, rng);

  double expected = 0.0;
  for (int i = 0; i < 5; ++i)
    expected += regression_loss(
        {qpred.at(i, 0), qpred.at(i, 1), qpred.at(i, 2)},
        {qgt.coords.at(i, 0), qgt.coords.at(i, 1), qgt.coords.at(i, 2)});
  for (int i = 0; i < 4; ++i)
    expected += regression_loss(
        {mpred.at(i, 0), mpred.at(i, 1), mpred.at(i, 2)},
        {mgt.coords.at(i, 0), mgt.coords.at(i, 1), mgt.coords.at(i, 2)});

  const double loss =
      confidence_loss(preds_from(qpred, {}), qgt, preds_from(mpred, {}), mgt, {});
  CHECK(std::abs(loss - expected) < 1e-12);
}

TEST_CASE("single token at confidence two and unit error hits the closed form") {
  GroundTruth qgt;
  qgt.coords = Tensor::zeros(1, 3);
  qgt.mask = Tensor::full(1, 1, 1.0);
  GroundTruth mgt;
  mgt.coords = Tensor::zeros(0, 3);
  mgt.mask = Tensor::zeros(0, 1);

  std::vector<CoordinatePrediction> qpred(1);
  qpred[0].point = Eigen::Vector3d(1.0, 0.0, 0.0);
  qpred[0].confidence = 2.0;

  const double loss = confidence_loss(qpred, qgt, {}, mgt, LossConfig{.alpha = 0.2});
  CHECK(std::abs(loss - 1.8613705638880109) < 1e-9);
}

TEST_CASE("tape loss splits by branch and sums them") {
  // Query: one token, C = 2, error 1. Mapping: one token, C = 1.5, error 2.
  Tape tape;
  ForwardVars fw;
  fw.query_coords = tape.leaf(Tensor(1, 3, {1.0, 0.0, 0.0}), false);
  fw.query_conf = tape.leaf(Tensor(1, 1, {2.0}), false);
  fw.map_coords = tape.leaf(Tensor(1, 3, {0.0, 2.0, 0.0}), false);
  fw.map_conf = tape.leaf(Tensor(1, 1, {1.5}), false);
  GroundTruth qgt{Tensor::zeros(1, 3), Tensor::full(1, 1, 1.0)};
  GroundTruth mgt{Tensor::zeros(1, 3), Tensor::full(1, 1, 1.0)};

  const LossVars lv = loss_on_tape(tape, fw, qgt, mgt, 0.2);
  const double query = tape.value(lv.query).at(0, 0);
  const double mapping = tape.value(lv.mapping).at(0, 0);
  const double total = tape.value(lv.total).at(0, 0);
  CHECK(std::abs(query - 1.8613705638880109) < 1e-12);
  CHECK(std::abs(mapping - (3.0 - 0.2 * std::log(1.5))) < 1e-12);
  CHECK(total == query + mapping);
}

TEST_CASE("tape loss agrees with the scalar reference on random data") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int tq = 1 + static_cast<int>(rng.uniform_index(6));
    const int tm = 1 + static_cast<int>(rng.uniform_index(6));
    const GroundTruth qgt = random_gt(tq, rng, 0.7);
    GroundTruth mgt = random_gt(tm, rng, 0.7);
    double mask_sum = 0.0;
    for (double v : qgt.mask.data) mask_sum += v;
    for (double v : mgt.mask.data) mask_sum += v;
    if (mask_sum == 0.0) mgt.mask.at(0, 0) = 1.0;

    const Tensor qc = random_tensor(tq, 3, rng);
    const Tensor mc = random_tensor(tm, 3, rng);
    std::vector<double> qconf, mconf;
    for (int i = 0; i < tq; ++i) qconf.push_back(rng.uniform(1.01, 5.0));
    for (int i = 0; i < tm; ++i) mconf.push_back(rng.uniform(1.01, 5.0));

    Tensor qconf_t(tq, 1, qconf), mconf_t(tm, 1, mconf);
    Tape tape;
    ForwardVars fw;
    fw.query_coords = tape.leaf(qc, false);
    fw.query_conf = tape.leaf(qconf_t, false);
    fw.map_coords = tape.leaf(mc, false);
    fw.map_conf = tape.leaf(mconf_t, false);
    const LossVars lv = loss_on_tape(tape, fw, qgt, mgt, 0.2);

    const double reference = confidence_loss(preds_from(qc, qconf), qgt,
                                             preds_from(mc, mconf), mgt, {});
    CHECK(std::abs(tape.value(lv.total).at(0, 0) - reference) < 1e-12);
  }
}

TEST_CASE("confidence gradient vanishes exactly at alpha over distance") {
  // d/dC of C*l - alpha*log(C) is l - alpha/C, zero at C* = alpha / l. With
  // C = 1 + exp(raw) the chain rule keeps the zero at the same C*.
  const double alpha = 0.2;
  const double c_star = 2.0;
  const double l = alpha / c_star;  // 0.1

  auto loss_grad_at = [&](double c) {
    Tape tape;
    Tensor raw_t(1, 1, {std::log(c - 1.0)});
    const Tape::Var raw = tape.leaf(raw_t, true);
    ForwardVars fw;
    fw.query_coords = tape.leaf(Tensor(1, 3, {l, 0.0, 0.0}), false);
    fw.query_conf = tape.add_const(tape.exp(raw), 1.0);
    fw.map_coords = tape.leaf(Tensor(1, 3, {0.0, 0.0, 0.0}), false);
    fw.map_conf = tape.leaf(Tensor::full(1, 1, 1.5), false);
    GroundTruth qgt{Tensor::zeros(1, 3), Tensor::full(1, 1, 1.0)};
    GroundTruth mgt{Tensor::zeros(1, 3), Tensor::zeros(1, 1)};  // masked out
    const LossVars lv = loss_on_tape(tape, fw, qgt, mgt, alpha);
    tape.backward(lv.total);
    return std::pair{tape.value(lv.total).at(0, 0), tape.grad(raw).at(0, 0)};
  };

  const auto [at_star, g_star] = loss_grad_at(c_star);
  CHECK(std::abs(g_star) < 1e-8);
  CHECK(std::abs(at_star - (c_star * l - alpha * std::log(c_star))) < 1e-12);
  // Away from the stationary point the gradient has the textbook sign.
  CHECK(loss_grad_at(3.0).second > 1e-3);
  CHECK(loss_grad_at(1.5).second < -1e-3);
}

TEST_CASE("masked tokens cannot influence the loss") {
  Rng rng(8);
  GroundTruth qgt = random_gt(6, rng, 1.0);
  qgt.mask.at(1, 0) = 0.0;
  qgt.mask.at(4, 0) = 0.0;
  const GroundTruth mgt = random_gt(3, rng, 1.0);
  const Tensor mc = random_tensor(3, 3, rng);
  std::vector<double> mconf = {1.2, 2.0, 3.5};

  Tensor qc = random_tensor(6, 3, rng);
  std::vector<double> qconf = {1.1, 1.2, 1.3, 1.4, 1.5, 1.6};
  const double before =
      confidence_loss(preds_from(qc, qconf), qgt, preds_from(mc, mconf), mgt, {});
  // Scramble the masked rows; even a non-finite confidence must not leak in.
  qc.at(1, 0) = 1e100;
  qc.at(4, 2) = -1e100;
  qconf[1] = 5e7;
  qconf[4] = 1e-9;
  const double after =
      confidence_loss(preds_from(qc, qconf), qgt, preds_from(mc, mconf), mgt, {});
  CHECK(before == after);
}

TEST_CASE("loss rejects bad alpha and empty supervision") {
  Rng rng(9);
  const GroundTruth gt = random_gt(2, rng, 1.0);
  const Tensor coords = random_tensor(2, 3, rng);
  CHECK_THROWS_AS(confidence_loss(preds_from(coords, {}), gt, {},
                                  GroundTruth{Tensor::zeros(0, 3), Tensor::zeros(0, 1)},
                                  LossConfig{.alpha = 0.0}),
                  std::invalid_argument);
  GroundTruth masked = gt;
  masked.mask = Tensor::zeros(2, 1);
  CHECK_THROWS_AS(confidence_loss(preds_from(coords, {}), masked, {},
                                  GroundTruth{Tensor::zeros(0, 3), Tensor::zeros(0, 1)},
                                  LossConfig{}),
                  std::invalid_argument);

  Tape tape;
  ForwardVars fw;
  fw.query_coords = tape.leaf(coords, false);
  fw.query_conf = tape.leaf(Tensor::full(2, 1, 2.0), false);
  fw.map_coords = tape.leaf(Tensor::zeros(1, 3), false);
  fw.map_conf = tape.leaf(Tensor::full(1, 1, 2.0), false);
  GroundTruth mgt{Tensor::zeros(1, 3), Tensor::zeros(1, 1)};
  CHECK_THROWS_AS(loss_on_tape(tape, fw, gt, mgt, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(loss_on_tape(tape, fw, masked, mgt, 0.2), std::invalid_argument);
}

TEST_CASE("tape loss gradients match finite differences") {
  Rng gt_rng(10);
  const int tq = 3, tm = 2;
  const GroundTruth qgt = random_gt(tq, gt_rng, 0.8);
  GroundTruth mgt = random_gt(tm, gt_rng, 0.8);
  mgt.mask.at(0, 0) = 1.0;  // keep at least one valid token overall

  auto build = [&](Tape& tape, const std::vector<Tape::Var>& leaves) {
    ForwardVars fw;
    fw.query_coords = leaves[0];
    fw.query_conf = tape.add_const(tape.exp(leaves[1]), 1.0);
    fw.map_coords = leaves[2];
    fw.map_conf = tape.add_const(tape.exp(leaves[3]), 1.0);
    return loss_on_tape(tape, fw, qgt, mgt, 0.2).total;
  };

  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng(derive_seed(11, trial));
    const std::vector<Tensor> point = {
        random_tensor(tq, 3, rng), random_tensor(tq, 1, rng),
        random_tensor(tm, 3, rng), random_tensor(tm, 1, rng)};
    worst = std::max(worst, grad_check(build, point));
  }
  CHECK(worst < 1e-5);
}
