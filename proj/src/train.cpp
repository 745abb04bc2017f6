#include "reloc/train.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>

#include "reloc/rng.hpp"

namespace reloc {
namespace {

constexpr int kTupleAttempts = 100;
constexpr uint64_t kMapSampleStream = 0xA11;

Tape::Var branch_loss(Tape& t, Tape::Var coords, Tape::Var conf,
                      const GroundTruth& gt, double alpha) {
  Tape::Var gt_leaf = t.leaf(gt.coords, false);
  Tape::Var mask = t.leaf(gt.mask, false);
  Tape::Var diff = t.sub(coords, gt_leaf);
  Tape::Var dist = t.sqrt(t.sum_cols(t.mul(diff, diff)));
  Tape::Var weighted = t.sub(t.mul(conf, dist), t.scale(t.log(conf), alpha));
  return t.sum_all(t.mul(mask, weighted));
}

double mask_total(const Tensor& mask) {
  double s = 0.0;
  for (double v : mask.data) s += v;
  return s;
}

struct TupleResult {
  double loss = 0.0, query_loss = 0.0, mapping_loss = 0.0;
  std::vector<Tensor> grads;  // canonical parameter order
};

TupleResult run_tuple(NetworkParams& params, const TrainingTuple& tuple,
                      double alpha) {
  MapPlan plan = plan_map(tuple.mapping, tuple.n,
                          params.config.fourier_frequencies, tuple.seed,
                          params.config.use_scale_norm);
  NormalizedScene norm;
  norm.scale = plan.scale;
  norm.reference_pose = plan.reference_pose;
  GroundTruth query_gt = ground_truth_coords(*tuple.query, norm);
  GroundTruth map_gt =
      normalized_entry_gt(plan.entries, plan.scale, plan.reference_pose);

  Tape tape;
  ParamsP<Tape::Var> ids = push_params(tape, params, true);
  Tape::Var fused = fuse_map_on_tape(tape, ids,
                                     tape.leaf(plan.descriptors, false),
                                     tape.leaf(plan.ray_encodings, false));
  ForwardVars fw = forward_on_tape(tape, ids, params.config,
                                   tape.leaf(tuple.query->tokens, false), fused);
  LossVars lv = loss_on_tape(tape, fw, query_gt, map_gt, alpha);

  TupleResult out;
  out.loss = tape.value(lv.total).at(0, 0);
  out.query_loss = tape.value(lv.query).at(0, 0);
  out.mapping_loss = tape.value(lv.mapping).at(0, 0);
  if (!std::isfinite(out.loss)) return out;  // caller raises with context

  tape.backward(lv.total);
  std::vector<Tape::Var> flat = flatten_ids(ids);
  out.grads.reserve(flat.size());
  for (Tape::Var v : flat) {
    if (tape.has_grad(v))
      out.grads.push_back(tape.grad(v));
    else
      out.grads.push_back(Tensor::zeros(tape.value(v).rows, tape.value(v).cols));
  }
  return out;
}

}  // namespace

GroundTruth ground_truth_coords(const FrameTokens& query,
                                const NormalizedScene& norm) {
  if (query.gt_points.size() != static_cast<size_t>(query.token_count()) ||
      query.gt_valid.size() != query.gt_points.size())
    throw std::invalid_argument("ground_truth_coords: missing ground truth");
  const Pose inv = inverse(norm.reference_pose);
  GroundTruth gt;
  gt.coords = Tensor::zeros(query.token_count(), 3);
  gt.mask = Tensor::zeros(query.token_count(), 1);
  for (int i = 0; i < query.token_count(); ++i) {
    if (!query.gt_valid[i]) continue;
    Eigen::Vector3d x = inv.apply(query.gt_points[i]) / norm.scale;
    gt.coords.at(i, 0) = x.x();
    gt.coords.at(i, 1) = x.y();
    gt.coords.at(i, 2) = x.z();
    gt.mask.at(i, 0) = 1.0;
  }
  return gt;
}

GroundTruth normalized_entry_gt(const std::vector<MapEntry>& entries, double scale,
                                const Pose& reference_pose) {
  const Pose inv = inverse(reference_pose);
  GroundTruth gt;
  gt.coords = Tensor::zeros(static_cast<int>(entries.size()), 3);
  gt.mask = Tensor::zeros(static_cast<int>(entries.size()), 1);
  for (size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].gt_valid) continue;
    Eigen::Vector3d x = inv.apply(entries[i].gt_point) / scale;
    gt.coords.at(static_cast<int>(i), 0) = x.x();
    gt.coords.at(static_cast<int>(i), 1) = x.y();
    gt.coords.at(static_cast<int>(i), 2) = x.z();
    gt.mask.at(static_cast<int>(i), 0) = 1.0;
  }
  return gt;
}

double regression_loss(const Eigen::Vector3d& x, const Eigen::Vector3d& x_bar) {
  return (x - x_bar).norm();
}

double confidence_loss(const std::vector<CoordinatePrediction>& query_preds,
                       const GroundTruth& query_gt,
                       const std::vector<CoordinatePrediction>& map_preds,
                       const GroundTruth& map_gt, const LossConfig& cfg) {
  if (cfg.alpha <= 0.0) throw std::invalid_argument("confidence_loss: alpha <= 0");
  auto branch = [&](const std::vector<CoordinatePrediction>& preds,
                    const GroundTruth& gt, int* valid) {
    double sum = 0.0;
    for (size_t i = 0; i < preds.size(); ++i) {
      if (gt.mask.at(static_cast<int>(i), 0) == 0.0) continue;
      ++*valid;
      Eigen::Vector3d x_bar(gt.coords.at(static_cast<int>(i), 0),
                            gt.coords.at(static_cast<int>(i), 1),
                            gt.coords.at(static_cast<int>(i), 2));
      const double l = regression_loss(preds[i].point, x_bar);
      sum += preds[i].confidence * l - cfg.alpha * std::log(preds[i].confidence);
    }
    return sum;
  };
  int valid = 0;
  const double total = branch(query_preds, query_gt, &valid) +
                       branch(map_preds, map_gt, &valid);
  if (valid == 0)
    throw std::invalid_argument("confidence_loss: no valid tokens in either branch");
  return total;
}

LossVars loss_on_tape(Tape& tape, const ForwardVars& fw, const GroundTruth& query_gt,
                      const GroundTruth& map_gt, double alpha) {
  if (alpha <= 0.0) throw std::invalid_argument("loss_on_tape: alpha <= 0");
  if (mask_total(query_gt.mask) + mask_total(map_gt.mask) == 0.0)
    throw std::invalid_argument("loss_on_tape: no valid tokens in either branch");
  LossVars out;
  out.query = branch_loss(tape, fw.query_coords, fw.query_conf, query_gt, alpha);
  out.mapping = branch_loss(tape, fw.map_coords, fw.map_conf, map_gt, alpha);
  out.total = tape.add(out.query, out.mapping);
  return out;
}

double overlap_score(const FrameTokens& a, const FrameTokens& b) {
  if (a.scene_id != b.scene_id)
    throw std::invalid_argument("overlap_score: frames from different scenes");
  int valid = 0, hits = 0;
  for (int t = 0; t < a.token_count(); ++t) {
    if (!a.gt_valid[t]) continue;
    ++valid;
    Projection pr = project(b.pose, b.intrinsics, a.gt_points[t]);
    if (!pr.ok || pr.u < 0.0 || pr.u >= b.intrinsics.width || pr.v < 0.0 ||
        pr.v >= b.intrinsics.height)
      continue;
    const int token = b.token_index(static_cast<int>(pr.v / b.patch),
                                    static_cast<int>(pr.u / b.patch));
    if (!b.gt_valid[token]) continue;
    Projection own = project(b.pose, b.intrinsics, b.gt_points[token]);
    if (own.ok && std::abs(pr.depth - own.depth) <= 0.05 * own.depth) ++hits;
  }
  return valid > 0 ? static_cast<double>(hits) / valid : 0.0;
}

TrainingTuple sample_training_tuple(const Dataset& dataset,
                                    const std::vector<int>& scene_indices,
                                    const TrainConfig& cfg, Rng& rng) {
  if (scene_indices.empty())
    throw std::invalid_argument("sample_training_tuple: no scenes");
  for (int attempt = 0; attempt < kTupleAttempts; ++attempt) {
    const int si = scene_indices[rng.uniform_index(scene_indices.size())];
    const SceneData& scene = dataset.scenes[si];
    std::vector<const FrameTokens*> frames;
    for (const FrameTokens& f : scene.mapping_frames) frames.push_back(&f);
    for (const FrameTokens& f : scene.query_frames) frames.push_back(&f);
    if (frames.size() < static_cast<size_t>(cfg.mapping_frames) + 1) continue;
    const FrameTokens* query = frames[rng.uniform_index(frames.size())];

    std::vector<const FrameTokens*> candidates;
    for (const FrameTokens& f : scene.mapping_frames) {
      if (&f == query) continue;
      const double o = overlap_score(*query, f);
      if (o >= cfg.overlap_min && o <= cfg.overlap_max) candidates.push_back(&f);
    }
    if (candidates.size() < static_cast<size_t>(cfg.mapping_frames)) continue;

    TrainingTuple tuple;
    tuple.scene_index = si;
    tuple.query = query;
    for (uint32_t pick : rng.sample_without_replacement(
             static_cast<uint32_t>(candidates.size()),
             static_cast<uint32_t>(cfg.mapping_frames)))
      tuple.mapping.push_back(candidates[pick]);
    tuple.n = cfg.n_min +
              static_cast<int>(rng.uniform_index(cfg.n_max - cfg.n_min + 1));
    return tuple;
  }
  throw std::runtime_error("sample_training_tuple: no viable tuple after " +
                           std::to_string(kTupleAttempts) + " attempts");
}

Checkpoint train(const Dataset& dataset, const TrainConfig& cfg,
                 NetworkParams params, const TrainHooks& hooks,
                 const Checkpoint* resume) {
  if (cfg.batch < 1 || cfg.iterations < 1 || cfg.n_min < 1 ||
      cfg.n_max < cfg.n_min || cfg.overlap_min < 0.0 ||
      cfg.overlap_max > 1.0 || cfg.overlap_min >= cfg.overlap_max)
    throw std::invalid_argument("train: invalid configuration");
  if (cfg.warmup >= cfg.iterations)
    throw std::invalid_argument("train: warmup must be below the iteration count");
  const std::vector<int> train_scenes = dataset.train_scene_indices();

  OptimizerState opt;
  uint64_t start = 0;
  if (resume) {
    params = resume->params;
    opt = resume->opt;
    start = resume->iteration;
  } else {
    opt.init(parameter_tensors(params));
  }
  std::vector<Tensor*> tensors = parameter_tensors(params);

  std::vector<Tensor> acc;
  acc.reserve(tensors.size());
  for (Tensor* t : tensors) acc.emplace_back(t->rows, t->cols);

  Checkpoint ckpt;
  ckpt.params = params;
  ckpt.opt = opt;
  ckpt.iteration = start;
  ckpt.seed = cfg.seed;
  ckpt.config = cfg;
  for (uint64_t iter = start; iter < cfg.iterations; ++iter) {
    const auto t0 = std::chrono::steady_clock::now();
    for (Tensor& g : acc) std::fill(g.data.begin(), g.data.end(), 0.0);
    double loss_sum = 0.0, qloss_sum = 0.0, mloss_sum = 0.0;

    std::vector<TrainingTuple> tuples(cfg.batch);
    std::vector<uint64_t> tuple_seeds(cfg.batch);
    for (int b = 0; b < cfg.batch; ++b) {
      tuple_seeds[b] = derive_seed(cfg.seed, iter * cfg.batch + b);
      Rng trng(tuple_seeds[b]);
      tuples[b] = sample_training_tuple(dataset, train_scenes, cfg, trng);
      tuples[b].seed = derive_seed(tuple_seeds[b], kMapSampleStream);
    }

    std::vector<TupleResult> results(cfg.batch);
    if (cfg.threads > 1) {
      std::vector<std::thread> pool;
      for (int b = 0; b < cfg.batch; ++b) {
        pool.emplace_back([&, b] { results[b] = run_tuple(params, tuples[b], cfg.alpha); });
        if (static_cast<int>(pool.size()) == cfg.threads || b + 1 == cfg.batch) {
          for (std::thread& th : pool) th.join();
          pool.clear();
        }
      }
    } else {
      for (int b = 0; b < cfg.batch; ++b)
        results[b] = run_tuple(params, tuples[b], cfg.alpha);
    }

    // Gradients are reduced in tuple order so the result does not depend on
    // the thread count.
    for (int b = 0; b < cfg.batch; ++b) {
      const TupleResult& r = results[b];
      if (!std::isfinite(r.loss))
        throw std::runtime_error("train: non-finite loss at iteration " +
                                 std::to_string(iter) + ", tuple seed " +
                                 std::to_string(tuple_seeds[b]));
      loss_sum += r.loss;
      qloss_sum += r.query_loss;
      mloss_sum += r.mapping_loss;
      for (size_t p = 0; p < acc.size(); ++p)
        for (size_t i = 0; i < acc[p].size(); ++i)
          acc[p].data[i] += r.grads[p].data[i];
    }
    const double inv_batch = 1.0 / cfg.batch;
    for (Tensor& g : acc)
      for (double& x : g.data) x *= inv_batch;

    const double lr = cosine_lr(iter + 1, cfg.iterations, cfg.warmup, cfg.peak_lr);
    std::vector<const Tensor*> grad_ptrs;
    grad_ptrs.reserve(acc.size());
    for (const Tensor& g : acc) grad_ptrs.push_back(&g);
    adamw_step(tensors, grad_ptrs, opt, lr);

    const auto t1 = std::chrono::steady_clock::now();
    if (hooks.on_log) {
      TrainLogRow row;
      row.iteration = iter + 1;
      row.lr = lr;
      row.loss = loss_sum * inv_batch;
      row.query_loss = qloss_sum * inv_batch;
      row.mapping_loss = mloss_sum * inv_batch;
      row.wall_ms =
          std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
      hooks.on_log(row);
    }
    const bool last = iter + 1 == cfg.iterations;
    if (last || (cfg.checkpoint_every > 0 &&
                 (iter + 1) % cfg.checkpoint_every == 0)) {
      ckpt.params = params;
      ckpt.opt = opt;
      ckpt.iteration = iter + 1;
      ckpt.seed = cfg.seed;
      ckpt.config = cfg;
      if (!last && hooks.on_checkpoint) hooks.on_checkpoint(ckpt);
    }
  }
  if (hooks.on_checkpoint) hooks.on_checkpoint(ckpt);
  return ckpt;
}

}  // namespace reloc
