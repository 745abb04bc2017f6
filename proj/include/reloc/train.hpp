#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "reloc/model.hpp"
#include "reloc/optim.hpp"
#include "reloc/rng.hpp"
#include "reloc/synth.hpp"

namespace reloc {

struct LossConfig {
  double alpha = 0.2;  // confidence regularizer weight, must be positive
};

struct TrainConfig {
  int mapping_frames = 5;        // K
  int n_min = 64, n_max = 256;   // map entries per tuple
  double overlap_min = 0.2, overlap_max = 0.85;
  int batch = 8;
  uint64_t iterations = 20000;
  uint64_t warmup = 1000;
  double peak_lr = 3e-4;
  double alpha = 0.2;
  uint64_t seed = 1;
  int threads = 1;
  uint64_t checkpoint_every = 1000;
};

struct GroundTruth {
  Tensor coords;  // T x 3
  Tensor mask;    // T x 1, entries 0 or 1
};

// X_bar = (1/s) * P0^-1 applied to the scene point; invalid tokens keep a
// zero row and a zero mask entry.
GroundTruth ground_truth_coords(const FrameTokens& query, const NormalizedScene& norm);

// Same normalization for sampled map entries.
GroundTruth normalized_entry_gt(const std::vector<MapEntry>& entries, double scale,
                                const Pose& reference_pose);

double regression_loss(const Eigen::Vector3d& x, const Eigen::Vector3d& x_bar);

// Confidence-weighted regression over both branches:
// sum_i C_i * ||X_i - Xbar_i|| - alpha * log C_i, invalid entries contribute
// zero. Predictions and ground truth must live in the same frame.
double confidence_loss(const std::vector<CoordinatePrediction>& query_preds,
                       const GroundTruth& query_gt,
                       const std::vector<CoordinatePrediction>& map_preds,
                       const GroundTruth& map_gt, const LossConfig& cfg);

struct LossVars {
  Tape::Var total = -1;
  Tape::Var query = -1;
  Tape::Var mapping = -1;
};

LossVars loss_on_tape(Tape& tape, const ForwardVars& fw, const GroundTruth& query_gt,
                      const GroundTruth& map_gt, double alpha);

// Fraction of a's valid tokens whose ground-truth point lands inside b with
// positive depth, on a token whose own geometry agrees in depth within 5%.
double overlap_score(const FrameTokens& a, const FrameTokens& b);

struct TrainingTuple {
  int scene_index = 0;
  const FrameTokens* query = nullptr;
  std::vector<const FrameTokens*> mapping;
  int n = 0;
  uint64_t seed = 0;  // drives map sampling for this tuple
};

// Query uniform over the scene's frames, mapping frames uniform over the
// scene's mapping frames with overlap_score(query, candidate) inside the
// configured band. Resamples the query up to 100 times before giving up.
TrainingTuple sample_training_tuple(const Dataset& dataset,
                                    const std::vector<int>& scene_indices,
                                    const TrainConfig& cfg, Rng& rng);

struct TrainLogRow {
  uint64_t iteration = 0;
  double lr = 0.0;
  double loss = 0.0;
  double query_loss = 0.0;
  double mapping_loss = 0.0;
  int64_t wall_ms = 0;
};

struct Checkpoint {
  NetworkParams params;
  OptimizerState opt;
  uint64_t iteration = 0;  // completed iterations
  uint64_t seed = 0;
  TrainConfig config;
};

struct TrainHooks {
  std::function<void(const TrainLogRow&)> on_log;
  std::function<void(const Checkpoint&)> on_checkpoint;
};

// One batch = `batch` tuples with seeds derived from (seed, iteration*batch+b);
// per-tuple gradients are summed in tuple order and scaled by 1/batch, so the
// result is independent of the thread count. Resuming from a checkpoint
// replays the exact remaining trajectory because tuple seeds are stateless.
Checkpoint train(const Dataset& dataset, const TrainConfig& cfg,
                 NetworkParams params, const TrainHooks& hooks = {},
                 const Checkpoint* resume = nullptr);

}  // namespace reloc
