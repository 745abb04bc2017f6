#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reloc/model.hpp"
#include "reloc/retrieval.hpp"
#include "reloc/solver.hpp"
#include "reloc/synth.hpp"
#include "reloc/train.hpp"

namespace reloc {

struct ThresholdPair {
  double translation = 0.0;
  double rotation_deg = 0.0;
};

// Threshold triple present in every report regardless of extra pairs.
std::vector<ThresholdPair> default_thresholds();

struct QueryResult {
  int scene_id = 0;
  int frame_id = 0;
  bool ok = false;  // solver failure: errors treated as infinite
  double e_t = 0.0;
  double e_r = 0.0;
  int inliers = 0;
};

// Componentwise medians over every query; failures sort last as infinity and
// an even count takes the mean of the two middle values.
std::pair<double, double> median_errors(const std::vector<QueryResult>& results);

// Fraction with e_t <= thr_t and e_r <= thr_r; failures count as rejected.
double acceptance_rate(const std::vector<QueryResult>& results, double thr_t,
                       double thr_r);

struct EvalReport {
  std::vector<QueryResult> results;
  double median_t = 0.0;
  double median_r = 0.0;
  std::vector<ThresholdPair> thresholds;
  std::vector<double> rates;  // parallel to thresholds
  int failure_count = 0;
};

EvalReport make_report(std::vector<QueryResult> results,
                       const std::vector<ThresholdPair>& thresholds);

struct EvalConfig {
  SelectionStrategy strategy = SelectionStrategy::kRetrieval;
  int mapping_count = 5;  // frames per map
  int map_entries = 256;  // clamped to the pooled token count per map
  SolverConfig solver;
  std::vector<ThresholdPair> thresholds;  // defaults added when empty
  uint64_t seed = 0;
};

// Localizes one query against mapping frames selected per the strategy; the
// map sampling seed makes the whole path deterministic.
QueryResult localize_query(const SceneData& scene, const FrameTokens& query,
                           NetworkParams& params, const EvalConfig& cfg,
                           uint64_t query_seed);

// Every query frame of every test scene.
EvalReport evaluate_testset(const Dataset& dataset, NetworkParams& params,
                            const EvalConfig& cfg);

struct SweepRow {
  int value = 0;  // swept quantity: frame count or map entry count
  double fine_rate = 0.0;
  double coarse_rate = 0.0;
  double median_t = 0.0;
  double median_r = 0.0;
};

struct SweepResult {
  std::string swept;  // "frames" or "features"
  ThresholdPair fine, coarse;
  std::vector<SweepRow> rows;
};

// Accuracy vs mapping-frame count at fixed N. Fine/coarse thresholds are
// (5% extent, 5 deg) and (10% extent, 10 deg).
SweepResult sweep_mapping_images(const Dataset& dataset, NetworkParams& params,
                                 const EvalConfig& cfg,
                                 const std::vector<int>& frame_counts, int fixed_n);

// Accuracy vs map entry count at a fixed frame count.
SweepResult sweep_mapping_features(const Dataset& dataset, NetworkParams& params,
                                   const EvalConfig& cfg,
                                   const std::vector<int>& entry_counts,
                                   int fixed_frames);

struct ScaleAblationRow {
  std::string model;     // "normalized" or "raw"
  double extent = 0.0;   // evaluated dataset extent
  double fine_rate = 0.0;
  double coarse_rate = 0.0;
  double median_t = 0.0;
  double median_r = 0.0;
};

// 2 models x 2 scales. Thresholds scale with each dataset's extent so the
// comparison is relative, matching the exact scale-equivariance of the
// normalized pipeline.
std::vector<ScaleAblationRow> scale_ablation(NetworkParams& normalized_model,
                                             NetworkParams& raw_model,
                                             const Dataset& base_testset,
                                             const Dataset& scaled_testset,
                                             const EvalConfig& cfg);

}  // namespace reloc
