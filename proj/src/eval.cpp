#include "reloc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "reloc/rng.hpp"

namespace reloc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ThresholdPair fine_pair(double extent) { return {0.05 * extent, 5.0}; }
ThresholdPair coarse_pair(double extent) { return {0.10 * extent, 10.0}; }

SweepRow summarize(int value, const std::vector<QueryResult>& results,
                   const ThresholdPair& fine, const ThresholdPair& coarse) {
  SweepRow row;
  row.value = value;
  row.fine_rate = acceptance_rate(results, fine.translation, fine.rotation_deg);
  row.coarse_rate =
      acceptance_rate(results, coarse.translation, coarse.rotation_deg);
  std::tie(row.median_t, row.median_r) = median_errors(results);
  return row;
}

}  // namespace

std::vector<ThresholdPair> default_thresholds() {
  return {{0.05, 5.0}, {0.10, 10.0}, {0.20, 20.0}};
}

std::pair<double, double> median_errors(const std::vector<QueryResult>& results) {
  if (results.empty()) throw std::invalid_argument("median_errors: empty results");
  std::vector<double> et, er;
  et.reserve(results.size());
  er.reserve(results.size());
  for (const QueryResult& r : results) {
    et.push_back(r.ok ? r.e_t : kInf);
    er.push_back(r.ok ? r.e_r : kInf);
  }
  return {median_of(std::move(et)), median_of(std::move(er))};
}

double acceptance_rate(const std::vector<QueryResult>& results, double thr_t,
                       double thr_r) {
  if (results.empty())
    throw std::invalid_argument("acceptance_rate: empty results");
  int accepted = 0;
  for (const QueryResult& r : results)
    if (r.ok && r.e_t <= thr_t && r.e_r <= thr_r) ++accepted;
  return static_cast<double>(accepted) / static_cast<double>(results.size());
}

EvalReport make_report(std::vector<QueryResult> results,
                       const std::vector<ThresholdPair>& thresholds) {
  EvalReport report;
  report.results = std::move(results);
  report.thresholds = default_thresholds();
  for (const ThresholdPair& t : thresholds) {
    const bool dup = std::any_of(
        report.thresholds.begin(), report.thresholds.end(),
        [&](const ThresholdPair& d) {
          return d.translation == t.translation && d.rotation_deg == t.rotation_deg;
        });
    if (!dup) report.thresholds.push_back(t);
  }
  std::tie(report.median_t, report.median_r) = median_errors(report.results);
  for (const ThresholdPair& t : report.thresholds)
    report.rates.push_back(
        acceptance_rate(report.results, t.translation, t.rotation_deg));
  for (const QueryResult& r : report.results)
    if (!r.ok) ++report.failure_count;
  return report;
}

QueryResult localize_query(const SceneData& scene, const FrameTokens& query,
                           NetworkParams& params, const EvalConfig& cfg,
                           uint64_t query_seed) {
  QueryResult result;
  result.scene_id = scene.scene_id;
  result.frame_id = query.frame_id;

  std::vector<int> ids =
      select_mapping_frames(scene.mapping_frames, cfg.strategy, cfg.mapping_count,
                            &query, derive_seed(query_seed, 0));
  std::vector<FrameTokens> selected;
  selected.reserve(ids.size());
  for (int id : ids) {
    const FrameTokens* found = nullptr;
    for (const FrameTokens& f : scene.mapping_frames)
      if (f.frame_id == id) {
        found = &f;
        break;
      }
    if (!found) throw std::runtime_error("localize_query: unknown frame id");
    selected.push_back(*found);
  }

  int pool = 0;
  for (const FrameTokens& f : selected) pool += f.token_count();
  const int n = std::min(cfg.map_entries, pool);
  MapRepresentation map = build_map(selected, n, derive_seed(query_seed, 1), params);

  CorrespondenceSet corr = forward_localize(query, map, params);
  SolverConfig solver = cfg.solver;
  solver.seed = derive_seed(query_seed, 2);
  RansacResult ransac = localize_pose(corr, map.scale, map.reference_pose,
                                      query.intrinsics, solver);
  result.ok = ransac.ok;
  result.inliers = ransac.inlier_count;
  if (ransac.ok)
    std::tie(result.e_t, result.e_r) = pose_error(ransac.pose, query.pose);
  return result;
}

EvalReport evaluate_testset(const Dataset& dataset, NetworkParams& params,
                            const EvalConfig& cfg) {
  std::vector<QueryResult> results;
  for (int si : dataset.test_scene_indices()) {
    const SceneData& scene = dataset.scenes[si];
    const uint64_t scene_seed = derive_seed(cfg.seed, static_cast<uint64_t>(si));
    for (size_t q = 0; q < scene.query_frames.size(); ++q)
      results.push_back(localize_query(scene, scene.query_frames[q], params, cfg,
                                       derive_seed(scene_seed, q)));
  }
  return make_report(std::move(results), cfg.thresholds);
}

SweepResult sweep_mapping_images(const Dataset& dataset, NetworkParams& params,
                                 const EvalConfig& cfg,
                                 const std::vector<int>& frame_counts, int fixed_n) {
  if (frame_counts.empty())
    throw std::invalid_argument("sweep_mapping_images: no counts");
  SweepResult sweep;
  sweep.swept = "frames";
  sweep.fine = fine_pair(dataset.config.extent);
  sweep.coarse = coarse_pair(dataset.config.extent);
  for (int count : frame_counts) {
    EvalConfig run = cfg;
    run.mapping_count = count;
    run.map_entries = fixed_n;
    run.seed = derive_seed(cfg.seed, static_cast<uint64_t>(count));
    EvalReport report = evaluate_testset(dataset, params, run);
    sweep.rows.push_back(summarize(count, report.results, sweep.fine, sweep.coarse));
  }
  return sweep;
}

SweepResult sweep_mapping_features(const Dataset& dataset, NetworkParams& params,
                                   const EvalConfig& cfg,
                                   const std::vector<int>& entry_counts,
                                   int fixed_frames) {
  if (entry_counts.empty())
    throw std::invalid_argument("sweep_mapping_features: no counts");
  SweepResult sweep;
  sweep.swept = "features";
  sweep.fine = fine_pair(dataset.config.extent);
  sweep.coarse = coarse_pair(dataset.config.extent);
  for (int n : entry_counts) {
    EvalConfig run = cfg;
    run.mapping_count = fixed_frames;
    run.map_entries = n;
    run.seed = derive_seed(cfg.seed, static_cast<uint64_t>(n) + (1ull << 32));
    EvalReport report = evaluate_testset(dataset, params, run);
    sweep.rows.push_back(summarize(n, report.results, sweep.fine, sweep.coarse));
  }
  return sweep;
}

std::vector<ScaleAblationRow> scale_ablation(NetworkParams& normalized_model,
                                             NetworkParams& raw_model,
                                             const Dataset& base_testset,
                                             const Dataset& scaled_testset,
                                             const EvalConfig& cfg) {
  std::vector<ScaleAblationRow> table;
  auto run = [&](NetworkParams& model, const std::string& name,
                 const Dataset& ds) {
    EvalConfig c = cfg;
    c.thresholds = {fine_pair(ds.config.extent), coarse_pair(ds.config.extent)};
    EvalReport report = evaluate_testset(ds, model, c);
    ScaleAblationRow row;
    row.model = name;
    row.extent = ds.config.extent;
    row.fine_rate = acceptance_rate(report.results, c.thresholds[0].translation,
                                    c.thresholds[0].rotation_deg);
    row.coarse_rate = acceptance_rate(report.results, c.thresholds[1].translation,
                                      c.thresholds[1].rotation_deg);
    row.median_t = report.median_t;
    row.median_r = report.median_r;
    table.push_back(row);
  };
  run(normalized_model, "normalized", base_testset);
  run(normalized_model, "normalized", scaled_testset);
  run(raw_model, "raw", base_testset);
  run(raw_model, "raw", scaled_testset);
  return table;
}

}  // namespace reloc
