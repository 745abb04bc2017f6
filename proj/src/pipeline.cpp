#include "reloc/pipeline.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <stdexcept>

#include "reloc/rng.hpp"
#include "reloc/train.hpp"

namespace reloc {
namespace {

// Seed streams hanging off RunConfig::seed; synth and training consume the
// base seed directly, everything else gets its own stream.
constexpr uint64_t kInitStream = 0x1417;
constexpr uint64_t kSolveStream = 0x50;
constexpr uint64_t kEvalStream = 0xE7A1;

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

const SceneData& find_scene(const Dataset& dataset, int scene_id) {
  for (const SceneData& s : dataset.scenes)
    if (s.scene_id == scene_id) return s;
  throw std::invalid_argument("unknown scene id " + std::to_string(scene_id));
}

const FrameTokens* find_frame(const std::vector<FrameTokens>& frames, int frame_id) {
  for (const FrameTokens& f : frames)
    if (f.frame_id == frame_id) return &f;
  return nullptr;
}

std::vector<FrameTokens> frames_by_id(const SceneData& scene,
                                      const std::vector<int>& ids) {
  std::vector<FrameTokens> out;
  out.reserve(ids.size());
  for (int id : ids) {
    const FrameTokens* f = find_frame(scene.mapping_frames, id);
    if (!f) throw std::runtime_error("mapping frame lookup failed");
    out.push_back(*f);
  }
  return out;
}

MapRepresentation build_scene_map(const SceneData& scene, NetworkParams& params,
                                  SelectionStrategy strategy, int topk, int entries,
                                  const FrameTokens* probe, uint64_t seed) {
  std::vector<int> ids = select_mapping_frames(scene.mapping_frames, strategy, topk,
                                               probe, derive_seed(seed, 0));
  std::vector<FrameTokens> selected = frames_by_id(scene, ids);
  return build_map(selected, entries, derive_seed(seed, 1), params);
}

LocalizeRecord localize_against_map(const FrameTokens& query,
                                    const MapRepresentation& map,
                                    NetworkParams& params, const SolverConfig& solver) {
  CorrespondenceSet corr = forward_localize(query, map, params);
  RansacResult ransac =
      localize_pose(corr, map.scale, map.reference_pose, query.intrinsics, solver);

  LocalizeRecord rec;
  rec.scene_id = query.scene_id;
  rec.frame_id = query.frame_id;
  rec.ok = ransac.ok;
  rec.inliers = ransac.inlier_count;
  rec.iterations = ransac.iterations;
  if (ransac.ok) {
    rec.pose = ransac.pose;
    rec.mean_inlier_err = ransac.mean_inlier_err;
    std::tie(rec.e_t, rec.e_r) = pose_error(ransac.pose, query.pose);
  }
  return rec;
}

Checkpoint load_checkpoint(const std::string& path) {
  return deserialize_checkpoint(read_file(path));
}

}  // namespace

std::string default_output_root() {
  const char* env = std::getenv("RELOC_OUTPUT_ROOT");
  if (env && *env) return env;
  return ".";
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw std::runtime_error("cannot create directory " + path + ": " + ec.message());
}

void write_resolved_config(const RunConfig& cfg, const std::string& out_dir) {
  write_file(join(out_dir, "config.resolved"), cfg.serialize());
}

SynthGenResult run_synth_gen(const RunConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  Dataset dataset = make_dataset(cfg.synth, cfg.seed);

  SynthGenResult result;
  result.dataset_path = join(out_dir, "dataset.bin");
  result.scene_count = static_cast<int>(dataset.scenes.size());
  result.train_scenes = static_cast<int>(dataset.train_scene_indices().size());
  result.test_scenes = static_cast<int>(dataset.test_scene_indices().size());
  result.mapping_frames = cfg.synth.mapping.frame_count;
  result.query_frames = cfg.synth.query.frame_count;

  write_file(result.dataset_path, serialize_dataset(dataset));
  write_resolved_config(cfg, out_dir);
  return result;
}

TrainRunResult run_train(const RunConfig& cfg, const std::string& dataset_path,
                         const std::string& out_dir, const std::string& resume_path,
                         std::ostream* status) {
  ensure_dir(out_dir);
  Dataset dataset = deserialize_dataset(read_file(dataset_path));

  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  tc.threads = cfg.threads;

  Checkpoint resume;
  const Checkpoint* resume_ptr = nullptr;
  NetworkParams params;
  if (!resume_path.empty()) {
    resume = load_checkpoint(resume_path);
    params = resume.params;
    resume_ptr = &resume;
  } else {
    params = init_params(cfg.model, derive_seed(cfg.seed, kInitStream));
  }

  TrainRunResult result;
  result.log_path = join(out_dir, "training_log.csv");
  result.checkpoint_path = join(out_dir, "checkpoint_final.bin");
  const std::string latest_path = join(out_dir, "checkpoint_latest.bin");

  std::ofstream log(result.log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("cannot open " + result.log_path);
  log << training_log_header() << "\n";

  TrainHooks hooks;
  hooks.on_log = [&](const TrainLogRow& row) {
    log << training_log_row(row) << "\n";
    result.final_loss = row.loss;
    if (status && (row.iteration == 1 || row.iteration % tc.checkpoint_every == 0))
      *status << "iter " << row.iteration << "/" << tc.iterations << " lr "
              << row.lr << " loss " << row.loss << "\n";
  };
  hooks.on_checkpoint = [&](const Checkpoint& ckpt) {
    write_file(latest_path, serialize_checkpoint(ckpt));
  };

  Checkpoint final_ckpt = train(dataset, tc, std::move(params), hooks, resume_ptr);
  log.flush();

  write_file(result.checkpoint_path, serialize_checkpoint(final_ckpt));
  write_resolved_config(cfg, out_dir);
  result.iterations = final_ckpt.iteration;
  return result;
}

std::string run_build_map(const RunConfig& cfg, const std::string& checkpoint_path,
                          const std::string& dataset_path, const BuildMapArgs& args,
                          const std::string& out_dir) {
  ensure_dir(out_dir);
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  Dataset dataset = deserialize_dataset(read_file(dataset_path));
  const SceneData& scene = find_scene(dataset, args.scene_id);

  const FrameTokens* probe = nullptr;
  if (args.strategy == SelectionStrategy::kRetrieval) {
    probe = find_frame(scene.query_frames, args.query_frame_id);
    if (!probe)
      throw std::invalid_argument(
          "retrieval selection needs --query with a query frame id of scene " +
          std::to_string(args.scene_id));
  }

  MapRepresentation map = build_scene_map(scene, ckpt.params, args.strategy,
                                          args.topk, args.entries, probe, args.seed);
  const std::string map_path = join(out_dir, "map.bin");
  write_file(map_path, serialize_map(map));
  write_resolved_config(cfg, out_dir);
  return map_path;
}

LocalizeRunResult run_localize(const RunConfig& cfg,
                               const std::string& checkpoint_path,
                               const std::string& dataset_path,
                               const LocalizeArgs& args, const std::string& out_dir) {
  ensure_dir(out_dir);
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  Dataset dataset = deserialize_dataset(read_file(dataset_path));

  std::vector<const SceneData*> scenes;
  if (args.scene_id >= 0) {
    scenes.push_back(&find_scene(dataset, args.scene_id));
  } else {
    if (!args.map_path.empty())
      throw std::invalid_argument("--map needs --scene: a map file holds one scene");
    for (int si : dataset.test_scene_indices()) scenes.push_back(&dataset.scenes[si]);
  }

  MapRepresentation loaded;
  if (!args.map_path.empty()) loaded = deserialize_map(read_file(args.map_path));

  const uint64_t solve_base = derive_seed(cfg.seed, kSolveStream);

  LocalizeRunResult result;
  for (const SceneData* scene : scenes) {
    const uint64_t scene_map_seed =
        args.scene_id >= 0
            ? args.map_seed
            : derive_seed(args.map_seed, static_cast<uint64_t>(scene->scene_id));
    const uint64_t scene_solve =
        derive_seed(solve_base, static_cast<uint64_t>(scene->scene_id));

    MapRepresentation scene_map;
    const bool per_query_map =
        args.map_path.empty() && args.strategy == SelectionStrategy::kRetrieval;
    if (args.map_path.empty() && !per_query_map)
      scene_map = build_scene_map(*scene, ckpt.params, args.strategy, args.topk,
                                  args.entries, nullptr, scene_map_seed);

    for (const FrameTokens& query : scene->query_frames) {
      const MapRepresentation* map = &scene_map;
      MapRepresentation query_map;
      if (!args.map_path.empty()) {
        map = &loaded;
      } else if (per_query_map) {
        query_map = build_scene_map(
            *scene, ckpt.params, args.strategy, args.topk, args.entries, &query,
            derive_seed(scene_map_seed, static_cast<uint64_t>(query.frame_id)));
        map = &query_map;
      }
      SolverConfig solver = cfg.solver;
      solver.seed = derive_seed(scene_solve, static_cast<uint64_t>(query.frame_id));
      result.records.push_back(localize_against_map(query, *map, ckpt.params, solver));
    }
  }

  result.csv_path = join(out_dir, "results.csv");
  write_file(result.csv_path, localize_csv(result.records));
  write_resolved_config(cfg, out_dir);
  return result;
}

EvalRunResult run_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                       const std::string& dataset_path, const EvalRunArgs& args,
                       const std::string& out_dir, std::ostream* status) {
  ensure_dir(out_dir);
  EvalRunResult result;

  if (!args.results_path.empty()) {
    std::vector<LocalizeRecord> records = parse_localize_csv(read_file(args.results_path));
    std::vector<QueryResult> queries;
    queries.reserve(records.size());
    for (const LocalizeRecord& r : records) {
      QueryResult q;
      q.scene_id = r.scene_id;
      q.frame_id = r.frame_id;
      q.ok = r.ok;
      q.e_t = r.e_t;
      q.e_r = r.e_r;
      q.inliers = r.inliers;
      queries.push_back(q);
    }
    result.report = make_report(std::move(queries), {});
  } else {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    Dataset dataset = deserialize_dataset(read_file(dataset_path));

    EvalConfig ec;
    ec.strategy = cfg.eval.strategy;
    ec.mapping_count = cfg.eval.mapping_count;
    ec.map_entries = cfg.eval.map_entries;
    ec.solver = cfg.solver;
    ec.seed = derive_seed(cfg.seed, kEvalStream);

    if (status) *status << "evaluating test set\n";
    result.report = evaluate_testset(dataset, ckpt.params, ec);

    if (args.sweeps) {
      if (status) *status << "sweeping mapping frame counts\n";
      SweepResult frames = sweep_mapping_images(dataset, ckpt.params, ec,
                                                cfg.eval.sweep_frames,
                                                cfg.eval.sweep_fixed_entries);
      const std::string frames_csv = join(out_dir, "sweep_frames.csv");
      const std::string frames_svg = join(out_dir, "sweep_frames.svg");
      write_file(frames_csv, sweep_csv(frames));
      write_file(frames_svg, sweep_svg(frames));
      result.files.push_back(frames_csv);
      result.files.push_back(frames_svg);

      if (status) *status << "sweeping map entry counts\n";
      SweepResult features = sweep_mapping_features(dataset, ckpt.params, ec,
                                                    cfg.eval.sweep_features,
                                                    cfg.eval.sweep_fixed_frames);
      const std::string features_csv = join(out_dir, "sweep_features.csv");
      const std::string features_svg = join(out_dir, "sweep_features.svg");
      write_file(features_csv, sweep_csv(features));
      write_file(features_svg, sweep_svg(features));
      result.files.push_back(features_csv);
      result.files.push_back(features_svg);
    }

    if (!args.raw_checkpoint_path.empty() || !args.scaled_dataset_path.empty()) {
      if (args.raw_checkpoint_path.empty() || args.scaled_dataset_path.empty())
        throw std::invalid_argument(
            "the scale ablation needs both --raw-checkpoint and --scaled-dataset");
      if (status) *status << "running the scale ablation\n";
      Checkpoint raw = load_checkpoint(args.raw_checkpoint_path);
      Dataset scaled = deserialize_dataset(read_file(args.scaled_dataset_path));
      std::vector<ScaleAblationRow> table =
          scale_ablation(ckpt.params, raw.params, dataset, scaled, ec);
      const std::string ablation_path = join(out_dir, "ablation.csv");
      write_file(ablation_path, ablation_csv(table));
      result.files.push_back(ablation_path);
    }
  }

  const std::string report_path = join(out_dir, "report.csv");
  const std::string summary_path = join(out_dir, "summary.csv");
  write_file(report_path, report_csv(result.report));
  write_file(summary_path, summary_csv(result.report));
  result.files.insert(result.files.begin(), {report_path, summary_path});
  write_resolved_config(cfg, out_dir);
  return result;
}

namespace {

using Builder = std::function<Tape::Var(Tape&, const std::vector<Tape::Var>&)>;

Tensor random_tensor(Rng& rng, int rows, int cols, double lo, double hi) {
  Tensor t(rows, cols);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

bool report_check(std::ostream& out, const std::string& name, const Builder& build,
                  const std::vector<Tensor>& point, double tol) {
  const double err = grad_check(build, point);
  const bool ok = err < tol;
  out << (ok ? "ok   " : "FAIL ") << name << "  max_rel_err " << err << "\n";
  return ok;
}

}  // namespace

bool run_grad_check(std::ostream& out) {
  constexpr double kTol = 1e-5;
  Rng rng(0x6adc);
  bool all_ok = true;
  const auto check = [&](const std::string& name, const Builder& build,
                         const std::vector<Tensor>& point) {
    all_ok = report_check(out, name, build, point, kTol) && all_ok;
  };

  const Tensor a34 = random_tensor(rng, 3, 4, -1.0, 1.0);
  const Tensor b34 = random_tensor(rng, 3, 4, -1.0, 1.0);
  const Tensor b42 = random_tensor(rng, 4, 2, -1.0, 1.0);
  const Tensor row4 = random_tensor(rng, 1, 4, -1.0, 1.0);
  const Tensor pos34 = random_tensor(rng, 3, 4, 0.5, 2.0);

  check("matmul",
        [](Tape& t, const std::vector<Tape::Var>& v) {
          return t.sum_all(t.matmul(v[0], v[1]));
        },
        {a34, b42});
  check("matmul_ta",
        [](Tape& t, const std::vector<Tape::Var>& v) {
          return t.sum_all(t.matmul(v[0], v[1], true, false));
        },
        {random_tensor(rng, 4, 3, -1.0, 1.0), b42});
  check("matmul_tb",
        [](Tape& t, const std::vector<Tape::Var>& v) {
          return t.sum_all(t.matmul(v[0], v[1], false, true));
        },
        {a34, random_tensor(rng, 2, 4, -1.0, 1.0)});
  check("matmul_ta_tb",
        [](Tape& t, const std::vector<Tape::Var>& v) {
          return t.sum_all(t.matmul(v[0], v[1], true, true));
        },
        {random_tensor(rng, 4, 3, -1.0, 1.0), random_tensor(rng, 2, 4, -1.0, 1.0)});
  check("add_sub_mul",
        [](Tape& t, const std::vector<Tape::Var>& v) {
          return t.sum_all(t.mul(t.add(v[0], v[1]), t.sub(v[0], v[1])));
        },
        {a34, b34});
  check("rowvec_ops",
        [](Tape& t, const std::vector<Tape::Var>& v) {
          return t.sum_all(t.mul_rowvec(t.add_rowvec(v[0], v[1]), v[1]));
        },
        {a34, row4});
  check("scale_add_const",
        [](Tape& t, const std::vector<Tape::Var>& v) {
          return t.sum_all(t.scale(t.add_const(v[0], 0.7), -1.3));
        },
        {a34});
  check("exp",
        [](Tape& t, const std::vector<Tape::Var>& v) {
          return t.sum_all(t.exp(v[0]));
        },
        {a34});
  check("log",
        [](Tape& t, const std::vector<Tape::Var>& v) {
          return t.sum_all(t.log(v[0]));
        },
        {pos34});
  check("sqrt",
        [](Tape& t, const std::vector<Tape::Var>& v) {
          return t.sum_all(t.sqrt(v[0]));
        },
        {pos34});
  check("gelu",
        [](Tape& t, const std::vector<Tape::Var>& v) {
          return t.sum_all(t.gelu(v[0]));
        },
        {random_tensor(rng, 3, 4, -2.0, 2.0)});
  check("clamp_interior",
        [](Tape& t, const std::vector<Tape::Var>& v) {
          return t.sum_all(t.clamp(v[0], -5.0, 5.0));
        },
        {random_tensor(rng, 3, 4, -2.0, 2.0)});
  check("softmax_rows",
        [&](Tape& t, const std::vector<Tape::Var>& v) {
          return t.sum_all(t.mul(t.softmax_rows(v[0]), t.leaf(b34, false)));
        },
        {a34});
  check("layer_norm_rows",
        [&](Tape& t, const std::vector<Tape::Var>& v) {
          return t.sum_all(t.mul(t.layer_norm_rows(v[0]), t.leaf(b34, false)));
        },
        {a34});
  check("slice_concat",
        [&](Tape& t, const std::vector<Tape::Var>& v) {
          Tape::Var joined = t.concat_cols({t.slice_cols(v[0], 2, 2),
                                            t.slice_cols(v[0], 0, 2)});
          return t.sum_all(t.mul(joined, t.leaf(b34, false)));
        },
        {a34});
  check("sum_reductions",
        [&](Tape& t, const std::vector<Tape::Var>& v) {
          Tape::Var cols = t.sum_cols(v[0]);  // rows x 1
          Tape::Var rows = t.sum_rows(v[0]);  // 1 x cols
          return t.add(t.sum_all(t.mul(cols, cols)), t.sum_all(t.mul(rows, rows)));
        },
        {a34});

  // End-to-end composition: fused map, both branches, heads, and the
  // confidence-weighted loss, differentiated against every parameter.
  ModelConfig tiny;
  tiny.d = 8;
  tiny.heads = 2;
  tiny.blocks = 1;
  tiny.mlp_ratio = 2;
  tiny.token_width = 4;
  tiny.fourier_frequencies = 1;
  tiny.grid_rows = 2;
  tiny.grid_cols = 2;

  const int t_tokens = tiny.query_tokens();
  const int n_entries = 3;
  const Tensor qtok = random_tensor(rng, t_tokens, tiny.token_width, -1.0, 1.0);
  const Tensor desc = random_tensor(rng, n_entries, tiny.token_width, -1.0, 1.0);
  const Tensor rayenc =
      random_tensor(rng, n_entries, fourier_width(6, tiny.fourier_frequencies), -1.0, 1.0);

  GroundTruth qgt;
  qgt.coords = random_tensor(rng, t_tokens, 3, -1.0, 1.0);
  qgt.mask = Tensor::zeros(t_tokens, 1);
  for (int i = 0; i < t_tokens; ++i) qgt.mask.at(i, 0) = (i % 3 == 0) ? 0.0 : 1.0;
  GroundTruth mgt;
  mgt.coords = random_tensor(rng, n_entries, 3, -1.0, 1.0);
  mgt.mask = Tensor::full(n_entries, 1, 1.0);

  NetworkParams tiny_params = init_params(tiny, 7);
  std::vector<Tensor> point;
  for (Tensor* p : parameter_tensors(tiny_params)) point.push_back(*p);

  check("network_loss",
        [&](Tape& t, const std::vector<Tape::Var>& leaves) {
          ParamsP<Tape::Var> ids = unflatten_ids(tiny, leaves);
          Tape::Var fused = fuse_map_on_tape(t, ids, t.leaf(desc, false),
                                             t.leaf(rayenc, false));
          ForwardVars fw = forward_on_tape(t, ids, tiny, t.leaf(qtok, false), fused);
          LossVars lv = loss_on_tape(t, fw, qgt, mgt, 0.2);
          return lv.total;
        },
        point);

  out << (all_ok ? "all gradient checks passed" : "gradient checks FAILED") << "\n";
  return all_ok;
}

}  // namespace reloc
