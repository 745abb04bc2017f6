#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "reloc/config.hpp"
#include "reloc/eval.hpp"
#include "reloc/io.hpp"

namespace reloc {

// $RELOC_OUTPUT_ROOT when set, otherwise the current directory.
std::string default_output_root();

void ensure_dir(const std::string& path);

// Every command writes `config.resolved` next to its outputs; re-running the
// command from that file reproduces the outputs byte-identically (the
// training log's wall_ms column being the one wall-clock exception).
void write_resolved_config(const RunConfig& cfg, const std::string& out_dir);

struct SynthGenResult {
  std::string dataset_path;
  int scene_count = 0, train_scenes = 0, test_scenes = 0;
  int mapping_frames = 0, query_frames = 0;
};

SynthGenResult run_synth_gen(const RunConfig& cfg, const std::string& out_dir);

struct TrainRunResult {
  std::string checkpoint_path;
  std::string log_path;
  uint64_t iterations = 0;
  double final_loss = 0.0;
};

// status (when non-null) receives one progress line per checkpoint interval.
TrainRunResult run_train(const RunConfig& cfg, const std::string& dataset_path,
                         const std::string& out_dir,
                         const std::string& resume_path = "",
                         std::ostream* status = nullptr);

struct BuildMapArgs {
  int scene_id = 0;
  SelectionStrategy strategy = SelectionStrategy::kUniform;
  int topk = 5;
  int entries = 256;
  uint64_t seed = 0;
  int query_frame_id = -1;  // retrieval probe, required for that strategy
};

std::string run_build_map(const RunConfig& cfg, const std::string& checkpoint_path,
                          const std::string& dataset_path, const BuildMapArgs& args,
                          const std::string& out_dir);

struct LocalizeArgs {
  int scene_id = -1;          // -1: all test scenes
  std::string map_path;       // empty: build per scene from the fields below
  SelectionStrategy strategy = SelectionStrategy::kUniform;
  int topk = 5;
  int entries = 256;
  uint64_t map_seed = 0;
};

struct LocalizeRunResult {
  std::string csv_path;
  std::vector<LocalizeRecord> records;
};

LocalizeRunResult run_localize(const RunConfig& cfg,
                               const std::string& checkpoint_path,
                               const std::string& dataset_path,
                               const LocalizeArgs& args, const std::string& out_dir);

struct EvalRunArgs {
  bool sweeps = false;
  std::string raw_checkpoint_path;    // both set: emit the scale ablation
  std::string scaled_dataset_path;
  std::string results_path;  // when set, aggregate an existing localize CSV
};

struct EvalRunResult {
  EvalReport report;
  std::vector<std::string> files;
};

EvalRunResult run_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                       const std::string& dataset_path, const EvalRunArgs& args,
                       const std::string& out_dir, std::ostream* status = nullptr);

// Finite-difference verification of the live network composition; prints one
// line per check. Returns false when any check exceeds the tolerance.
bool run_grad_check(std::ostream& out);

}  // namespace reloc
