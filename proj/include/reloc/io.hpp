#pragma once

#include <string>
#include <vector>

#include "reloc/eval.hpp"
#include "reloc/model.hpp"
#include "reloc/synth.hpp"
#include "reloc/train.hpp"

namespace reloc {

// All binary containers are little-endian with a 4-byte magic and a u32
// version; doubles are serialized as raw IEEE bit patterns so every round
// trip is bit-exact.

std::string serialize_dataset(const Dataset& dataset);
Dataset deserialize_dataset(const std::string& bytes);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

// Map files carry the reusable inference payload (fused features, geometry,
// scale); per-entry ground truth is training-only state and stays out.
std::string serialize_map(const MapRepresentation& map);
MapRepresentation deserialize_map(const std::string& bytes);

void write_file(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

// %.17g, the shortest format that round-trips IEEE doubles through text.
std::string format_g17(double v);

std::string training_log_header();
std::string training_log_row(const TrainLogRow& row);

struct LocalizeRecord {
  int scene_id = 0;
  int frame_id = 0;
  bool ok = false;
  Pose pose;
  int inliers = 0;
  int iterations = 0;
  double mean_inlier_err = 0.0;
  double e_t = 0.0;
  double e_r = 0.0;
};

std::string localize_csv(const std::vector<LocalizeRecord>& records);
std::vector<LocalizeRecord> parse_localize_csv(const std::string& text);

std::string report_csv(const EvalReport& report);
std::string summary_csv(const EvalReport& report);
std::string sweep_csv(const SweepResult& sweep);
std::string ablation_csv(const std::vector<ScaleAblationRow>& table);

// Self-contained accuracy-vs-count line chart, two series (fine and coarse
// thresholds).
std::string sweep_svg(const SweepResult& sweep);

}  // namespace reloc
