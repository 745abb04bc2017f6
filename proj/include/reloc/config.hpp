#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "reloc/eval.hpp"
#include "reloc/model.hpp"
#include "reloc/solver.hpp"
#include "reloc/synth.hpp"
#include "reloc/train.hpp"

namespace reloc {

// Flat `key = value` text with `#` comments and dotted section keys. Values
// stay strings until a typed getter consumes them; keys nobody consumed are
// reported as unknown so typos fail loudly instead of silently using
// defaults.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& def) const;
  double get_double(const std::string& key, double def) const;
  int get_int(const std::string& key, int def) const;
  uint64_t get_u64(const std::string& key, uint64_t def) const;
  bool get_bool(const std::string& key, bool def) const;

  // Throws listing every key that was set but never read.
  void reject_unknown() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

struct EvalOptions {
  SelectionStrategy strategy = SelectionStrategy::kRetrieval;
  int mapping_count = 5;
  int map_entries = 256;
  std::vector<int> sweep_frames = {1, 2, 5, 10};
  std::vector<int> sweep_features = {64, 128, 256, 512};
  int sweep_fixed_entries = 128;
  int sweep_fixed_frames = 5;
};

struct RunConfig {
  SynthConfig synth;
  ModelConfig model;
  TrainConfig train;
  SolverConfig solver;
  EvalOptions eval;
  uint64_t seed = 0;
  int threads = 1;
  std::string output_dir;

  // Applies a named preset on top of the defaults; "desk" is the identity,
  // "paper" switches the training recipe to the cluster-scale settings.
  void apply_preset(const std::string& name);

  // Starts from `base` (defaults or a preset) and overrides any key present.
  static RunConfig from_keyvalues(const KeyValues& kv, const RunConfig& base);
  static RunConfig from_keyvalues(const KeyValues& kv);

  // Every key with its resolved value, deterministic order, reparseable.
  std::string serialize() const;
};

std::vector<int> parse_int_list(const std::string& text);
std::string format_int_list(const std::vector<int>& values);

}  // namespace reloc
