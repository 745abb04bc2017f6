#include "reloc/config.hpp"

#include <cstdlib>
#include <sstream>
#include <stdexcept>

#include "reloc/io.hpp"

namespace reloc {
namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end == value.c_str() || *end != '\0')
    throw std::invalid_argument("config: bad number for " + key + ": " + value);
  return v;
}

long long parse_ll(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const long long v = std::strtoll(value.c_str(), &end, 10);
  if (end == value.c_str() || *end != '\0')
    throw std::invalid_argument("config: bad integer for " + key + ": " + value);
  return v;
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                  " is not key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw std::invalid_argument("config: empty key on line " +
                                  std::to_string(line_no));
    kv.values_[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

void KeyValues::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

bool KeyValues::has(const std::string& key) const {
  return values_.count(key) != 0;
}

std::string KeyValues::get_string(const std::string& key,
                                  const std::string& def) const {
  consumed_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? def : it->second;
}

double KeyValues::get_double(const std::string& key, double def) const {
  consumed_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? def : parse_double(key, it->second);
}

int KeyValues::get_int(const std::string& key, int def) const {
  consumed_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? def : static_cast<int>(parse_ll(key, it->second));
}

uint64_t KeyValues::get_u64(const std::string& key, uint64_t def) const {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0')
    throw std::invalid_argument("config: bad integer for " + key);
  return v;
}

bool KeyValues::get_bool(const std::string& key, bool def) const {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return def;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": " + it->second);
}

void KeyValues::reject_unknown() const {
  std::string unknown;
  for (const auto& [key, value] : values_) {
    if (consumed_.count(key)) continue;
    if (!unknown.empty()) unknown += ", ";
    unknown += key;
  }
  if (!unknown.empty())
    throw std::invalid_argument("config: unknown keys: " + unknown);
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::string cur;
  auto flush = [&] {
    const std::string v = trim(cur);
    cur.clear();
    if (v.empty()) throw std::invalid_argument("config: empty list entry");
    out.push_back(static_cast<int>(parse_ll("list", v)));
  };
  for (char c : text) {
    if (c == ',')
      flush();
    else
      cur.push_back(c);
  }
  if (!trim(cur).empty() || out.empty()) flush();
  return out;
}

std::string format_int_list(const std::vector<int>& values) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

void RunConfig::apply_preset(const std::string& name) {
  if (name == "desk") return;
  if (name == "paper") {
    train.mapping_frames = 5;
    train.n_min = 250;
    train.n_max = 1000;
    train.warmup = 30000;
    train.peak_lr = 1e-4;
    return;
  }
  throw std::invalid_argument("unknown preset: " + name);
}

RunConfig RunConfig::from_keyvalues(const KeyValues& kv) {
  return from_keyvalues(kv, RunConfig());
}

RunConfig RunConfig::from_keyvalues(const KeyValues& kv, const RunConfig& base) {
  RunConfig c = base;

  c.synth.scene_count = kv.get_int("synth.scene_count", c.synth.scene_count);
  c.synth.point_count = kv.get_int("synth.point_count", c.synth.point_count);
  c.synth.extent = kv.get_double("synth.extent", c.synth.extent);
  c.synth.desc_width = kv.get_int("synth.desc_width", c.synth.desc_width);
  c.synth.noise_sigma = kv.get_double("synth.noise_sigma", c.synth.noise_sigma);
  TrajectoryConfig& m = c.synth.mapping;
  TrajectoryConfig& q = c.synth.query;
  m.frame_count = kv.get_int("synth.mapping_frames", m.frame_count);
  q.frame_count = kv.get_int("synth.query_frames", q.frame_count);
  const double radius_min = kv.get_double("synth.radius_min", m.radius_min);
  const double radius_max = kv.get_double("synth.radius_max", m.radius_max);
  const double height_min = kv.get_double("synth.height_min", m.height_min);
  const double height_max = kv.get_double("synth.height_max", m.height_max);
  const double jitter = kv.get_double("synth.lookat_jitter", m.lookat_jitter);
  Intrinsics k = m.intrinsics;
  k.fx = kv.get_double("synth.fx", k.fx);
  k.fy = kv.get_double("synth.fy", k.fy);
  k.cx = kv.get_double("synth.cx", k.cx);
  k.cy = kv.get_double("synth.cy", k.cy);
  k.width = kv.get_int("synth.width", k.width);
  k.height = kv.get_int("synth.height", k.height);
  const int grid_rows = kv.get_int("synth.grid_rows", m.grid_rows);
  const int grid_cols = kv.get_int("synth.grid_cols", m.grid_cols);
  const int patch = kv.get_int("synth.patch", m.patch);
  for (TrajectoryConfig* t : {&m, &q}) {
    t->radius_min = radius_min;
    t->radius_max = radius_max;
    t->height_min = height_min;
    t->height_max = height_max;
    t->lookat_jitter = jitter;
    t->intrinsics = k;
    t->grid_rows = grid_rows;
    t->grid_cols = grid_cols;
    t->patch = patch;
  }

  c.model.d = kv.get_int("model.d", c.model.d);
  c.model.heads = kv.get_int("model.heads", c.model.heads);
  c.model.blocks = kv.get_int("model.blocks", c.model.blocks);
  c.model.mlp_ratio = kv.get_int("model.mlp_ratio", c.model.mlp_ratio);
  c.model.fourier_frequencies =
      kv.get_int("model.fourier_frequencies", c.model.fourier_frequencies);
  c.model.use_scale_norm = kv.get_bool("model.use_scale_norm", c.model.use_scale_norm);
  c.model.token_width = c.synth.desc_width;
  c.model.grid_rows = grid_rows;
  c.model.grid_cols = grid_cols;

  c.train.mapping_frames = kv.get_int("train.mapping_frames", c.train.mapping_frames);
  c.train.n_min = kv.get_int("train.n_min", c.train.n_min);
  c.train.n_max = kv.get_int("train.n_max", c.train.n_max);
  c.train.overlap_min = kv.get_double("train.overlap_min", c.train.overlap_min);
  c.train.overlap_max = kv.get_double("train.overlap_max", c.train.overlap_max);
  c.train.batch = kv.get_int("train.batch", c.train.batch);
  c.train.iterations = kv.get_u64("train.iterations", c.train.iterations);
  c.train.warmup = kv.get_u64("train.warmup", c.train.warmup);
  c.train.peak_lr = kv.get_double("train.peak_lr", c.train.peak_lr);
  c.train.alpha = kv.get_double("train.alpha", c.train.alpha);
  c.train.checkpoint_every =
      kv.get_u64("train.checkpoint_every", c.train.checkpoint_every);

  c.solver.tau = kv.get_double("solver.tau", c.solver.tau);
  c.solver.cap = kv.get_u64("solver.cap", c.solver.cap);
  c.solver.inlier_px = kv.get_double("solver.inlier_px", c.solver.inlier_px);
  c.solver.max_iterations =
      kv.get_int("solver.max_iterations", c.solver.max_iterations);
  c.solver.success_confidence =
      kv.get_double("solver.success_confidence", c.solver.success_confidence);
  c.solver.refine_iterations =
      kv.get_int("solver.refine_iterations", c.solver.refine_iterations);

  c.eval.strategy = selection_strategy_from_string(
      kv.get_string("eval.strategy", to_string(c.eval.strategy)));
  c.eval.mapping_count = kv.get_int("eval.mapping_count", c.eval.mapping_count);
  c.eval.map_entries = kv.get_int("eval.map_entries", c.eval.map_entries);
  c.eval.sweep_frames =
      parse_int_list(kv.get_string("eval.sweep_frames",
                                   format_int_list(c.eval.sweep_frames)));
  c.eval.sweep_features =
      parse_int_list(kv.get_string("eval.sweep_features",
                                   format_int_list(c.eval.sweep_features)));
  c.eval.sweep_fixed_entries =
      kv.get_int("eval.sweep_fixed_entries", c.eval.sweep_fixed_entries);
  c.eval.sweep_fixed_frames =
      kv.get_int("eval.sweep_fixed_frames", c.eval.sweep_fixed_frames);

  c.seed = kv.get_u64("seed", c.seed);
  c.threads = kv.get_int("threads", c.threads);
  c.output_dir = kv.get_string("output_dir", c.output_dir);
  c.train.seed = c.seed;
  c.train.threads = c.threads;

  kv.reject_unknown();
  return c;
}

std::string RunConfig::serialize() const {
  std::string out = "# resolved run configuration\n";
  auto put = [&](const std::string& key, const std::string& value) {
    out += key + " = " + value + "\n";
  };
  auto putd = [&](const std::string& key, double v) { put(key, format_g17(v)); };
  auto puti = [&](const std::string& key, long long v) {
    put(key, std::to_string(v));
  };

  puti("seed", static_cast<long long>(seed));
  puti("threads", threads);
  put("output_dir", output_dir);

  puti("synth.scene_count", synth.scene_count);
  puti("synth.point_count", synth.point_count);
  putd("synth.extent", synth.extent);
  puti("synth.desc_width", synth.desc_width);
  putd("synth.noise_sigma", synth.noise_sigma);
  puti("synth.mapping_frames", synth.mapping.frame_count);
  puti("synth.query_frames", synth.query.frame_count);
  putd("synth.radius_min", synth.mapping.radius_min);
  putd("synth.radius_max", synth.mapping.radius_max);
  putd("synth.height_min", synth.mapping.height_min);
  putd("synth.height_max", synth.mapping.height_max);
  putd("synth.lookat_jitter", synth.mapping.lookat_jitter);
  putd("synth.fx", synth.mapping.intrinsics.fx);
  putd("synth.fy", synth.mapping.intrinsics.fy);
  putd("synth.cx", synth.mapping.intrinsics.cx);
  putd("synth.cy", synth.mapping.intrinsics.cy);
  puti("synth.width", synth.mapping.intrinsics.width);
  puti("synth.height", synth.mapping.intrinsics.height);
  puti("synth.grid_rows", synth.mapping.grid_rows);
  puti("synth.grid_cols", synth.mapping.grid_cols);
  puti("synth.patch", synth.mapping.patch);

  puti("model.d", model.d);
  puti("model.heads", model.heads);
  puti("model.blocks", model.blocks);
  puti("model.mlp_ratio", model.mlp_ratio);
  puti("model.fourier_frequencies", model.fourier_frequencies);
  put("model.use_scale_norm", model.use_scale_norm ? "true" : "false");

  puti("train.mapping_frames", train.mapping_frames);
  puti("train.n_min", train.n_min);
  puti("train.n_max", train.n_max);
  putd("train.overlap_min", train.overlap_min);
  putd("train.overlap_max", train.overlap_max);
  puti("train.batch", train.batch);
  puti("train.iterations", static_cast<long long>(train.iterations));
  puti("train.warmup", static_cast<long long>(train.warmup));
  putd("train.peak_lr", train.peak_lr);
  putd("train.alpha", train.alpha);
  puti("train.checkpoint_every", static_cast<long long>(train.checkpoint_every));

  putd("solver.tau", solver.tau);
  puti("solver.cap", static_cast<long long>(solver.cap));
  putd("solver.inlier_px", solver.inlier_px);
  puti("solver.max_iterations", solver.max_iterations);
  putd("solver.success_confidence", solver.success_confidence);
  puti("solver.refine_iterations", solver.refine_iterations);

  put("eval.strategy", to_string(eval.strategy));
  puti("eval.mapping_count", eval.mapping_count);
  puti("eval.map_entries", eval.map_entries);
  put("eval.sweep_frames", format_int_list(eval.sweep_frames));
  put("eval.sweep_features", format_int_list(eval.sweep_features));
  puti("eval.sweep_fixed_entries", eval.sweep_fixed_entries);
  puti("eval.sweep_fixed_frames", eval.sweep_fixed_frames);
  return out;
}

}  // namespace reloc
