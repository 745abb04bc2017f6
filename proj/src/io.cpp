#include "reloc/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace reloc {
namespace {

constexpr uint32_t kDatasetVersion = 1;
constexpr uint32_t kCheckpointVersion = 1;
constexpr uint32_t kMapVersion = 1;

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    u64(bits);
  }
  void magic(const char (&m)[5]) { buf_.append(m, 4); }
  void tensor(const Tensor& t) {
    u32(static_cast<uint32_t>(t.rows));
    u32(static_cast<uint32_t>(t.cols));
    for (double v : t.data) f64(v);
  }
  void pose(const Pose& p) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) f64(p.R(r, c));
    for (int i = 0; i < 3; ++i) f64(p.t(i));
  }
  void intrinsics(const Intrinsics& k) {
    f64(k.fx);
    f64(k.fy);
    f64(k.cx);
    f64(k.cy);
    i32(k.width);
    i32(k.height);
  }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  uint8_t u8() { return static_cast<uint8_t>(bytes_[need(1)]); }
  uint32_t u32() {
    size_t p = need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(bytes_[p + i])) << (8 * i);
    return v;
  }
  uint64_t u64() {
    size_t p = need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(bytes_[p + i])) << (8 * i);
    return v;
  }
  int32_t i32() { return static_cast<int32_t>(u32()); }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  void magic(const char (&m)[5]) {
    size_t p = need(4);
    if (std::memcmp(bytes_.data() + p, m, 4) != 0)
      throw std::runtime_error(std::string("io: bad magic, expected ") + m);
  }
  Tensor tensor() {
    const int rows = static_cast<int>(u32());
    const int cols = static_cast<int>(u32());
    if (rows < 0 || cols < 0 || static_cast<uint64_t>(rows) * cols > (1ull << 32))
      throw std::runtime_error("io: implausible tensor shape");
    Tensor t(rows, cols);
    for (double& v : t.data) v = f64();
    return t;
  }
  Pose pose() {
    Pose p;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) p.R(r, c) = f64();
    for (int i = 0; i < 3; ++i) p.t(i) = f64();
    return p;
  }
  Intrinsics intrinsics() {
    Intrinsics k;
    k.fx = f64();
    k.fy = f64();
    k.cx = f64();
    k.cy = f64();
    k.width = i32();
    k.height = i32();
    return k;
  }
  void done() const {
    if (pos_ != bytes_.size()) throw std::runtime_error("io: trailing bytes");
  }

 private:
  size_t need(size_t n) {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("io: truncated input");
    size_t p = pos_;
    pos_ += n;
    return p;
  }
  const std::string& bytes_;
  size_t pos_ = 0;
};

void write_trajectory(ByteWriter& w, const TrajectoryConfig& t) {
  w.i32(t.frame_count);
  w.f64(t.radius_min);
  w.f64(t.radius_max);
  w.f64(t.height_min);
  w.f64(t.height_max);
  w.f64(t.lookat_jitter);
  w.intrinsics(t.intrinsics);
  w.i32(t.grid_rows);
  w.i32(t.grid_cols);
  w.i32(t.patch);
}

TrajectoryConfig read_trajectory(ByteReader& r) {
  TrajectoryConfig t;
  t.frame_count = r.i32();
  t.radius_min = r.f64();
  t.radius_max = r.f64();
  t.height_min = r.f64();
  t.height_max = r.f64();
  t.lookat_jitter = r.f64();
  t.intrinsics = r.intrinsics();
  t.grid_rows = r.i32();
  t.grid_cols = r.i32();
  t.patch = r.i32();
  return t;
}

void write_frame(ByteWriter& w, const FrameTokens& f) {
  w.i32(f.frame_id);
  w.i32(f.scene_id);
  w.i32(f.grid_rows);
  w.i32(f.grid_cols);
  w.i32(f.patch);
  w.intrinsics(f.intrinsics);
  w.pose(f.pose);
  w.tensor(f.tokens);
  for (const Eigen::Vector3d& p : f.gt_points) {
    w.f64(p.x());
    w.f64(p.y());
    w.f64(p.z());
  }
  for (uint8_t v : f.gt_valid) w.u8(v);
}

FrameTokens read_frame(ByteReader& r) {
  FrameTokens f;
  f.frame_id = r.i32();
  f.scene_id = r.i32();
  f.grid_rows = r.i32();
  f.grid_cols = r.i32();
  f.patch = r.i32();
  f.intrinsics = r.intrinsics();
  f.pose = r.pose();
  f.tokens = r.tensor();
  if (f.grid_rows < 0 || f.grid_cols < 0 || f.tokens.rows != f.token_count())
    throw std::runtime_error("io: frame token grid mismatch");
  f.gt_points.resize(f.token_count());
  for (Eigen::Vector3d& p : f.gt_points) {
    p.x() = r.f64();
    p.y() = r.f64();
    p.z() = r.f64();
  }
  f.gt_valid.resize(f.token_count());
  for (uint8_t& v : f.gt_valid) v = r.u8();
  return f;
}

void write_model_config(ByteWriter& w, const ModelConfig& c) {
  w.i32(c.d);
  w.i32(c.heads);
  w.i32(c.blocks);
  w.i32(c.mlp_ratio);
  w.i32(c.token_width);
  w.i32(c.fourier_frequencies);
  w.i32(c.grid_rows);
  w.i32(c.grid_cols);
  w.u8(c.use_scale_norm ? 1 : 0);
}

ModelConfig read_model_config(ByteReader& r) {
  ModelConfig c;
  c.d = r.i32();
  c.heads = r.i32();
  c.blocks = r.i32();
  c.mlp_ratio = r.i32();
  c.token_width = r.i32();
  c.fourier_frequencies = r.i32();
  c.grid_rows = r.i32();
  c.grid_cols = r.i32();
  c.use_scale_norm = r.u8() != 0;
  return c;
}

void write_train_config(ByteWriter& w, const TrainConfig& c) {
  w.i32(c.mapping_frames);
  w.i32(c.n_min);
  w.i32(c.n_max);
  w.f64(c.overlap_min);
  w.f64(c.overlap_max);
  w.i32(c.batch);
  w.u64(c.iterations);
  w.u64(c.warmup);
  w.f64(c.peak_lr);
  w.f64(c.alpha);
  w.u64(c.seed);
  w.i32(c.threads);
  w.u64(c.checkpoint_every);
}

TrainConfig read_train_config(ByteReader& r) {
  TrainConfig c;
  c.mapping_frames = r.i32();
  c.n_min = r.i32();
  c.n_max = r.i32();
  c.overlap_min = r.f64();
  c.overlap_max = r.f64();
  c.batch = r.i32();
  c.iterations = r.u64();
  c.warmup = r.u64();
  c.peak_lr = r.f64();
  c.alpha = r.f64();
  c.seed = r.u64();
  c.threads = r.i32();
  c.checkpoint_every = r.u64();
  return c;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string format_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string serialize_dataset(const Dataset& dataset) {
  ByteWriter w;
  w.magic("RLCD");
  w.u32(kDatasetVersion);
  w.u64(dataset.seed);
  const SynthConfig& c = dataset.config;
  w.i32(c.scene_count);
  w.i32(c.point_count);
  w.f64(c.extent);
  w.i32(c.desc_width);
  w.f64(c.noise_sigma);
  write_trajectory(w, c.mapping);
  write_trajectory(w, c.query);
  w.u32(static_cast<uint32_t>(dataset.scenes.size()));
  for (const SceneData& s : dataset.scenes) {
    w.i32(s.scene_id);
    w.u8(s.is_test ? 1 : 0);
    w.f64(s.extent);
    w.u32(static_cast<uint32_t>(s.mapping_frames.size()));
    for (const FrameTokens& f : s.mapping_frames) write_frame(w, f);
    w.u32(static_cast<uint32_t>(s.query_frames.size()));
    for (const FrameTokens& f : s.query_frames) write_frame(w, f);
  }
  return w.take();
}

Dataset deserialize_dataset(const std::string& bytes) {
  ByteReader r(bytes);
  r.magic("RLCD");
  if (r.u32() != kDatasetVersion) throw std::runtime_error("io: dataset version");
  Dataset ds;
  ds.seed = r.u64();
  SynthConfig& c = ds.config;
  c.scene_count = r.i32();
  c.point_count = r.i32();
  c.extent = r.f64();
  c.desc_width = r.i32();
  c.noise_sigma = r.f64();
  c.mapping = read_trajectory(r);
  c.query = read_trajectory(r);
  ds.scenes.resize(r.u32());
  for (SceneData& s : ds.scenes) {
    s.scene_id = r.i32();
    s.is_test = r.u8() != 0;
    s.extent = r.f64();
    s.mapping_frames.resize(r.u32());
    for (FrameTokens& f : s.mapping_frames) f = read_frame(r);
    s.query_frames.resize(r.u32());
    for (FrameTokens& f : s.query_frames) f = read_frame(r);
  }
  r.done();
  return ds;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.magic("RLCK");
  w.u32(kCheckpointVersion);
  write_model_config(w, ckpt.params.config);
  NetworkParams& params = const_cast<Checkpoint&>(ckpt).params;
  std::vector<Tensor*> tensors = parameter_tensors(params);
  w.u32(static_cast<uint32_t>(tensors.size()));
  for (const Tensor* t : tensors) w.tensor(*t);
  const OptimizerState& o = ckpt.opt;
  w.f64(o.beta1);
  w.f64(o.beta2);
  w.f64(o.eps);
  w.f64(o.weight_decay);
  w.u64(o.step);
  w.u32(static_cast<uint32_t>(o.m.size()));
  for (const Tensor& t : o.m) w.tensor(t);
  for (const Tensor& t : o.v) w.tensor(t);
  w.u64(ckpt.iteration);
  w.u64(ckpt.seed);
  write_train_config(w, ckpt.config);
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  ByteReader r(bytes);
  r.magic("RLCK");
  if (r.u32() != kCheckpointVersion)
    throw std::runtime_error("io: checkpoint version");
  Checkpoint ckpt;
  const ModelConfig config = read_model_config(r);
  ckpt.params = init_params(config, 0);
  std::vector<Tensor*> tensors = parameter_tensors(ckpt.params);
  if (r.u32() != tensors.size())
    throw std::runtime_error("io: checkpoint parameter count mismatch");
  for (Tensor* t : tensors) {
    Tensor loaded = r.tensor();
    if (!loaded.same_shape(*t))
      throw std::runtime_error("io: checkpoint parameter shape mismatch");
    *t = std::move(loaded);
  }
  OptimizerState& o = ckpt.opt;
  o.beta1 = r.f64();
  o.beta2 = r.f64();
  o.eps = r.f64();
  o.weight_decay = r.f64();
  o.step = r.u64();
  const uint32_t count = r.u32();
  if (count != tensors.size() && count != 0)
    throw std::runtime_error("io: optimizer state count mismatch");
  o.m.resize(count);
  for (Tensor& t : o.m) t = r.tensor();
  o.v.resize(count);
  for (Tensor& t : o.v) t = r.tensor();
  ckpt.iteration = r.u64();
  ckpt.seed = r.u64();
  ckpt.config = read_train_config(r);
  r.done();
  return ckpt;
}

std::string serialize_map(const MapRepresentation& map) {
  ByteWriter w;
  w.magic("RLCM");
  w.u32(kMapVersion);
  w.f64(map.scale);
  w.pose(map.reference_pose);
  w.intrinsics(map.intrinsics);
  w.u32(static_cast<uint32_t>(map.entries.size()));
  for (const MapEntry& e : map.entries) {
    w.i32(e.frame_id);
    w.i32(e.row);
    w.i32(e.col);
  }
  w.tensor(map.fused);
  return w.take();
}

MapRepresentation deserialize_map(const std::string& bytes) {
  ByteReader r(bytes);
  r.magic("RLCM");
  if (r.u32() != kMapVersion) throw std::runtime_error("io: map version");
  MapRepresentation map;
  map.scale = r.f64();
  map.reference_pose = r.pose();
  map.intrinsics = r.intrinsics();
  map.entries.resize(r.u32());
  for (MapEntry& e : map.entries) {
    e.frame_id = r.i32();
    e.row = r.i32();
    e.col = r.i32();
  }
  map.fused = r.tensor();
  if (map.fused.rows != map.entry_count())
    throw std::runtime_error("io: map entry count mismatch");
  r.done();
  return map;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("io: cannot open for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("io: write failed: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("io: cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string training_log_header() {
  return "iteration,lr,loss,query_loss,mapping_loss,wall_ms";
}

std::string training_log_row(const TrainLogRow& row) {
  std::string out = std::to_string(row.iteration);
  out += ',';
  out += format_g17(row.lr);
  out += ',';
  out += format_g17(row.loss);
  out += ',';
  out += format_g17(row.query_loss);
  out += ',';
  out += format_g17(row.mapping_loss);
  out += ',';
  out += std::to_string(row.wall_ms);
  out += '\n';
  return out;
}

std::string localize_csv(const std::vector<LocalizeRecord>& records) {
  std::string out =
      "scene_id,frame_id,status,qw,qx,qy,qz,tx,ty,tz,inliers,iterations,"
      "mean_inlier_err,e_t,e_r\n";
  for (const LocalizeRecord& r : records) {
    out += std::to_string(r.scene_id);
    out += ',';
    out += std::to_string(r.frame_id);
    out += r.ok ? ",ok," : ",fail,";
    const Eigen::Vector4d q =
        r.ok ? pose_to_quaternion(r.pose) : Eigen::Vector4d(0, 0, 0, 0);
    for (int i = 0; i < 4; ++i) {
      out += format_g17(q(i));
      out += ',';
    }
    for (int i = 0; i < 3; ++i) {
      out += format_g17(r.ok ? r.pose.t(i) : 0.0);
      out += ',';
    }
    out += std::to_string(r.inliers);
    out += ',';
    out += std::to_string(r.iterations);
    out += ',';
    out += format_g17(r.mean_inlier_err);
    out += ',';
    out += format_g17(r.e_t);
    out += ',';
    out += format_g17(r.e_r);
    out += '\n';
  }
  return out;
}

std::vector<LocalizeRecord> parse_localize_csv(const std::string& text) {
  std::vector<LocalizeRecord> out;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      continue;
    }
    std::vector<std::string> f = split(line, ',');
    if (f.size() != 15) throw std::runtime_error("io: malformed localize row");
    LocalizeRecord r;
    r.scene_id = std::stoi(f[0]);
    r.frame_id = std::stoi(f[1]);
    r.ok = f[2] == "ok";
    Eigen::Vector4d q(std::strtod(f[3].c_str(), nullptr),
                      std::strtod(f[4].c_str(), nullptr),
                      std::strtod(f[5].c_str(), nullptr),
                      std::strtod(f[6].c_str(), nullptr));
    Eigen::Vector3d t(std::strtod(f[7].c_str(), nullptr),
                      std::strtod(f[8].c_str(), nullptr),
                      std::strtod(f[9].c_str(), nullptr));
    if (r.ok) r.pose = pose_from_quaternion(q, t);
    r.inliers = std::stoi(f[10]);
    r.iterations = std::stoi(f[11]);
    r.mean_inlier_err = std::strtod(f[12].c_str(), nullptr);
    r.e_t = std::strtod(f[13].c_str(), nullptr);
    r.e_r = std::strtod(f[14].c_str(), nullptr);
    out.push_back(r);
  }
  return out;
}

std::string report_csv(const EvalReport& report) {
  std::string out = "scene_id,frame_id,status,e_t,e_r,inliers\n";
  for (const QueryResult& r : report.results) {
    out += std::to_string(r.scene_id);
    out += ',';
    out += std::to_string(r.frame_id);
    out += r.ok ? ",ok," : ",fail,";
    out += format_g17(r.ok ? r.e_t : std::numeric_limits<double>::infinity());
    out += ',';
    out += format_g17(r.ok ? r.e_r : std::numeric_limits<double>::infinity());
    out += ',';
    out += std::to_string(r.inliers);
    out += '\n';
  }
  return out;
}

std::string summary_csv(const EvalReport& report) {
  std::string out = "metric,value\n";
  out += "query_count," + std::to_string(report.results.size()) + "\n";
  out += "failure_count," + std::to_string(report.failure_count) + "\n";
  out += "median_t," + format_g17(report.median_t) + "\n";
  out += "median_r," + format_g17(report.median_r) + "\n";
  for (size_t i = 0; i < report.thresholds.size(); ++i) {
    char key[64];
    std::snprintf(key, sizeof(key), "rate_%g_%g", report.thresholds[i].translation,
                  report.thresholds[i].rotation_deg);
    out += key;
    out += ',';
    out += format_g17(report.rates[i]);
    out += '\n';
  }
  return out;
}

std::string sweep_csv(const SweepResult& sweep) {
  std::string out = "# sweep=" + sweep.swept;
  out += " fine_t=" + format_g17(sweep.fine.translation);
  out += " fine_r=" + format_g17(sweep.fine.rotation_deg);
  out += " coarse_t=" + format_g17(sweep.coarse.translation);
  out += " coarse_r=" + format_g17(sweep.coarse.rotation_deg);
  out += "\nvalue,fine_rate,coarse_rate,median_t,median_r\n";
  for (const SweepRow& r : sweep.rows) {
    out += std::to_string(r.value);
    out += ',';
    out += format_g17(r.fine_rate);
    out += ',';
    out += format_g17(r.coarse_rate);
    out += ',';
    out += format_g17(r.median_t);
    out += ',';
    out += format_g17(r.median_r);
    out += '\n';
  }
  return out;
}

std::string ablation_csv(const std::vector<ScaleAblationRow>& table) {
  std::string out = "model,extent,fine_rate,coarse_rate,median_t,median_r\n";
  for (const ScaleAblationRow& r : table) {
    out += r.model;
    out += ',';
    out += format_g17(r.extent);
    out += ',';
    out += format_g17(r.fine_rate);
    out += ',';
    out += format_g17(r.coarse_rate);
    out += ',';
    out += format_g17(r.median_t);
    out += ',';
    out += format_g17(r.median_r);
    out += '\n';
  }
  return out;
}

std::string sweep_svg(const SweepResult& sweep) {
  const double width = 640, height = 400;
  const double left = 64, right = 620, top = 48, bottom = 344;
  const int n = static_cast<int>(sweep.rows.size());
  auto x_at = [&](int i) {
    if (n == 1) return 0.5 * (left + right);
    return left + (right - left) * i / (n - 1);
  };
  auto y_at = [&](double rate) { return bottom - (bottom - top) * rate; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
         "viewBox=\"0 0 640 400\">\n";
  svg += "<rect width=\"" + format_coord(width) + "\" height=\"" +
         format_coord(height) + "\" fill=\"white\"/>\n";
  svg += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"15\">accuracy vs mapping " + sweep.swept + "</text>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double rate = 0.25 * tick;
    const double y = y_at(rate);
    svg += "<line x1=\"" + format_coord(left) + "\" y1=\"" + format_coord(y) +
           "\" x2=\"" + format_coord(right) + "\" y2=\"" + format_coord(y) +
           "\" stroke=\"#dddddd\"/>\n";
    svg += "<text x=\"" + format_coord(left - 8) + "\" y=\"" + format_coord(y + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
           format_coord(rate) + "</text>\n";
  }
  for (int i = 0; i < n; ++i) {
    const double x = x_at(i);
    svg += "<text x=\"" + format_coord(x) + "\" y=\"" + format_coord(bottom + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
           std::to_string(sweep.rows[i].value) + "</text>\n";
  }
  svg += "<line x1=\"" + format_coord(left) + "\" y1=\"" + format_coord(bottom) +
         "\" x2=\"" + format_coord(right) + "\" y2=\"" + format_coord(bottom) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + format_coord(left) + "\" y1=\"" + format_coord(top) +
         "\" x2=\"" + format_coord(left) + "\" y2=\"" + format_coord(bottom) +
         "\" stroke=\"black\"/>\n";

  auto series = [&](const std::string& color, bool fine) {
    std::string pts;
    for (int i = 0; i < n; ++i) {
      const SweepRow& r = sweep.rows[i];
      pts += format_coord(x_at(i)) + "," +
             format_coord(y_at(fine ? r.fine_rate : r.coarse_rate)) + " ";
    }
    std::string s = "<polyline fill=\"none\" stroke=\"" + color +
                    "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    for (int i = 0; i < n; ++i) {
      const SweepRow& r = sweep.rows[i];
      s += "<circle cx=\"" + format_coord(x_at(i)) + "\" cy=\"" +
           format_coord(y_at(fine ? r.fine_rate : r.coarse_rate)) +
           "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
    return s;
  };
  svg += series("#1f77b4", true);
  svg += series("#ff7f0e", false);
  svg += "<text x=\"" + format_coord(left + 12) + "\" y=\"" + format_coord(top + 14) +
         "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#1f77b4\">fine (" +
         format_g17(sweep.fine.translation) + ", " + format_g17(sweep.fine.rotation_deg) +
         " deg)</text>\n";
  svg += "<text x=\"" + format_coord(left + 12) + "\" y=\"" + format_coord(top + 30) +
         "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#ff7f0e\">coarse (" +
         format_g17(sweep.coarse.translation) + ", " +
         format_g17(sweep.coarse.rotation_deg) + " deg)</text>\n";
  svg += "<text x=\"" + format_coord(0.5 * (left + right)) + "\" y=\"" +
         format_coord(bottom + 40) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">mapping " +
         sweep.swept + "</text>\n";
  svg += "</svg>\n";
  return svg;
}

}  // namespace reloc
