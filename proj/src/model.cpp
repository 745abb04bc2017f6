#include "reloc/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "reloc/rng.hpp"

namespace reloc {
namespace {

constexpr double kInitStd = 0.02;

Tensor normal_init(Rng& rng, int rows, int cols) {
  Tensor t(rows, cols);
  for (double& x : t.data) x = kInitStd * rng.normal();
  return t;
}

void init_attention(AttentionP<Tensor>& a, int d, Rng& rng) {
  a.wq = normal_init(rng, d, d);
  a.bq = Tensor::zeros(1, d);
  a.wk = normal_init(rng, d, d);
  a.bk = Tensor::zeros(1, d);
  a.wv = normal_init(rng, d, d);
  a.bv = Tensor::zeros(1, d);
  a.wo = normal_init(rng, d, d);
  a.bo = Tensor::zeros(1, d);
}

void init_block(BlockP<Tensor>& b, const ModelConfig& cfg, Rng& rng) {
  const int d = cfg.d;
  const int hidden = cfg.mlp_ratio * d;
  b.ln1_g = Tensor::full(1, d, 1.0);
  b.ln1_b = Tensor::zeros(1, d);
  init_attention(b.self_attn, d, rng);
  b.ln2_g = Tensor::full(1, d, 1.0);
  b.ln2_b = Tensor::zeros(1, d);
  b.ln_ctx_g = Tensor::full(1, d, 1.0);
  b.ln_ctx_b = Tensor::zeros(1, d);
  init_attention(b.cross_attn, d, rng);
  b.ln3_g = Tensor::full(1, d, 1.0);
  b.ln3_b = Tensor::zeros(1, d);
  b.mlp_w1 = normal_init(rng, d, hidden);
  b.mlp_b1 = Tensor::zeros(1, hidden);
  b.mlp_w2 = normal_init(rng, hidden, d);
  b.mlp_b2 = Tensor::zeros(1, d);
}

void init_branch(BranchP<Tensor>& br, const ModelConfig& cfg, Rng& rng) {
  br.blocks.resize(cfg.blocks);
  for (BlockP<Tensor>& b : br.blocks) init_block(b, cfg, rng);
  br.final_ln_g = Tensor::full(1, cfg.d, 1.0);
  br.final_ln_b = Tensor::zeros(1, cfg.d);
  br.head_w = normal_init(rng, cfg.d, 4);
  br.head_b = Tensor::zeros(1, 4);
}

Tape::Var ln_affine(Tape& t, Tape::Var x, Tape::Var g, Tape::Var b) {
  return t.add_rowvec(t.mul_rowvec(t.layer_norm_rows(x), g), b);
}

Tape::Var attention(Tape& t, const AttentionP<Tape::Var>& a, int heads,
                    Tape::Var x_q, Tape::Var x_kv) {
  const int d = t.value(x_q).cols;
  const int head_dim = d / heads;
  Tape::Var q = t.add_rowvec(t.matmul(x_q, a.wq), a.bq);
  Tape::Var k = t.add_rowvec(t.matmul(x_kv, a.wk), a.bk);
  Tape::Var v = t.add_rowvec(t.matmul(x_kv, a.wv), a.bv);
  std::vector<Tape::Var> outs;
  outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tape::Var qh = t.slice_cols(q, h * head_dim, head_dim);
    Tape::Var kh = t.slice_cols(k, h * head_dim, head_dim);
    Tape::Var vh = t.slice_cols(v, h * head_dim, head_dim);
    Tape::Var scores = t.scale(t.matmul(qh, kh, false, true),
                               1.0 / std::sqrt(static_cast<double>(head_dim)));
    outs.push_back(t.matmul(t.softmax_rows(scores), vh));
  }
  return t.add_rowvec(t.matmul(t.concat_cols(outs), a.wo), a.bo);
}

// Pre-norm residual block: self-attention, cross-attention against the other
// branch's pre-block state, feed-forward.
Tape::Var decoder_block(Tape& t, const BlockP<Tape::Var>& b, int heads,
                        Tape::Var x, Tape::Var ctx) {
  Tape::Var xn = ln_affine(t, x, b.ln1_g, b.ln1_b);
  Tape::Var a = t.add(x, attention(t, b.self_attn, heads, xn, xn));
  Tape::Var an = ln_affine(t, a, b.ln2_g, b.ln2_b);
  Tape::Var cn = ln_affine(t, ctx, b.ln_ctx_g, b.ln_ctx_b);
  Tape::Var c = t.add(a, attention(t, b.cross_attn, heads, an, cn));
  Tape::Var m = t.gelu(t.add_rowvec(t.matmul(ln_affine(t, c, b.ln3_g, b.ln3_b), b.mlp_w1), b.mlp_b1));
  return t.add(c, t.add_rowvec(t.matmul(m, b.mlp_w2), b.mlp_b2));
}

struct HeadVars {
  Tape::Var coords, conf;
};

HeadVars apply_head(Tape& t, Tape::Var features, Tape::Var w, Tape::Var b) {
  Tape::Var h = t.add_rowvec(t.matmul(features, w), b);
  Tape::Var raw = t.clamp(t.slice_cols(h, 3, 1), kConfClampLo, kConfClampHi);
  return {t.slice_cols(h, 0, 3), t.add_const(t.exp(raw), 1.0)};
}

Tape::Var embed_tokens(Tape& t, const ParamsP<Tape::Var>& ids, Tape::Var tokens) {
  Tape::Var x = t.add_rowvec(t.matmul(tokens, ids.embed_w), ids.embed_b);
  return ln_affine(t, x, ids.embed_ln_g, ids.embed_ln_b);
}

}  // namespace

int64_t NetworkParams::parameter_count() {
  int64_t count = 0;
  visit_params(t, [&](const std::string&, Tensor& v) {
    count += static_cast<int64_t>(v.size());
  });
  return count;
}

NetworkParams init_params(const ModelConfig& cfg, uint64_t seed) {
  if (cfg.d % cfg.heads != 0)
    throw std::invalid_argument("init_params: d must divide into heads");
  Rng rng(seed);
  NetworkParams p;
  p.config = cfg;
  p.t.embed_w = normal_init(rng, cfg.token_width, cfg.d);
  p.t.embed_b = Tensor::zeros(1, cfg.d);
  p.t.embed_ln_g = Tensor::full(1, cfg.d, 1.0);
  p.t.embed_ln_b = Tensor::zeros(1, cfg.d);
  p.t.ray_w = normal_init(rng, fourier_width(6, cfg.fourier_frequencies), cfg.d);
  p.t.ray_b = Tensor::zeros(1, cfg.d);
  p.t.query_pos = normal_init(rng, cfg.query_tokens(), cfg.d);
  init_branch(p.t.query_branch, cfg, rng);
  init_branch(p.t.map_branch, cfg, rng);
  return p;
}

std::vector<double> fourier_encode(const std::vector<double>& x, int L) {
  if (L < 1) throw std::invalid_argument("fourier_encode: L must be >= 1");
  std::vector<double> out;
  out.reserve(x.size() * (1 + 2 * L));
  for (double v : x) {
    out.push_back(v);
    double freq = std::numbers::pi;
    for (int i = 0; i < L; ++i, freq *= 2.0) {
      out.push_back(std::sin(freq * v));
      out.push_back(std::cos(freq * v));
    }
  }
  return out;
}

std::vector<double> ray_encoding(const Eigen::Vector3d& origin,
                                 const Eigen::Vector3d& direction, int L) {
  if (std::abs(direction.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("ray_encoding: direction must be unit norm");
  return fourier_encode({origin.x(), origin.y(), origin.z(),
                         direction.x(), direction.y(), direction.z()},
                        L);
}

Tensor ray_token(const Eigen::Vector3d& origin, const Eigen::Vector3d& direction,
                 const NetworkParams& params) {
  std::vector<double> enc =
      ray_encoding(origin, direction, params.config.fourier_frequencies);
  Tensor row(1, static_cast<int>(enc.size()), std::move(enc));
  Tensor out = matmul(row, params.t.ray_w);
  for (int c = 0; c < out.cols; ++c) out.at(0, c) += params.t.ray_b.at(0, c);
  return out;
}

MapPlan plan_map(const std::vector<const FrameTokens*>& frames, int n,
                 int fourier_frequencies, uint64_t seed, bool use_scale_norm) {
  if (frames.empty()) throw std::invalid_argument("plan_map: no frames");
  int pool = 0;
  const int width = frames[0]->tokens.cols;
  for (const FrameTokens* f : frames) {
    if (f->tokens.cols != width)
      throw std::invalid_argument("plan_map: inconsistent token widths");
    pool += f->token_count();
  }
  if (n < 1 || n > pool)
    throw std::invalid_argument("plan_map: need 1 <= n <= pooled token count");

  std::vector<Pose> poses;
  poses.reserve(frames.size());
  for (const FrameTokens* f : frames) poses.push_back(f->pose);
  NormalizedScene ns = normalize_scene(poses, 0);
  if (!use_scale_norm) {
    const Pose inv0 = inverse(ns.reference_pose);
    for (size_t i = 0; i < poses.size(); ++i)
      ns.normalized_poses[i] = compose(inv0, poses[i]);
    ns.scale = 1.0;
  }

  Rng rng(seed);
  std::vector<uint32_t> picks =
      rng.sample_without_replacement(static_cast<uint32_t>(pool),
                                     static_cast<uint32_t>(n));

  MapPlan plan;
  plan.scale = ns.scale;
  plan.reference_pose = ns.reference_pose;
  plan.intrinsics = frames[0]->intrinsics;
  plan.entries.resize(n);
  plan.descriptors = Tensor::zeros(n, width);
  plan.ray_encodings = Tensor::zeros(n, fourier_width(6, fourier_frequencies));
  for (int i = 0; i < n; ++i) {
    int remaining = static_cast<int>(picks[i]);
    size_t fi = 0;
    while (remaining >= frames[fi]->token_count()) {
      remaining -= frames[fi]->token_count();
      ++fi;
    }
    const FrameTokens& f = *frames[fi];
    MapEntry& e = plan.entries[i];
    e.frame_id = f.frame_id;
    e.row = remaining / f.grid_cols;
    e.col = remaining % f.grid_cols;
    e.gt_point = f.gt_points[remaining];
    e.gt_valid = f.gt_valid[remaining];
    for (int c = 0; c < width; ++c)
      plan.descriptors.at(i, c) = f.tokens.at(remaining, c);
    auto [u, v] = token_center(e.row, e.col, f.patch);
    const Pose& npose = ns.normalized_poses[fi];
    std::vector<double> enc = ray_encoding(
        npose.t, ray_direction(f.intrinsics, npose, u, v), fourier_frequencies);
    for (size_t c = 0; c < enc.size(); ++c)
      plan.ray_encodings.at(i, static_cast<int>(c)) = enc[c];
  }
  return plan;
}

MapRepresentation build_map(const std::vector<FrameTokens>& frames, int n,
                            uint64_t seed, NetworkParams& params) {
  std::vector<const FrameTokens*> ptrs;
  ptrs.reserve(frames.size());
  for (const FrameTokens& f : frames) ptrs.push_back(&f);
  MapPlan plan = plan_map(ptrs, n, params.config.fourier_frequencies, seed,
                          params.config.use_scale_norm);

  Tape tape;
  ParamsP<Tape::Var> ids = push_params(tape, params, false);
  Tape::Var fused = fuse_map_on_tape(tape, ids,
                                     tape.leaf(plan.descriptors, false),
                                     tape.leaf(plan.ray_encodings, false));
  MapRepresentation map;
  map.entries = std::move(plan.entries);
  map.fused = tape.value(fused);
  map.scale = plan.scale;
  map.reference_pose = plan.reference_pose;
  map.intrinsics = plan.intrinsics;
  return map;
}

ParamsP<Tape::Var> push_params(Tape& tape, NetworkParams& params, bool requires_grad) {
  ParamsP<Tape::Var> ids;
  ids.query_branch.blocks.resize(params.t.query_branch.blocks.size());
  ids.map_branch.blocks.resize(params.t.map_branch.blocks.size());
  visit_params(params.t, ids, [&](const std::string&, Tensor& v, Tape::Var& id) {
    id = tape.leaf(v, requires_grad);
  });
  return ids;
}

std::vector<Tape::Var> flatten_ids(ParamsP<Tape::Var>& ids) {
  std::vector<Tape::Var> flat;
  visit_params(ids, [&](const std::string&, Tape::Var& id) { flat.push_back(id); });
  return flat;
}

ParamsP<Tape::Var> unflatten_ids(const ModelConfig& cfg,
                                 const std::vector<Tape::Var>& flat) {
  ParamsP<Tape::Var> ids;
  ids.query_branch.blocks.resize(static_cast<std::size_t>(cfg.blocks));
  ids.map_branch.blocks.resize(static_cast<std::size_t>(cfg.blocks));
  std::size_t next = 0;
  visit_params(ids, [&](const std::string&, Tape::Var& id) {
    if (next >= flat.size()) throw std::invalid_argument("unflatten_ids: too few ids");
    id = flat[next++];
  });
  if (next != flat.size()) throw std::invalid_argument("unflatten_ids: too many ids");
  return ids;
}

std::vector<Tensor*> parameter_tensors(NetworkParams& params) {
  std::vector<Tensor*> out;
  visit_params(params.t, [&](const std::string&, Tensor& v) { out.push_back(&v); });
  return out;
}

std::vector<std::string> parameter_names(NetworkParams& params) {
  std::vector<std::string> out;
  visit_params(params.t, [&](const std::string& n, Tensor&) { out.push_back(n); });
  return out;
}

Tape::Var fuse_map_on_tape(Tape& tape, const ParamsP<Tape::Var>& ids,
                           Tape::Var descriptors, Tape::Var ray_encodings) {
  Tape::Var rays = tape.add_rowvec(tape.matmul(ray_encodings, ids.ray_w), ids.ray_b);
  return tape.add(embed_tokens(tape, ids, descriptors), rays);
}

ForwardVars forward_on_tape(Tape& tape, const ParamsP<Tape::Var>& ids,
                            const ModelConfig& cfg, Tape::Var query_tokens,
                            Tape::Var map_fused) {
  if (tape.value(map_fused).rows < 1)
    throw std::invalid_argument("forward_on_tape: empty map");
  if (tape.value(query_tokens).rows != cfg.query_tokens())
    throw std::invalid_argument("forward_on_tape: query token count mismatch");
  Tape::Var xq = tape.add(embed_tokens(tape, ids, query_tokens), ids.query_pos);
  Tape::Var xm = map_fused;
  for (int i = 0; i < cfg.blocks; ++i) {
    Tape::Var q_prev = xq;
    Tape::Var m_prev = xm;
    xq = decoder_block(tape, ids.query_branch.blocks[i], cfg.heads, q_prev, m_prev);
    xm = decoder_block(tape, ids.map_branch.blocks[i], cfg.heads, m_prev, q_prev);
  }
  ForwardVars out;
  out.query_features = ln_affine(tape, xq, ids.query_branch.final_ln_g,
                                 ids.query_branch.final_ln_b);
  out.map_features = ln_affine(tape, xm, ids.map_branch.final_ln_g,
                               ids.map_branch.final_ln_b);
  HeadVars qh = apply_head(tape, out.query_features, ids.query_branch.head_w,
                           ids.query_branch.head_b);
  HeadVars mh = apply_head(tape, out.map_features, ids.map_branch.head_w,
                           ids.map_branch.head_b);
  out.query_coords = qh.coords;
  out.query_conf = qh.conf;
  out.map_coords = mh.coords;
  out.map_conf = mh.conf;
  return out;
}

DecodeResult decode(const FrameTokens& query, const MapRepresentation& map,
                    NetworkParams& params) {
  Tape tape;
  ParamsP<Tape::Var> ids = push_params(tape, params, false);
  ForwardVars fw = forward_on_tape(tape, ids, params.config,
                                   tape.leaf(query.tokens, false),
                                   tape.leaf(map.fused, false));
  return {tape.value(fw.query_features), tape.value(fw.map_features)};
}

std::vector<CoordinatePrediction> query_head(const Tensor& query_features,
                                             NetworkParams& params, double scale,
                                             const Pose& reference_pose,
                                             int grid_rows, int grid_cols, int patch) {
  if (query_features.rows != grid_rows * grid_cols)
    throw std::invalid_argument("query_head: feature count does not match grid");
  Tape tape;
  Tape::Var f = tape.leaf(query_features, false);
  HeadVars h = apply_head(tape, f,
                          tape.leaf(params.t.query_branch.head_w, false),
                          tape.leaf(params.t.query_branch.head_b, false));
  const Tensor& coords = tape.value(h.coords);
  const Tensor& conf = tape.value(h.conf);
  std::vector<CoordinatePrediction> out(query_features.rows);
  for (int i = 0; i < query_features.rows; ++i) {
    Eigen::Vector3d raw(coords.at(i, 0), coords.at(i, 1), coords.at(i, 2));
    CoordinatePrediction& p = out[i];
    p.point = reference_pose.apply(scale * raw);
    p.confidence = conf.at(i, 0);
    std::tie(p.u, p.v) = token_center(i / grid_cols, i % grid_cols, patch);
  }
  return out;
}

std::vector<CoordinatePrediction> mapping_head(const Tensor& map_features,
                                               NetworkParams& params, double scale) {
  Tape tape;
  Tape::Var f = tape.leaf(map_features, false);
  HeadVars h = apply_head(tape, f,
                          tape.leaf(params.t.map_branch.head_w, false),
                          tape.leaf(params.t.map_branch.head_b, false));
  const Tensor& coords = tape.value(h.coords);
  const Tensor& conf = tape.value(h.conf);
  std::vector<CoordinatePrediction> out(map_features.rows);
  for (int i = 0; i < map_features.rows; ++i) {
    Eigen::Vector3d raw(coords.at(i, 0), coords.at(i, 1), coords.at(i, 2));
    out[i].point = scale * raw;
    out[i].confidence = conf.at(i, 0);
  }
  return out;
}

CorrespondenceSet forward_localize(const FrameTokens& query,
                                   const MapRepresentation& map,
                                   NetworkParams& params) {
  Tape tape;
  ParamsP<Tape::Var> ids = push_params(tape, params, false);
  ForwardVars fw = forward_on_tape(tape, ids, params.config,
                                   tape.leaf(query.tokens, false),
                                   tape.leaf(map.fused, false));
  const Tensor& coords = tape.value(fw.query_coords);
  const Tensor& conf = tape.value(fw.query_conf);
  CorrespondenceSet set;
  set.frame = PointFrame::kNormalized;
  set.records.resize(query.token_count());
  for (int i = 0; i < query.token_count(); ++i) {
    Correspondence& c = set.records[i];
    std::tie(c.u, c.v) = token_center(i / query.grid_cols, i % query.grid_cols,
                                      query.patch);
    c.point = Eigen::Vector3d(coords.at(i, 0), coords.at(i, 1), coords.at(i, 2));
    c.confidence = conf.at(i, 0);
  }
  return set;
}

}  // namespace reloc
