#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reloc/frame.hpp"
#include "reloc/solver.hpp"
#include "reloc/tape.hpp"
#include "reloc/tensor.hpp"

namespace reloc {

// Parameter tree shared between the value store (T = Tensor) and the per-tape
// node-id mirror (T = Tape::Var). One traversal function defines the
// canonical field order used by the optimizer and checkpoint serialization.
template <typename T>
struct AttentionP {
  T wq, bq, wk, bk, wv, bv, wo, bo;
};

template <typename T>
struct BlockP {
  T ln1_g, ln1_b;
  AttentionP<T> self_attn;
  T ln2_g, ln2_b, ln_ctx_g, ln_ctx_b;
  AttentionP<T> cross_attn;
  T ln3_g, ln3_b;
  T mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

template <typename T>
struct BranchP {
  std::vector<BlockP<T>> blocks;
  T final_ln_g, final_ln_b;
  T head_w, head_b;
};

template <typename T>
struct ParamsP {
  T embed_w, embed_b, embed_ln_g, embed_ln_b;
  T ray_w, ray_b;
  T query_pos;
  BranchP<T> query_branch, map_branch;
};

template <typename A, typename B, typename F>
void visit_params(AttentionP<A>& a, AttentionP<B>& b, const std::string& p, F&& fn) {
  fn(p + ".wq", a.wq, b.wq);
  fn(p + ".bq", a.bq, b.bq);
  fn(p + ".wk", a.wk, b.wk);
  fn(p + ".bk", a.bk, b.bk);
  fn(p + ".wv", a.wv, b.wv);
  fn(p + ".bv", a.bv, b.bv);
  fn(p + ".wo", a.wo, b.wo);
  fn(p + ".bo", a.bo, b.bo);
}

template <typename A, typename B, typename F>
void visit_params(BlockP<A>& a, BlockP<B>& b, const std::string& p, F&& fn) {
  fn(p + ".ln1_g", a.ln1_g, b.ln1_g);
  fn(p + ".ln1_b", a.ln1_b, b.ln1_b);
  visit_params(a.self_attn, b.self_attn, p + ".self", fn);
  fn(p + ".ln2_g", a.ln2_g, b.ln2_g);
  fn(p + ".ln2_b", a.ln2_b, b.ln2_b);
  fn(p + ".ln_ctx_g", a.ln_ctx_g, b.ln_ctx_g);
  fn(p + ".ln_ctx_b", a.ln_ctx_b, b.ln_ctx_b);
  visit_params(a.cross_attn, b.cross_attn, p + ".cross", fn);
  fn(p + ".ln3_g", a.ln3_g, b.ln3_g);
  fn(p + ".ln3_b", a.ln3_b, b.ln3_b);
  fn(p + ".mlp_w1", a.mlp_w1, b.mlp_w1);
  fn(p + ".mlp_b1", a.mlp_b1, b.mlp_b1);
  fn(p + ".mlp_w2", a.mlp_w2, b.mlp_w2);
  fn(p + ".mlp_b2", a.mlp_b2, b.mlp_b2);
}

template <typename A, typename B, typename F>
void visit_params(BranchP<A>& a, BranchP<B>& b, const std::string& p, F&& fn) {
  for (size_t i = 0; i < a.blocks.size(); ++i)
    visit_params(a.blocks[i], b.blocks[i], p + ".block" + std::to_string(i), fn);
  fn(p + ".final_ln_g", a.final_ln_g, b.final_ln_g);
  fn(p + ".final_ln_b", a.final_ln_b, b.final_ln_b);
  fn(p + ".head_w", a.head_w, b.head_w);
  fn(p + ".head_b", a.head_b, b.head_b);
}

template <typename A, typename B, typename F>
void visit_params(ParamsP<A>& a, ParamsP<B>& b, F&& fn) {
  fn("embed_w", a.embed_w, b.embed_w);
  fn("embed_b", a.embed_b, b.embed_b);
  fn("embed_ln_g", a.embed_ln_g, b.embed_ln_g);
  fn("embed_ln_b", a.embed_ln_b, b.embed_ln_b);
  fn("ray_w", a.ray_w, b.ray_w);
  fn("ray_b", a.ray_b, b.ray_b);
  fn("query_pos", a.query_pos, b.query_pos);
  visit_params(a.query_branch, b.query_branch, "query", fn);
  visit_params(a.map_branch, b.map_branch, "map", fn);
}

template <typename A, typename F>
void visit_params(ParamsP<A>& p, F&& fn) {
  visit_params(p, p, [&](const std::string& name, A& x, A&) { fn(name, x); });
}

struct ModelConfig {
  int d = 64;
  int heads = 4;
  int blocks = 2;
  int mlp_ratio = 2;
  int token_width = 32;
  int fourier_frequencies = 8;  // L
  int grid_rows = 12, grid_cols = 16;
  // Ablation switch: when false the map keeps s = 1 (translations enter the
  // ray encodings unscaled and predictions are metric).
  bool use_scale_norm = true;

  int query_tokens() const { return grid_rows * grid_cols; }
};

// Raw confidence is clamped before exp so a diverging head cannot overflow;
// C = 1 + exp(20) still dwarfs any confidence threshold in use.
constexpr double kConfClampLo = -20.0;
constexpr double kConfClampHi = 20.0;

struct NetworkParams {
  ModelConfig config;
  ParamsP<Tensor> t;

  int64_t parameter_count();
};

NetworkParams init_params(const ModelConfig& cfg, uint64_t seed);

// Per-coordinate encoding block [x, sin(2^i pi x), cos(2^i pi x)] for
// i = 0..L-1; blocks concatenated in input-coordinate order.
std::vector<double> fourier_encode(const std::vector<double>& x, int L);

inline int fourier_width(int coords, int L) { return coords * (1 + 2 * L); }

// One map entry's geometry token before projection: encode(origin | direction).
std::vector<double> ray_encoding(const Eigen::Vector3d& origin,
                                 const Eigen::Vector3d& direction, int L);

// Projected d-width ray token (encoding through the learned linear layer).
Tensor ray_token(const Eigen::Vector3d& origin, const Eigen::Vector3d& direction,
                 const NetworkParams& params);

// Checkpoint-facing flat views in canonical visit order.
std::vector<Tensor*> parameter_tensors(NetworkParams& params);
std::vector<std::string> parameter_names(NetworkParams& params);

struct MapEntry {
  int frame_id = 0;
  int row = 0, col = 0;
  Eigen::Vector3d gt_point = Eigen::Vector3d::Zero();  // scene frame
  uint8_t gt_valid = 0;
};

// Everything about a sampled map except the network: raw descriptors, ray
// encodings, ground truth, and the scene normalization. Training materializes
// fused features from a plan on every step so gradients reach the embedder.
struct MapPlan {
  std::vector<MapEntry> entries;
  Tensor descriptors;    // N x token_width
  Tensor ray_encodings;  // N x fourier_width(6, L)
  double scale = 1.0;
  Pose reference_pose;
  Intrinsics intrinsics;  // of the first frame; used when solving queries
};

struct MapRepresentation {
  std::vector<MapEntry> entries;
  Tensor fused;  // N x d, embed(descriptor) + ray token
  double scale = 1.0;
  Pose reference_pose;
  Intrinsics intrinsics;

  int entry_count() const { return static_cast<int>(entries.size()); }
};

// Samples N tokens uniformly without replacement from the pooled token set of
// all frames (populated or not), normalizes poses against the first frame,
// and precomputes the per-entry ray encodings.
MapPlan plan_map(const std::vector<const FrameTokens*>& frames, int n,
                 int fourier_frequencies, uint64_t seed,
                 bool use_scale_norm = true);

MapRepresentation build_map(const std::vector<FrameTokens>& frames, int n,
                            uint64_t seed, NetworkParams& params);

// Tape-level forward pieces. Training, map materialization, and inference all
// run this one composition; they differ only in which leaves require grad.
struct ForwardVars {
  Tape::Var query_features = -1;  // T x d, post final layer norm
  Tape::Var map_features = -1;    // N x d
  Tape::Var query_coords = -1;    // T x 3, normalized frame
  Tape::Var query_conf = -1;      // T x 1, C > 1
  Tape::Var map_coords = -1;      // N x 3
  Tape::Var map_conf = -1;        // N x 1
};

ParamsP<Tape::Var> push_params(Tape& tape, NetworkParams& params, bool requires_grad);

// Collects node ids in the same canonical order as visit_params.
std::vector<Tape::Var> flatten_ids(ParamsP<Tape::Var>& ids);

// Inverse of flatten_ids given the architecture (for gradient checks that
// receive leaves as a flat list).
ParamsP<Tape::Var> unflatten_ids(const ModelConfig& cfg,
                                 const std::vector<Tape::Var>& flat);

Tape::Var fuse_map_on_tape(Tape& tape, const ParamsP<Tape::Var>& ids,
                           Tape::Var descriptors, Tape::Var ray_encodings);

ForwardVars forward_on_tape(Tape& tape, const ParamsP<Tape::Var>& ids,
                            const ModelConfig& cfg, Tape::Var query_tokens,
                            Tape::Var map_fused);

struct CoordinatePrediction {
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  double confidence = 1.0;
  double u = 0.0, v = 0.0;  // token center pixel
};

struct DecodeResult {
  Tensor query_features;  // T x d
  Tensor map_features;    // N x d
};

DecodeResult decode(const FrameTokens& query, const MapRepresentation& map,
                    NetworkParams& params);

// Linear head over decoded features, then scale recovery: confidence
// C = 1 + exp(raw), scene point = P0 applied to (s * raw_coords).
std::vector<CoordinatePrediction> query_head(const Tensor& query_features,
                                             NetworkParams& params, double scale,
                                             const Pose& reference_pose,
                                             int grid_rows, int grid_cols, int patch);

std::vector<CoordinatePrediction> mapping_head(const Tensor& map_features,
                                               NetworkParams& params, double scale);

// Feed-forward localization against a prebuilt map: one correspondence per
// query token (token center pixel, predicted point in the normalized frame,
// confidence). Scale recovery happens in the solver, exactly once.
CorrespondenceSet forward_localize(const FrameTokens& query,
                                   const MapRepresentation& map,
                                   NetworkParams& params);

}  // namespace reloc
