#pragma once

#include <cstdint>
#include <vector>

#include "reloc/geometry.hpp"
#include "reloc/tensor.hpp"

namespace reloc {

// One reference or query frame as a token grid: per-token descriptors plus
// exact per-token geometry for supervision and overlap scoring. Token (r,c)
// covers the patch*patch pixel square with top-left (c*patch, r*patch).
struct FrameTokens {
  int frame_id = 0;
  int scene_id = 0;
  int grid_rows = 0;
  int grid_cols = 0;
  int patch = 16;
  Intrinsics intrinsics;
  Pose pose;             // camera-to-scene
  Tensor tokens;         // (grid_rows*grid_cols) x width descriptors
  std::vector<Eigen::Vector3d> gt_points;  // scene frame, one per token
  std::vector<uint8_t> gt_valid;           // 0: token has no geometry

  int token_count() const { return grid_rows * grid_cols; }
  int token_index(int row, int col) const { return row * grid_cols + col; }
};

}  // namespace reloc
