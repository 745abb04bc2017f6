#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reloc/frame.hpp"

namespace reloc {

struct RetrievalIndex {
  std::vector<int> frame_ids;
  std::vector<std::vector<double>> descriptors;  // unit norm, one per frame
  std::vector<uint8_t> usable;                   // 0: all-invalid frame
  int width = 0;
};

// Mean over valid token descriptors, unit-normalized. Frames with no valid
// token yield a zero vector with *usable = false.
std::vector<double> global_descriptor(const FrameTokens& frame, bool* usable);

RetrievalIndex build_index(const std::vector<FrameTokens>& frames);

// Exact top-k by descending cosine similarity, ties by ascending frame id.
std::vector<int> topk(const RetrievalIndex& index,
                      const std::vector<double>& query_descriptor, int k);

enum class SelectionStrategy { kRetrieval, kRandom, kUniform };

SelectionStrategy selection_strategy_from_string(const std::string& s);
std::string to_string(SelectionStrategy s);

// Frame ids for map building: retrieval = topk against the query descriptor,
// random = uniform without replacement, uniform = evenly spaced indices
// anchored at 0 with floor spacing.
std::vector<int> select_mapping_frames(const std::vector<FrameTokens>& frames,
                                       SelectionStrategy strategy, int k,
                                       const FrameTokens* query, uint64_t seed);

// Indices 0, rate, 2*rate, ... as frame references.
std::vector<int> subsample_indices(int frame_count, int rate);

}  // namespace reloc
