#include "reloc/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "reloc/rng.hpp"

namespace reloc {

std::vector<double> global_descriptor(const FrameTokens& frame, bool* usable) {
  if (frame.token_count() == 0) {
    throw std::invalid_argument("global_descriptor: empty frame");
  }
  const int width = frame.tokens.cols;
  std::vector<double> desc(width, 0.0);
  int valid = 0;
  for (int t = 0; t < frame.token_count(); ++t) {
    if (!frame.gt_valid[t]) continue;
    const double* row = frame.tokens.row(t);
    for (int j = 0; j < width; ++j) desc[j] += row[j];
    ++valid;
  }
  if (valid == 0) {
    if (usable) *usable = false;
    return desc;
  }
  double norm = 0.0;
  for (double v : desc) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& v : desc) v /= norm;
  }
  if (usable) *usable = true;
  return desc;
}

RetrievalIndex build_index(const std::vector<FrameTokens>& frames) {
  RetrievalIndex index;
  index.width = frames.empty() ? 0 : frames[0].tokens.cols;
  for (const FrameTokens& f : frames) {
    bool usable = false;
    index.descriptors.push_back(global_descriptor(f, &usable));
    index.usable.push_back(usable ? 1 : 0);
    index.frame_ids.push_back(f.frame_id);
  }
  return index;
}

std::vector<int> topk(const RetrievalIndex& index,
                      const std::vector<double>& query_descriptor, int k) {
  const int n = static_cast<int>(index.frame_ids.size());
  if (n == 0) throw std::invalid_argument("topk: empty index");
  if (k < 1 || k > n) throw std::invalid_argument("topk: k out of range");

  std::vector<std::pair<double, int>> scored(n);
  for (int i = 0; i < n; ++i) {
    double dot = 0.0;
    const auto& d = index.descriptors[i];
    for (size_t j = 0; j < d.size(); ++j) dot += d[j] * query_descriptor[j];
    scored[i] = {dot, index.frame_ids[i]};
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<int> out(k);
  for (int i = 0; i < k; ++i) out[i] = scored[i].second;
  return out;
}

SelectionStrategy selection_strategy_from_string(const std::string& s) {
  if (s == "retrieval") return SelectionStrategy::kRetrieval;
  if (s == "random") return SelectionStrategy::kRandom;
  if (s == "uniform") return SelectionStrategy::kUniform;
  throw std::invalid_argument("unknown selection strategy: " + s);
}

std::string to_string(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::kRetrieval: return "retrieval";
    case SelectionStrategy::kRandom: return "random";
    case SelectionStrategy::kUniform: return "uniform";
  }
  return "?";
}

std::vector<int> select_mapping_frames(const std::vector<FrameTokens>& frames,
                                       SelectionStrategy strategy, int k,
                                       const FrameTokens* query, uint64_t seed) {
  const int n = static_cast<int>(frames.size());
  if (k < 1 || k > n) {
    throw std::invalid_argument("select_mapping_frames: k out of range");
  }
  std::vector<int> out;
  switch (strategy) {
    case SelectionStrategy::kRetrieval: {
      if (query == nullptr) {
        throw std::invalid_argument(
            "select_mapping_frames: retrieval strategy needs a query frame");
      }
      const RetrievalIndex index = build_index(frames);
      bool usable = false;
      const std::vector<double> qd = global_descriptor(*query, &usable);
      if (!usable) {
        throw std::invalid_argument(
            "select_mapping_frames: query frame has no valid tokens");
      }
      out = topk(index, qd, k);
      break;
    }
    case SelectionStrategy::kRandom: {
      Rng rng(seed);
      for (uint32_t i : rng.sample_without_replacement(n, k)) {
        out.push_back(frames[i].frame_id);
      }
      break;
    }
    case SelectionStrategy::kUniform: {
      const int spacing = n / k;
      for (int i = 0; i < k; ++i) out.push_back(frames[i * spacing].frame_id);
      break;
    }
  }
  return out;
}

std::vector<int> subsample_indices(int frame_count, int rate) {
  if (rate < 1) throw std::invalid_argument("subsample: rate must be >= 1");
  std::vector<int> out;
  for (int i = 0; i < frame_count; i += rate) out.push_back(i);
  return out;
}

}  // namespace reloc
