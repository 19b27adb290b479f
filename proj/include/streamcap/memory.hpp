#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "streamcap/types.hpp"

namespace streamcap::memory {

enum class Variant {
  kClustering,     // weighted K-means memory of K tokens
  kEma,            // exponential moving average of frame tokens (K = N_f)
  kSpatialPool,    // one mean token per frame
  kTemporalPool,   // positionwise running mean over frames (K = N_f)
  kPairwiseMerge,  // merge the two closest tokens until K remain
  kNone,           // concatenate every token
};

std::string_view to_string(Variant v);
// Accepts the names printed by to_string ("clustering", "ema", ...).
Variant parse_variant(std::string_view name);

struct MemoryConfig {
  int memory_size = 514;  // K
  int iterations = 2;     // tau, K-means iterations per update
  Variant variant = Variant::kClustering;
  double ema_decay = 0.9;
  // Weighted (momentum) centroids. When false every token counts once in
  // the centroid, although weights are still accumulated.
  bool momentum = true;
};

// Throws InvalidArgument when cfg cannot run on frames of the given shape.
void validate(const MemoryConfig& cfg, int tokens_per_frame);

struct MemoryState {
  Matrix centers;  // (K, D)
  Vector weights;  // (K)
  std::int64_t frames_seen = 0;

  bool initialized() const { return frames_seen > 0 && centers.rows() > 0; }
  Eigen::Index size() const { return centers.rows(); }
  Eigen::Index dim() const { return centers.cols(); }
};

struct TokenStream {
  std::vector<Matrix> frames;  // T frames of shape (N_f, D)
  double fps = 1.0;
  double duration_sec = 0.0;

  int num_frames() const { return static_cast<int>(frames.size()); }
  int tokens_per_frame() const { return frames.empty() ? 0 : static_cast<int>(frames[0].rows()); }
  int dim() const { return frames.empty() ? 0 : static_cast<int>(frames[0].cols()); }

  // Checks shape consistency, finiteness and duration ~ T / fps.
  void validate() const;
};

struct UpdateStats {
  // Number of (iteration, center) pairs where the cluster came out empty and
  // the center kept its previous value.
  std::int64_t empty_cluster_fallbacks = 0;
  // Updates in which at least one fallback fired.
  std::int64_t updates_with_fallback = 0;
};

// Stacks the first K/N_f frames into the initial memory with unit weights.
MemoryState init_memory(std::span<const Matrix> frames, const MemoryConfig& cfg);

// Squared Euclidean distances, entry (i, k) = |x_i - c_k|^2, accumulated in
// double precision.
MatrixD pairwise_sq_dist(const Matrix& x, const Matrix& c);

struct Assignment {
  std::vector<int> center;  // argmin column per row
  int num_centers = 0;

  Matrix one_hot() const;
};

// Row-wise argmin; ties go to the lowest column index.
Assignment assign(const MatrixD& dist);

// One streaming step of the clustering memory: K-means over the old centers
// and the incoming tokens, with the old centers carrying their accumulated
// weights so heavy centers move slowly.
MemoryState update_memory(const MemoryState& state, const Matrix& frame,
                          const MemoryConfig& cfg, UpdateStats* stats = nullptr);

MemoryState ema_update(const MemoryState& state, const Matrix& frame, double decay);

enum class PoolMode { kSpatial, kTemporal };

// Accepts an empty state (0 rows, frames_seen 0) as the starting point.
MemoryState pool_update(const MemoryState& state, const Matrix& frame, PoolMode mode);

// Appends the frame's tokens one at a time, merging the closest pair while the
// bank holds more than K tokens. Accepts an empty state.
MemoryState pairwise_merge_update(const MemoryState& state, const Matrix& frame, int K);

// No memory: the bank is every token seen so far.
MemoryState concat_update(const MemoryState& state, const Matrix& frame);

namespace detail {

// Per-iteration record of a K-means run, used to rebuild the linear map.
struct KMeansTrace {
  std::vector<std::vector<int>> assignments;  // [iteration][token] -> center
  std::vector<std::vector<char>> retained;    // [iteration][center] empty-cluster fallback
};

struct KMeansResult {
  Matrix centers;
  Vector weights;
  std::int64_t fallbacks = 0;
};

// Runs tau iterations of weighted K-means on tokens x with per-token weights
// w, starting from init_centers. Rows of init_centers are assumed to be the
// first K rows of x (their weights are the fallback weights).
KMeansResult weighted_kmeans(const Matrix& x, const Vector& w, const Matrix& init_centers,
                             int iterations, bool momentum, KMeansTrace* trace = nullptr);

}  // namespace detail

// Drives one stream through a memory variant: buffers the initialization
// frames, then updates per frame. Owned by exactly one stream.
class StreamingMemory {
 public:
  StreamingMemory(MemoryConfig cfg, int tokens_per_frame, int dim);

  void push(const Matrix& frame);

  // Current memory tokens. Before initialization completes this is the stack
  // of buffered frames with unit weights.
  MemoryState snapshot() const;

  const MemoryConfig& config() const { return cfg_; }
  const UpdateStats& stats() const { return stats_; }
  std::int64_t frames_seen() const { return frames_seen_; }

 private:
  MemoryConfig cfg_;
  int tokens_per_frame_;
  int dim_;
  std::int64_t frames_seen_ = 0;
  std::vector<Matrix> pending_;
  MemoryState state_;
  UpdateStats stats_;
};

}  // namespace streamcap::memory
