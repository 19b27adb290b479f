#include "streamcap/memory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace streamcap::memory {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

// Distances from a fixed token set to successive center sets. Tokens are
// stored transposed (D x n) in double so the inner loop runs over tokens.
// Summation order is fixed (channel ascending), so equal rows give exactly 0
// and duplicate centers give bit-identical columns.
class DistanceKernel {
 public:
  explicit DistanceKernel(const Matrix& x)
      : n_(x.rows()), d_(x.cols()), xt_(static_cast<std::size_t>(n_ * d_)), acc_(n_) {
    for (Eigen::Index i = 0; i < n_; ++i)
      for (Eigen::Index d = 0; d < d_; ++d) xt_[d * n_ + i] = static_cast<double>(x(i, d));
  }

  Eigen::Index size() const { return n_; }

  // Calls f(k, distances) once per center row k.
  template <class F>
  void for_each_center(const Matrix& centers, F&& f) {
    for (Eigen::Index k = 0; k < centers.rows(); ++k) {
      std::fill(acc_.begin(), acc_.end(), 0.0);
      for (Eigen::Index d = 0; d < d_; ++d) {
        const double c = static_cast<double>(centers(k, d));
        const double* col = xt_.data() + d * n_;
        double* acc = acc_.data();
        for (Eigen::Index i = 0; i < n_; ++i) {
          const double diff = col[i] - c;
          acc[i] += diff * diff;
        }
      }
      f(static_cast<int>(k), acc_);
    }
  }

  std::vector<int> nearest(const Matrix& centers) {
    std::vector<int> best_k(n_, 0);
    std::vector<double> best(n_, std::numeric_limits<double>::infinity());
    for_each_center(centers, [&](int k, const std::vector<double>& dist) {
      for (Eigen::Index i = 0; i < n_; ++i) {
        const bool closer = dist[i] < best[i];  // strict: ties keep the lower index
        best[i] = closer ? dist[i] : best[i];
        best_k[i] = closer ? k : best_k[i];
      }
    });
    return best_k;
  }

 private:
  Eigen::Index n_;
  Eigen::Index d_;
  std::vector<double> xt_;
  std::vector<double> acc_;
};

void check_frame(const Matrix& frame, Eigen::Index dim) {
  require(frame.rows() >= 1, "frame has no tokens");
  require(frame.cols() == dim, "frame dimension " + std::to_string(frame.cols()) +
                                   " does not match memory dimension " + std::to_string(dim));
  require(all_finite(frame), "frame contains non-finite values");
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kClustering: return "clustering";
    case Variant::kEma: return "ema";
    case Variant::kSpatialPool: return "spatial_pool";
    case Variant::kTemporalPool: return "temporal_pool";
    case Variant::kPairwiseMerge: return "pairwise_merge";
    case Variant::kNone: return "none";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::kClustering, Variant::kEma, Variant::kSpatialPool,
                    Variant::kTemporalPool, Variant::kPairwiseMerge, Variant::kNone}) {
    if (to_string(v) == name) return v;
  }
  throw InvalidArgument("unknown memory variant '" + std::string(name) + "'");
}

void validate(const MemoryConfig& cfg, int tokens_per_frame) {
  require(tokens_per_frame >= 1, "tokens per frame must be positive");
  require(cfg.iterations >= 1, "K-means iterations must be positive");
  switch (cfg.variant) {
    case Variant::kClustering:
      require(cfg.memory_size >= 1 && cfg.memory_size % tokens_per_frame == 0,
              "memory size " + std::to_string(cfg.memory_size) +
                  " must be a positive multiple of tokens per frame " +
                  std::to_string(tokens_per_frame));
      break;
    case Variant::kEma:
      require(cfg.ema_decay > 0.0 && cfg.ema_decay < 1.0, "EMA decay must lie in (0, 1)");
      break;
    case Variant::kPairwiseMerge:
      require(cfg.memory_size >= 1, "memory size must be positive");
      break;
    case Variant::kSpatialPool:
    case Variant::kTemporalPool:
    case Variant::kNone:
      break;
  }
}

void TokenStream::validate() const {
  require(!frames.empty(), "token stream has no frames");
  require(fps > 0.0 && std::isfinite(fps), "fps must be positive");
  require(duration_sec > 0.0, "duration must be positive");
  const auto n = frames[0].rows();
  const auto d = frames[0].cols();
  require(n >= 1 && d >= 1, "frames must have at least one token and one channel");
  for (const auto& f : frames) {
    require(f.rows() == n && f.cols() == d, "frames do not share one shape");
    require(all_finite(f), "token stream contains non-finite values");
  }
  const double expected = static_cast<double>(frames.size()) / fps;
  require(std::abs(duration_sec - expected) <= 1.0 / fps + 1e-9,
          "duration disagrees with frame count / fps by more than one frame");
}

MemoryState init_memory(std::span<const Matrix> frames, const MemoryConfig& cfg) {
  require(!frames.empty(), "initialization needs at least one frame");
  const auto n_f = frames[0].rows();
  const auto dim = frames[0].cols();
  require(n_f >= 1 && dim >= 1, "empty frame");
  require(cfg.memory_size >= 1 && cfg.memory_size % n_f == 0,
          "memory size must be a positive multiple of tokens per frame");
  const auto needed = static_cast<std::size_t>(cfg.memory_size / n_f);
  require(frames.size() == needed, "initialization needs exactly " + std::to_string(needed) +
                                       " frames, got " + std::to_string(frames.size()));

  MemoryState s;
  s.centers.resize(cfg.memory_size, dim);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    require(frames[f].rows() == n_f && frames[f].cols() == dim, "frame shape mismatch");
    require(all_finite(frames[f]), "frame contains non-finite values");
    s.centers.middleRows(static_cast<Eigen::Index>(f) * n_f, n_f) = frames[f];
  }
  s.weights = Vector::Ones(cfg.memory_size);
  s.frames_seen = static_cast<std::int64_t>(needed);
  return s;
}

MatrixD pairwise_sq_dist(const Matrix& x, const Matrix& c) {
  require(x.cols() == c.cols(), "pairwise_sq_dist: column counts differ");
  MatrixD out(x.rows(), c.rows());
  DistanceKernel kernel(x);
  kernel.for_each_center(c, [&](int k, const std::vector<double>& dist) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) out(i, k) = dist[i];
  });
  return out;
}

Matrix Assignment::one_hot() const {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(center.size()), num_centers);
  for (std::size_t i = 0; i < center.size(); ++i) m(static_cast<Eigen::Index>(i), center[i]) = 1.0f;
  return m;
}

Assignment assign(const MatrixD& dist) {
  require(dist.cols() >= 1, "assign: no centers");
  require(dist.allFinite(), "assign: distances must be finite");
  Assignment a;
  a.num_centers = static_cast<int>(dist.cols());
  a.center.resize(dist.rows());
  for (Eigen::Index i = 0; i < dist.rows(); ++i) {
    int best = 0;
    for (Eigen::Index k = 1; k < dist.cols(); ++k)
      if (dist(i, k) < dist(i, best)) best = static_cast<int>(k);
    a.center[i] = best;
  }
  return a;
}

namespace detail {

KMeansResult weighted_kmeans(const Matrix& x, const Vector& w, const Matrix& init_centers,
                             int iterations, bool momentum, KMeansTrace* trace) {
  const Eigen::Index n = x.rows();
  const Eigen::Index K = init_centers.rows();
  const Eigen::Index D = x.cols();
  require(w.size() == n, "weighted_kmeans: one weight per token required");
  require(init_centers.cols() == D, "weighted_kmeans: center dimension mismatch");
  require(K >= 1 && K <= n, "weighted_kmeans: centers must be a prefix of the tokens");
  require(iterations >= 0, "weighted_kmeans: negative iteration count");

  KMeansResult r;
  r.centers = init_centers;
  // Weights from the previous iteration; the fallback for empty clusters.
  std::vector<double> prev_w(K);
  for (Eigen::Index k = 0; k < K; ++k) prev_w[k] = w[k];

  DistanceKernel kernel(x);
  std::vector<double> cluster_w(K);
  std::vector<std::int64_t> count(K);
  MatrixD sums(K, D);

  for (int it = 0; it < iterations; ++it) {
    const std::vector<int> a = kernel.nearest(r.centers);

    std::fill(cluster_w.begin(), cluster_w.end(), 0.0);
    std::fill(count.begin(), count.end(), 0);
    sums.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const int k = a[i];
      const double wi = w[i];
      cluster_w[k] += wi;
      ++count[k];
      const double scale = momentum ? wi : 1.0;
      for (Eigen::Index d = 0; d < D; ++d) sums(k, d) += scale * static_cast<double>(x(i, d));
    }

    std::vector<char> retained(K, 0);
    for (Eigen::Index k = 0; k < K; ++k) {
      const double denom = momentum ? cluster_w[k] : static_cast<double>(count[k]);
      if (count[k] == 0 || denom <= 0.0) {
        retained[k] = 1;
        ++r.fallbacks;
        continue;  // center and weight carry over
      }
      for (Eigen::Index d = 0; d < D; ++d)
        r.centers(k, d) = static_cast<float>(sums(k, d) / denom);
      prev_w[k] = cluster_w[k];
    }

    if (trace) {
      trace->assignments.push_back(a);
      trace->retained.push_back(std::move(retained));
    }
  }

  r.weights.resize(K);
  for (Eigen::Index k = 0; k < K; ++k) r.weights[k] = static_cast<float>(prev_w[k]);
  return r;
}

}  // namespace detail

MemoryState update_memory(const MemoryState& state, const Matrix& frame,
                          const MemoryConfig& cfg, UpdateStats* stats) {
  if (!state.initialized()) throw StateError("update_memory: memory is not initialized");
  require(cfg.iterations >= 1, "K-means iterations must be positive");
  require(state.weights.size() == state.centers.rows(), "memory weights/centers size mismatch");
  check_frame(frame, state.dim());
  require(all_finite(state.centers) && state.weights.allFinite(), "memory contains non-finite values");

  const Eigen::Index K = state.size();
  const Eigen::Index n_f = frame.rows();
  Matrix x(K + n_f, state.dim());
  x.topRows(K) = state.centers;
  x.bottomRows(n_f) = frame;
  Vector w(K + n_f);
  w.head(K) = state.weights;
  w.tail(n_f).setOnes();

  auto r = detail::weighted_kmeans(x, w, state.centers, cfg.iterations, cfg.momentum);

  if (stats && r.fallbacks > 0) {
    stats->empty_cluster_fallbacks += r.fallbacks;
    ++stats->updates_with_fallback;
  }
  MemoryState out;
  out.centers = std::move(r.centers);
  out.weights = std::move(r.weights);
  out.frames_seen = state.frames_seen + 1;
  return out;
}

MemoryState ema_update(const MemoryState& state, const Matrix& frame, double decay) {
  if (!state.initialized()) throw StateError("ema_update: memory is not initialized");
  require(decay > 0.0 && decay < 1.0, "EMA decay must lie in (0, 1)");
  check_frame(frame, state.dim());
  require(frame.rows() == state.size(), "EMA memory must hold exactly one frame of tokens");

  MemoryState out = state;
  out.centers = (decay * state.centers.cast<double>() + (1.0 - decay) * frame.cast<double>())
                    .cast<float>();
  out.frames_seen = state.frames_seen + 1;
  return out;
}

MemoryState pool_update(const MemoryState& state, const Matrix& frame, PoolMode mode) {
  const bool empty = state.size() == 0;
  if (!empty) check_frame(frame, state.dim());
  require(frame.rows() >= 1 && frame.cols() >= 1 && all_finite(frame), "invalid frame");

  MemoryState out;
  out.frames_seen = state.frames_seen + 1;
  if (mode == PoolMode::kSpatial) {
    const Eigen::Index k = state.size();
    out.centers.resize(k + 1, frame.cols());
    if (!empty) out.centers.topRows(k) = state.centers;
    out.centers.row(k) = frame.cast<double>().colwise().mean().cast<float>();
    out.weights = Vector::Ones(k + 1);
    return out;
  }

  if (empty) {
    out.centers = frame;
  } else {
    require(frame.rows() == state.size(), "temporal pooling needs frames of a fixed token count");
    const double n = static_cast<double>(state.frames_seen);
    out.centers = ((state.centers.cast<double>() * n + frame.cast<double>()) / (n + 1.0)).cast<float>();
  }
  out.weights = Vector::Ones(out.centers.rows());
  return out;
}

MemoryState pairwise_merge_update(const MemoryState& state, const Matrix& frame, int K) {
  require(K >= 1, "memory size must be positive");
  const bool empty = state.size() == 0;
  const Eigen::Index dim = empty ? frame.cols() : state.dim();
  if (frame.rows() > 0) {
    require(frame.cols() == dim, "frame dimension does not match memory");
    require(all_finite(frame), "frame contains non-finite values");
  }
  require(dim >= 1, "pairwise merge: unknown token dimension");

  // Bank rows in order, plus a dense distance matrix built on first need.
  std::vector<std::vector<double>> rows;
  std::vector<double> weights;
  rows.reserve(state.size() + frame.rows());
  for (Eigen::Index i = 0; i < state.size(); ++i) {
    std::vector<double> r(dim);
    for (Eigen::Index d = 0; d < dim; ++d) r[d] = state.centers(i, d);
    rows.push_back(std::move(r));
    weights.push_back(state.weights.size() == state.size() ? state.weights[i] : 1.0);
  }

  auto sq = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (Eigen::Index d = 0; d < dim; ++d) {
      const double diff = a[d] - b[d];
      s += diff * diff;
    }
    return s;
  };

  std::vector<std::vector<double>> dist;  // symmetric, dist[i][j] for i != j
  bool have_dist = false;
  auto build_dist = [&] {
    dist.assign(rows.size(), std::vector<double>(rows.size(), 0.0));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = i + 1; j < rows.size(); ++j) dist[i][j] = dist[j][i] = sq(rows[i], rows[j]);
    have_dist = true;
  };

  auto merge_down = [&] {
    while (rows.size() > static_cast<std::size_t>(K)) {
      if (!have_dist) build_dist();
      std::size_t bi = 0, bj = 1;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = i + 1; j < rows.size(); ++j)
          if (dist[i][j] < best) {
            best = dist[i][j];
            bi = i;
            bj = j;
          }
      const double wi = weights[bi], wj = weights[bj];
      const double total = wi + wj;
      const double ai = total > 0.0 ? wi / total : 0.5;
      for (Eigen::Index d = 0; d < dim; ++d) rows[bi][d] = ai * rows[bi][d] + (1.0 - ai) * rows[bj][d];
      weights[bi] = total;
      rows.erase(rows.begin() + static_cast<std::ptrdiff_t>(bj));
      weights.erase(weights.begin() + static_cast<std::ptrdiff_t>(bj));
      dist.erase(dist.begin() + static_cast<std::ptrdiff_t>(bj));
      for (auto& r : dist) r.erase(r.begin() + static_cast<std::ptrdiff_t>(bj));
      for (std::size_t j = 0; j < rows.size(); ++j)
        if (j != bi) dist[bi][j] = dist[j][bi] = sq(rows[bi], rows[j]);
    }
  };

  merge_down();
  for (Eigen::Index t = 0; t < frame.rows(); ++t) {
    std::vector<double> r(dim);
    for (Eigen::Index d = 0; d < dim; ++d) r[d] = frame(t, d);
    if (have_dist) {
      for (std::size_t i = 0; i < rows.size(); ++i) dist[i].push_back(sq(rows[i], r));
      dist.push_back(std::vector<double>(rows.size() + 1, 0.0));
      for (std::size_t i = 0; i < rows.size(); ++i) dist.back()[i] = dist[i].back();
    }
    rows.push_back(std::move(r));
    weights.push_back(1.0);
    merge_down();
  }

  MemoryState out;
  out.centers.resize(static_cast<Eigen::Index>(rows.size()), dim);
  out.weights.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index d = 0; d < dim; ++d)
      out.centers(static_cast<Eigen::Index>(i), d) = static_cast<float>(rows[i][d]);
    out.weights[static_cast<Eigen::Index>(i)] = static_cast<float>(weights[i]);
  }
  out.frames_seen = state.frames_seen + (frame.rows() > 0 ? 1 : 0);
  return out;
}

MemoryState concat_update(const MemoryState& state, const Matrix& frame) {
  const bool empty = state.size() == 0;
  if (!empty) check_frame(frame, state.dim());
  require(frame.rows() >= 1 && all_finite(frame), "invalid frame");
  MemoryState out;
  out.centers.resize(state.size() + frame.rows(), frame.cols());
  if (!empty) out.centers.topRows(state.size()) = state.centers;
  out.centers.bottomRows(frame.rows()) = frame;
  out.weights = Vector::Ones(out.centers.rows());
  out.frames_seen = state.frames_seen + 1;
  return out;
}

StreamingMemory::StreamingMemory(MemoryConfig cfg, int tokens_per_frame, int dim)
    : cfg_(cfg), tokens_per_frame_(tokens_per_frame), dim_(dim) {
  validate(cfg_, tokens_per_frame_);
  require(dim_ >= 1, "token dimension must be positive");
  state_.centers.resize(0, dim_);
  state_.weights.resize(0);
}

void StreamingMemory::push(const Matrix& frame) {
  require(frame.rows() == tokens_per_frame_ && frame.cols() == dim_,
          "frame shape does not match the stream");
  switch (cfg_.variant) {
    case Variant::kClustering:
      if (!state_.initialized()) {
        pending_.push_back(frame);
        if (pending_.size() == static_cast<std::size_t>(cfg_.memory_size / tokens_per_frame_)) {
          state_ = init_memory(pending_, cfg_);
          pending_.clear();
        }
      } else {
        state_ = update_memory(state_, frame, cfg_, &stats_);
      }
      break;
    case Variant::kEma:
      if (!state_.initialized()) {
        check_frame(frame, dim_);
        state_.centers = frame;
        state_.weights = Vector::Ones(frame.rows());
        state_.frames_seen = 1;
      } else {
        state_ = ema_update(state_, frame, cfg_.ema_decay);
      }
      break;
    case Variant::kSpatialPool:
      state_ = pool_update(state_, frame, PoolMode::kSpatial);
      break;
    case Variant::kTemporalPool:
      state_ = pool_update(state_, frame, PoolMode::kTemporal);
      break;
    case Variant::kPairwiseMerge:
      state_ = pairwise_merge_update(state_, frame, cfg_.memory_size);
      break;
    case Variant::kNone:
      state_ = concat_update(state_, frame);
      break;
  }
  ++frames_seen_;
}

MemoryState StreamingMemory::snapshot() const {
  if (pending_.empty()) return state_;
  MemoryState s;
  const auto rows = static_cast<Eigen::Index>(pending_.size()) * tokens_per_frame_;
  s.centers.resize(rows, dim_);
  for (std::size_t f = 0; f < pending_.size(); ++f)
    s.centers.middleRows(static_cast<Eigen::Index>(f) * tokens_per_frame_, tokens_per_frame_) = pending_[f];
  s.weights = Vector::Ones(rows);
  s.frames_seen = static_cast<std::int64_t>(pending_.size());
  return s;
}

}  // namespace streamcap::memory
