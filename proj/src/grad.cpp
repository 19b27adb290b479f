#include "streamcap/grad.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "streamcap/rng.hpp"

namespace streamcap::grad {

namespace {

struct Inputs {
  Matrix x;
  Vector w;
};

Inputs concat_inputs(const memory::MemoryState& state, const Matrix& frame) {
  Inputs in;
  const auto K = state.size();
  in.x.resize(K + frame.rows(), state.dim());
  in.x.topRows(K) = state.centers;
  in.x.bottomRows(frame.rows()) = frame;
  in.w.resize(K + frame.rows());
  in.w.head(K) = state.weights;
  in.w.tail(frame.rows()).setOnes();
  return in;
}

}  // namespace

std::pair<memory::MemoryState, LinearizedUpdate> forward_linearized(
    const memory::MemoryState& state, const Matrix& frame, const memory::MemoryConfig& cfg) {
  if (!state.initialized()) throw StateError("forward_linearized: memory is not initialized");
  if (frame.cols() != state.dim() || frame.rows() < 1)
    throw InvalidArgument("forward_linearized: frame shape mismatch");
  if (!frame.allFinite()) throw InvalidArgument("forward_linearized: non-finite frame");
  if (cfg.iterations < 1) throw InvalidArgument("K-means iterations must be positive");

  const Inputs in = concat_inputs(state, frame);
  LinearizedUpdate lin;
  lin.momentum = cfg.momentum;
  auto r = memory::detail::weighted_kmeans(in.x, in.w, state.centers, cfg.iterations, cfg.momentum,
                                           &lin.trace);

  const Eigen::Index K = state.size();
  const Eigen::Index n = in.x.rows();
  lin.X = in.x.cast<double>();
  lin.W = in.w.cast<double>();
  lin.A = MatrixD::Zero(K, n);
  lin.A.leftCols(K).setIdentity();

  // Each iteration recomputes every non-empty center from the same X, so a
  // non-retained row is replaced outright; retained rows keep the old row.
  for (std::size_t it = 0; it < lin.trace.assignments.size(); ++it) {
    const auto& a = lin.trace.assignments[it];
    const auto& retained = lin.trace.retained[it];
    VectorD denom = VectorD::Zero(K);
    for (Eigen::Index i = 0; i < n; ++i) denom[a[i]] += cfg.momentum ? lin.W[i] : 1.0;
    for (Eigen::Index k = 0; k < K; ++k)
      if (!retained[k]) lin.A.row(k).setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const int k = a[i];
      if (retained[k]) continue;
      lin.A(k, i) += (cfg.momentum ? lin.W[i] : 1.0) / denom[k];
    }
  }

  memory::MemoryState out;
  out.centers = std::move(r.centers);
  out.weights = std::move(r.weights);
  out.frames_seen = state.frames_seen + 1;
  return {std::move(out), std::move(lin)};
}

MatrixD memory_vjp(const LinearizedUpdate& lin, const MatrixD& cotangent_on_centers) {
  if (cotangent_on_centers.rows() != lin.A.rows() || cotangent_on_centers.cols() != lin.X.cols())
    throw InvalidArgument("memory_vjp: cotangent must have shape (K, D)");
  return lin.A.transpose() * cotangent_on_centers;
}

MatrixD replay_assignments(const LinearizedUpdate& lin, const MatrixD& x) {
  const Eigen::Index K = lin.A.rows();
  const Eigen::Index n = x.rows();
  if (n != lin.X.rows() || x.cols() != lin.X.cols())
    throw InvalidArgument("replay_assignments: input shape differs from the linearized update");
  MatrixD centers = x.topRows(K);
  for (std::size_t it = 0; it < lin.trace.assignments.size(); ++it) {
    const auto& a = lin.trace.assignments[it];
    const auto& retained = lin.trace.retained[it];
    MatrixD sums = MatrixD::Zero(K, x.cols());
    VectorD denom = VectorD::Zero(K);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double wi = lin.momentum ? lin.W[i] : 1.0;
      sums.row(a[i]) += wi * x.row(i);
      denom[a[i]] += wi;
    }
    for (Eigen::Index k = 0; k < K; ++k)
      if (!retained[k]) centers.row(k) = sums.row(k) / denom[k];
  }
  return centers;
}

GradCheckReport finite_diff_check(const memory::MemoryState& state, const Matrix& frame,
                                  const memory::MemoryConfig& cfg, double epsilon, int trials,
                                  std::uint64_t seed) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon))
    throw InvalidArgument("finite_diff_check: epsilon must be positive");
  if (trials < 1) throw InvalidArgument("finite_diff_check: need at least one trial");

  const auto [out, lin] = forward_linearized(state, frame, cfg);
  (void)out;
  const Eigen::Index K = lin.A.rows();
  const Eigen::Index n = lin.X.rows();
  const Eigen::Index D = lin.X.cols();

  Rng rng(seed);
  GradCheckReport report;
  for (int t = 0; t < trials; ++t) {
    const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    const auto d = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(D)));
    MatrixD cot(K, D);
    for (Eigen::Index r = 0; r < K; ++r)
      for (Eigen::Index c = 0; c < D; ++c) cot(r, c) = rng.normal();

    // Would this perturbation change any assignment of the real forward pass?
    bool flipped = false;
    for (double sign : {1.0, -1.0}) {
      memory::MemoryState s = state;
      Matrix f = frame;
      const float v = static_cast<float>(lin.X(i, d) + sign * epsilon);
      if (i < K) s.centers(i, d) = v;
      else f(i - K, d) = v;
      const auto [o, l] = forward_linearized(s, f, cfg);
      (void)o;
      if (l.trace.assignments != lin.trace.assignments || l.trace.retained != lin.trace.retained) {
        flipped = true;
        break;
      }
    }
    if (flipped) {
      ++report.flipped_assignments;
      continue;
    }

    MatrixD xp = lin.X, xm = lin.X;
    xp(i, d) += epsilon;
    xm(i, d) -= epsilon;
    const double fp = (cot.array() * replay_assignments(lin, xp).array()).sum();
    const double fm = (cot.array() * replay_assignments(lin, xm).array()).sum();
    const double numeric = (fp - fm) / (2.0 * epsilon);
    const double analytic = memory_vjp(lin, cot)(i, d);

    // Floor keeps round-off on a zero derivative from reading as 100% error.
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    const double err = std::abs(numeric - analytic) / scale;
    report.max_rel_error = std::max(report.max_rel_error, err);
    ++report.trials_used;
  }
  if (report.trials_used == 0)
    throw DegenerateError("finite_diff_check: every trial flipped an assignment (" +
                          std::to_string(trials) + " trials)");
  return report;
}

GradInstance random_instance(std::uint64_t seed, int max_k) {
  if (max_k < 1) throw InvalidArgument("random_instance: max_k must be positive");
  Rng rng(seed);
  const int K = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_k)));
  const int n_f = 1 + static_cast<int>(rng.below(8));
  const int D = 1 + static_cast<int>(rng.below(4));
  GradInstance g;
  g.cfg.memory_size = K;
  g.cfg.iterations = 1 + static_cast<int>(rng.below(3));
  g.state.centers.resize(K, D);
  g.state.weights.resize(K);
  for (int k = 0; k < K; ++k) {
    for (int d = 0; d < D; ++d) g.state.centers(k, d) = static_cast<float>(rng.normal());
    g.state.weights[k] = static_cast<float>(1 + rng.below(20));
  }
  g.state.frames_seen = 1;
  g.frame.resize(n_f, D);
  for (int i = 0; i < n_f; ++i)
    for (int d = 0; d < D; ++d) g.frame(i, d) = static_cast<float>(rng.normal());
  return g;
}

}  // namespace streamcap::grad
