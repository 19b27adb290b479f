#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "streamcap/grad.hpp"

namespace streamcap::grad {
namespace {

using memory::MemoryConfig;
using memory::MemoryState;

struct Hand {
  MemoryState state;
  Matrix frame;
  MemoryConfig cfg;
};

Hand hand_instance() {
  Hand h;
  h.state.centers = (Matrix(2, 1) << 0, 10).finished();
  h.state.weights = Vector::Ones(2);
  h.state.frames_seen = 2;
  h.frame = (Matrix(2, 1) << 2, 12).finished();
  h.cfg.memory_size = 2;
  h.cfg.iterations = 1;
  return h;
}

MatrixD random_d(Rng& rng, int r, int c) {
  MatrixD m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

TEST(ForwardLinearized, HandInstanceMap) {
  const auto h = hand_instance();
  const auto [state, lin] = forward_linearized(h.state, h.frame, h.cfg);
  MatrixD A(2, 4);
  A << .5, 0, .5, 0, 0, .5, 0, .5;
  EXPECT_TRUE(lin.A.isApprox(A));
  const MatrixD ax = lin.A * lin.X;
  EXPECT_DOUBLE_EQ(ax(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(ax(1, 0), 11.0);
  EXPECT_EQ(state.centers(0, 0), 1.0f);
  EXPECT_EQ(state.centers(1, 0), 11.0f);
}

TEST(ForwardLinearized, UniformRowsWhenTokensEqualCenters) {
  MemoryState s;
  s.centers = (Matrix(2, 1) << 0, 5).finished();
  s.weights = Vector::Ones(2);
  s.frames_seen = 1;
  MemoryConfig cfg;
  cfg.memory_size = 2;
  cfg.iterations = 1;
  const Matrix f = (Matrix(3, 1) << 5, 0, 5).finished();
  const auto lin = forward_linearized(s, f, cfg).second;
  MatrixD A(2, 5);
  A << .5, 0, 0, .5, 0, 0, 1. / 3, 1. / 3, 0, 1. / 3;
  EXPECT_TRUE(lin.A.isApprox(A, 1e-12));
}

TEST(ForwardLinearized, MatchesUpdateAndRowsSumToOne) {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = random_instance(seed);
    memory::UpdateStats stats;
    const auto plain = memory::update_memory(inst.state, inst.frame, inst.cfg, &stats);
    const auto [state, lin] = forward_linearized(inst.state, inst.frame, inst.cfg);
    EXPECT_EQ(state.centers, plain.centers);
    EXPECT_EQ(state.weights, plain.weights);
    const MatrixD ax = lin.A * lin.X;
    for (int k = 0; k < ax.rows(); ++k)
      for (int j = 0; j < ax.cols(); ++j)
        EXPECT_NEAR(ax(k, j), state.centers(k, j), 1e-5 * std::max(1.0, std::abs(ax(k, j))));
    EXPECT_TRUE(replay_assignments(lin, lin.X).isApprox(ax, 1e-9) || ax.norm() < 1e-12);
    EXPECT_TRUE((lin.A.array() >= 0.0).all());
    if (stats.empty_cluster_fallbacks == 0) {
      ++checked;
      for (int k = 0; k < lin.A.rows(); ++k) EXPECT_NEAR(lin.A.row(k).sum(), 1.0, 1e-12);
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(ForwardLinearized, CentersInsideConvexHull) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = random_instance(seed + 1000);
    const auto [state, lin] = forward_linearized(inst.state, inst.frame, inst.cfg);
    for (int j = 0; j < lin.X.cols(); ++j) {
      const double lo = lin.X.col(j).minCoeff(), hi = lin.X.col(j).maxCoeff();
      for (int k = 0; k < state.size(); ++k) {
        EXPECT_GE(state.centers(k, j), lo - 1e-5);
        EXPECT_LE(state.centers(k, j), hi + 1e-5);
      }
    }
  }
}

TEST(MemoryVjp, HandCotangent) {
  const auto h = hand_instance();
  const auto lin = forward_linearized(h.state, h.frame, h.cfg).second;
  const MatrixD g = memory_vjp(lin, (MatrixD(2, 1) << 1, 0).finished());
  EXPECT_TRUE(g.isApprox((MatrixD(4, 1) << .5, 0, .5, 0).finished()));
  EXPECT_TRUE(memory_vjp(lin, MatrixD::Zero(2, 1)).isZero());
  EXPECT_THROW(memory_vjp(lin, MatrixD::Zero(3, 1)), InvalidArgument);
}

TEST(MemoryVjp, LinearAndTransposeConsistent) {
  Rng rng(21);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = random_instance(seed + 2000);
    const auto lin = forward_linearized(inst.state, inst.frame, inst.cfg).second;
    const int K = static_cast<int>(lin.A.rows()), n = static_cast<int>(lin.A.cols());
    const int D = static_cast<int>(lin.X.cols());
    const MatrixD u = random_d(rng, n, D), v = random_d(rng, K, D), v2 = random_d(rng, K, D);
    const double lhs = ((lin.A * u).array() * v.array()).sum();
    const double rhs = (u.array() * memory_vjp(lin, v).array()).sum();
    EXPECT_NEAR(lhs, rhs, 1e-6 * std::max(1.0, std::abs(lhs)));
    const MatrixD sum = memory_vjp(lin, 2.0 * v + v2);
    EXPECT_TRUE(sum.isApprox(2.0 * memory_vjp(lin, v) + memory_vjp(lin, v2), 1e-9) || sum.norm() < 1e-12);
  }
}

TEST(FiniteDiff, HandInstance) {
  const auto h = hand_instance();
  const auto r = finite_diff_check(h.state, h.frame, h.cfg, 1e-4, 20, 1);
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_EQ(r.flipped_assignments, 0);
  EXPECT_EQ(r.trials_used, 20);
}

TEST(FiniteDiff, RejectsNonPositiveEpsilon) {
  const auto h = hand_instance();
  EXPECT_THROW(finite_diff_check(h.state, h.frame, h.cfg, 0.0, 5, 1), InvalidArgument);
  EXPECT_THROW(finite_diff_check(h.state, h.frame, h.cfg, -1e-3, 5, 1), InvalidArgument);
}

TEST(FiniteDiff, AllTrialsFlippedIsDegenerate) {
  // A token exactly halfway between two centers flips under any nudge.
  MemoryState s;
  s.centers = (Matrix(2, 1) << 0, 2).finished();
  s.weights = Vector::Ones(2);
  s.frames_seen = 1;
  MemoryConfig cfg;
  cfg.memory_size = 2;
  cfg.iterations = 1;
  const Matrix f = (Matrix(1, 1) << 1).finished();
  EXPECT_THROW(finite_diff_check(s, f, cfg, 1e-3, 10, 3), DegenerateError);
}

TEST(FiniteDiff, RandomInstancesPass) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = random_instance(seed);
    worst = std::max(worst, finite_diff_check(inst.state, inst.frame, inst.cfg, 1e-4, 10, seed).max_rel_error);
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(RandomInstance, RespectsBoundsAndIsDeterministic) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto a = random_instance(seed), b = random_instance(seed);
    EXPECT_EQ(a.state.centers, b.state.centers);
    EXPECT_EQ(a.frame, b.frame);
    EXPECT_LE(a.state.size(), 8);
    EXPECT_LE(a.frame.rows(), 8);
    EXPECT_LE(a.frame.cols(), 4);
    EXPECT_LE(a.cfg.iterations, 3);
  }
}

}  // namespace
}  // namespace streamcap::grad
