#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "streamcap/memory.hpp"

namespace streamcap::grad {

// The memory update as a linear map of its input, centers = A * X, with A
// computed from the (non-differentiable) assignments and held constant.
struct LinearizedUpdate {
  MatrixD A;  // (K, K + N_f)
  MatrixD X;  // (K + N_f, D): old centers stacked over the incoming tokens
  VectorD W;  // per-token weights used by the update
  bool momentum = true;
  memory::detail::KMeansTrace trace;
};

// Same result as memory::update_memory, plus the composed map A. Empty
// clusters keep their previous row of A, starting from [I_K | 0].
std::pair<memory::MemoryState, LinearizedUpdate> forward_linearized(
    const memory::MemoryState& state, const Matrix& frame, const memory::MemoryConfig& cfg);

// Vector-Jacobian product: cotangent on X = A^T * cotangent on centers.
MatrixD memory_vjp(const LinearizedUpdate& lin, const MatrixD& cotangent_on_centers);

// Recomputes the centers from X by replaying the recorded assignments
// (weighted means, empty-cluster carry-over) without forming A.
MatrixD replay_assignments(const LinearizedUpdate& lin, const MatrixD& x);

struct GradCheckReport {
  double max_rel_error = 0.0;
  int flipped_assignments = 0;  // trials discarded because a perturbation changed an assignment
  int trials_used = 0;
};

// Central finite differences of <cot, centers(X)> along random single-entry
// perturbations of X, with assignments frozen, against memory_vjp.
GradCheckReport finite_diff_check(const memory::MemoryState& state, const Matrix& frame,
                                  const memory::MemoryConfig& cfg, double epsilon, int trials,
                                  std::uint64_t seed);

struct GradInstance {
  memory::MemoryState state;
  Matrix frame;
  memory::MemoryConfig cfg;
};

// Small random instance: K in [1, max_k], N_f in [1, 8], D in [1, 4], tau in
// [1, 3], gaussian centers and tokens, integer weights in [1, 20].
GradInstance random_instance(std::uint64_t seed, int max_k = 8);

}  // namespace streamcap::grad
