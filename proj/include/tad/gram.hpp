#pragma once

// Data-parallel kernels over point pairs. Production code calls the OpenMP
// versions in namespace tad; the serial versions in tad::serial are kept as
// the reference the tests and the benchmark compare against.

#include "tad/kernel.hpp"
#include "tad/types.hpp"

namespace tad {

// Gradients of sum(W .* C(A, B)) with respect to the coordinates of A and B.
struct PointGradients {
  Matrix wrt_a;  // |A| x D (empty unless requested)
  Matrix wrt_b;  // |B| x D (empty unless requested)
};

// Block (a, b) = sum_l K_l(A_a, B_b) kappa_l; shape (|A| E) x (|B| E).
Matrix assemble_cross_cov(const PointSet& a, const PointSet& b, const KernelModel& model);

PointGradients cross_cov_pullback(const PointSet& a, const PointSet& b,
                                  const KernelModel& model, const Matrix& adjoint,
                                  bool need_a, bool need_b);

// Gradient of sum(W .* C(X, X)) with respect to the packed hyperparameters
// (task-mean entries are zero). W must be symmetric.
Vector hyper_pullback(const PointSet& x, const KernelModel& model, const Matrix& adjoint);

namespace serial {

Matrix assemble_cross_cov(const PointSet& a, const PointSet& b, const KernelModel& model);

PointGradients cross_cov_pullback(const PointSet& a, const PointSet& b,
                                  const KernelModel& model, const Matrix& adjoint,
                                  bool need_a, bool need_b);

Vector hyper_pullback(const PointSet& x, const KernelModel& model, const Matrix& adjoint);

}  // namespace serial

// Number of OpenMP threads the parallel kernels will use.
int kernel_threads();

}  // namespace tad
