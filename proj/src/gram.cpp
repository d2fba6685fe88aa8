#include "tad/gram.hpp"

#include <cmath>
#include <vector>

#include <omp.h>

#include "tad/errors.hpp"

namespace tad {
namespace {

struct Prepared {
  int dims = 0;
  int tasks = 0;
  int components = 0;
  std::vector<double> variance;
  std::vector<Vector> inv_ls2;
  std::vector<Matrix> kappa;
  std::vector<Matrix> chol;
};

Prepared prepare(const KernelModel& model) {
  model.validate();
  Prepared p;
  p.dims = model.dims();
  p.tasks = model.tasks();
  p.components = model.size();
  for (const auto& c : model.components) {
    p.variance.push_back(c.scalar.signal_variance);
    p.inv_ls2.push_back(c.scalar.lengthscales.array().square().inverse().matrix());
    p.kappa.push_back(c.task.task_cov());
    p.chol.push_back(c.task.chol_factor);
  }
  return p;
}

void check_points(const PointSet& a, const PointSet& b, const Prepared& p) {
  if (a.rows() > 0 && a.cols() != p.dims) throw DimensionError("point set A has wrong dimension");
  if (b.rows() > 0 && b.cols() != p.dims) throw DimensionError("point set B has wrong dimension");
}

inline double component_value(const Prepared& p, int l, const PointSet& a, Eigen::Index i,
                              const PointSet& b, Eigen::Index j) {
  double r2 = 0.0;
  for (int d = 0; d < p.dims; ++d) {
    const double u = a(i, d) - b(j, d);
    r2 += u * u * p.inv_ls2[l][d];
  }
  return p.variance[l] * std::exp(-0.5 * r2);
}

inline void write_block(const Prepared& p, const PointSet& a, Eigen::Index i, const PointSet& b,
                        Eigen::Index j, Matrix& out) {
  const int e = p.tasks;
  auto block = out.block(i * e, j * e, e, e);
  block.setZero();
  for (int l = 0; l < p.components; ++l) block += component_value(p, l, a, i, b, j) * p.kappa[l];
}

// Adds the contribution of pair (i, j) to the point gradients.
inline void pair_point_grad(const Prepared& p, const PointSet& a, Eigen::Index i,
                            const PointSet& b, Eigen::Index j, const Matrix& w, double* grad_a,
                            double* grad_b) {
  const int e = p.tasks;
  const auto wblock = w.block(i * e, j * e, e, e);
  for (int l = 0; l < p.components; ++l) {
    const double s = wblock.cwiseProduct(p.kappa[l]).sum();
    if (s == 0.0) continue;
    const double f = component_value(p, l, a, i, b, j) * s;
    for (int d = 0; d < p.dims; ++d) {
      const double g = f * (a(i, d) - b(j, d)) * p.inv_ls2[l][d];
      if (grad_a) grad_a[d] -= g;
      if (grad_b) grad_b[d] += g;
    }
  }
}

// Per-component accumulator layout: [variance, lengthscales (D), M (E x E, column-major)].
inline int accumulator_stride(const Prepared& p) { return 1 + p.dims + p.tasks * p.tasks; }

inline void pair_hyper_grad(const Prepared& p, const PointSet& x, Eigen::Index i, Eigen::Index j,
                            const Matrix& w, bool mirrored, double* acc) {
  const int e = p.tasks;
  const int stride = accumulator_stride(p);
  const auto wij = w.block(i * e, j * e, e, e);
  const auto wji = w.block(j * e, i * e, e, e);
  for (int l = 0; l < p.components; ++l) {
    double* slot = acc + l * stride;
    const double k = component_value(p, l, x, i, x, j);
    Eigen::Map<Matrix> m(slot + 1 + p.dims, e, e);
    double s = wij.cwiseProduct(p.kappa[l]).sum();
    m += k * wij;
    if (mirrored) {
      s += wji.cwiseProduct(p.kappa[l]).sum();
      m += k * wji;
    }
    const double ks = k * s;
    slot[0] += ks;
    for (int d = 0; d < p.dims; ++d) {
      const double u = x(i, d) - x(j, d);
      slot[1 + d] += ks * u * u * p.inv_ls2[l][d];
    }
  }
}

Vector pack_hyper_gradient(const Prepared& p, const std::vector<double>& acc) {
  const int e = p.tasks;
  const int stride = accumulator_stride(p);
  Vector g = Vector::Zero(KernelModel::parameter_count(p.dims, e, p.components));
  int k = e;
  for (int l = 0; l < p.components; ++l) {
    const double* slot = acc.data() + l * stride;
    g[k++] = slot[0];
    for (int d = 0; d < p.dims; ++d) g[k++] = slot[1 + d];
    Eigen::Map<const Matrix> m(slot + 1 + p.dims, e, e);
    const Matrix gl = (m + m.transpose()) * p.chol[l];
    for (int r = 0; r < e; ++r) {
      for (int c = 0; c <= r; ++c) g[k++] = (r == c) ? gl(r, r) * p.chol[l](r, r) : gl(r, c);
    }
  }
  return g;
}

void check_adjoint(const PointSet& a, const PointSet& b, const Prepared& p, const Matrix& w) {
  if (w.rows() != a.rows() * p.tasks || w.cols() != b.rows() * p.tasks) {
    throw DimensionError("adjoint shape does not match C(A, B)");
  }
}

}  // namespace

int kernel_threads() { return omp_get_max_threads(); }

namespace serial {

Matrix assemble_cross_cov(const PointSet& a, const PointSet& b, const KernelModel& model) {
  const Prepared p = prepare(model);
  check_points(a, b, p);
  Matrix out(a.rows() * p.tasks, b.rows() * p.tasks);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) write_block(p, a, i, b, j, out);
  }
  return out;
}

PointGradients cross_cov_pullback(const PointSet& a, const PointSet& b,
                                  const KernelModel& model, const Matrix& adjoint, bool need_a,
                                  bool need_b) {
  const Prepared p = prepare(model);
  check_points(a, b, p);
  check_adjoint(a, b, p, adjoint);
  // Row-major scratch so each point's gradient is contiguous.
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMatrix ga = RowMatrix::Zero(a.rows(), p.dims);
  RowMatrix gb = RowMatrix::Zero(b.rows(), p.dims);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      pair_point_grad(p, a, i, b, j, adjoint, need_a ? ga.row(i).data() : nullptr,
                      need_b ? gb.row(j).data() : nullptr);
    }
  }
  PointGradients out;
  if (need_a) out.wrt_a = ga;
  if (need_b) out.wrt_b = gb;
  return out;
}

Vector hyper_pullback(const PointSet& x, const KernelModel& model, const Matrix& adjoint) {
  const Prepared p = prepare(model);
  check_points(x, x, p);
  check_adjoint(x, x, p, adjoint);
  std::vector<double> acc(static_cast<size_t>(p.components * accumulator_stride(p)), 0.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.rows(); ++j) pair_hyper_grad(p, x, i, j, adjoint, false, acc.data());
  }
  return pack_hyper_gradient(p, acc);
}

}  // namespace serial

Matrix assemble_cross_cov(const PointSet& a, const PointSet& b, const KernelModel& model) {
  const Prepared p = prepare(model);
  check_points(a, b, p);
  Matrix out(a.rows() * p.tasks, b.rows() * p.tasks);
  const Eigen::Index na = a.rows();
  const Eigen::Index nb = b.rows();
#pragma omp parallel for schedule(static) if (na * nb > 256)
  for (Eigen::Index i = 0; i < na; ++i) {
    for (Eigen::Index j = 0; j < nb; ++j) write_block(p, a, i, b, j, out);
  }
  return out;
}

PointGradients cross_cov_pullback(const PointSet& a, const PointSet& b,
                                  const KernelModel& model, const Matrix& adjoint, bool need_a,
                                  bool need_b) {
  const Prepared p = prepare(model);
  check_points(a, b, p);
  check_adjoint(a, b, p, adjoint);
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Index na = a.rows();
  const Eigen::Index nb = b.rows();
  RowMatrix ga = RowMatrix::Zero(na, p.dims);
  // One slab of B-gradients per row of A, reduced afterwards in a fixed order
  // so the result does not depend on the thread count.
  RowMatrix partial_b = RowMatrix::Zero(need_b ? na : 0, nb * p.dims);
#pragma omp parallel for schedule(static) if (na * nb > 256)
  for (Eigen::Index i = 0; i < na; ++i) {
    for (Eigen::Index j = 0; j < nb; ++j) {
      pair_point_grad(p, a, i, b, j, adjoint, need_a ? ga.row(i).data() : nullptr,
                      need_b ? partial_b.row(i).data() + j * p.dims : nullptr);
    }
  }
  PointGradients out;
  if (need_a) out.wrt_a = ga;
  if (need_b) {
    RowMatrix gb = RowMatrix::Zero(nb, p.dims);
    for (Eigen::Index i = 0; i < na; ++i) {
      gb += Eigen::Map<const RowMatrix>(partial_b.row(i).data(), nb, p.dims);
    }
    out.wrt_b = gb;
  }
  return out;
}

Vector hyper_pullback(const PointSet& x, const KernelModel& model, const Matrix& adjoint) {
  const Prepared p = prepare(model);
  check_points(x, x, p);
  check_adjoint(x, x, p, adjoint);
  const Eigen::Index n = x.rows();
  const size_t width = static_cast<size_t>(p.components * accumulator_stride(p));
  std::vector<double> partial(static_cast<size_t>(n) * width, 0.0);
  // Lower triangle only; W symmetric means pair (i, j) and (j, i) share a term.
#pragma omp parallel for schedule(dynamic, 16) if (n > 32)
  for (Eigen::Index i = 0; i < n; ++i) {
    double* acc = partial.data() + static_cast<size_t>(i) * width;
    for (Eigen::Index j = 0; j < i; ++j) pair_hyper_grad(p, x, i, j, adjoint, true, acc);
    pair_hyper_grad(p, x, i, i, adjoint, false, acc);
  }
  std::vector<double> acc(width, 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* row = partial.data() + static_cast<size_t>(i) * width;
    for (size_t k = 0; k < width; ++k) acc[k] += row[k];
  }
  return pack_hyper_gradient(p, acc);
}

}  // namespace tad
