#pragma once

// Generators and brute-force references shared by the test binaries. None of
// the references call into the library's conditioning or factorization code.

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "tad/gp.hpp"
#include "tad/kernel.hpp"

namespace tadtest {

using tad::Dataset;
using tad::KernelModel;
using tad::Matrix;
using tad::PointSet;
using tad::Vector;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }

  Vector normal_vector(Eigen::Index n) {
    Vector v(n);
    for (auto& x : v) x = normal();
    return v;
  }

  PointSet points(Eigen::Index n, int dims, double lo = -2.0, double hi = 2.0) {
    PointSet p(n, dims);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int d = 0; d < dims; ++d) p(i, d) = uniform(lo, hi);
    }
    return p;
  }

  KernelModel model(int dims, int tasks, int components) {
    KernelModel m;
    m.task_means = normal_vector(tasks);
    for (int l = 0; l < components; ++l) {
      tad::KernelComponent c;
      c.scalar.signal_variance = uniform(0.5, 2.0);
      c.scalar.lengthscales.resize(dims);
      for (int d = 0; d < dims; ++d) c.scalar.lengthscales[d] = uniform(0.6, 2.0);
      c.task.chol_factor = Matrix::Zero(tasks, tasks);
      for (int i = 0; i < tasks; ++i) {
        c.task.chol_factor(i, i) = uniform(0.5, 1.5);
        for (int j = 0; j < i; ++j) c.task.chol_factor(i, j) = uniform(-0.5, 0.5);
      }
      m.components.push_back(c);
    }
    return m;
  }

  Dataset dataset(const KernelModel& m, int n, double noise_lo = 0.01, double noise_hi = 0.1) {
    Dataset d;
    d.points = points(n, m.dims());
    d.observations = normal_vector(n * m.tasks());
    d.noise_var.resize(n * m.tasks());
    for (auto& s : d.noise_var) s = uniform(noise_lo, noise_hi);
    return d;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Element-wise Gram oracle: entry (a E + i, b E + j) = sum_l k_l(x_a, y_b) kappa_l(i, j).
inline Matrix naive_gram(const PointSet& a, const PointSet& b, const KernelModel& m) {
  const int e = m.tasks();
  Matrix out = Matrix::Zero(a.rows() * e, b.rows() * e);
  for (Eigen::Index p = 0; p < a.rows(); ++p) {
    for (Eigen::Index q = 0; q < b.rows(); ++q) {
      for (int i = 0; i < e; ++i) {
        for (int j = 0; j < e; ++j) {
          double v = 0.0;
          for (const auto& c : m.components) {
            double r2 = 0.0;
            for (Eigen::Index d = 0; d < a.cols(); ++d) {
              r2 += std::pow((a(p, d) - b(q, d)) / c.scalar.lengthscales[d], 2);
            }
            double kappa = 0.0;
            for (int k = 0; k < e; ++k) kappa += c.task.chol_factor(i, k) * c.task.chol_factor(j, k);
            v += c.scalar.signal_variance * std::exp(-r2 / 2.0) * kappa;
          }
          out(p * e + i, q * e + j) = v;
        }
      }
    }
  }
  return out;
}

inline Vector naive_mean(const KernelModel& m, Eigen::Index points) {
  Vector v(points * m.tasks());
  for (Eigen::Index p = 0; p < points; ++p) v.segment(p * m.tasks(), m.tasks()) = m.task_means;
  return v;
}

// Gaussian log-density with explicit determinant and LU solve.
inline double dense_log_pdf(const Vector& x, const Vector& mean, const Matrix& cov) {
  const Eigen::FullPivLU<Matrix> lu(cov);
  const Vector r = x - mean;
  return -0.5 * x.size() * std::log(2.0 * M_PI) - 0.5 * std::log(lu.determinant()) -
         0.5 * r.dot(lu.solve(r));
}

struct Conditional {
  Vector mean;
  Matrix cov;
};

// Conditions the query block of a joint normal on the observed block.
inline Conditional condition(const Vector& mq, const Vector& mo, const Matrix& kqq,
                             const Matrix& kqo, const Matrix& koo, const Vector& obs) {
  const Eigen::FullPivLU<Matrix> lu(koo);
  return {mq + kqo * lu.solve(Vector(obs - mo)), kqq - kqo * lu.solve(Matrix(kqo.transpose()))};
}

// f(query) | observations at `points` with diagonal noise.
inline Conditional condition_on(const KernelModel& m, const PointSet& query, const PointSet& points,
                                const Vector& obs, const Vector& noise) {
  Matrix koo = naive_gram(points, points, m);
  koo.diagonal() += noise;
  return condition(naive_mean(m, query.rows()), naive_mean(m, points.rows()),
                   naive_gram(query, query, m), naive_gram(query, points, m), koo, obs);
}

inline PointSet vstack(const PointSet& a, const PointSet& b) {
  PointSet out(a.rows() + b.rows(), a.rows() ? a.cols() : b.cols());
  if (a.rows()) out.topRows(a.rows()) = a;
  if (b.rows()) out.bottomRows(b.rows()) = b;
  return out;
}

inline Vector vcat(const Vector& a, const Vector& b) {
  Vector out(a.size() + b.size());
  out << a, b;
  return out;
}

inline double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace tadtest
