#include "tad/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tad/errors.hpp"

namespace tad {

void ScalarKernelParams::validate() const {
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance)) {
    throw ContractViolation("signal variance must be positive and finite");
  }
  if (lengthscales.size() == 0) throw DimensionError("kernel has no lengthscales");
  for (Eigen::Index d = 0; d < lengthscales.size(); ++d) {
    if (!(lengthscales[d] > 0.0) || !std::isfinite(lengthscales[d])) {
      throw ContractViolation("lengthscale " + std::to_string(d) + " must be positive");
    }
  }
}

void TaskMatrixParams::validate() const {
  if (chol_factor.rows() != chol_factor.cols() || chol_factor.rows() == 0) {
    throw DimensionError("task Cholesky factor must be square and non-empty");
  }
  for (Eigen::Index i = 0; i < chol_factor.rows(); ++i) {
    if (!(chol_factor(i, i) > 0.0)) {
      throw ContractViolation("task Cholesky factor needs a strictly positive diagonal");
    }
    for (Eigen::Index j = i + 1; j < chol_factor.cols(); ++j) {
      if (chol_factor(i, j) != 0.0) {
        throw ContractViolation("task Cholesky factor must be lower triangular");
      }
    }
  }
}

TaskMatrixParams TaskMatrixParams::scaled_identity(int tasks, double variance) {
  return {std::sqrt(variance) * Matrix::Identity(tasks, tasks)};
}

void KernelModel::validate() const {
  if (components.empty()) throw ContractViolation("kernel model needs at least one component");
  if (task_means.size() == 0) throw DimensionError("kernel model has no tasks");
  const int d = dims();
  for (const auto& c : components) {
    c.scalar.validate();
    c.task.validate();
    if (c.scalar.dims() != d) throw DimensionError("components disagree on control dimension");
    if (c.task.tasks() != tasks()) throw DimensionError("components disagree on task count");
  }
}

Matrix KernelModel::prior_block() const {
  Matrix block = Matrix::Zero(tasks(), tasks());
  for (const auto& c : components) block += c.scalar.signal_variance * c.task.task_cov();
  return block;
}

int KernelModel::component_parameter_count(int dims, int tasks) {
  return 1 + dims + tasks * (tasks + 1) / 2;
}

int KernelModel::parameter_count(int dims, int tasks, int components) {
  return tasks + components * component_parameter_count(dims, tasks);
}

Vector KernelModel::pack() const {
  const int d = dims();
  const int e = tasks();
  Vector p(parameter_count(d, e, size()));
  int k = 0;
  for (int i = 0; i < e; ++i) p[k++] = task_means[i];
  for (const auto& c : components) {
    p[k++] = std::log(c.scalar.signal_variance);
    for (int j = 0; j < d; ++j) p[k++] = std::log(c.scalar.lengthscales[j]);
    for (int i = 0; i < e; ++i) {
      for (int j = 0; j <= i; ++j) {
        p[k++] = (i == j) ? std::log(c.task.chol_factor(i, i)) : c.task.chol_factor(i, j);
      }
    }
  }
  return p;
}

KernelModel KernelModel::unpack(const Vector& params, int dims, int tasks, int components) {
  if (params.size() != parameter_count(dims, tasks, components)) {
    throw DimensionError("packed parameter vector has the wrong length");
  }
  KernelModel m;
  m.task_means = params.head(tasks);
  int k = tasks;
  m.components.resize(components);
  for (auto& c : m.components) {
    c.scalar.signal_variance = std::exp(params[k++]);
    c.scalar.lengthscales.resize(dims);
    for (int j = 0; j < dims; ++j) c.scalar.lengthscales[j] = std::exp(params[k++]);
    c.task.chol_factor = Matrix::Zero(tasks, tasks);
    for (int i = 0; i < tasks; ++i) {
      for (int j = 0; j <= i; ++j) {
        c.task.chol_factor(i, j) = (i == j) ? std::exp(params[k]) : params[k];
        ++k;
      }
    }
  }
  return m;
}

KernelModel KernelModel::isotropic(int dims, int tasks, int components, double lengthscale,
                                   double signal_variance, const Vector& task_means) {
  KernelModel m;
  m.task_means = task_means;
  for (int l = 0; l < components; ++l) {
    KernelComponent c;
    c.scalar.signal_variance = signal_variance;
    // Spread the initial lengthscales so the components are distinguishable.
    c.scalar.lengthscales = Vector::Constant(dims, lengthscale / (1.0 + l));
    c.task = TaskMatrixParams::scaled_identity(tasks, 1.0 / components);
    if (tasks > 1) c.task.chol_factor(1, 0) = (l % 2 == 0 ? 0.1 : -0.1) / std::sqrt(components);
    m.components.push_back(std::move(c));
  }
  m.validate();
  return m;
}

double eval_scalar_kernel(const Point& a, const Point& b, const ScalarKernelParams& params) {
  if (a.size() != b.size() || a.size() != params.lengthscales.size()) {
    throw DimensionError("scalar kernel: point dimension " + std::to_string(a.size()) + "/" +
                         std::to_string(b.size()) + " vs " +
                         std::to_string(params.lengthscales.size()) + " lengthscales");
  }
  double r2 = 0.0;
  for (Eigen::Index d = 0; d < a.size(); ++d) {
    const double u = (a[d] - b[d]) / params.lengthscales[d];
    r2 += u * u;
  }
  return params.signal_variance * std::exp(-0.5 * r2);
}

KernelModel with_extra_component(const KernelModel& model) {
  model.validate();
  KernelModel out = model;
  Vector mean_ls = Vector::Zero(model.dims());
  double mean_var = 0.0;
  Matrix mean_kappa = Matrix::Zero(model.tasks(), model.tasks());
  for (const auto& c : model.components) {
    mean_ls += c.scalar.lengthscales;
    mean_var += c.scalar.signal_variance;
    mean_kappa += c.scalar.signal_variance * c.task.task_cov();
  }
  mean_ls /= model.size();
  mean_var /= model.size();
  KernelComponent extra;
  extra.scalar.signal_variance = mean_var;
  extra.scalar.lengthscales = 0.5 * mean_ls;
  const double scale = std::max(mean_kappa.diagonal().mean() / mean_var / model.size(), 1e-6);
  extra.task = TaskMatrixParams::scaled_identity(model.tasks(), 0.25 * scale);
  out.components.push_back(std::move(extra));
  return out;
}

}  // namespace tad
