#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tad/acquisition.hpp"
#include "tad/box.hpp"
#include "tad/gp.hpp"
#include "tad/oracle.hpp"

namespace tad {

// The two-component test response on [-3, 3]^2.
Vector eval_test_function(const Point& d);
Box test_function_domain();

using ResponseFn = std::function<Vector(const Point&)>;

// f(x) plus independent Gaussian noise per task, keyed on (seed, request).
class SimulatedOracle : public Oracle {
 public:
  SimulatedOracle(ResponseFn f, Vector noise_std, std::uint64_t seed);

  int tasks() const override { return static_cast<int>(noise_std_.size()); }
  Vector noise_var() const override { return noise_std_.array().square(); }
  Vector observe(const PointSet& points, std::uint64_t request) override;

 private:
  ResponseFn f_;
  Vector noise_std_;
  std::uint64_t seed_;
};

// One-shot version on the test function.
Vector simulated_oracle(const PointSet& points, const Vector& noise_std, std::uint64_t seed);

// f(x) | (g1, g2) by dense conditioning of the assembled joint normal.
NormalDist joint_conditioning_oracle(const KernelModel& model, const Dataset& data,
                                     const PointSet& query, const ObservedBatch& batch);

// g2 | g1 by dense conditioning.
NormalDist joint_data_predictive(const KernelModel& model, const Dataset& data,
                                 const PointSet& batch_points, const Vector& batch_noise_var);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long samples = 0;
};

// Average of the predictive log-likelihood of f_T over g2 ~ g2|g1.
McEstimate mc_expectation_oracle(const AcquisitionInputs& in, long n_samples, std::uint64_t seed);

struct RedundancyRow {
  double eps = 0.0;
  double discrepancy = 0.0;     // |Q(f|1+2)(eps) - Q(f|1+2')|_F
  double reference_norm = 0.0;  // |Q(f|1+2')|_F
};

// Batch = fresh points plus exact copies of data points (by index); the data
// must be noise-free and Sigma_2 = eps I. Q(f|1+2)(eps) comes from the
// update form; the reference conditions on the fresh points alone, noise-free.
std::vector<RedundancyRow> redundancy_limit_oracle(const KernelModel& model, const Dataset& data,
                                                   const Point& x, const PointSet& fresh,
                                                   const std::vector<int>& duplicates,
                                                   const std::vector<double>& eps_ladder);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// One-sample Kolmogorov-Smirnov test against U(0, 1).
KsResult ks_uniform_test(std::vector<double> samples);

struct GridMax {
  Point argmax;
  double value = 0.0;
};

GridMax grid_search(const std::function<double(const Point&)>& f, const Box& box, int per_dim);

}  // namespace tad
