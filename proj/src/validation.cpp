#include "tad/validation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tad/errors.hpp"

namespace tad {
namespace {

constexpr double kEps = 1e-16;
constexpr int kMaxTerms = 10000;

// Series for P(a, x), valid for x < a + 1.
double gamma_series(double a, double x) {
  double sum = 1.0 / a;
  double term = sum;
  double ap = a;
  for (int n = 0; n < kMaxTerms; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Modified Lentz continued fraction for Q(a, x), valid for x >= a + 1.
double gamma_continued_fraction(double a, double x) {
  const double tiny = std::numeric_limits<double>::min() / kEps;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxTerms; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

void check_args(double a, double x) {
  if (!(a > 0.0)) throw ContractViolation("incomplete gamma needs a > 0");
  if (!(x >= 0.0)) throw ContractViolation("incomplete gamma needs x >= 0");
}

}  // namespace

std::string to_string(ValidationKind kind) {
  return kind == ValidationKind::batch_q ? "batch_Q" : "training_S";
}

ValidationKind validation_kind_from_string(const std::string& s) {
  if (s == "batch_Q") return ValidationKind::batch_q;
  if (s == "training_S") return ValidationKind::training_s;
  throw ContractViolation("unknown validation kind '" + s + "'");
}

double regularized_gamma_p(double a, double x) {
  check_args(a, x);
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return x < a + 1.0 ? gamma_series(a, x) : 1.0 - gamma_continued_fraction(a, x);
}

double regularized_gamma_q(double a, double x) {
  check_args(a, x);
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return x < a + 1.0 ? 1.0 - gamma_series(a, x) : gamma_continued_fraction(a, x);
}

double chi2_right_tail(double q, int dof) {
  if (dof < 1) throw ContractViolation("chi-squared needs dof >= 1");
  if (std::isnan(q) || q < 0.0) throw ContractViolation("chi-squared statistic must be >= 0");
  return std::clamp(regularized_gamma_q(0.5 * dof, 0.5 * q), 0.0, 1.0);
}

ValidationReport batch_validation(const NormalDist& pred, const Vector& observed) {
  if (observed.size() != pred.mean.size() || pred.cov.rows() != pred.mean.size()) {
    throw DimensionError("observed batch length differs from the predictive distribution");
  }
  if (observed.size() == 0) throw ContractViolation("batch validation needs observations");
  const SpdFactor f(pred.cov, "Q(2|1)");
  const Vector w = f.half_solve(observed - pred.mean);
  ValidationReport r;
  r.kind = ValidationKind::batch_q;
  r.statistic = w.squaredNorm();
  r.dof = static_cast<int>(observed.size());
  r.p_value = chi2_right_tail(r.statistic, r.dof);
  return r;
}

ValidationReport training_fit(const ConditionedGp& gp) {
  const int n = gp.data().size();
  const int e = gp.tasks();
  const int dof = n * e - e;
  if (dof < 1) throw ContractViolation("training fit needs at least two data points");
  ValidationReport r;
  r.kind = ValidationKind::training_s;
  r.statistic = std::max(gp.quadratic_form(), 0.0);
  r.dof = dof;
  r.p_value = chi2_right_tail(r.statistic, r.dof);
  return r;
}

ValidationReport training_fit(const KernelModel& model, const Dataset& data) {
  return training_fit(ConditionedGp(model, data));
}

}  // namespace tad
