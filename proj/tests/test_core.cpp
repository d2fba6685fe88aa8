#include <cmath>

#include <Eigen/Eigenvalues>

#include "doctest.h"
#include "support.hpp"
#include "tad/errors.hpp"
#include "tad/gp.hpp"
#include "tad/gram.hpp"
#include "tad/kernel.hpp"
#include "tad/optim.hpp"

using namespace tad;
using tadtest::Gen;

namespace {

KernelModel unit_model(int dims, int tasks, double variance = 1.0, double lengthscale = 1.0) {
  KernelModel m;
  m.task_means = Vector::Zero(tasks);
  KernelComponent c;
  c.scalar.signal_variance = variance;
  c.scalar.lengthscales = Vector::Constant(dims, lengthscale);
  c.task.chol_factor = Matrix::Identity(tasks, tasks);
  m.components.push_back(c);
  return m;
}

Dataset make_data(const PointSet& x, const Vector& g, const Vector& noise) {
  Dataset d;
  d.points = x;
  d.observations = g;
  d.noise_var = noise;
  return d;
}

}  // namespace

TEST_SUITE("kernel") {
  TEST_CASE("scalar kernel closed forms") {
    ScalarKernelParams p{1.0, Vector::Ones(2)};
    CHECK(eval_scalar_kernel(Vector{{0.3, -0.2}}, Vector{{0.3, -0.2}}, p) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(eval_scalar_kernel(Vector{{0.0, 0.0}}, Vector{{std::sqrt(2.0), 0.0}}, p) ==
          doctest::Approx(0.36787944117144233).epsilon(1e-14));
    ScalarKernelParams q{2.0, Vector{{1.0, 2.0}}};
    CHECK(std::fabs(eval_scalar_kernel(Vector{{0.0, 0.0}}, Vector{{1.0, 1.0}}, q) - 1.0705228570379805) < 1e-14);
  }

  TEST_CASE("scalar kernel rejects dimension mismatch") {
    ScalarKernelParams p{1.0, Vector::Ones(2)};
    CHECK_THROWS_AS(eval_scalar_kernel(Vector::Zero(3), Vector::Zero(2), p), DimensionError);
    CHECK_THROWS_AS(eval_scalar_kernel(Vector::Zero(3), Vector::Zero(3), p), DimensionError);
  }

  TEST_CASE("scalar kernel is symmetric and peaks at the signal variance") {
    Gen g(11);
    for (int t = 0; t < 100; ++t) {
      const int d = g.integer(1, 4);
      ScalarKernelParams p{g.uniform(0.1, 3.0), (g.normal_vector(d).array().abs() + 0.2).matrix()};
      const Vector a = g.normal_vector(d);
      const Vector b = g.normal_vector(d);
      CHECK(eval_scalar_kernel(a, b, p) == eval_scalar_kernel(b, a, p));
      CHECK(eval_scalar_kernel(a, b, p) <= p.signal_variance);
      CHECK(eval_scalar_kernel(a, a, p) == p.signal_variance);
    }
  }

  TEST_CASE("pack and unpack are inverse") {
    Gen g(12);
    for (int t = 0; t < 50; ++t) {
      const KernelModel m = g.model(g.integer(1, 3), g.integer(1, 3), g.integer(1, 3));
      const Vector p = m.pack();
      CHECK(p.size() == KernelModel::parameter_count(m.dims(), m.tasks(), m.size()));
      const KernelModel back = KernelModel::unpack(p, m.dims(), m.tasks(), m.size());
      CHECK((back.pack() - p).cwiseAbs().maxCoeff() < 1e-14);
      for (int l = 0; l < m.size(); ++l) {
        CHECK((back.components[l].task.task_cov() - m.components[l].task.task_cov()).norm() < 1e-13);
      }
    }
  }

  TEST_CASE("model validation") {
    KernelModel m = unit_model(2, 2);
    CHECK_NOTHROW(m.validate());
    m.components[0].task.chol_factor(0, 1) = 0.3;
    CHECK_THROWS_AS(m.validate(), ContractViolation);
    m = unit_model(2, 2);
    m.components[0].scalar.lengthscales[1] = -1.0;
    CHECK_THROWS_AS(m.validate(), ContractViolation);
    m = unit_model(2, 2);
    m.components.clear();
    CHECK_THROWS_AS(m.validate(), ContractViolation);
  }

  TEST_CASE("an extra component keeps the model well formed") {
    const KernelModel m = KernelModel::isotropic(2, 2, 2, 1.0, 1.0, Vector::Zero(2));
    const KernelModel bigger = with_extra_component(m);
    CHECK(bigger.size() == 3);
    CHECK_NOTHROW(bigger.validate());
  }
}

TEST_SUITE("gram") {
  TEST_CASE("identity task matrix decouples tasks") {
    const KernelModel m = unit_model(2, 3, 1.5, 0.8);
    Gen g(21);
    const PointSet a = g.points(3, 2);
    const PointSet b = g.points(2, 2);
    const Matrix c = assemble_cross_cov(a, b, m);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 2; ++j) {
        const double k = eval_scalar_kernel(a.row(i).transpose(), b.row(j).transpose(), m.components[0].scalar);
        CHECK((c.block(3 * i, 3 * j, 3, 3) - k * Matrix::Identity(3, 3)).norm() < 1e-15);
      }
    }
  }

  TEST_CASE("self block equals the prior block") {
    Gen g(22);
    const KernelModel m = g.model(2, 2, 3);
    const PointSet x = g.points(1, 2);
    CHECK((assemble_cross_cov(x, x, m) - m.prior_block()).norm() < 1e-14);
  }

  TEST_CASE("matches the element-wise oracle") {
    Gen g(23);
    for (int t = 0; t < 20; ++t) {
      const KernelModel m = g.model(g.integer(1, 3), 2, 2);
      const PointSet a = g.points(3, m.dims());
      const PointSet b = g.points(g.integer(1, 4), m.dims());
      CHECK(tadtest::max_abs(assemble_cross_cov(a, b, m) - tadtest::naive_gram(a, b, m)) < 1e-12);
      CHECK(tadtest::max_abs(serial::assemble_cross_cov(a, b, m) - tadtest::naive_gram(a, b, m)) < 1e-12);
    }
  }

  TEST_CASE("cross covariance transposes under argument swap") {
    Gen g(24);
    for (int t = 0; t < 100; ++t) {
      const KernelModel m = g.model(g.integer(1, 3), g.integer(1, 3), g.integer(1, 3));
      const PointSet a = g.points(g.integer(1, 5), m.dims());
      const PointSet b = g.points(g.integer(1, 5), m.dims());
      const Matrix ab = assemble_cross_cov(a, b, m);
      const Matrix ba = assemble_cross_cov(b, a, m);
      CHECK(tadtest::max_abs(ab.transpose() - ba) <= 1e-13 * std::max(1.0, tadtest::max_abs(ab)));
    }
  }

  TEST_CASE("self Gram is positive semidefinite") {
    Gen g(25);
    for (int t = 0; t < 100; ++t) {
      const KernelModel m = g.model(g.integer(1, 3), g.integer(1, 3), g.integer(1, 3));
      const PointSet x = g.points(g.integer(1, 8), m.dims());
      const Eigen::SelfAdjointEigenSolver<Matrix> es(assemble_cross_cov(x, x, m));
      CHECK(es.eigenvalues().minCoeff() >= -1e-8 * es.eigenvalues().maxCoeff());
    }
  }

  TEST_CASE("parallel kernels agree with the serial reference") {
    Gen g(26);
    for (int t = 0; t < 10; ++t) {
      const KernelModel m = g.model(2, 2, 2);
      const PointSet a = g.points(40, 2);
      const PointSet b = g.points(30, 2);
      const Matrix w = Matrix(g.normal_vector(80 * 60).reshaped(80, 60));
      CHECK(tadtest::max_abs(assemble_cross_cov(a, b, m) - serial::assemble_cross_cov(a, b, m)) == 0.0);
      const auto par = cross_cov_pullback(a, b, m, w, true, true);
      const auto ser = serial::cross_cov_pullback(a, b, m, w, true, true);
      CHECK(tadtest::max_abs(par.wrt_a - ser.wrt_a) < 1e-12);
      CHECK(tadtest::max_abs(par.wrt_b - ser.wrt_b) < 1e-12);
      const Matrix ws = tad::symmetrized(Matrix(g.normal_vector(80 * 80).reshaped(80, 80)));
      const Vector hp = hyper_pullback(a, m, ws);
      const Vector hs = serial::hyper_pullback(a, m, ws);
      CHECK((hp - hs).cwiseAbs().maxCoeff() < 1e-10 * std::max(1.0, hs.cwiseAbs().maxCoeff()));
    }
  }

  TEST_CASE("point pullback matches finite differences") {
    Gen g(27);
    for (int t = 0; t < 10; ++t) {
      const KernelModel m = g.model(2, 2, 2);
      const PointSet a = g.points(3, 2);
      const PointSet b = g.points(4, 2);
      const Matrix w = Matrix(g.normal_vector(6 * 8).reshaped(6, 8));
      const auto grads = cross_cov_pullback(a, b, m, w, true, true);
      auto objective = [&](const PointSet& aa, const PointSet& bb) {
        return tadtest::naive_gram(aa, bb, m).cwiseProduct(w).sum();
      };
      const double h = 1e-6;
      for (int i = 0; i < 3; ++i) {
        for (int d = 0; d < 2; ++d) {
          PointSet ap = a, am = a;
          ap(i, d) += h;
          am(i, d) -= h;
          CHECK(grads.wrt_a(i, d) == doctest::Approx((objective(ap, b) - objective(am, b)) / (2 * h)).epsilon(1e-6));
        }
      }
      for (int j = 0; j < 4; ++j) {
        for (int d = 0; d < 2; ++d) {
          PointSet bp = b, bm = b;
          bp(j, d) += h;
          bm(j, d) -= h;
          CHECK(grads.wrt_b(j, d) == doctest::Approx((objective(a, bp) - objective(a, bm)) / (2 * h)).epsilon(1e-6));
        }
      }
    }
  }

  TEST_CASE("hyperparameter pullback matches finite differences") {
    Gen g(28);
    for (int t = 0; t < 10; ++t) {
      const KernelModel m = g.model(2, 2, 2);
      const PointSet x = g.points(4, 2);
      const Matrix w = tad::symmetrized(Matrix(g.normal_vector(64).reshaped(8, 8)));
      const Vector analytic = hyper_pullback(x, m, w);
      const Vector p = m.pack();
      for (Eigen::Index k = 0; k < p.size(); ++k) {
        const double h = 1e-6;
        Vector pp = p, pm = p;
        pp[k] += h;
        pm[k] -= h;
        auto f = [&](const Vector& q) {
          return tadtest::naive_gram(x, x, KernelModel::unpack(q, 2, 2, 2)).cwiseProduct(w).sum();
        };
        CHECK(analytic[k] == doctest::Approx((f(pp) - f(pm)) / (2 * h)).epsilon(1e-6).scale(1.0));
      }
    }
  }
}

TEST_SUITE("gp") {
  TEST_CASE("marginal likelihood closed forms") {
    KernelModel m = unit_model(1, 1);
    m.task_means[0] = 0.4;
    const PointSet x = PointSet::Zero(1, 1);
    CHECK(marginal_log_likelihood(m, make_data(x, Vector{{0.4}}, Vector::Zero(1))) ==
          doctest::Approx(-0.91893853320467267).epsilon(1e-14));
    CHECK(marginal_log_likelihood(m, make_data(x, Vector{{1.4}}, Vector::Zero(1))) ==
          doctest::Approx(-1.4189385332046727).epsilon(1e-14));
  }

  TEST_CASE("marginal likelihood matches the dense log-pdf oracle") {
    Gen g(31);
    for (int t = 0; t < 20; ++t) {
      const KernelModel m = g.model(g.integer(1, 3), 2, g.integer(1, 2));
      const Dataset d = g.dataset(m, 4);
      Matrix k = tadtest::naive_gram(d.points, d.points, m);
      k.diagonal() += d.noise_var;
      const double expect = tadtest::dense_log_pdf(d.observations, tadtest::naive_mean(m, 4), k);
      CHECK(std::fabs(marginal_log_likelihood(m, d) - expect) < 1e-10);
    }
  }

  TEST_CASE("marginal likelihood gradient matches finite differences") {
    Gen g(32);
    for (int t = 0; t < 20; ++t) {
      const KernelModel m = g.model(g.integer(1, 3), g.integer(1, 2), g.integer(1, 2));
      const Dataset d = g.dataset(m, g.integer(3, 6));
      const ObjectiveFn f = [&](const Vector& p) {
        const auto lg = marginal_log_likelihood_gradient(KernelModel::unpack(p, m.dims(), m.tasks(), m.size()), d);
        return Evaluation{lg.value, lg.gradient, 0.0};
      };
      CHECK(gradient_check(f, m.pack()) <= 1e-4);
    }
  }

  TEST_CASE("noise-free prediction interpolates a training point") {
    const KernelModel m = unit_model(1, 1);
    const Dataset d = make_data(PointSet{{0.0}, {1.3}}, Vector{{0.7, -0.2}}, Vector::Zero(2));
    const NormalDist p = predictive_given_1(m, d, Vector{{1.3}});
    CHECK(p.mean[0] == doctest::Approx(-0.2).epsilon(1e-8));
    CHECK(std::fabs(p.cov(0, 0)) <= 1e-8);
  }

  TEST_CASE("one-point posterior closed form") {
    const KernelModel m = unit_model(1, 1);
    const Dataset d = make_data(PointSet{{0.0}}, Vector{{1.0}}, Vector::Zero(1));
    const NormalDist p = predictive_given_1(m, d, Vector{{1.0}});
    CHECK(p.mean[0] == doctest::Approx(0.60653065971263342).epsilon(1e-12));
    CHECK(p.cov(0, 0) == doctest::Approx(0.63212055882855767).epsilon(1e-12));
  }

  TEST_CASE("predictive matches joint conditioning") {
    Gen g(33);
    for (int t = 0; t < 30; ++t) {
      const KernelModel m = g.model(g.integer(1, 3), g.integer(1, 3), g.integer(1, 2));
      const Dataset d = g.dataset(m, g.integer(1, 6));
      const PointSet q = g.points(1, m.dims());
      const NormalDist p = predictive_given_1(m, d, q.row(0).transpose());
      const auto o = tadtest::condition_on(m, q, d.points, d.observations, d.noise_var);
      CHECK(tadtest::max_abs(p.mean - o.mean) < 1e-10);
      CHECK(tadtest::max_abs(p.cov - o.cov) < 1e-10);
    }
  }

  TEST_CASE("data predictive") {
    const KernelModel m = unit_model(1, 1);
    const Dataset d = make_data(PointSet{{0.0}, {1.0}}, Vector{{0.5, 0.9}}, Vector::Zero(2));
    const NormalDist p = data_predictive(m, d, PointSet{{1.0}}, Vector::Zero(1));
    CHECK(p.mean[0] == doctest::Approx(0.9).epsilon(1e-8));
    CHECK(std::fabs(p.cov(0, 0)) <= 1e-8);

    Gen g(34);
    const KernelModel r = g.model(2, 2, 2);
    const PointSet b = g.points(3, 2);
    const Vector s2 = Vector::Constant(6, 0.05);
    const NormalDist prior = data_predictive(r, Dataset::empty(2, 2), b, s2);
    Matrix k22 = tadtest::naive_gram(b, b, r);
    k22.diagonal() += s2;
    CHECK(tadtest::max_abs(prior.mean - tadtest::naive_mean(r, 3)) < 1e-15);
    CHECK(tadtest::max_abs(prior.cov - k22) < 1e-14);

    CHECK_THROWS_AS(data_predictive(r, Dataset::empty(2, 2), PointSet(0, 2), Vector(0)), ContractViolation);

    for (int t = 0; t < 20; ++t) {
      const KernelModel mm = g.model(g.integer(1, 3), g.integer(1, 2), g.integer(1, 2));
      const Dataset dd = g.dataset(mm, g.integer(1, 6));
      const PointSet bb = g.points(g.integer(1, 4), mm.dims());
      const Vector nn = Vector::Constant(bb.rows() * mm.tasks(), 0.03);
      const NormalDist p2 = data_predictive(mm, dd, bb, nn);
      auto o = tadtest::condition_on(mm, bb, dd.points, dd.observations, dd.noise_var);
      o.cov.diagonal() += nn;
      CHECK(tadtest::max_abs(p2.mean - o.mean) < 1e-10);
      CHECK(tadtest::max_abs(p2.cov - o.cov) < 1e-10);
    }
  }

  TEST_CASE("prediction update: identity and zero innovation") {
    Gen g(35);
    const KernelModel m = g.model(2, 2, 2);
    const Dataset d = g.dataset(m, 5);
    const Vector x = g.normal_vector(2);
    const NormalDist p1 = predictive_given_1(m, d, x);
    const NormalDist same = prediction_update(p1, x, d, {PointSet(0, 2), Vector(0), Vector(0)}, m);
    CHECK(same.mean == p1.mean);
    CHECK(same.cov == p1.cov);

    const PointSet b = g.points(3, 2);
    const Vector noise = Vector::Constant(6, 0.02);
    const NormalDist p21 = data_predictive(m, d, b, noise);
    const NormalDist upd = prediction_update(p1, x, d, {b, p21.mean, noise}, m);
    CHECK(tadtest::max_abs(upd.mean - p1.mean) < 1e-12);
  }

  TEST_CASE("prediction update equals full-joint conditioning") {
    Gen g(36);
    for (int t = 0; t < 50; ++t) {
      const int dims = g.integer(1, 3);
      const int tasks = g.integer(1, 3);
      const KernelModel m = g.model(dims, tasks, g.integer(1, 2));
      const Dataset d = g.dataset(m, g.integer(1, 6));
      const PointSet b = g.points(g.integer(1, 4), dims);
      const Vector g2 = g.normal_vector(b.rows() * tasks);
      const Vector n2 = Vector::Constant(b.rows() * tasks, g.uniform(0.01, 0.1));
      const PointSet q = g.points(1, dims);
      const Vector x = q.row(0).transpose();
      const NormalDist upd = prediction_update(predictive_given_1(m, d, x), x, d, {b, g2, n2}, m);
      const auto o = tadtest::condition_on(m, q, tadtest::vstack(d.points, b),
                                           tadtest::vcat(d.observations, g2), tadtest::vcat(d.noise_var, n2));
      CHECK(tadtest::max_abs(upd.mean - o.mean) <= 1e-9);
      CHECK(tadtest::max_abs(upd.cov - o.cov) <= 1e-9);
      const Eigen::SelfAdjointEigenSolver<Matrix> es(predictive_given_1(m, d, x).cov - upd.cov);
      CHECK(es.eigenvalues().minCoeff() >= -1e-9);
    }
  }

  TEST_CASE("dataset append keeps shapes consistent") {
    Dataset d = Dataset::empty(2, 2);
    d.append(PointSet{{0.0, 1.0}}, Vector{{1.0, 2.0}}, Vector{{0.1, 0.2}});
    d.append(PointSet{{1.0, 1.0}, {2.0, 0.0}}, Vector{{3.0, 4.0, 5.0, 6.0}}, Vector{{0.1, 0.2}});
    CHECK(d.size() == 3);
    CHECK(d.tasks() == 2);
    CHECK(d.noise_var == Vector{{0.1, 0.2, 0.1, 0.2, 0.1, 0.2}});
    CHECK_THROWS_AS(d.append(PointSet{{0.0, 0.0}}, Vector{{1.0}}, Vector{{0.1, 0.2}}), DimensionError);
  }

  TEST_CASE("singular systems escalate jitter, then fail") {
    const KernelModel m = unit_model(1, 1);
    const Dataset dup = make_data(PointSet{{0.5}, {0.5}}, Vector{{1.0, 1.0}}, Vector::Zero(2));
    const ConditionedGp gp(m, dup);
    CHECK(gp.factor().jitter() > 0.0);
    CHECK(gp.factor().jitter() <= 1e-4);
    Matrix bad = Matrix::Identity(2, 2);
    bad(1, 1) = -1.0;
    CHECK_THROWS_AS(SpdFactor(bad, "test"), NumericalError);
  }
}
