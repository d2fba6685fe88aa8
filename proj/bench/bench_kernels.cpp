// Serial vs OpenMP timings for the point-pair kernels.
//
//   bench_kernels [--sizes 100,200,400] [--reps N]
//
// Thread count follows OMP_NUM_THREADS.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tad/gram.hpp"

using namespace tad;

namespace {

double seconds(const std::function<void()>& f, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

KernelModel bench_model(int dims, int tasks, int components, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 1.5);
  KernelModel m;
  m.task_means = Vector::Zero(tasks);
  for (int l = 0; l < components; ++l) {
    KernelComponent c;
    c.scalar.signal_variance = u(rng);
    c.scalar.lengthscales = Vector::Constant(dims, u(rng));
    c.task.chol_factor = Matrix::Identity(tasks, tasks) * u(rng);
    m.components.push_back(c);
  }
  return m;
}

PointSet random_points(Eigen::Index n, int dims, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  PointSet p(n, dims);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel benchmark"};
  std::vector<int> sizes{100, 200, 400};
  int reps = 3;
  int dims = 2, tasks = 2, components = 3;
  app.add_option("--sizes", sizes, "point counts")->delimiter(',');
  app.add_option("--reps", reps, "repetitions (best time is reported)");
  app.add_option("--dims", dims);
  app.add_option("--tasks", tasks);
  app.add_option("--components", components);
  CLI11_PARSE(app, argc, argv);

  std::mt19937_64 rng(7);
  const KernelModel m = bench_model(dims, tasks, components, rng);
  std::printf("threads %d  D=%d E=%d P=%d\n", kernel_threads(), dims, tasks, components);
  std::printf("%-22s %6s %12s %12s %8s %10s\n", "kernel", "N", "serial s", "openmp s", "speedup", "max diff");
  for (const int n : sizes) {
    const PointSet a = random_points(n, dims, rng);
    const PointSet b = random_points(n, dims, rng);
    Matrix w = Matrix::Random(n * tasks, n * tasks);
    const Matrix ws = 0.5 * (w + w.transpose());

    Matrix cs, cp;
    const double s1 = seconds([&] { cs = serial::assemble_cross_cov(a, b, m); }, reps);
    const double p1 = seconds([&] { cp = assemble_cross_cov(a, b, m); }, reps);
    std::printf("%-22s %6d %12.5f %12.5f %8.2f %10.2e\n", "assemble_cross_cov", n, s1, p1, s1 / p1,
                (cs - cp).cwiseAbs().maxCoeff());

    PointGradients gs, gp;
    const double s2 = seconds([&] { gs = serial::cross_cov_pullback(a, b, m, w, true, true); }, reps);
    const double p2 = seconds([&] { gp = cross_cov_pullback(a, b, m, w, true, true); }, reps);
    std::printf("%-22s %6d %12.5f %12.5f %8.2f %10.2e\n", "cross_cov_pullback", n, s2, p2, s2 / p2,
                std::max((gs.wrt_a - gp.wrt_a).cwiseAbs().maxCoeff(), (gs.wrt_b - gp.wrt_b).cwiseAbs().maxCoeff()));

    Vector hs, hp;
    const double s3 = seconds([&] { hs = serial::hyper_pullback(a, m, ws); }, reps);
    const double p3 = seconds([&] { hp = hyper_pullback(a, m, ws); }, reps);
    std::printf("%-22s %6d %12.5f %12.5f %8.2f %10.2e\n", "hyper_pullback", n, s3, p3, s3 / p3,
                (hs - hp).cwiseAbs().maxCoeff());
  }
  return 0;
}
