#include <benchmark/benchmark.h>

#include <random>
#include <string>

#include "isac/angle_est.hpp"
#include "isac/kernels.hpp"

using namespace isac;

namespace {

struct Fixture {
  SpreadGrid grid;
  CMatrix r_x;
  CMatrix noise_basis;
  int q;
};

Fixture make_fixture(int n, double theta_step) {
  Fixture f;
  f.grid = SpreadGrid::from_degrees(20.0, 40.0, theta_step, 0.0, 10.0, 0.5);
  const CMatrix v = isotropic_beamformer(n, 1.0);
  f.r_x = v * v.adjoint();
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  CMatrix b(n, n);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = cd(nd(rng), nd(rng));
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(b * b.adjoint());
  f.q = n / 4;
  f.noise_basis = eig.eigenvectors().leftCols(n - f.q);
  return f;
}

void BM_SpectrumReference(benchmark::State& state) {
  const auto e = static_cast<Estimator>(state.range(0));
  const Fixture f = make_fixture(16, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::reference::evaluate_spectrum(e, f.grid, f.r_x, f.noise_basis, f.q));
  }
  state.SetItemsProcessed(state.iterations() * f.grid.size());
  state.SetLabel(std::string(to_string(e)));
}

// Table build plus evaluation, the cost of a cold cache.
void BM_SpectrumParallelCold(benchmark::State& state) {
  const auto e = static_cast<Estimator>(state.range(0));
  const Fixture f = make_fixture(16, 1.0);
  for (auto _ : state) {
    const kernels::KernelTable table(e, f.grid, f.r_x);
    benchmark::DoNotOptimize(kernels::evaluate_spectrum(table, f.noise_basis, f.q));
  }
  state.SetItemsProcessed(state.iterations() * f.grid.size());
  state.SetLabel(std::string(to_string(e)));
}

// Evaluation against a prebuilt table, the per-trial cost.
void BM_SpectrumParallelWarm(benchmark::State& state) {
  const auto e = static_cast<Estimator>(state.range(0));
  const Fixture f = make_fixture(16, 1.0);
  const kernels::KernelTable table(e, f.grid, f.r_x);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::evaluate_spectrum(table, f.noise_basis, f.q));
  state.SetItemsProcessed(state.iterations() * f.grid.size());
  state.SetLabel(std::string(to_string(e)));
}

CVector series(int p) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  CVector s(p);
  for (int i = 0; i < p; ++i) s[i] = cd(nd(rng), nd(rng));
  return s;
}

void BM_RangeProfileReference(benchmark::State& state) {
  const CVector s = series(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::reference::range_profile_direct(s));
}

void BM_RangeProfileDirect(benchmark::State& state) {
  const CVector s = series(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::range_profile_direct(s));
}

void BM_RangeProfileFft(benchmark::State& state) {
  const CVector s = series(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::range_profile_fft(s));
}

void estimators(benchmark::internal::Benchmark* b) {
  for (Estimator e : {Estimator::tms, Estimator::tms_approx, Estimator::cms, Estimator::cms_approx}) {
    b->Arg(static_cast<int>(e));
  }
  b->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_SpectrumReference)->Apply(estimators);
BENCHMARK(BM_SpectrumParallelCold)->Apply(estimators);
BENCHMARK(BM_SpectrumParallelWarm)->Apply(estimators);
BENCHMARK(BM_RangeProfileReference)->Arg(792)->Arg(4096);
BENCHMARK(BM_RangeProfileDirect)->Arg(792)->Arg(4096);
BENCHMARK(BM_RangeProfileFft)->Arg(792)->Arg(4096);

BENCHMARK_MAIN();
