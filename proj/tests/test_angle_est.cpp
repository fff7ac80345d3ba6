#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "isac/angle_est.hpp"
#include "isac/kernels.hpp"
#include "isac/spread_model.hpp"

using namespace isac;

namespace {

ScenarioConfig point_scene(double theta_deg, double sigma_deg, double noise_var) {
  ScenarioConfig cfg;
  cfg.array = {8, 8};
  cfg.ofdm = OfdmConfig::from_timing(256, 1.0 / 120e3, (1.0 / 120e3) * 144.0 / 2048.0);
  ClusterTarget t;
  t.mean_angle_rad = deg2rad(theta_deg);
  t.angle_spread_rad = deg2rad(sigma_deg);
  t.mean_distance_m = 40.0;
  t.range_spread_m = 0.0;
  t.n_rays = sigma_deg == 0.0 ? 1 : 100;
  Rng rng(3);
  t.reflection_coeffs = draw_reflection_coeffs(t.n_rays, rng);
  cfg.targets.push_back(t);
  cfg.rx_noise_var = noise_var;
  return cfg;
}

}  // namespace

TEST_CASE("estimator names round-trip") {
  for (Estimator e : {Estimator::tms, Estimator::tms_approx, Estimator::cms, Estimator::cms_approx}) {
    CHECK(parse_estimator(to_string(e)) == e);
  }
  CHECK_THROWS_AS(parse_estimator("music"), std::invalid_argument);
  CHECK(is_truncated(Estimator::tms_approx));
  CHECK_FALSE(is_truncated(Estimator::cms));
  CHECK(is_exact(Estimator::cms));
  CHECK_FALSE(is_exact(Estimator::tms_approx));
}

TEST_CASE("grid construction is drift free") {
  const SpreadGrid g = SpreadGrid::from_degrees(-90.0, 90.0, 0.1, 0.0, 10.0, 0.1);
  CHECK(g.theta_rad.size() == 1801);
  CHECK(g.sigma_rad.size() == 101);
  CHECK(rad2deg(g.theta_rad[1800]) == doctest::Approx(90.0).epsilon(1e-12));
  CHECK(rad2deg(g.theta_rad[900]) == doctest::Approx(0.0));
  CHECK_THROWS_AS(SpreadGrid::from_degrees(0.0, 1.0, 0.0, 0.0, 1.0, 0.1), std::invalid_argument);
}

TEST_CASE("rank selection") {
  CHECK(select_rank(RVector{{5.0, 3.0, 2.0, 0.0}}, 0.5) == 1);
  CHECK(select_rank(RVector{{5.0, 3.0, 2.0, 0.0}}, 0.8) == 2);
  CHECK(select_rank(RVector{{5.0, 3.0, 2.0, 0.0}}, 0.81) == 3);
  CHECK(select_rank(RVector{{5.0, 3.0, 2.0, 0.0}}, 1.0) == 3);
  CHECK(select_rank(RVector{{1.0, 1.0, 1.0, 1.0}}, 0.99) == 4);
  CHECK_THROWS_AS(select_rank(RVector{{0.0, 0.0}}, 0.9), std::invalid_argument);
  CHECK_THROWS_AS(select_rank(RVector{{1.0}}, 1.5), std::invalid_argument);
}

TEST_CASE("sample covariance and subspace split") {
  Rng rng(1);
  const ScenarioConfig cfg = point_scene(10.0, 0.0, 1e-3);
  const std::vector<ReceivedFrame> frames{simulate_frame(cfg, isotropic_beamformer(8, 1.0), rng),
                                          simulate_frame(cfg, isotropic_beamformer(8, 1.0), rng)};
  const CovarianceEstimate r = sample_covariance(frames);
  CHECK(r.n_snapshots == 512);
  CHECK((r.r_y - r.r_y.adjoint()).norm() == 0.0);
  const CMatrix manual = (frames[0].rx * frames[0].rx.adjoint() + frames[1].rx * frames[1].rx.adjoint()) / 512.0;
  CHECK((r.r_y - manual).norm() < 1e-12 * manual.norm());

  const SubspaceSplit s = subspace_split(r.r_y, 1);
  CHECK(s.signal_basis.cols() == 1);
  CHECK(s.noise_basis.cols() == 7);
  CHECK((s.signal_basis.adjoint() * s.noise_basis).norm() < 1e-10);
  const CVector a = steering_vector(deg2rad(10.0), 8);
  CHECK(std::abs(s.signal_basis.col(0).dot(a)) / a.norm() > 0.999);
  CHECK_THROWS_AS(subspace_split(r.r_y, 8), std::invalid_argument);

  const CMatrix dn = denoise(r, 1e-3);
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(dn);
  CHECK(eig.eigenvalues().minCoeff() > -1e-12);
}

TEST_CASE("full-rank measurement leaves no noise subspace") {
  CovarianceEstimate r{CMatrix::Identity(4, 4) * 2.0, 10};
  CHECK_THROWS_AS(measured_subspace(r, 1.0, 0.99), std::runtime_error);
}

TEST_CASE("noiseless point target is located within one grid step") {
  ScenarioConfig cfg = point_scene(23.0, 0.0, 0.0);
  Rng rng(2);
  const CMatrix v = isotropic_beamformer(8, 1.0);
  const std::vector<ReceivedFrame> frames{simulate_frame(cfg, v, rng)};
  const CovarianceEstimate r = sample_covariance(frames);
  const SpreadGrid grid = SpreadGrid::from_degrees(-60.0, 60.0, 0.5, 0.0, 4.0, 0.5);
  for (Estimator e : {Estimator::tms, Estimator::tms_approx}) {
    const SpreadSpectrum sp = compute_spectrum(e, r, 0.0, v * v.adjoint(), grid, 0.99);
    const AngleEstimate est = estimate_angles(sp, 1);
    CHECK(std::abs(rad2deg(est[0].theta_rad) - 23.0) <= 0.5 + 1e-9);
    CHECK(rad2deg(est[0].sigma_theta_rad) <= 0.5 + 1e-9);
  }
}

TEST_CASE("isotropic probing: TMS and TMS-approx spectra peak at the same node") {
  // J = P J_app under isotropic R_X, so both estimators share eigenvectors.
  ScenarioConfig cfg = point_scene(-15.0, 4.0, 1e-2);
  Rng rng(8);
  const CMatrix v = isotropic_beamformer(8, 1.0);
  const std::vector<ReceivedFrame> frames{simulate_frame(cfg, v, rng)};
  const CovarianceEstimate r = sample_covariance(frames);
  const SpreadGrid grid = SpreadGrid::from_degrees(-40.0, 10.0, 0.5, 0.0, 8.0, 0.5);
  const SpreadSpectrum a = tms_spectrum(r, cfg.rx_noise_var, cfg, v, grid, 0.99);
  const SpreadSpectrum b = tms_approx_spectrum(r, cfg.rx_noise_var, v * v.adjoint(), grid, 0.99);
  const auto [i, j] = a.argmax();
  CHECK(b.argmax() == std::pair{i, j});
  CHECK(a.values(i, j) == doctest::Approx(b.values(i, j)).epsilon(1e-6));
}

TEST_CASE("spectra are positive and finite") {
  ScenarioConfig cfg = point_scene(30.0, 5.0, 1e-2);
  Rng rng(4);
  const CMatrix v = isotropic_beamformer(8, 1.0);
  const std::vector<ReceivedFrame> frames{simulate_frame(cfg, v, rng)};
  const CovarianceEstimate r = sample_covariance(frames);
  const SpreadGrid grid = SpreadGrid::from_degrees(0.0, 60.0, 1.0, 0.0, 10.0, 1.0);
  for (Estimator e : {Estimator::tms, Estimator::tms_approx, Estimator::cms, Estimator::cms_approx}) {
    const SpreadSpectrum sp = compute_spectrum(e, r, cfg.rx_noise_var, v * v.adjoint(), grid, 0.9);
    CHECK(sp.values.allFinite());
    CHECK(sp.values.minCoeff() > 0.0);
    CHECK(sp.values.maxCoeff() <= 1.0 / kernels::kSpectrumEpsilon);
  }
}

TEST_CASE("peak picking") {
  SpreadSpectrum sp;
  sp.theta_grid = RVector::LinSpaced(21, deg2rad(-10.0), deg2rad(10.0));
  sp.sigma_grid = RVector::LinSpaced(3, 0.0, deg2rad(2.0));
  sp.values = RMatrix::Ones(21, 3);
  sp.values(5, 1) = 5.0;
  sp.values(6, 1) = 4.0;  // neighbour of the main peak, not a maximum
  sp.values(15, 2) = 3.0;
  sp.values(7, 0) = 3.5;  // local max but within the 3 degree window of the main peak
  const AngleEstimate est = estimate_angles(sp, 2);
  CHECK(rad2deg(est[0].theta_rad) == doctest::Approx(-5.0));
  CHECK(rad2deg(est[0].sigma_theta_rad) == doctest::Approx(1.0));
  CHECK(rad2deg(est[1].theta_rad) == doctest::Approx(5.0));
  CHECK(rad2deg(est[1].sigma_theta_rad) == doctest::Approx(2.0));
  CHECK_THROWS_AS(estimate_angles(sp, 3), std::runtime_error);

  sp.values.setOnes();
  CHECK_THROWS_AS(estimate_angles(sp, 1), std::runtime_error);
}

TEST_CASE("rank is nondecreasing in chi") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    RVector ev(8);
    for (int i = 0; i < 8; ++i) ev[i] = std::pow(u(rng), 3);
    std::sort(ev.data(), ev.data() + ev.size(), std::greater<>());
    int previous = 0;
    for (double chi = 0.05; chi <= 1.0 + 1e-12; chi += 0.05) {
      const int q = select_rank(ev, std::min(chi, 1.0));
      CHECK(q >= previous);
      previous = q;
    }
  }
}

TEST_CASE("exact point-target covariance: every estimator peaks at the true node") {
  const int n = 8;
  const double theta = deg2rad(-21.0);
  const CMatrix v = isotropic_beamformer(n, 1.0);
  const CMatrix r_x = v * v.adjoint();
  const CVector a = steering_vector(theta, n);
  const CovarianceEstimate r{a * a.adjoint() * r_x * a * a.adjoint(), 1000};
  const SpreadGrid grid = SpreadGrid::from_degrees(-30.0, -10.0, 0.5, 0.0, 4.0, 0.5);
  for (Estimator e : {Estimator::tms, Estimator::tms_approx, Estimator::cms, Estimator::cms_approx}) {
    const SpreadSpectrum sp = compute_spectrum(e, r, 0.0, r_x, grid, 0.99);
    const auto [i, j] = sp.argmax();
    CHECK(rad2deg(sp.theta_grid[i]) == doctest::Approx(-21.0));
    CHECK(sp.sigma_grid[j] == 0.0);
  }
}

TEST_CASE("argmax is invariant to covariance scaling and basis phases") {
  ScenarioConfig cfg = point_scene(12.0, 3.0, 1e-2);
  Rng rng(10);
  const CMatrix v = isotropic_beamformer(8, 1.0);
  const CMatrix r_x = v * v.adjoint();
  const std::vector<ReceivedFrame> frames{simulate_frame(cfg, v, rng)};
  const CovarianceEstimate r = sample_covariance(frames);
  const CovarianceEstimate scaled{5.0 * r.r_y, r.n_snapshots};
  const SpreadGrid grid = SpreadGrid::from_degrees(0.0, 25.0, 0.5, 0.0, 6.0, 0.5);

  const MeasuredSubspace sub = measured_subspace(r, cfg.rx_noise_var, 0.95);
  CMatrix rotated = sub.noise_basis;
  for (Eigen::Index c = 0; c < rotated.cols(); ++c) rotated.col(c) *= std::polar(1.0, 0.7 * (c + 1));

  for (Estimator e : {Estimator::tms, Estimator::tms_approx, Estimator::cms, Estimator::cms_approx}) {
    const SpreadSpectrum base = compute_spectrum(e, r, cfg.rx_noise_var, r_x, grid, 0.95);
    const SpreadSpectrum big = compute_spectrum(e, scaled, 5.0 * cfg.rx_noise_var, r_x, grid, 0.95);
    CHECK(base.argmax() == big.argmax());

    const kernels::KernelTable table(e, grid, r_x);
    const RMatrix a = kernels::evaluate_spectrum(table, sub.noise_basis, sub.rank);
    const RMatrix b = kernels::evaluate_spectrum(table, rotated, sub.rank);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-9 * a.maxCoeff());
  }
}

TEST_CASE("Fig. 3 scenario: TMS peaks closer to the truth than CMS") {
  // N = 16, truth (30, 5) degrees, SNR 30 dB, chi = 0.9, 50 seeds.
  ScenarioConfig cfg;
  cfg.array = {16, 16};
  cfg.ofdm = OfdmConfig::from_timing(792, 1.0 / 120e3, (1.0 / 120e3) * 144.0 / 2048.0);
  ClusterTarget t;
  t.mean_angle_rad = deg2rad(30.0);
  t.angle_spread_rad = deg2rad(5.0);
  t.mean_distance_m = 40.0;
  t.range_spread_m = 2.0;
  t.n_rays = 100;
  cfg.targets.push_back(t);
  cfg.rx_noise_var = cfg.noise_var_for_snr_db(30.0);
  const CMatrix v = isotropic_beamformer(16, cfg.tx_power);
  const CMatrix r_x = v * v.adjoint();
  const SpreadGrid grid = SpreadGrid::from_degrees(15.0, 45.0, 0.2, 0.0, 10.0, 0.2);
  const kernels::KernelTable tms(Estimator::tms, grid, r_x);
  const kernels::KernelTable cms(Estimator::cms, grid, r_x);

  auto distance = [&](const RMatrix& values) {
    Eigen::Index i = 0, j = 0;
    values.maxCoeff(&i, &j);
    return std::hypot(rad2deg(grid.theta_rad[i]) - 30.0, rad2deg(grid.sigma_rad[j]) - 5.0);
  };
  double tms_bias = 0.0, cms_bias = 0.0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    ScenarioConfig c = cfg;
    Rng rng(seed);
    c.targets[0].reflection_coeffs = draw_reflection_coeffs(t.n_rays, rng);
    const std::vector<ReceivedFrame> frames{simulate_frame(c, v, rng)};
    const MeasuredSubspace sub = measured_subspace(sample_covariance(frames), c.rx_noise_var, 0.9);
    tms_bias += distance(kernels::evaluate_spectrum(tms, sub.noise_basis, sub.rank));
    cms_bias += distance(kernels::evaluate_spectrum(cms, sub.noise_basis, sub.rank));
  }
  CHECK(tms_bias / 50.0 <= cms_bias / 50.0);
}
