#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "isac/scene.hpp"
#include "isac/spread_model.hpp"

using namespace isac;

namespace {

// Steering vector at the linearized perturbed angle sin(theta) + dt cos(theta).
CVector perturbed_steering(double theta, double dt, int n) {
  const double u = std::sin(theta) + dt * std::cos(theta);
  const double center = 0.5 * (n - 1);
  CVector a(n);
  for (int m = 0; m < n; ++m) a[m] = std::polar(1.0, kPi * (m - center) * u);
  return a;
}

struct MonteCarloKernels {
  CMatrix j;      // E[a a^H R a a^H]
  CMatrix j_app;  // E[a a^H]
};

MonteCarloKernels monte_carlo(double theta, double sigma, const CMatrix& r_x, int draws, std::uint64_t seed) {
  const auto n = static_cast<int>(r_x.rows());
  std::mt19937_64 rng(seed);
  const double half = std::sqrt(3.0) * sigma;
  std::uniform_real_distribution<double> unit(-half, half);
  MonteCarloKernels out{CMatrix::Zero(n, n), CMatrix::Zero(n, n)};
  for (int i = 0; i < draws; ++i) {
    const CVector a = perturbed_steering(theta, unit(rng), n);
    const CMatrix aa = a * a.adjoint();
    out.j += aa * r_x * aa;
    out.j_app += aa;
  }
  out.j /= draws;
  out.j_app /= draws;
  return out;
}

CMatrix random_covariance(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  CMatrix b(n, n);
  for (int i = 0; i < b.size(); ++i) b.data()[i] = cd(nd(rng), nd(rng));
  return b * b.adjoint() / static_cast<double>(n);
}

}  // namespace

TEST_CASE("uniform characteristic function") {
  CHECK(char_uniform(0.0, 0.3) == 1.0);
  CHECK(char_uniform(2.0, 0.0) == 1.0);
  CHECK(char_uniform(2.0, 0.5) == doctest::Approx(std::sin(1.0)));
  CHECK(char_uniform(kPi, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("phi matrices are symmetric Toeplitz with unit diagonal") {
  const RMatrix phi = phi_matrix(deg2rad(25.0), deg2rad(4.0), 6);
  CHECK((phi - phi.transpose()).norm() == 0.0);
  CHECK((phi.diagonal().array() - 1.0).abs().maxCoeff() == 0.0);
  for (int i = 1; i < 6; ++i) CHECK(phi(i, i - 1) == phi(1, 0));

  const RMatrix pt = phi_tilde_matrix(deg2rad(25.0), deg2rad(4.0), 4);
  CHECK((pt - pt.transpose()).norm() == 0.0);
  CHECK((pt.diagonal().array() - 1.0).abs().maxCoeff() == 0.0);
}

TEST_CASE("phi tilde equals the Monte Carlo expectation of conj(A) kron A") {
  // n = 2, theta = 0, sigma = 3 degrees.
  const int n = 2;
  const double theta = 0.0, sigma = deg2rad(3.0);
  const int draws = 1000000;
  std::mt19937_64 rng(21);
  const double half = std::sqrt(3.0) * sigma;
  std::uniform_real_distribution<double> unit(-half, half);
  CMatrix acc = CMatrix::Zero(n * n, n * n);
  for (int i = 0; i < draws; ++i) {
    const double x = unit(rng) * std::cos(theta);
    CMatrix a(n, n);
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) a(r, c) = std::polar(1.0, kPi * (r - c) * x);
    }
    for (int l = 0; l < n; ++l) {
      for (int lp = 0; lp < n; ++lp) {
        for (int m = 0; m < n; ++m) {
          for (int mp = 0; mp < n; ++mp) acc(l * n + m, lp * n + mp) += std::conj(a(l, lp)) * a(m, mp);
        }
      }
    }
  }
  acc /= draws;
  const RMatrix model = phi_tilde_matrix(theta, sigma, n);
  CHECK((acc - model.cast<cd>()).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("J kernels match Monte Carlo oracles") {
  const int n = 6;
  const CMatrix r_x = random_covariance(n, 3);
  for (double th : {0.0, 40.0}) {
    for (double sg : {2.0, 8.0}) {
      const MonteCarloKernels mc = monte_carlo(deg2rad(th), deg2rad(sg), r_x, 40000, 17);
      const CMatrix je = j_exact(deg2rad(th), deg2rad(sg), r_x);
      const CMatrix ja = j_approx(deg2rad(th), deg2rad(sg), n);
      CHECK((je - mc.j).norm() / mc.j.norm() < 2e-2);
      CHECK((ja - mc.j_app).norm() / mc.j_app.norm() < 2e-2);
    }
  }
}

TEST_CASE("fast J agrees with the Kronecker form") {
  for (int n : {1, 2, 5, 9}) {
    const CMatrix r_x = random_covariance(n, static_cast<std::uint64_t>(n));
    for (double th : {-60.0, 0.0, 33.0}) {
      for (double sg : {0.0, 1.5, 10.0}) {
        const CMatrix a = j_exact(deg2rad(th), deg2rad(sg), r_x);
        const CMatrix b = j_exact_fast(deg2rad(th), deg2rad(sg), r_x);
        CHECK((a - b).norm() <= 1e-12 * std::max(1.0, a.norm()));
      }
    }
  }
}

TEST_CASE("point-target and isotropic limits") {
  const int n = 7;
  const double th = deg2rad(-20.0);
  const CVector a = steering_vector(th, n);
  const CMatrix aa = a * a.adjoint();
  const CMatrix r_x = random_covariance(n, 5);
  CHECK((j_exact_fast(th, 0.0, r_x) - aa * r_x * aa).norm() < 1e-10);
  CHECK((j_approx(th, 0.0, n) - aa).norm() < 1e-12);

  // R_X = (P/N) I gives J = P J_app since a^H a = N.
  const double p = 2.5;
  const CMatrix iso = (p / n) * CMatrix::Identity(n, n);
  const double sg = deg2rad(6.0);
  CHECK((j_exact_fast(th, sg, iso) - p * j_approx(th, sg, n)).norm() < 1e-10);
}

TEST_CASE("J kernels are Hermitian PSD with the expected trace") {
  const int n = 8;
  const CMatrix r_x = random_covariance(n, 8);
  for (double sg : {0.0, 3.0, 10.0}) {
    const CMatrix j = j_exact_fast(deg2rad(15.0), deg2rad(sg), r_x);
    CHECK((j - j.adjoint()).norm() < 1e-10 * j.norm());
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(j);
    CHECK(eig.eigenvalues().minCoeff() > -1e-9 * j.norm());
    const CMatrix ja = j_approx(deg2rad(15.0), deg2rad(sg), n);
    CHECK(ja.trace().real() == doctest::Approx(n));
  }
}

TEST_CASE("clip to psd") {
  CMatrix m = CMatrix::Zero(3, 3);
  m(0, 0) = 2.0;
  m(1, 1) = -1e-12;
  m(2, 2) = 1.0;
  const CMatrix c = clip_to_psd(m);
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(c);
  CHECK(eig.eigenvalues().minCoeff() >= 0.0);
  CHECK((c - m).norm() < 1e-11);
}

TEST_CASE("phi matrices are PSD across the angle and spread range") {
  for (double th : {-80.0, -30.0, 0.0, 45.0, 85.0}) {
    for (double sg : {0.0, 2.0, 7.5, 15.0}) {
      for (const RMatrix& m : {phi_matrix(deg2rad(th), deg2rad(sg), 6), phi_tilde_matrix(deg2rad(th), deg2rad(sg), 3)}) {
        CHECK((m - m.transpose()).norm() == 0.0);
        CHECK((m.diagonal().array() - 1.0).abs().maxCoeff() < 1e-15);
        Eigen::SelfAdjointEigenSolver<RMatrix> eig(m);
        CHECK(eig.eigenvalues().minCoeff() > -1e-10);
      }
    }
  }
}

TEST_CASE("j_approx spectrum bounds and effective rank grows with spread") {
  const int n = 16;
  double previous = 0.0;
  for (int sg = 0; sg <= 10; ++sg) {
    const CMatrix ja = j_approx(deg2rad(30.0), deg2rad(sg), n);
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(ja);
    const RVector ev = eig.eigenvalues();
    CHECK(ev.minCoeff() > -1e-10);
    CHECK(ev.maxCoeff() <= n + 1e-10);
    CHECK(ja.trace().real() == doctest::Approx(n));
    const double participation = ev.sum() * ev.sum() / ev.squaredNorm();
    CHECK(participation >= previous - 1e-9);
    previous = participation;
  }
}
