#include "isac/spread_model.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>
#include <vector>

#include "isac/scene.hpp"

namespace isac {

double char_uniform(double t, double half_width) {
  const double x = t * half_width;
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(x) / x;
}

RMatrix phi_matrix(double theta, double sigma_theta, int n, CharacteristicFn psi) {
  const double rho = kPi * std::cos(theta);
  const double half = std::sqrt(3.0) * sigma_theta;
  RMatrix phi(n, n);
  for (int d = -(n - 1); d <= n - 1; ++d) {
    const double v = psi(rho * d, half);
    for (int m = std::max(0, d); m < std::min(n, n + d); ++m) phi(m, m - d) = v;
  }
  return phi;
}

RMatrix phi_tilde_matrix(double theta, double sigma_theta, int n, CharacteristicFn psi) {
  const double rho = kPi * std::cos(theta);
  const double half = std::sqrt(3.0) * sigma_theta;
  std::vector<double> table(4 * n - 3);
  for (int t = -2 * (n - 1); t <= 2 * (n - 1); ++t) table[t + 2 * (n - 1)] = psi(rho * t, half);

  const int nn = n * n;
  RMatrix out(nn, nn);
  for (int lp = 0; lp < n; ++lp) {
    for (int mp = 0; mp < n; ++mp) {
      const int col = lp * n + mp;
      for (int l = 0; l < n; ++l) {
        for (int m = 0; m < n; ++m) {
          const int t = (m - mp) - (l - lp);
          out(l * n + m, col) = table[t + 2 * (n - 1)];
        }
      }
    }
  }
  return out;
}

Eigen::DiagonalMatrix<cd, Eigen::Dynamic> d_diag(double theta, int n) {
  return Eigen::DiagonalMatrix<cd, Eigen::Dynamic>(steering_vector(theta, n));
}

Eigen::DiagonalMatrix<cd, Eigen::Dynamic> d_tilde_diag(double theta, int n) {
  const CVector a = steering_vector(theta, n);
  CVector kron(n * n);
  for (int l = 0; l < n; ++l) {
    for (int m = 0; m < n; ++m) kron[l * n + m] = std::conj(a[l]) * a[m];
  }
  return Eigen::DiagonalMatrix<cd, Eigen::Dynamic>(kron);
}

CMatrix j_exact(double theta, double sigma_theta, const CMatrix& r_x, CharacteristicFn psi) {
  const Eigen::Index n = r_x.rows();
  if (r_x.cols() != n) throw std::invalid_argument("j_exact: R_X must be square");
  const auto dt = d_tilde_diag(theta, static_cast<int>(n));
  const RMatrix phi = phi_tilde_matrix(theta, sigma_theta, static_cast<int>(n), psi);
  const CVector vec_r = Eigen::Map<const CVector>(r_x.data(), n * n);
  const CVector vec_j = dt * (phi.cast<cd>() * (dt.diagonal().conjugate().asDiagonal() * vec_r));
  return Eigen::Map<const CMatrix>(vec_j.data(), n, n);
}

CMatrix j_exact_fast(double theta, double sigma_theta, const CMatrix& r_x, CharacteristicFn psi) {
  const int n = static_cast<int>(r_x.rows());
  if (r_x.cols() != n) throw std::invalid_argument("j_exact_fast: R_X must be square");
  const CVector a = steering_vector(theta, n);
  const double rho = kPi * std::cos(theta);
  const double half = std::sqrt(3.0) * sigma_theta;

  // S_t over diagonals t = m' - l' of D^H R D.
  std::vector<cd> diag_sum(2 * n - 1, cd(0.0, 0.0));
  for (int lp = 0; lp < n; ++lp) {
    for (int mp = 0; mp < n; ++mp) {
      diag_sum[mp - lp + n - 1] += std::conj(a[mp]) * r_x(mp, lp) * a[lp];
    }
  }
  std::vector<double> table(4 * n - 3);
  for (int t = -2 * (n - 1); t <= 2 * (n - 1); ++t) table[t + 2 * (n - 1)] = psi(rho * t, half);

  std::vector<cd> toeplitz(2 * n - 1, cd(0.0, 0.0));
  for (int d = -(n - 1); d <= n - 1; ++d) {
    cd acc(0.0, 0.0);
    for (int t = -(n - 1); t <= n - 1; ++t) acc += table[d - t + 2 * (n - 1)] * diag_sum[t + n - 1];
    toeplitz[d + n - 1] = acc;
  }

  CMatrix j(n, n);
  for (int l = 0; l < n; ++l) {
    for (int m = 0; m < n; ++m) j(m, l) = a[m] * toeplitz[m - l + n - 1] * std::conj(a[l]);
  }
  return j;
}

CMatrix j_approx(double theta, double sigma_theta, int n, CharacteristicFn psi) {
  const CVector a = steering_vector(theta, n);
  const RMatrix phi = phi_matrix(theta, sigma_theta, n, psi);
  CMatrix j(n, n);
  for (int l = 0; l < n; ++l) {
    for (int m = 0; m < n; ++m) j(m, l) = a[m] * phi(m, l) * std::conj(a[l]);
  }
  return j;
}

CMatrix clip_to_psd(const CMatrix& hermitian) {
  const CMatrix sym = 0.5 * (hermitian + hermitian.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(sym);
  if (eig.info() != Eigen::Success) throw std::runtime_error("clip_to_psd: eigensolver failed");
  RVector lambda = eig.eigenvalues();
  const double radius = lambda.cwiseAbs().maxCoeff();
  const double worst = lambda.minCoeff();
  if (worst < -1e-8 * std::max(radius, 1.0)) {
    std::cerr << "clip_to_psd: clipped eigenvalue " << worst << "\n";
  }
  lambda = lambda.cwiseMax(0.0);
  return eig.eigenvectors() * lambda.cast<cd>().asDiagonal() * eig.eigenvectors().adjoint();
}

}  // namespace isac
