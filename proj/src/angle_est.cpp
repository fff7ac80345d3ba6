#include "isac/angle_est.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "isac/kernels.hpp"
#include "isac/spread_model.hpp"

namespace isac {

std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::tms: return "tms";
    case Estimator::tms_approx: return "tms-approx";
    case Estimator::cms: return "cms";
    case Estimator::cms_approx: return "cms-approx";
  }
  return "?";
}

Estimator parse_estimator(std::string_view name) {
  if (name == "tms") return Estimator::tms;
  if (name == "tms-approx" || name == "tms_approx") return Estimator::tms_approx;
  if (name == "cms") return Estimator::cms;
  if (name == "cms-approx" || name == "cms_approx") return Estimator::cms_approx;
  throw std::invalid_argument("unknown estimator '" + std::string(name) + "'");
}

bool is_truncated(Estimator e) { return e == Estimator::tms || e == Estimator::tms_approx; }
bool is_exact(Estimator e) { return e == Estimator::tms || e == Estimator::cms; }

namespace {

RVector inclusive_range(double lo, double hi, double step) {
  if (step <= 0.0 || hi < lo) throw std::invalid_argument("grid: need step > 0 and max >= min");
  const auto count = static_cast<Eigen::Index>(std::floor((hi - lo) / step + 1e-9)) + 1;
  RVector v(count);
  for (Eigen::Index i = 0; i < count; ++i) v[i] = deg2rad(lo + static_cast<double>(i) * step);
  return v;
}

// Eigenpairs of a Hermitian matrix, descending.
std::pair<RVector, CMatrix> eig_desc(const CMatrix& h) {
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(0.5 * (h + h.adjoint()));
  if (eig.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  return {eig.eigenvalues().reverse(), eig.eigenvectors().rowwise().reverse()};
}

}  // namespace

SpreadGrid SpreadGrid::from_degrees(double theta_min, double theta_max, double theta_step,
                                    double sigma_min, double sigma_max, double sigma_step) {
  return {inclusive_range(theta_min, theta_max, theta_step),
          inclusive_range(sigma_min, sigma_max, sigma_step)};
}

SpreadGrid SpreadGrid::default_grid() { return from_degrees(-90.0, 90.0, 0.1, 0.0, 10.0, 0.1); }

std::pair<Eigen::Index, Eigen::Index> SpreadSpectrum::argmax() const {
  Eigen::Index i = 0, j = 0;
  values.maxCoeff(&i, &j);
  return {i, j};
}

CovarianceEstimate sample_covariance(std::span<const ReceivedFrame> frames) {
  if (frames.empty()) throw std::invalid_argument("sample_covariance: no frames");
  const Eigen::Index m = frames.front().rx.rows();
  CovarianceEstimate out;
  out.r_y = CMatrix::Zero(m, m);
  for (const auto& f : frames) {
    if (f.rx.rows() != m) throw std::invalid_argument("sample_covariance: frame sizes differ");
    out.r_y.noalias() += f.rx * f.rx.adjoint();
    out.n_snapshots += static_cast<int>(f.rx.cols());
  }
  if (out.n_snapshots == 0) throw std::invalid_argument("sample_covariance: no snapshots");
  out.r_y /= static_cast<double>(out.n_snapshots);
  out.r_y = 0.5 * (out.r_y + out.r_y.adjoint()).eval();
  return out;
}

CMatrix denoise(const CovarianceEstimate& r, double noise_var) {
  auto [lambda, vecs] = eig_desc(r.r_y);
  lambda = (lambda.array() - noise_var).cwiseMax(0.0);
  return vecs * lambda.cast<cd>().asDiagonal() * vecs.adjoint();
}

int select_rank(const RVector& eigenvalues_desc, double chi) {
  if (eigenvalues_desc.size() == 0) throw std::invalid_argument("select_rank: empty spectrum");
  if (chi < 0.0 || chi > 1.0) throw std::invalid_argument("select_rank: chi must lie in [0, 1]");
  if ((eigenvalues_desc.array() < 0.0).any()) {
    throw std::invalid_argument("select_rank: eigenvalues must be nonnegative");
  }
  const double total = eigenvalues_desc.sum();
  if (!(total > 0.0)) throw std::invalid_argument("select_rank: all-zero spectrum");
  const auto len = static_cast<int>(eigenvalues_desc.size());
  if (chi >= 1.0) {
    int last = 0;
    for (int i = 0; i < len; ++i) {
      if (eigenvalues_desc[i] > 0.0) last = i + 1;
    }
    return last;
  }
  double acc = 0.0;
  for (int q = 1; q <= len; ++q) {
    acc += eigenvalues_desc[q - 1];
    if (acc / total >= chi) return q;
  }
  return len;
}

SubspaceSplit subspace_split(const CMatrix& hermitian, int q) {
  const auto dim = static_cast<int>(hermitian.rows());
  if (q < 1 || q >= dim) throw std::invalid_argument("subspace_split: rank must satisfy 1 <= q < dimension");
  auto [lambda, vecs] = eig_desc(hermitian);
  SubspaceSplit s;
  s.eigenvalues = lambda;
  s.signal_basis = vecs.leftCols(q);
  s.noise_basis = vecs.rightCols(dim - q);
  s.rank = q;
  return s;
}

MeasuredSubspace measured_subspace(const CovarianceEstimate& r_hat, double noise_var, double chi) {
  auto [lambda, vecs] = eig_desc(r_hat.r_y);
  const RVector denoised = (lambda.array() - noise_var).cwiseMax(0.0);
  const int q = select_rank(denoised, chi);
  const auto dim = static_cast<int>(lambda.size());
  if (q >= dim) {
    throw std::runtime_error("spread spectrum: selected rank " + std::to_string(q) +
                             " leaves no noise subspace");
  }
  return {vecs.rightCols(dim - q), denoised, q};
}

CMatrix model_matrix(Estimator e, double theta, double sigma_theta, const CMatrix& r_x) {
  if (is_exact(e)) return j_exact_fast(theta, sigma_theta, r_x);
  const CMatrix ja = j_approx(theta, sigma_theta, static_cast<int>(r_x.rows()));
  return ja * r_x * ja.adjoint();
}

CMatrix model_basis(Estimator e, double theta, double sigma_theta, const CMatrix& r_x) {
  const CMatrix m = model_matrix(e, theta, sigma_theta, r_x);
  if (is_truncated(e)) return eig_desc(m).second;
  const double norm = m.norm();
  if (norm == 0.0) throw std::runtime_error("model_basis: zero model matrix");
  return m / norm;
}

SpreadSpectrum compute_spectrum(Estimator e, const CovarianceEstimate& r_hat, double noise_var,
                                const CMatrix& r_x, const SpreadGrid& grid, double chi) {
  if (grid.size() == 0) throw std::invalid_argument("compute_spectrum: empty grid");
  const MeasuredSubspace sub = measured_subspace(r_hat, noise_var, chi);
  const kernels::KernelTable table(e, grid, r_x);
  return {grid.theta_rad, grid.sigma_rad, kernels::evaluate_spectrum(table, sub.noise_basis, sub.rank)};
}

SpreadSpectrum tms_spectrum(const CovarianceEstimate& r_hat, double noise_var,
                            const ScenarioConfig& cfg, const CMatrix& beamformer,
                            const SpreadGrid& grid, double chi) {
  if (beamformer.rows() != cfg.n()) throw std::invalid_argument("tms_spectrum: beamformer size");
  const CMatrix r_x = beamformer * beamformer.adjoint();
  return compute_spectrum(Estimator::tms, r_hat, noise_var, r_x, grid, chi);
}

SpreadSpectrum tms_approx_spectrum(const CovarianceEstimate& r_hat, double noise_var,
                                   const CMatrix& r_x, const SpreadGrid& grid, double chi) {
  return compute_spectrum(Estimator::tms_approx, r_hat, noise_var, r_x, grid, chi);
}

SpreadSpectrum cms_spectrum(const CovarianceEstimate& r_hat, double noise_var, const CMatrix& r_x,
                            const SpreadGrid& grid, double chi, bool exact) {
  return compute_spectrum(exact ? Estimator::cms : Estimator::cms_approx, r_hat, noise_var, r_x,
                          grid, chi);
}

AngleEstimate estimate_angles(const SpreadSpectrum& spectrum, int n_targets, double window_rad) {
  if (n_targets < 1) throw std::invalid_argument("estimate_angles: need at least one target");
  const RMatrix& v = spectrum.values;
  const Eigen::Index nt = v.rows();
  const Eigen::Index ns = v.cols();
  if (nt == 0 || ns == 0) throw std::invalid_argument("estimate_angles: empty spectrum");

  // Local maxima: >= every 8-neighbour and > at least one of them.
  struct Peak {
    double value;
    Eigen::Index i, j;
  };
  std::vector<Peak> peaks;
  for (Eigen::Index i = 0; i < nt; ++i) {
    for (Eigen::Index j = 0; j < ns; ++j) {
      const double c = v(i, j);
      bool ge_all = true;
      bool gt_any = false;
      for (Eigen::Index di = -1; di <= 1 && ge_all; ++di) {
        for (Eigen::Index dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          const Eigen::Index a = i + di, b = j + dj;
          if (a < 0 || a >= nt || b < 0 || b >= ns) continue;
          if (v(a, b) > c) {
            ge_all = false;
            break;
          }
          if (v(a, b) < c) gt_any = true;
        }
      }
      if (ge_all && gt_any) peaks.push_back({c, i, j});
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const Peak& a, const Peak& b) { return a.value > b.value; });

  AngleEstimate out;
  for (const auto& p : peaks) {
    const double th = spectrum.theta_grid[p.i];
    const bool suppressed = std::any_of(out.begin(), out.end(), [&](const AnglePair& q) {
      return std::abs(q.theta_rad - th) <= window_rad;
    });
    if (suppressed) continue;
    out.push_back({th, spectrum.sigma_grid[p.j]});
    if (static_cast<int>(out.size()) == n_targets) return out;
  }
  throw std::runtime_error("estimate_angles: spectrum has fewer than " + std::to_string(n_targets) +
                           " separated local maxima");
}

}  // namespace isac
