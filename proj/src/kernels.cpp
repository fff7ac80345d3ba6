#include "isac/kernels.hpp"

#include <cstring>
#include <exception>
#include <stdexcept>

#include <fftw3.h>
#include <omp.h>

#include "isac/spread_model.hpp"

namespace isac::kernels {

namespace {

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 1469598103934665603ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

// ||E_n^H B[:, 0:cols)||_F^2 with E_n^H given as a dense (k x n) matrix.
double projection_energy(const CMatrix& noise_adj, const cd* basis, int n, int cols) {
  const Eigen::Index k = noise_adj.rows();
  double acc = 0.0;
  for (int c = 0; c < cols; ++c) {
    const cd* col = basis + static_cast<std::ptrdiff_t>(c) * n;
    for (Eigen::Index r = 0; r < k; ++r) {
      cd dot(0.0, 0.0);
      for (int i = 0; i < n; ++i) dot += noise_adj(r, i) * col[i];
      acc += std::norm(dot);
    }
  }
  return acc;
}

std::mutex& fftw_planner_mutex() {
  static std::mutex mu;
  return mu;
}

}  // namespace

std::uint64_t fingerprint(const CMatrix& m) {
  const Eigen::Index dims[2] = {m.rows(), m.cols()};
  std::uint64_t h = fnv1a(dims, sizeof(dims));
  return fnv1a(m.data(), sizeof(cd) * static_cast<std::size_t>(m.size()), h);
}

std::uint64_t fingerprint(const SpreadGrid& g) {
  const Eigen::Index dims[2] = {g.theta_rad.size(), g.sigma_rad.size()};
  std::uint64_t h = fnv1a(dims, sizeof(dims));
  h = fnv1a(g.theta_rad.data(), sizeof(double) * static_cast<std::size_t>(g.theta_rad.size()), h);
  return fnv1a(g.sigma_rad.data(), sizeof(double) * static_cast<std::size_t>(g.sigma_rad.size()), h);
}

KernelTable::KernelTable(Estimator e, SpreadGrid grid, const CMatrix& r_x)
    : estimator_(e), grid_(std::move(grid)), n_(static_cast<int>(r_x.rows())), r_x_fp_(fingerprint(r_x)) {
  if (r_x.rows() != r_x.cols()) throw std::invalid_argument("KernelTable: R_X must be square");
  const Eigen::Index nodes = grid_.size();
  const Eigen::Index ns = grid_.sigma_rad.size();
  const auto stride = static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_);
  data_.resize(static_cast<std::size_t>(nodes) * stride);

  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 64)
  for (Eigen::Index node = 0; node < nodes; ++node) {
    try {
      const double th = grid_.theta_rad[node / ns];
      const double sg = grid_.sigma_rad[node % ns];
      const CMatrix b = model_basis(estimator_, th, sg, r_x);
      std::memcpy(data_.data() + static_cast<std::size_t>(node) * stride, b.data(), stride * sizeof(cd));
    } catch (...) {
#pragma omp critical(isac_kernel_table_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

RMatrix evaluate_spectrum(const KernelTable& table, const CMatrix& noise_basis, int q) {
  const int n = table.dim();
  if (noise_basis.rows() != n) throw std::invalid_argument("evaluate_spectrum: noise basis size");
  if (q < 1 || q >= n) throw std::invalid_argument("evaluate_spectrum: rank must satisfy 1 <= q < M");
  const CMatrix noise_adj = noise_basis.adjoint();
  const int cols = is_truncated(table.estimator()) ? q : n;
  const auto& g = table.grid();
  const Eigen::Index ns = g.sigma_rad.size();
  const Eigen::Index nodes = g.size();
  RMatrix values(g.theta_rad.size(), ns);

#pragma omp parallel for schedule(static)
  for (Eigen::Index node = 0; node < nodes; ++node) {
    const double e = projection_energy(noise_adj, table.basis(node).data(), n, cols);
    values(node / ns, node % ns) = 1.0 / (e + kSpectrumEpsilon);
  }
  return values;
}

std::shared_ptr<const KernelTable> KernelCache::get(Estimator e, const SpreadGrid& grid,
                                                    const CMatrix& r_x) {
  const Key key{static_cast<int>(e), fingerprint(grid), fingerprint(r_x)};
  std::lock_guard lock(mu_);
  auto it = tables_.find(key);
  if (it != tables_.end()) return it->second;
  auto table = std::make_shared<const KernelTable>(e, grid, r_x);
  tables_.emplace(key, table);
  return table;
}

void KernelCache::clear() {
  std::lock_guard lock(mu_);
  tables_.clear();
}

RVector range_profile_direct(const CVector& series) {
  const Eigen::Index p_count = series.size();
  RVector q(p_count);
#pragma omp parallel for schedule(static)
  for (Eigen::Index pp = 0; pp < p_count; ++pp) {
    cd acc(0.0, 0.0);
    for (Eigen::Index p = 0; p < p_count; ++p) {
      // (p * pp) mod P keeps the phase argument small and exact.
      const auto idx = static_cast<double>((p * pp) % p_count);
      acc += series[p] * std::polar(1.0, 2.0 * kPi * idx / static_cast<double>(p_count));
    }
    q[pp] = std::norm(acc);
  }
  return q;
}

RVector range_profile_fft(const CVector& series) {
  const int p_count = static_cast<int>(series.size());
  CVector in = series;
  CVector out(p_count);
  auto* in_ptr = reinterpret_cast<fftw_complex*>(in.data());
  auto* out_ptr = reinterpret_cast<fftw_complex*>(out.data());
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_1d(p_count, in_ptr, out_ptr, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  if (plan == nullptr) throw std::runtime_error("range_profile_fft: FFTW planning failed");
  fftw_execute(plan);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out.cwiseAbs2();
}

namespace reference {

RMatrix evaluate_spectrum(Estimator e, const SpreadGrid& grid, const CMatrix& r_x,
                          const CMatrix& noise_basis, int q) {
  const auto n = static_cast<int>(r_x.rows());
  if (q < 1 || q >= n) throw std::invalid_argument("evaluate_spectrum: rank must satisfy 1 <= q < M");
  RMatrix values(grid.theta_rad.size(), grid.sigma_rad.size());
  for (Eigen::Index i = 0; i < grid.theta_rad.size(); ++i) {
    for (Eigen::Index j = 0; j < grid.sigma_rad.size(); ++j) {
      const double th = grid.theta_rad[i];
      const double sg = grid.sigma_rad[j];
      CMatrix model;
      if (is_exact(e)) {
        model = j_exact(th, sg, r_x);
      } else {
        const CMatrix ja = j_approx(th, sg, n);
        model = ja * r_x * ja.adjoint();
      }
      CMatrix basis;
      if (is_truncated(e)) {
        Eigen::SelfAdjointEigenSolver<CMatrix> eig(0.5 * (model + model.adjoint()));
        basis = eig.eigenvectors().rowwise().reverse().leftCols(q);
      } else {
        basis = model / model.norm();
      }
      const double energy = (noise_basis.adjoint() * basis).squaredNorm();
      values(i, j) = 1.0 / (energy + kSpectrumEpsilon);
    }
  }
  return values;
}

RVector range_profile_direct(const CVector& series) {
  const Eigen::Index p_count = series.size();
  RVector q(p_count);
  for (Eigen::Index pp = 0; pp < p_count; ++pp) {
    cd acc(0.0, 0.0);
    for (Eigen::Index p = 0; p < p_count; ++p) {
      acc += series[p] * std::exp(cd(0.0, 2.0 * kPi * static_cast<double>(p * pp) /
                                              static_cast<double>(p_count)));
    }
    q[pp] = std::norm(acc);
  }
  return q;
}

}  // namespace reference

}  // namespace isac::kernels
