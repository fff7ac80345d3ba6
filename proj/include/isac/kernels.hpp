#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <vector>

#include "isac/angle_est.hpp"

// Data-parallel kernels. Each OpenMP kernel has a serial counterpart under
// kernels::reference that recomputes everything from the literal model
// formulas; tests pin the two together and bench/ compares their speed.
namespace isac::kernels {

// Regularizer added to projection energies so spectra stay finite.
inline constexpr double kSpectrumEpsilon = 1e-12;

std::uint64_t fingerprint(const CMatrix& m);
std::uint64_t fingerprint(const SpreadGrid& g);

// Read-only per-node model bases for one (estimator, grid, R_X).
class KernelTable {
 public:
  KernelTable(Estimator e, SpreadGrid grid, const CMatrix& r_x);

  Estimator estimator() const { return estimator_; }
  const SpreadGrid& grid() const { return grid_; }
  int dim() const { return n_; }
  std::uint64_t r_x_fingerprint() const { return r_x_fp_; }

  // Node index is theta_index * |sigma| + sigma_index.
  Eigen::Map<const CMatrix> basis(Eigen::Index node) const {
    return {data_.data() + node * n_ * n_, n_, n_};
  }

 private:
  Estimator estimator_;
  SpreadGrid grid_;
  int n_;
  std::uint64_t r_x_fp_;
  std::vector<cd> data_;
};

// Spectrum values from a prebuilt table (OpenMP over grid nodes).
RMatrix evaluate_spectrum(const KernelTable& table, const CMatrix& noise_basis, int q);

// Shared cache keyed by (estimator, grid, R_X); concurrent readers are safe.
class KernelCache {
 public:
  std::shared_ptr<const KernelTable> get(Estimator e, const SpreadGrid& grid, const CMatrix& r_x);
  void clear();

 private:
  using Key = std::tuple<int, std::uint64_t, std::uint64_t>;
  std::mutex mu_;
  std::map<Key, std::shared_ptr<const KernelTable>> tables_;
};

// |sum_p x_p exp(+j 2 pi p p' / P)|^2, direct O(P^2) sum (OpenMP over p').
RVector range_profile_direct(const CVector& series);
// Same transform through FFTW's backward (positive exponent) DFT.
RVector range_profile_fft(const CVector& series);

namespace reference {

// Serial spectrum that rebuilds every node's model with the literal
// Kronecker-form J and a fresh eigendecomposition; no caching.
RMatrix evaluate_spectrum(Estimator e, const SpreadGrid& grid, const CMatrix& r_x,
                          const CMatrix& noise_basis, int q);

RVector range_profile_direct(const CVector& series);

}  // namespace reference

}  // namespace isac::kernels
