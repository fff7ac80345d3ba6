#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "isac/scene.hpp"
#include "isac/types.hpp"

namespace isac {

enum class Estimator { tms, tms_approx, cms, cms_approx };

std::string_view to_string(Estimator e);
Estimator parse_estimator(std::string_view name);
// TMS variants keep only the leading q model eigenvectors.
bool is_truncated(Estimator e);
// Exact variants depend on the full transmit covariance through J.
bool is_exact(Estimator e);

// Search grid for (theta, sigma_theta), stored in radians.
struct SpreadGrid {
  RVector theta_rad;
  RVector sigma_rad;

  Eigen::Index size() const { return theta_rad.size() * sigma_rad.size(); }
  // Inclusive ranges; nodes are min + i * step so no drift accumulates.
  static SpreadGrid from_degrees(double theta_min, double theta_max, double theta_step,
                                 double sigma_min, double sigma_max, double sigma_step);
  // [-90, 90] x [0, 10] in 0.1 degree steps.
  static SpreadGrid default_grid();
};

struct SpreadSpectrum {
  RVector theta_grid;
  RVector sigma_grid;
  RMatrix values;  // |theta| x |sigma|

  // (theta index, sigma index) of the largest value.
  std::pair<Eigen::Index, Eigen::Index> argmax() const;
};

struct CovarianceEstimate {
  CMatrix r_y;
  int n_snapshots = 0;
};

struct SubspaceSplit {
  CMatrix signal_basis;  // M x q
  CMatrix noise_basis;   // M x (M - q)
  RVector eigenvalues;   // descending
  int rank = 0;
};

struct AnglePair {
  double theta_rad = 0.0;
  double sigma_theta_rad = 0.0;
};
using AngleEstimate = std::vector<AnglePair>;

// Noise subspace of the measured covariance with the energy-fraction rank.
struct MeasuredSubspace {
  CMatrix noise_basis;
  RVector denoised_eigenvalues;  // descending
  int rank = 0;
};

// (1/(F P)) sum y_p y_p^H over every snapshot of every frame.
CovarianceEstimate sample_covariance(std::span<const ReceivedFrame> frames);

// R - sigma^2 I with eigenvalues floored at zero.
CMatrix denoise(const CovarianceEstimate& r, double noise_var);

// Smallest q whose leading eigenvalues hold a fraction >= chi of the energy.
int select_rank(const RVector& eigenvalues_desc, double chi);

SubspaceSplit subspace_split(const CMatrix& hermitian, int q);

MeasuredSubspace measured_subspace(const CovarianceEstimate& r_hat, double noise_var, double chi);

// Model kernel behind each estimator: J(theta, sigma; R_X) for the exact
// variants, J_app R_X J_app^H for the approximate ones.
CMatrix model_matrix(Estimator e, double theta, double sigma_theta, const CMatrix& r_x);

// Per-node model basis: all eigenvectors of the model matrix in descending
// eigenvalue order (TMS) or the Frobenius-normalized model matrix (CMS).
CMatrix model_basis(Estimator e, double theta, double sigma_theta, const CMatrix& r_x);

// Spread-MUSIC pseudo-spectrum on a grid; R_X is the probing covariance V V^H.
// Builds a fresh kernel table; use kernels::KernelTable directly to reuse it.
SpreadSpectrum compute_spectrum(Estimator e, const CovarianceEstimate& r_hat, double noise_var,
                                const CMatrix& r_x, const SpreadGrid& grid, double chi);

SpreadSpectrum tms_spectrum(const CovarianceEstimate& r_hat, double noise_var,
                            const ScenarioConfig& cfg, const CMatrix& beamformer,
                            const SpreadGrid& grid, double chi);
SpreadSpectrum tms_approx_spectrum(const CovarianceEstimate& r_hat, double noise_var,
                                   const CMatrix& r_x, const SpreadGrid& grid, double chi);
SpreadSpectrum cms_spectrum(const CovarianceEstimate& r_hat, double noise_var, const CMatrix& r_x,
                            const SpreadGrid& grid, double chi, bool exact);

// The n_targets largest local maxima, suppressing +-window in theta around
// each accepted peak. Throws if the surface has too few maxima.
AngleEstimate estimate_angles(const SpreadSpectrum& spectrum, int n_targets,
                              double window_rad = deg2rad(3.0));

}  // namespace isac
