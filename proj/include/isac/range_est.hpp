#pragma once

#include <vector>

#include "isac/angle_est.hpp"
#include "isac/scene.hpp"

namespace isac {

struct NormalizedSeries {
  CMatrix mu;                          // M_b x P
  double regularized_fraction = 0.0;   // share of entries whose denominator was guarded
};

struct RangeProfile {
  RVector q_values;        // Q(p') for p' = 0 .. P-1
  double bin_to_meters = 0.0;  // c / (4 df P); d = bin_to_meters * (p'_min + p'_max)
};

struct RangeEstimate {
  double mean_distance_m = 0.0;
  double range_spread_m = 0.0;
  int bin_min = 0;
  int bin_max = 0;
};

enum class SupportRule {
  contiguous,  // largest run of super-threshold bins around the peak
  global,      // min/max over every super-threshold bin
};

// J_app(theta, sigma) x_p: the expected receive direction of one target.
CVector conditional_reference(double theta_hat, double sigma_theta_hat, const CVector& tx_signal_column);

// Entrywise y ./ ybar; a denominator d with |d| < eps becomes d + eps e^{j arg d}.
NormalizedSeries normalize_received(const ReceivedFrame& frame, const CMatrix& reference, double eps);

// Default guard: 1e-3 times the median reference magnitude.
double default_division_eps(const CMatrix& reference);

// Q(p') = |sum_p (1^T mu_p) exp(+j 2 pi p p' / P)|^2.
RangeProfile range_profile(const NormalizedSeries& mu, double subcarrier_spacing_hz);

RangeEstimate extract_range(const RangeProfile& profile, double eta, double subcarrier_spacing_hz,
                            int p_count, SupportRule rule = SupportRule::contiguous);

// Per-target pipeline: reference from that target's angle estimate,
// normalization, profile, extraction.
std::vector<RangeEstimate> estimate_range(const ReceivedFrame& frame, const AngleEstimate& angles,
                                          const ScenarioConfig& cfg, double eta,
                                          SupportRule rule = SupportRule::contiguous);

}  // namespace isac
