#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "isac/types.hpp"

namespace isac {

using Rng = std::mt19937_64;

// Half-wavelength ULA; the receive side mirrors the transmit side.
struct ArrayConfig {
  int n_tx = 16;
  int n_rx = 16;

  void validate() const;
};

struct OfdmConfig {
  int n_subcarriers = 792;
  double subcarrier_spacing_hz = 0.0;
  double symbol_time_s = 0.0;
  double cp_time_s = 0.0;

  // Spacing derived as 1 / (symbol + cyclic prefix).
  static OfdmConfig from_timing(int n_subcarriers, double symbol_time_s, double cp_time_s);

  // Largest distance whose round-trip delay does not alias across subcarriers.
  double max_unambiguous_range_m() const { return kSpeedOfLight / (2.0 * subcarrier_spacing_hz); }

  void validate() const;
};

// Cluster-of-rays target. Ray angles and distances are uniform with
// half-widths sqrt(3) times the respective spread.
struct ClusterTarget {
  double mean_angle_rad = 0.0;
  double angle_spread_rad = 0.0;
  double mean_distance_m = 1.0;
  double range_spread_m = 0.0;
  int n_rays = 1;
  CVector reflection_coeffs;

  double angle_half_width() const;
  double range_half_width() const;
  void validate() const;
};

struct RayRealization {
  std::vector<double> angles_rad;
  std::vector<double> distances_m;

  std::size_t size() const { return angles_rad.size(); }
  double delay_s(std::size_t r) const { return 2.0 * distances_m[r] / kSpeedOfLight; }
  // exp(-j 2 pi p df tau_r)
  cd subcarrier_phase(std::size_t r, int p, double subcarrier_spacing_hz) const;
};

struct DownlinkUser {
  double angle_rad = 0.0;
  cd channel_coeff{1.0, 0.0};
  double noise_var = 1.0;
  double rate_threshold_bps_hz = 0.0;

  void validate() const;
};

struct ScenarioConfig {
  ArrayConfig array;
  OfdmConfig ofdm;
  std::vector<ClusterTarget> targets;
  std::vector<DownlinkUser> users;
  double tx_power = 1.0;
  double rx_noise_var = 1.0;
  std::uint64_t rng_seed = 0;

  int n() const { return array.n_tx; }
  // Channel gain scale n_tx * n_rx / n_rays of target k.
  double kappa(std::size_t k) const;
  // sum_k kappa_k ||alpha_k||^2 P_b / sigma_b^2, the received sensing SNR.
  double sensing_snr() const;
  // Receiver noise variance that realizes the given sensing SNR.
  double noise_var_for_snr_db(double snr_db) const;

  void validate() const;
};

struct ReceivedFrame {
  CMatrix rx;          // M_b x P, column p is y_p
  CMatrix tx_symbols;  // N_b x P, column p is s_p
  CMatrix tx_signal;   // N_b x P, column p is x_p = V s_p

  int n_subcarriers() const { return static_cast<int>(rx.cols()); }
};

// Element m is exp(j pi (m - (n-1)/2) sin(angle)).
CVector steering_vector(double angle_rad, int n);

RayRealization sample_rays(const ClusterTarget& target, Rng& rng);

// i.i.d. unit-modulus reflection coefficients with uniform phase.
CVector draw_reflection_coeffs(int n_rays, Rng& rng);

// sqrt(kappa) * sum_{k,r} alpha_{k,r} omega^p_{k,r} a(sin theta_{k,r}) a^H(sin theta_{k,r}).
// kappa is taken per target from its ray count.
CMatrix radar_channel(std::span<const RayRealization> rays_per_target,
                      std::span<const CVector> coeffs, int subcarrier_index,
                      const ScenarioConfig& cfg);

// Row vector h_u^H = sqrt(N_b) beta_u a^H(phi_u).
Eigen::RowVectorXcd downlink_channel(const DownlinkUser& user, int n_tx);

// Unit-energy QPSK streams; the first n_users rows carry user data, the rest
// are radar probing streams.
CMatrix transmit_symbols(int n_users, int n_tx, int n_subcarriers, Rng& rng);

// One coherent OFDM symbol: rays drawn once, then held across subcarriers.
ReceivedFrame simulate_frame(const ScenarioConfig& cfg, const CMatrix& beamformer, Rng& rng);

// Same, with externally supplied ray realizations (one per target).
ReceivedFrame simulate_frame(const ScenarioConfig& cfg, const CMatrix& beamformer,
                             std::span<const RayRealization> rays, Rng& rng);

// sqrt(P_b / N_b) I
CMatrix isotropic_beamformer(int n, double tx_power);

}  // namespace isac
