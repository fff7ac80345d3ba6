#include "isac/scene.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace isac {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

cd circular_gaussian(Rng& rng, double variance) {
  std::normal_distribution<double> n01(0.0, std::sqrt(variance / 2.0));
  const double re = n01(rng);
  const double im = n01(rng);
  return {re, im};
}

}  // namespace

void ArrayConfig::validate() const {
  require(n_tx >= 1, "array.n_tx must be positive");
  require(n_rx >= 1, "array.n_rx must be positive");
  require(n_tx == n_rx, "array.n_tx must equal array.n_rx");
}

OfdmConfig OfdmConfig::from_timing(int n_subcarriers, double symbol_time_s, double cp_time_s) {
  OfdmConfig o;
  o.n_subcarriers = n_subcarriers;
  o.symbol_time_s = symbol_time_s;
  o.cp_time_s = cp_time_s;
  o.subcarrier_spacing_hz = 1.0 / (symbol_time_s + cp_time_s);
  return o;
}

void OfdmConfig::validate() const {
  require(n_subcarriers >= 1, "ofdm.n_subcarriers must be positive");
  require(subcarrier_spacing_hz > 0.0, "ofdm.subcarrier_spacing_hz must be positive");
  require(symbol_time_s > 0.0, "ofdm.symbol_time_s must be positive");
  require(cp_time_s >= 0.0, "ofdm.cp_time_s must be nonnegative");
  const double expected = 1.0 / (symbol_time_s + cp_time_s);
  require(std::abs(subcarrier_spacing_hz - expected) <= 1e-9 * expected,
          "ofdm.subcarrier_spacing_hz must equal 1/(symbol_time_s + cp_time_s)");
}

double ClusterTarget::angle_half_width() const { return std::sqrt(3.0) * angle_spread_rad; }
double ClusterTarget::range_half_width() const { return std::sqrt(3.0) * range_spread_m; }

void ClusterTarget::validate() const {
  require(std::abs(mean_angle_rad) < kPi / 2.0, "target.theta must lie in (-90, 90) degrees");
  require(angle_spread_rad >= 0.0, "target.sigma_theta must be nonnegative");
  require(mean_distance_m > 0.0, "target.distance must be positive");
  require(range_spread_m >= 0.0, "target.sigma_d must be nonnegative");
  require(n_rays >= 1, "target.n_rays must be positive");
  require(std::abs(mean_angle_rad) + angle_half_width() < kPi / 2.0,
          "target.sigma_theta: angular support leaves (-90, 90) degrees");
  require(mean_distance_m - range_half_width() > 0.0,
          "target.sigma_d: range support reaches zero distance");
  require(reflection_coeffs.size() == 0 || reflection_coeffs.size() == n_rays,
          "target.reflection_coeffs length must equal n_rays");
}

cd RayRealization::subcarrier_phase(std::size_t r, int p, double subcarrier_spacing_hz) const {
  return std::polar(1.0, -2.0 * kPi * p * subcarrier_spacing_hz * delay_s(r));
}

void DownlinkUser::validate() const {
  require(noise_var > 0.0, "user.noise_var must be positive");
  require(rate_threshold_bps_hz >= 0.0, "user.rate must be nonnegative");
  require(std::abs(angle_rad) <= kPi / 2.0, "user.angle must lie in [-90, 90] degrees");
}

double ScenarioConfig::kappa(std::size_t k) const {
  return static_cast<double>(array.n_tx) * array.n_rx / targets.at(k).n_rays;
}

double ScenarioConfig::sensing_snr() const {
  double gain = 0.0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    gain += kappa(k) * targets[k].reflection_coeffs.squaredNorm();
  }
  return gain * tx_power / rx_noise_var;
}

double ScenarioConfig::noise_var_for_snr_db(double snr_db) const {
  double gain = 0.0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto& t = targets[k];
    const double alpha2 =
        t.reflection_coeffs.size() ? t.reflection_coeffs.squaredNorm() : static_cast<double>(t.n_rays);
    gain += kappa(k) * alpha2;
  }
  if (gain <= 0.0) throw std::invalid_argument("noise_var_for_snr_db: scenario has no target energy");
  return gain * tx_power / db2lin(snr_db);
}

void ScenarioConfig::validate() const {
  array.validate();
  ofdm.validate();
  require(tx_power > 0.0, "tx_power must be positive");
  require(rx_noise_var > 0.0, "rx_noise_var must be positive");
  require(static_cast<int>(users.size()) <= array.n_tx, "number of users must not exceed n_tx");
  for (const auto& t : targets) {
    t.validate();
    require(t.mean_distance_m + t.range_half_width() < ofdm.max_unambiguous_range_m(),
            "target.distance exceeds the unambiguous range c/(2 df)");
  }
  for (const auto& u : users) u.validate();
}

CVector steering_vector(double angle_rad, int n) {
  const double s = std::sin(angle_rad);
  const double center = 0.5 * (n - 1);
  CVector a(n);
  for (int m = 0; m < n; ++m) a[m] = std::polar(1.0, kPi * (m - center) * s);
  return a;
}

RayRealization sample_rays(const ClusterTarget& target, Rng& rng) {
  RayRealization rays;
  rays.angles_rad.resize(target.n_rays);
  rays.distances_m.resize(target.n_rays);
  const double dt = target.angle_half_width();
  const double dd = target.range_half_width();
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int r = 0; r < target.n_rays; ++r) {
    rays.angles_rad[r] = target.mean_angle_rad + dt * unit(rng);
    rays.distances_m[r] = target.mean_distance_m + dd * unit(rng);
  }
  return rays;
}

CVector draw_reflection_coeffs(int n_rays, Rng& rng) {
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  CVector alpha(n_rays);
  for (int r = 0; r < n_rays; ++r) alpha[r] = std::polar(1.0, phase(rng));
  return alpha;
}

CMatrix radar_channel(std::span<const RayRealization> rays_per_target,
                      std::span<const CVector> coeffs, int subcarrier_index,
                      const ScenarioConfig& cfg) {
  if (rays_per_target.size() != coeffs.size()) {
    throw std::invalid_argument("radar_channel: ray and coefficient lists differ in length");
  }
  if (subcarrier_index < 0 || subcarrier_index >= cfg.ofdm.n_subcarriers) {
    throw std::invalid_argument("radar_channel: subcarrier index out of range");
  }
  const int n = cfg.array.n_tx;
  CMatrix h = CMatrix::Zero(cfg.array.n_rx, n);
  for (std::size_t k = 0; k < rays_per_target.size(); ++k) {
    const auto& rays = rays_per_target[k];
    if (static_cast<Eigen::Index>(rays.size()) != coeffs[k].size()) {
      throw std::invalid_argument("radar_channel: ray count does not match coefficient count");
    }
    const double scale = std::sqrt(static_cast<double>(cfg.array.n_tx) * cfg.array.n_rx / rays.size());
    for (std::size_t r = 0; r < rays.size(); ++r) {
      const CVector a = steering_vector(rays.angles_rad[r], n);
      const cd w = scale * coeffs[k][r] *
                   rays.subcarrier_phase(r, subcarrier_index, cfg.ofdm.subcarrier_spacing_hz);
      h.noalias() += w * a * a.adjoint();
    }
  }
  return h;
}

Eigen::RowVectorXcd downlink_channel(const DownlinkUser& user, int n_tx) {
  return std::sqrt(static_cast<double>(n_tx)) * user.channel_coeff *
         steering_vector(user.angle_rad, n_tx).adjoint();
}

CMatrix transmit_symbols(int n_users, int n_tx, int n_subcarriers, Rng& rng) {
  if (n_users > n_tx) throw std::invalid_argument("transmit_symbols: more users than antennas");
  static const double h = 1.0 / std::sqrt(2.0);
  std::uniform_int_distribution<int> quadrant(0, 3);
  CMatrix s(n_tx, n_subcarriers);
  for (int p = 0; p < n_subcarriers; ++p) {
    for (int i = 0; i < n_tx; ++i) {
      const int q = quadrant(rng);
      s(i, p) = cd((q & 1) ? -h : h, (q & 2) ? -h : h);
    }
  }
  return s;
}

CMatrix isotropic_beamformer(int n, double tx_power) {
  return CMatrix::Identity(n, n) * cd(std::sqrt(tx_power / n), 0.0);
}

ReceivedFrame simulate_frame(const ScenarioConfig& cfg, const CMatrix& beamformer, Rng& rng) {
  std::vector<RayRealization> rays;
  rays.reserve(cfg.targets.size());
  for (const auto& t : cfg.targets) rays.push_back(sample_rays(t, rng));
  return simulate_frame(cfg, beamformer, rays, rng);
}

ReceivedFrame simulate_frame(const ScenarioConfig& cfg, const CMatrix& beamformer,
                             std::span<const RayRealization> rays, Rng& rng) {
  const int n = cfg.array.n_tx;
  const int m = cfg.array.n_rx;
  const int p_count = cfg.ofdm.n_subcarriers;
  if (beamformer.rows() != n || beamformer.cols() != n) {
    throw std::invalid_argument("simulate_frame: beamformer must be n_tx x n_tx");
  }
  if (beamformer.squaredNorm() > cfg.tx_power * (1.0 + 1e-6)) {
    throw std::invalid_argument("simulate_frame: beamformer exceeds the power budget");
  }
  if (rays.size() != cfg.targets.size()) {
    throw std::invalid_argument("simulate_frame: one ray realization per target required");
  }

  ReceivedFrame frame;
  frame.tx_symbols = transmit_symbols(static_cast<int>(cfg.users.size()), n, p_count, rng);
  frame.tx_signal = beamformer * frame.tx_symbols;
  frame.rx = CMatrix::Zero(m, p_count);

  // y_p = sqrt(kappa) sum_r alpha_r omega_r^p a_r (a_r^H x_p): rank-one per ray.
  for (std::size_t k = 0; k < cfg.targets.size(); ++k) {
    const auto& target = cfg.targets[k];
    const auto& rk = rays[k];
    if (static_cast<int>(rk.size()) != target.n_rays ||
        target.reflection_coeffs.size() != target.n_rays) {
      throw std::invalid_argument("simulate_frame: target rays/coefficients inconsistent with n_rays");
    }
    const double scale = std::sqrt(cfg.kappa(k));
    for (std::size_t r = 0; r < rk.size(); ++r) {
      const CVector a = steering_vector(rk.angles_rad[r], n);
      const Eigen::RowVectorXcd proj = a.adjoint() * frame.tx_signal;
      const double step = -2.0 * kPi * cfg.ofdm.subcarrier_spacing_hz * rk.delay_s(r);
      const cd gain = scale * target.reflection_coeffs[static_cast<Eigen::Index>(r)];
      for (int p = 0; p < p_count; ++p) {
        frame.rx.col(p).noalias() += (gain * std::polar(1.0, step * p) * proj[p]) * a;
      }
    }
  }

  if (cfg.rx_noise_var > 0.0) {
    for (int p = 0; p < p_count; ++p) {
      for (int i = 0; i < m; ++i) frame.rx(i, p) += circular_gaussian(rng, cfg.rx_noise_var);
    }
  }
  return frame;
}

}  // namespace isac
