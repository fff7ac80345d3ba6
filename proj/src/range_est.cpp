#include "isac/range_est.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "isac/kernels.hpp"
#include "isac/spread_model.hpp"

namespace isac {

CVector conditional_reference(double theta_hat, double sigma_theta_hat, const CVector& tx_signal_column) {
  const auto n = static_cast<int>(tx_signal_column.size());
  return j_approx(theta_hat, sigma_theta_hat, n) * tx_signal_column;
}

double default_division_eps(const CMatrix& reference) {
  std::vector<double> mags(static_cast<std::size_t>(reference.size()));
  for (Eigen::Index i = 0; i < reference.size(); ++i) mags[static_cast<std::size_t>(i)] = std::abs(reference.data()[i]);
  if (mags.empty()) return 1e-12;
  auto mid = mags.begin() + static_cast<std::ptrdiff_t>(mags.size() / 2);
  std::nth_element(mags.begin(), mid, mags.end());
  return std::max(1e-3 * *mid, 1e-300);
}

NormalizedSeries normalize_received(const ReceivedFrame& frame, const CMatrix& reference, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("normalize_received: eps must be positive");
  if (reference.rows() != frame.rx.rows() || reference.cols() != frame.rx.cols()) {
    throw std::invalid_argument("normalize_received: reference shape differs from received frame");
  }
  NormalizedSeries out;
  out.mu.resize(frame.rx.rows(), frame.rx.cols());
  Eigen::Index guarded = 0;
  for (Eigen::Index p = 0; p < frame.rx.cols(); ++p) {
    for (Eigen::Index m = 0; m < frame.rx.rows(); ++m) {
      cd d = reference(m, p);
      if (std::abs(d) < eps) {
        // arg(0) = 0, so an exact zero becomes +eps.
        d += std::polar(eps, std::arg(d));
        ++guarded;
      }
      out.mu(m, p) = frame.rx(m, p) / d;
    }
  }
  out.regularized_fraction =
      out.mu.size() ? static_cast<double>(guarded) / static_cast<double>(out.mu.size()) : 0.0;
  return out;
}

RangeProfile range_profile(const NormalizedSeries& mu, double subcarrier_spacing_hz) {
  const Eigen::Index p_count = mu.mu.cols();
  if (p_count < 2) throw std::invalid_argument("range_profile: need at least two subcarriers");
  const CVector series = mu.mu.colwise().sum().transpose();
  RangeProfile out;
  out.q_values = kernels::range_profile_fft(series);
  out.bin_to_meters = kSpeedOfLight / (4.0 * subcarrier_spacing_hz * static_cast<double>(p_count));
  return out;
}

RangeEstimate extract_range(const RangeProfile& profile, double eta, double subcarrier_spacing_hz,
                            int p_count, SupportRule rule) {
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("extract_range: eta must lie in (0, 1]");
  const RVector& q = profile.q_values;
  if (q.size() != p_count) throw std::invalid_argument("extract_range: profile length differs from P");
  Eigen::Index peak = 0;
  const double q_max = q.maxCoeff(&peak);
  if (!(q_max > 0.0) || !std::isfinite(q_max)) {
    throw std::invalid_argument("extract_range: profile must be finite and nonzero");
  }
  const auto above = [&](Eigen::Index i) { return q[i] / q_max >= eta; };

  Eigen::Index lo = peak, hi = peak;
  if (rule == SupportRule::contiguous) {
    while (lo > 0 && above(lo - 1)) --lo;
    while (hi + 1 < q.size() && above(hi + 1)) ++hi;
  } else {
    lo = q.size();
    hi = -1;
    for (Eigen::Index i = 0; i < q.size(); ++i) {
      if (above(i)) {
        lo = std::min(lo, i);
        hi = std::max(hi, i);
      }
    }
  }

  const double scale = kSpeedOfLight / (4.0 * subcarrier_spacing_hz * p_count);
  RangeEstimate est;
  est.bin_min = static_cast<int>(lo);
  est.bin_max = static_cast<int>(hi);
  est.mean_distance_m = scale * static_cast<double>(lo + hi);
  est.range_spread_m = scale * static_cast<double>(hi - lo) / std::sqrt(3.0);
  return est;
}

std::vector<RangeEstimate> estimate_range(const ReceivedFrame& frame, const AngleEstimate& angles,
                                          const ScenarioConfig& cfg, double eta, SupportRule rule) {
  std::vector<RangeEstimate> out;
  out.reserve(angles.size());
  const int p_count = frame.n_subcarriers();
  for (const auto& a : angles) {
    const CMatrix ref = j_approx(a.theta_rad, a.sigma_theta_rad, cfg.n()) * frame.tx_signal;
    const NormalizedSeries mu = normalize_received(frame, ref, default_division_eps(ref));
    const RangeProfile prof = range_profile(mu, cfg.ofdm.subcarrier_spacing_hz);
    out.push_back(extract_range(prof, eta, cfg.ofdm.subcarrier_spacing_hz, p_count, rule));
  }
  return out;
}

}  // namespace isac
