#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "isac/angle_est.hpp"
#include "isac/beamform.hpp"
#include "isac/kernels.hpp"
#include "isac/range_est.hpp"
#include "isac/scene.hpp"

namespace isac {

// Raised for malformed config or sweep files; the message carries
// "<source>:<line>: ...".
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ProbeMode {
  isotropic,  // sqrt(P_b / N_b) I
  optimized,  // solve_beamformer on the true targets and the users' rates
};

struct HarnessOptions {
  double eta = 0.4;
  double chi = 0.99;
  int frames = 1;
  ProbeMode probe = ProbeMode::isotropic;
  SupportRule range_rule = SupportRule::contiguous;
  Estimator range_estimator = Estimator::tms_approx;
  std::vector<Estimator> estimators{Estimator::tms, Estimator::tms_approx, Estimator::cms,
                                    Estimator::cms_approx};
  SpreadGrid grid = SpreadGrid::from_degrees(-90.0, 90.0, 0.1, 0.0, 10.0, 0.1);
  double peak_window_deg = 3.0;
  bool beamform = true;
  std::uint64_t seed = 1;
  int trials = 1;
};

// Configuration as written in the file: physical units, before the
// receiver noise is resolved from the SNR.
struct Scenario {
  ScenarioConfig cfg;  // reflection coefficients left empty; drawn per trial
  HarnessOptions opt;
  std::optional<double> snr_db = 20.0;  // empty: receiver noise is noise_dbm
  double noise_dbm = -90.0;
  double carrier_hz = 28e9;
};

// Defaults: P = 792, N_b = M_b = 16, 30 dBm, -90 dBm noise, 3 users at
// 25/30/35 m and -10/-30/-50 degrees, one target (50 deg, 5 deg, 40 m, 2 m)
// with 100 rays, eta = 0.4, chi = 0.99.
Scenario default_scenario();

// Key-value text: one "key = value" per line, '#' starts a comment.
Scenario parse_scenario(std::istream& in, const std::string& source = "<config>");
Scenario load_scenario(const std::filesystem::path& path);

// Free-space amplitude lambda / (4 pi d).
double free_space_gain(double distance_m, double carrier_hz);

// Scenario with the receiver noise fixed (by SNR if given) and validated.
ScenarioConfig resolve(const Scenario& s);

enum class SweepParameter { snr_db, sigma_theta_deg, eta, chi, rate_threshold };

std::string_view to_string(SweepParameter p);

struct SweepSpec {
  SweepParameter parameter = SweepParameter::snr_db;
  std::vector<double> values;
  int trials_per_point = 1;
  std::vector<Estimator> estimators;  // empty: the scenario's list

  void validate() const;
};

SweepSpec parse_sweep(std::istream& in, const std::string& source = "<sweep>");
SweepSpec load_sweep(const std::filesystem::path& path);

void apply_sweep_value(Scenario& s, SweepParameter p, double value);

// Everything a trial needs that does not depend on the seed.
struct TrialContext {
  Scenario scenario;
  ScenarioConfig cfg;
  CMatrix probe;
  std::map<Estimator, std::shared_ptr<const kernels::KernelTable>> tables;
};

TrialContext make_context(const Scenario& s, kernels::KernelCache& cache);

struct TrialResult {
  std::uint64_t seed = 0;
  std::map<Estimator, AngleEstimate> angles;
  std::map<Estimator, std::string> angle_errors;
  std::vector<RangeEstimate> ranges;
  std::string range_error;
  std::optional<BeamformerSolution> beam;
  std::string beam_error;
};

// Frames -> covariance -> angles (each estimator) -> ranges (with the range
// estimator's angles) -> beamformer on those angles. Deterministic in seed.
TrialResult run_trial(const TrialContext& ctx, std::uint64_t seed);

// Spectrum of the given estimator on the frames run_trial would draw for seed.
SpreadSpectrum trial_spectrum(const TrialContext& ctx, Estimator e, std::uint64_t seed);

// Beamformer for the true targets with every user's threshold set to rate.
BeamformerSolution design_beamformer(const Scenario& s, double rate_bps_hz);

// Trials for seeds seed .. seed + trials - 1, run in parallel, returned in seed order.
std::vector<TrialResult> run_trials(const TrialContext& ctx, std::uint64_t seed, int trials);

struct RmseRow {
  double swept_value = 0.0;
  Estimator estimator = Estimator::tms;
  std::string parameter;  // theta, sigma_theta, d, sigma_d
  double rmse = 0.0;
  int trials = 0;
  int failures = 0;
};

using RmseTable = std::vector<RmseRow>;

// RMSE rows for one batch of trials. Estimates are paired with the true
// targets after sorting both by angle. Angles in degrees, ranges in metres.
RmseTable aggregate(const std::vector<TrialResult>& trials, const ScenarioConfig& truth,
                    const std::vector<Estimator>& estimators, Estimator range_estimator,
                    double swept_value);

RmseTable run_sweep(const Scenario& s, const SweepSpec& spec, kernels::KernelCache& cache);

// CSV: ',' separator, '.' decimals, header row, LF endings, 17 significant digits.
std::string format_double(double v);
void write_rmse_csv(const std::filesystem::path& path, const RmseTable& table,
                    std::string_view swept_name = "swept_value");
// angles.csv, ranges.csv and beamformer.csv for a batch of trials.
void write_trial_csvs(const std::filesystem::path& dir, const std::vector<TrialResult>& trials,
                      const TrialContext& ctx);
void write_spectrum_csv(const std::filesystem::path& path, const SpreadSpectrum& spectrum);
void write_beampattern_csv(const std::filesystem::path& path, const std::vector<double>& rates,
                           const RVector& theta_rad, const std::vector<RVector>& patterns);

}  // namespace isac
