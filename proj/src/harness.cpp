#include "isac/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <omp.h>

namespace isac {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t at = 0;
  while (true) {
    const auto next = s.find(sep, at);
    out.push_back(trim(s.substr(at, next == std::string_view::npos ? std::string_view::npos : next - at)));
    if (next == std::string_view::npos) break;
    at = next + 1;
  }
  return out;
}

struct Line {
  int number;
  std::string key;
  std::string value;
};

std::vector<Line> read_key_values(std::istream& in, const std::string& source) {
  std::vector<Line> out;
  std::set<std::string> seen;
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    const auto hash = raw.find('#');
    const std::string text = trim(std::string_view(raw).substr(0, hash));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ParseError(source + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    Line l{number, trim(std::string_view(text).substr(0, eq)), trim(std::string_view(text).substr(eq + 1))};
    if (l.key.empty()) throw ParseError(source + ":" + std::to_string(number) + ": empty key");
    if (!seen.insert(l.key).second) {
      throw ParseError(source + ":" + std::to_string(number) + ": duplicate key '" + l.key + "'");
    }
    out.push_back(std::move(l));
  }
  return out;
}

class FieldReader {
 public:
  FieldReader(const std::string& source, const Line& line) : source_(source), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(source_ + ":" + std::to_string(line_.number) + ": " + line_.key + ": " + what);
  }

  double number() const {
    double v = 0.0;
    const char* b = line_.value.data();
    const char* e = b + line_.value.size();
    const auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e || !std::isfinite(v)) fail("expected a number, got '" + line_.value + "'");
    return v;
  }

  long long integer() const {
    long long v = 0;
    const char* b = line_.value.data();
    const char* e = b + line_.value.size();
    const auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) fail("expected an integer, got '" + line_.value + "'");
    return v;
  }

  bool boolean() const {
    if (line_.value == "true" || line_.value == "1" || line_.value == "yes") return true;
    if (line_.value == "false" || line_.value == "0" || line_.value == "no") return false;
    fail("expected true or false, got '" + line_.value + "'");
  }

  std::vector<Estimator> estimators() const {
    std::vector<Estimator> out;
    for (const auto& name : split(line_.value, ',')) {
      try {
        out.push_back(parse_estimator(name));
      } catch (const std::invalid_argument& e) {
        fail(e.what());
      }
    }
    return out;
  }

  std::vector<double> numbers() const {
    std::vector<double> out;
    if (line_.value.empty()) return out;
    for (const auto& item : split(line_.value, ',')) {
      double v = 0.0;
      const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc() || p != item.data() + item.size()) fail("expected a number list, got '" + item + "'");
      out.push_back(v);
    }
    return out;
  }

  const std::string& text() const { return line_.value; }

 private:
  const std::string& source_;
  const Line& line_;
};

struct TargetSpec {
  double theta_deg = 50.0;
  double sigma_theta_deg = 5.0;
  double distance_m = 40.0;
  double sigma_d_m = 2.0;
  int rays = 100;
};

struct UserSpec {
  double angle_deg = 0.0;
  double distance_m = 30.0;
  double rate = 0.0;
  std::optional<double> noise_dbm;
};

ClusterTarget make_target(const TargetSpec& t) {
  ClusterTarget c;
  c.mean_angle_rad = deg2rad(t.theta_deg);
  c.angle_spread_rad = deg2rad(t.sigma_theta_deg);
  c.mean_distance_m = t.distance_m;
  c.range_spread_m = t.sigma_d_m;
  c.n_rays = t.rays;
  return c;
}

DownlinkUser make_user(const UserSpec& u, double noise_dbm, double carrier_hz) {
  DownlinkUser d;
  d.angle_rad = deg2rad(u.angle_deg);
  d.channel_coeff = free_space_gain(u.distance_m, carrier_hz);
  d.noise_var = dbm2watt(u.noise_dbm.value_or(noise_dbm));
  d.rate_threshold_bps_hz = u.rate;
  return d;
}

void validate_options(const HarnessOptions& o) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(o.eta > 0.0 && o.eta <= 1.0, "eta must lie in (0, 1]");
  require(o.chi > 0.0 && o.chi <= 1.0, "chi must lie in (0, 1]");
  require(o.frames >= 1, "frames must be positive");
  require(o.trials >= 1, "trials must be positive");
  require(!o.estimators.empty(), "estimators must not be empty");
  require(o.grid.size() > 0, "grid must not be empty");
  require(o.peak_window_deg >= 0.0, "peak_window_deg must be nonnegative");
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void finish_csv(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// Frames drawn for one trial plus the configuration they were drawn from.
struct TrialFrames {
  ScenarioConfig cfg;
  std::vector<ReceivedFrame> frames;
  CovarianceEstimate cov;
};

TrialFrames draw_frames(const TrialContext& ctx, std::uint64_t seed) {
  TrialFrames t;
  t.cfg = ctx.cfg;
  Rng rng(seed);
  for (auto& target : t.cfg.targets) target.reflection_coeffs = draw_reflection_coeffs(target.n_rays, rng);
  t.frames.reserve(static_cast<std::size_t>(ctx.scenario.opt.frames));
  for (int f = 0; f < ctx.scenario.opt.frames; ++f) t.frames.push_back(simulate_frame(t.cfg, ctx.probe, rng));
  t.cov = sample_covariance(t.frames);
  return t;
}

std::vector<std::size_t> order_by_angle(const AngleEstimate& a) {
  std::vector<std::size_t> idx(a.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto x, auto y) { return a[x].theta_rad < a[y].theta_rad; });
  return idx;
}

}  // namespace

double free_space_gain(double distance_m, double carrier_hz) {
  return (kSpeedOfLight / carrier_hz) / (4.0 * kPi * distance_m);
}

Scenario default_scenario() {
  Scenario s;
  s.cfg.array = {16, 16};
  const double symbol = 1.0 / 120e3;
  s.cfg.ofdm = OfdmConfig::from_timing(792, symbol, symbol * 144.0 / 2048.0);
  s.cfg.tx_power = dbm2watt(30.0);
  s.cfg.targets = {make_target(TargetSpec{})};
  const UserSpec users[] = {{-10.0, 25.0, 0.0, {}}, {-30.0, 30.0, 0.0, {}}, {-50.0, 35.0, 0.0, {}}};
  for (const auto& u : users) s.cfg.users.push_back(make_user(u, s.noise_dbm, s.carrier_hz));
  s.cfg.rx_noise_var = dbm2watt(s.noise_dbm);
  return s;
}

Scenario parse_scenario(std::istream& in, const std::string& source) {
  Scenario s = default_scenario();
  const std::vector<Line> lines = read_key_values(in, source);

  int n_subcarriers = s.cfg.ofdm.n_subcarriers;
  double symbol_us = s.cfg.ofdm.symbol_time_s * 1e6;
  double cp_us = s.cfg.ofdm.cp_time_s * 1e6;
  double theta_min = -90.0, theta_max = 90.0, theta_step = 0.1;
  double sigma_min = 0.0, sigma_max = 10.0, sigma_step = 0.1;
  std::map<int, TargetSpec> targets;
  std::map<int, UserSpec> users;
  bool users_cleared = false;
  const std::vector<UserSpec> preset_users{{-10.0, 25.0, 0.0, {}}, {-30.0, 30.0, 0.0, {}}, {-50.0, 35.0, 0.0, {}}};

  for (const Line& l : lines) {
    const FieldReader f(source, l);
    const std::string& k = l.key;
    auto positive_int = [&]() {
      const long long v = f.integer();
      if (v < 1 || v > 1'000'000) f.fail("must be a positive integer");
      return static_cast<int>(v);
    };

    if (k.rfind("target.", 0) == 0 || k.rfind("user.", 0) == 0) {
      const auto parts = split(k, '.');
      if (parts.size() != 3) f.fail("expected <target|user>.<index>.<field>");
      int index = 0;
      const auto [p, ec] = std::from_chars(parts[1].data(), parts[1].data() + parts[1].size(), index);
      if (ec != std::errc() || p != parts[1].data() + parts[1].size() || index < 1) {
        f.fail("index must be a positive integer");
      }
      const std::string& field = parts[2];
      if (parts[0] == "target") {
        TargetSpec& t = targets[index];
        if (field == "theta_deg") t.theta_deg = f.number();
        else if (field == "sigma_theta_deg") t.sigma_theta_deg = f.number();
        else if (field == "distance_m") t.distance_m = f.number();
        else if (field == "sigma_d_m") t.sigma_d_m = f.number();
        else if (field == "rays") t.rays = positive_int();
        else f.fail("unknown target field '" + field + "'");
      } else {
        if (!users.count(index)) {
          users[index] = index <= static_cast<int>(preset_users.size()) ? preset_users[index - 1] : UserSpec{};
        }
        UserSpec& u = users[index];
        if (field == "angle_deg") u.angle_deg = f.number();
        else if (field == "distance_m") u.distance_m = f.number();
        else if (field == "rate_bps_hz") u.rate = f.number();
        else if (field == "noise_dbm") u.noise_dbm = f.number();
        else f.fail("unknown user field '" + field + "'");
      }
      continue;
    }

    if (k == "n_tx") s.cfg.array.n_tx = positive_int();
    else if (k == "n_rx") s.cfg.array.n_rx = positive_int();
    else if (k == "n_subcarriers") n_subcarriers = positive_int();
    else if (k == "symbol_time_us") symbol_us = f.number();
    else if (k == "cp_time_us") cp_us = f.number();
    else if (k == "tx_power_dbm") s.cfg.tx_power = dbm2watt(f.number());
    else if (k == "noise_dbm") s.noise_dbm = f.number();
    else if (k == "snr_db") {
      if (f.text() == "none") s.snr_db.reset();
      else s.snr_db = f.number();
    }
    else if (k == "carrier_ghz") s.carrier_hz = f.number() * 1e9;
    else if (k == "eta") s.opt.eta = f.number();
    else if (k == "chi") s.opt.chi = f.number();
    else if (k == "frames") s.opt.frames = positive_int();
    else if (k == "trials") s.opt.trials = positive_int();
    else if (k == "seed") {
      const long long v = f.integer();
      if (v < 0) f.fail("must be nonnegative");
      s.opt.seed = static_cast<std::uint64_t>(v);
    }
    else if (k == "probe") {
      if (f.text() == "isotropic") s.opt.probe = ProbeMode::isotropic;
      else if (f.text() == "optimized") s.opt.probe = ProbeMode::optimized;
      else f.fail("expected isotropic or optimized");
    }
    else if (k == "range_rule") {
      if (f.text() == "contiguous") s.opt.range_rule = SupportRule::contiguous;
      else if (f.text() == "global") s.opt.range_rule = SupportRule::global;
      else f.fail("expected contiguous or global");
    }
    else if (k == "range_estimator") {
      const auto list = f.estimators();
      if (list.size() != 1) f.fail("expected a single estimator");
      s.opt.range_estimator = list.front();
    }
    else if (k == "estimators") s.opt.estimators = f.estimators();
    else if (k == "beamform") s.opt.beamform = f.boolean();
    else if (k == "peak_window_deg") s.opt.peak_window_deg = f.number();
    else if (k == "grid.theta_min_deg") theta_min = f.number();
    else if (k == "grid.theta_max_deg") theta_max = f.number();
    else if (k == "grid.theta_step_deg") theta_step = f.number();
    else if (k == "grid.sigma_min_deg") sigma_min = f.number();
    else if (k == "grid.sigma_max_deg") sigma_max = f.number();
    else if (k == "grid.sigma_step_deg") sigma_step = f.number();
    else if (k == "users") {
      if (f.text() != "none") f.fail("only 'none' is accepted; list users as user.<i>.<field>");
      users_cleared = true;
    }
    else f.fail("unknown key");
  }

  if (users_cleared && !users.empty()) {
    throw ParseError(source + ": 'users = none' conflicts with user.<i> entries");
  }

  auto check_contiguous = [&](const auto& m, const char* what) {
    int expect = 1;
    for (const auto& [i, _] : m) {
      if (i != expect) {
        throw ParseError(source + ": " + what + " indices must run 1, 2, ... without gaps");
      }
      ++expect;
    }
  };
  check_contiguous(targets, "target");
  check_contiguous(users, "user");

  if (!(symbol_us > 0.0) || cp_us < 0.0) {
    throw std::invalid_argument("symbol_time_us must be positive and cp_time_us nonnegative");
  }
  s.cfg.ofdm = OfdmConfig::from_timing(n_subcarriers, symbol_us * 1e-6, cp_us * 1e-6);
  s.opt.grid = SpreadGrid::from_degrees(theta_min, theta_max, theta_step, sigma_min, sigma_max, sigma_step);
  if (!targets.empty()) {
    s.cfg.targets.clear();
    for (const auto& [_, t] : targets) s.cfg.targets.push_back(make_target(t));
  }
  if (!(s.carrier_hz > 0.0)) throw std::invalid_argument("carrier_ghz must be positive");
  std::vector<UserSpec> final_users = preset_users;
  if (users_cleared) final_users.clear();
  if (!users.empty()) {
    final_users.clear();
    for (const auto& [_, u] : users) final_users.push_back(u);
  }
  s.cfg.users.clear();
  for (const auto& u : final_users) {
    if (!(u.distance_m > 0.0)) throw std::invalid_argument("user.distance_m must be positive");
    s.cfg.users.push_back(make_user(u, s.noise_dbm, s.carrier_hz));
  }
  s.cfg.rx_noise_var = dbm2watt(s.noise_dbm);

  validate_options(s.opt);
  resolve(s);
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  return parse_scenario(in, path.string());
}

ScenarioConfig resolve(const Scenario& s) {
  ScenarioConfig cfg = s.cfg;
  if (cfg.targets.empty()) throw std::invalid_argument("scenario needs at least one target");
  cfg.rx_noise_var = s.snr_db ? cfg.noise_var_for_snr_db(*s.snr_db) : dbm2watt(s.noise_dbm);
  cfg.validate();
  return cfg;
}

std::string_view to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::snr_db: return "snr_db";
    case SweepParameter::sigma_theta_deg: return "sigma_theta_deg";
    case SweepParameter::eta: return "eta";
    case SweepParameter::chi: return "chi";
    case SweepParameter::rate_threshold: return "rate_threshold";
  }
  return "?";
}

void SweepSpec::validate() const {
  if (trials_per_point < 1) throw std::invalid_argument("sweep trials must be positive");
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (!(values[i] > values[i - 1])) throw std::invalid_argument("sweep values must be strictly increasing");
  }
}

SweepSpec parse_sweep(std::istream& in, const std::string& source) {
  SweepSpec spec;
  bool have_parameter = false;
  for (const Line& l : read_key_values(in, source)) {
    const FieldReader f(source, l);
    if (l.key == "parameter") {
      const std::string& v = f.text();
      if (v == "snr_db") spec.parameter = SweepParameter::snr_db;
      else if (v == "sigma_theta_deg") spec.parameter = SweepParameter::sigma_theta_deg;
      else if (v == "eta") spec.parameter = SweepParameter::eta;
      else if (v == "chi") spec.parameter = SweepParameter::chi;
      else if (v == "rate_threshold") spec.parameter = SweepParameter::rate_threshold;
      else f.fail("expected snr_db, sigma_theta_deg, eta, chi or rate_threshold");
      have_parameter = true;
    } else if (l.key == "values") {
      spec.values = f.numbers();
    } else if (l.key == "trials") {
      const long long t = f.integer();
      if (t < 1 || t > 1'000'000) f.fail("must be a positive integer");
      spec.trials_per_point = static_cast<int>(t);
    } else if (l.key == "estimators") {
      spec.estimators = f.estimators();
    } else {
      f.fail("unknown key");
    }
  }
  if (!have_parameter) throw ParseError(source + ": missing 'parameter'");
  spec.validate();
  return spec;
}

SweepSpec load_sweep(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open sweep " + path.string());
  return parse_sweep(in, path.string());
}

void apply_sweep_value(Scenario& s, SweepParameter p, double value) {
  switch (p) {
    case SweepParameter::snr_db: s.snr_db = value; break;
    case SweepParameter::sigma_theta_deg:
      for (auto& t : s.cfg.targets) t.angle_spread_rad = deg2rad(value);
      break;
    case SweepParameter::eta: s.opt.eta = value; break;
    case SweepParameter::chi: s.opt.chi = value; break;
    case SweepParameter::rate_threshold:
      for (auto& u : s.cfg.users) u.rate_threshold_bps_hz = value;
      break;
  }
}

TrialContext make_context(const Scenario& s, kernels::KernelCache& cache) {
  validate_options(s.opt);
  TrialContext ctx;
  ctx.scenario = s;
  ctx.cfg = resolve(s);
  const int n = ctx.cfg.n();
  if (s.opt.probe == ProbeMode::isotropic) {
    ctx.probe = isotropic_beamformer(n, ctx.cfg.tx_power);
  } else {
    AngleEstimate truth;
    for (const auto& t : ctx.cfg.targets) truth.push_back({t.mean_angle_rad, t.angle_spread_rad});
    const BeamformerSolution sol =
        solve_beamformer(radar_objective(truth, n), ctx.cfg.users, ctx.cfg.tx_power, ctx.cfg.rx_noise_var);
    if (sol.solver_status != SolverStatus::optimal) {
      throw std::runtime_error("probe: optimized beamformer is " + std::string(to_string(sol.solver_status)));
    }
    ctx.probe = sol.v;
  }
  const CMatrix r_x = ctx.probe * ctx.probe.adjoint();
  std::set<Estimator> needed(s.opt.estimators.begin(), s.opt.estimators.end());
  needed.insert(s.opt.range_estimator);
  for (Estimator e : needed) ctx.tables[e] = cache.get(e, s.opt.grid, r_x);
  return ctx;
}

TrialResult run_trial(const TrialContext& ctx, std::uint64_t seed) {
  const HarnessOptions& opt = ctx.scenario.opt;
  TrialResult res;
  res.seed = seed;
  const TrialFrames tf = draw_frames(ctx, seed);
  const int n_targets = static_cast<int>(tf.cfg.targets.size());

  std::optional<MeasuredSubspace> sub;
  std::string sub_error;
  try {
    sub = measured_subspace(tf.cov, tf.cfg.rx_noise_var, opt.chi);
  } catch (const std::exception& e) {
    sub_error = e.what();
  }

  std::set<Estimator> wanted(opt.estimators.begin(), opt.estimators.end());
  wanted.insert(opt.range_estimator);
  for (Estimator e : wanted) {
    if (!sub) {
      res.angle_errors[e] = sub_error;
      continue;
    }
    try {
      const auto& table = *ctx.tables.at(e);
      SpreadSpectrum sp{opt.grid.theta_rad, opt.grid.sigma_rad,
                        kernels::evaluate_spectrum(table, sub->noise_basis, sub->rank)};
      res.angles[e] = estimate_angles(sp, n_targets, deg2rad(opt.peak_window_deg));
    } catch (const std::exception& ex) {
      res.angle_errors[e] = ex.what();
    }
  }

  const auto it = res.angles.find(opt.range_estimator);
  if (it == res.angles.end()) {
    res.range_error = "no angle estimate from " + std::string(to_string(opt.range_estimator));
    res.beam_error = res.range_error;
    return res;
  }
  try {
    res.ranges = estimate_range(tf.frames.front(), it->second, tf.cfg, opt.eta, opt.range_rule);
  } catch (const std::exception& e) {
    res.range_error = e.what();
  }
  if (opt.beamform) {
    try {
      res.beam = solve_beamformer(radar_objective(it->second, tf.cfg.n()), tf.cfg.users, tf.cfg.tx_power,
                                  tf.cfg.rx_noise_var);
    } catch (const std::exception& e) {
      res.beam_error = e.what();
    }
  }
  return res;
}

SpreadSpectrum trial_spectrum(const TrialContext& ctx, Estimator e, std::uint64_t seed) {
  const TrialFrames tf = draw_frames(ctx, seed);
  const MeasuredSubspace sub = measured_subspace(tf.cov, tf.cfg.rx_noise_var, ctx.scenario.opt.chi);
  const auto it = ctx.tables.find(e);
  if (it == ctx.tables.end()) throw std::invalid_argument("trial_spectrum: estimator not in context");
  return {ctx.scenario.opt.grid.theta_rad, ctx.scenario.opt.grid.sigma_rad,
          kernels::evaluate_spectrum(*it->second, sub.noise_basis, sub.rank)};
}

BeamformerSolution design_beamformer(const Scenario& s, double rate_bps_hz) {
  Scenario local = s;
  apply_sweep_value(local, SweepParameter::rate_threshold, rate_bps_hz);
  const ScenarioConfig cfg = resolve(local);
  AngleEstimate truth;
  for (const auto& t : cfg.targets) truth.push_back({t.mean_angle_rad, t.angle_spread_rad});
  return solve_beamformer(radar_objective(truth, cfg.n()), cfg.users, cfg.tx_power, cfg.rx_noise_var);
}

std::vector<TrialResult> run_trials(const TrialContext& ctx, std::uint64_t seed, int trials) {
  std::vector<TrialResult> out(static_cast<std::size_t>(std::max(trials, 0)));
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < trials; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = run_trial(ctx, seed + static_cast<std::uint64_t>(i));
    } catch (...) {
#pragma omp critical(isac_trial_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

RmseTable aggregate(const std::vector<TrialResult>& trials, const ScenarioConfig& truth,
                    const std::vector<Estimator>& estimators, Estimator range_estimator,
                    double swept_value) {
  std::vector<const ClusterTarget*> sorted;
  for (const auto& t : truth.targets) sorted.push_back(&t);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](auto a, auto b) { return a->mean_angle_rad < b->mean_angle_rad; });

  RmseTable table;
  auto finish = [&](Estimator e, const char* name, double sq, int count, int failures) {
    const double rmse = count > 0 ? std::sqrt(sq / count) : std::numeric_limits<double>::quiet_NaN();
    table.push_back({swept_value, e, name, rmse, count, failures});
  };

  for (Estimator e : estimators) {
    double sq_t = 0.0, sq_s = 0.0;
    int count = 0, failures = 0;
    for (const auto& tr : trials) {
      const auto it = tr.angles.find(e);
      if (it == tr.angles.end() || it->second.size() != sorted.size()) {
        ++failures;
        continue;
      }
      const auto order = order_by_angle(it->second);
      for (std::size_t k = 0; k < sorted.size(); ++k) {
        const AnglePair& a = it->second[order[k]];
        sq_t += std::pow(rad2deg(a.theta_rad - sorted[k]->mean_angle_rad), 2);
        sq_s += std::pow(rad2deg(a.sigma_theta_rad - sorted[k]->angle_spread_rad), 2);
        ++count;
      }
    }
    finish(e, "theta", sq_t, count, failures);
    finish(e, "sigma_theta", sq_s, count, failures);
  }

  double sq_d = 0.0, sq_sd = 0.0;
  int count = 0, failures = 0;
  for (const auto& tr : trials) {
    const auto it = tr.angles.find(range_estimator);
    if (it == tr.angles.end() || !tr.range_error.empty() || tr.ranges.size() != sorted.size()) {
      ++failures;
      continue;
    }
    const auto order = order_by_angle(it->second);
    for (std::size_t k = 0; k < sorted.size(); ++k) {
      const RangeEstimate& r = tr.ranges[order[k]];
      sq_d += std::pow(r.mean_distance_m - sorted[k]->mean_distance_m, 2);
      sq_sd += std::pow(r.range_spread_m - sorted[k]->range_spread_m, 2);
      ++count;
    }
  }
  finish(range_estimator, "d", sq_d, count, failures);
  finish(range_estimator, "sigma_d", sq_sd, count, failures);
  return table;
}

RmseTable run_sweep(const Scenario& s, const SweepSpec& spec, kernels::KernelCache& cache) {
  spec.validate();
  RmseTable table;
  for (double v : spec.values) {
    Scenario point = s;
    apply_sweep_value(point, spec.parameter, v);
    if (!spec.estimators.empty()) point.opt.estimators = spec.estimators;
    const TrialContext ctx = make_context(point, cache);
    const auto trials = run_trials(ctx, point.opt.seed, spec.trials_per_point);
    const RmseTable rows = aggregate(trials, ctx.cfg, point.opt.estimators, point.opt.range_estimator, v);
    int failed = 0;
    for (const auto& r : rows) failed = std::max(failed, r.failures);
    if (failed > 0) {
      std::clog << "sweep " << to_string(spec.parameter) << " = " << format_double(v) << ": " << failed
                << " of " << spec.trials_per_point << " trials excluded\n";
    }
    table.insert(table.end(), rows.begin(), rows.end());
    // Optimized probes give every point its own R_X; drop stale tables.
    if (point.opt.probe == ProbeMode::optimized) cache.clear();
  }
  return table;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, p);
}

void write_rmse_csv(const std::filesystem::path& path, const RmseTable& table, std::string_view swept_name) {
  auto out = open_csv(path);
  out << swept_name << ",estimator,parameter,rmse,trials,failures\n";
  for (const auto& r : table) {
    out << format_double(r.swept_value) << ',' << to_string(r.estimator) << ',' << r.parameter << ','
        << format_double(r.rmse) << ',' << r.trials << ',' << r.failures << '\n';
  }
  finish_csv(out, path);
}

void write_trial_csvs(const std::filesystem::path& dir, const std::vector<TrialResult>& trials,
                      const TrialContext& ctx) {
  std::filesystem::create_directories(dir);
  auto quote = [](std::string s) {
    std::replace(s.begin(), s.end(), '"', '\'');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return '"' + s + '"';
  };

  const auto angles_path = dir / "angles.csv";
  auto angles = open_csv(angles_path);
  angles << "seed,estimator,target,theta_deg,sigma_theta_deg,error\n";
  for (const auto& tr : trials) {
    for (Estimator e : ctx.scenario.opt.estimators) {
      const auto it = tr.angles.find(e);
      if (it == tr.angles.end()) {
        const auto err = tr.angle_errors.find(e);
        angles << tr.seed << ',' << to_string(e) << ",,,," << quote(err == tr.angle_errors.end() ? "" : err->second)
               << '\n';
        continue;
      }
      for (std::size_t k = 0; k < it->second.size(); ++k) {
        angles << tr.seed << ',' << to_string(e) << ',' << k + 1 << ',' << format_double(rad2deg(it->second[k].theta_rad))
               << ',' << format_double(rad2deg(it->second[k].sigma_theta_rad)) << ",\n";
      }
    }
  }
  finish_csv(angles, angles_path);

  const auto ranges_path = dir / "ranges.csv";
  auto ranges = open_csv(ranges_path);
  ranges << "seed,target,distance_m,sigma_d_m,bin_min,bin_max,error\n";
  for (const auto& tr : trials) {
    if (!tr.range_error.empty()) {
      ranges << tr.seed << ",,,,,," << quote(tr.range_error) << '\n';
      continue;
    }
    for (std::size_t k = 0; k < tr.ranges.size(); ++k) {
      const auto& r = tr.ranges[k];
      ranges << tr.seed << ',' << k + 1 << ',' << format_double(r.mean_distance_m) << ','
             << format_double(r.range_spread_m) << ',' << r.bin_min << ',' << r.bin_max << ",\n";
    }
  }
  finish_csv(ranges, ranges_path);

  const auto beam_path = dir / "beamformer.csv";
  auto beam = open_csv(beam_path);
  beam << "seed,status,objective,radar_snr_db,power_w";
  for (std::size_t u = 0; u < ctx.cfg.users.size(); ++u) beam << ",rate_user" << u + 1;
  beam << ",error\n";
  for (const auto& tr : trials) {
    beam << tr.seed << ',';
    if (!tr.beam) {
      beam << ",,,";
      for (std::size_t u = 0; u < ctx.cfg.users.size(); ++u) beam << ',';
      beam << ',' << quote(tr.beam_error.empty() ? "beamforming disabled" : tr.beam_error) << '\n';
      continue;
    }
    const auto& b = *tr.beam;
    beam << to_string(b.solver_status) << ',' << format_double(b.objective_value) << ','
         << format_double(b.radar_snr > 0.0 ? lin2db(b.radar_snr) : -std::numeric_limits<double>::infinity())
         << ',' << format_double(b.v.squaredNorm());
    for (Eigen::Index u = 0; u < b.achieved_rates.size(); ++u) beam << ',' << format_double(b.achieved_rates[u]);
    beam << ",\n";
  }
  finish_csv(beam, beam_path);
}

void write_spectrum_csv(const std::filesystem::path& path, const SpreadSpectrum& spectrum) {
  auto out = open_csv(path);
  out << "theta_deg,sigma_theta_deg,value\n";
  for (Eigen::Index i = 0; i < spectrum.theta_grid.size(); ++i) {
    for (Eigen::Index j = 0; j < spectrum.sigma_grid.size(); ++j) {
      out << format_double(rad2deg(spectrum.theta_grid[i])) << ',' << format_double(rad2deg(spectrum.sigma_grid[j]))
          << ',' << format_double(spectrum.values(i, j)) << '\n';
    }
  }
  finish_csv(out, path);
}

void write_beampattern_csv(const std::filesystem::path& path, const std::vector<double>& rates,
                           const RVector& theta_rad, const std::vector<RVector>& patterns) {
  if (rates.size() != patterns.size()) throw std::invalid_argument("write_beampattern_csv: one pattern per rate");
  auto out = open_csv(path);
  out << "rate_bps_hz,theta_deg,power\n";
  for (std::size_t r = 0; r < rates.size(); ++r) {
    for (Eigen::Index i = 0; i < theta_rad.size(); ++i) {
      out << format_double(rates[r]) << ',' << format_double(rad2deg(theta_rad[i])) << ','
          << format_double(patterns[r][i]) << '\n';
    }
  }
  finish_csv(out, path);
}

}  // namespace isac
