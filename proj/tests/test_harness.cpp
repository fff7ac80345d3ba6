#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "isac/harness.hpp"

using namespace isac;

namespace {

Scenario parse(const std::string& text) {
  std::istringstream in(text);
  return parse_scenario(in, "test.cfg");
}

// Small enough to run a handful of trials in well under a second.
const char* kSmall =
    "n_tx = 8\n"
    "n_rx = 8\n"
    "n_subcarriers = 128\n"
    "snr_db = 25\n"
    "target.1.theta_deg = 20\n"
    "target.1.sigma_theta_deg = 3\n"
    "target.1.distance_m = 40\n"
    "target.1.sigma_d_m = 2\n"
    "target.1.rays = 40\n"
    "users = none\n"
    "estimators = tms-approx, cms-approx\n"
    "grid.theta_min_deg = 0\n"
    "grid.theta_max_deg = 40\n"
    "grid.theta_step_deg = 0.5\n"
    "grid.sigma_min_deg = 0\n"
    "grid.sigma_max_deg = 6\n"
    "grid.sigma_step_deg = 0.5\n";

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "isac_test_harness";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("empty config yields the preset scenario") {
  const Scenario s = parse("# nothing here\n\n");
  const Scenario d = default_scenario();
  CHECK(s.cfg.array.n_tx == 16);
  CHECK(s.cfg.ofdm.n_subcarriers == 792);
  CHECK(s.cfg.targets.size() == 1);
  CHECK(rad2deg(s.cfg.targets[0].mean_angle_rad) == doctest::Approx(50.0));
  REQUIRE(s.cfg.users.size() == 3);
  CHECK(std::abs(s.cfg.users[1].channel_coeff - d.cfg.users[1].channel_coeff) == 0.0);
  CHECK(s.cfg.users[0].channel_coeff.real() == doctest::Approx(free_space_gain(25.0, 28e9)));
  CHECK(s.snr_db.value() == 20.0);
  CHECK(s.opt.eta == 0.4);
  CHECK(s.opt.estimators.size() == 4);
}

TEST_CASE("keys override the preset and per-index entries merge") {
  const Scenario s = parse(
      "eta = 0.6\n"
      "user.2.rate_bps_hz = 3.5\n"
      "user.1.rate_bps_hz = 1\n"
      "snr_db = none\n"
      "probe = optimized\n"
      "range_rule = global\n");
  CHECK(s.opt.eta == 0.6);
  CHECK_FALSE(s.snr_db.has_value());
  CHECK(s.opt.probe == ProbeMode::optimized);
  CHECK(s.opt.range_rule == SupportRule::global);
  REQUIRE(s.cfg.users.size() == 2);
  CHECK(s.cfg.users[1].rate_threshold_bps_hz == 3.5);
  CHECK(rad2deg(s.cfg.users[1].angle_rad) == doctest::Approx(-30.0));
  CHECK(resolve(s).rx_noise_var == doctest::Approx(dbm2watt(-90.0)));
}

TEST_CASE("parse errors carry the line number") {
  auto message = [](const std::string& text) {
    try {
      parse(text);
    } catch (const ParseError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message("eta = 0.5\n\nbogus = 1\n").find("test.cfg:3:") == 0);
  CHECK(message("eta = 0.5\neta = 0.6\n").find("duplicate") != std::string::npos);
  CHECK(message("n_tx = eight\n").find("test.cfg:1: n_tx") == 0);
  CHECK(message("no equals sign\n").find("test.cfg:1:") == 0);
  CHECK(message("target.2.rays = 4\n").find("without gaps") != std::string::npos);
}

TEST_CASE("validation errors name the field") {
  try {
    parse("target.1.sigma_theta_deg = -1\n");
    FAIL("accepted a negative spread");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("sigma_theta") != std::string::npos);
  }
  CHECK_THROWS_WITH_AS(parse("chi = 1.5\n"), doctest::Contains("chi"), std::invalid_argument);
}

TEST_CASE("sweep files") {
  std::istringstream in("parameter = snr_db\nvalues = 0, 10, 20\ntrials = 3\n");
  const SweepSpec s = parse_sweep(in);
  CHECK(s.parameter == SweepParameter::snr_db);
  CHECK(s.values == std::vector<double>{0.0, 10.0, 20.0});
  CHECK(s.trials_per_point == 3);
  std::istringstream bad("parameter = snr_db\nvalues = 10, 0\n");
  CHECK_THROWS_AS(parse_sweep(bad), std::invalid_argument);

  Scenario sc = parse(kSmall);
  kernels::KernelCache cache;
  SweepSpec empty;
  CHECK(run_sweep(sc, empty, cache).empty());
}

TEST_CASE("trials are deterministic and independent of execution order") {
  const Scenario s = parse(kSmall);
  kernels::KernelCache cache;
  const TrialContext ctx = make_context(s, cache);
  const TrialResult a = run_trial(ctx, 11);
  const TrialResult b = run_trial(ctx, 11);
  REQUIRE(a.angles.count(Estimator::tms_approx));
  CHECK(a.angles.at(Estimator::tms_approx)[0].theta_rad == b.angles.at(Estimator::tms_approx)[0].theta_rad);
  REQUIRE(a.ranges.size() == 1);
  CHECK(a.ranges[0].mean_distance_m == b.ranges[0].mean_distance_m);

  const auto batch = run_trials(ctx, 10, 3);
  REQUIRE(batch.size() == 3);
  CHECK(batch[1].seed == 11);
  CHECK(batch[1].angles.at(Estimator::tms_approx)[0].theta_rad ==
        a.angles.at(Estimator::tms_approx)[0].theta_rad);
  CHECK(batch[1].ranges[0].range_spread_m == a.ranges[0].range_spread_m);
}

TEST_CASE("rmse aggregation") {
  ScenarioConfig truth;
  ClusterTarget t1, t2;
  t1.mean_angle_rad = deg2rad(-10.0);
  t1.angle_spread_rad = deg2rad(2.0);
  t1.mean_distance_m = 30.0;
  t1.range_spread_m = 1.0;
  t2 = t1;
  t2.mean_angle_rad = deg2rad(20.0);
  truth.targets = {t2, t1};

  TrialResult r1, r2, r3;
  // Estimates reported in reverse angle order; pairing is by sorted angle.
  r1.angles[Estimator::tms] = {{deg2rad(21.0), deg2rad(2.0)}, {deg2rad(-10.0), deg2rad(4.0)}};
  r1.ranges = {{31.0, 1.0, 0, 0}, {30.0, 1.0, 0, 0}};
  r2.angles[Estimator::tms] = {{deg2rad(-12.0), deg2rad(2.0)}, {deg2rad(20.0), deg2rad(2.0)}};
  r2.ranges = {{30.0, 3.0, 0, 0}, {30.0, 1.0, 0, 0}};
  r3.angle_errors[Estimator::tms] = "failed";

  const RmseTable t = aggregate({r1, r2, r3}, truth, {Estimator::tms}, Estimator::tms, 5.0);
  REQUIRE(t.size() == 4);
  CHECK(t[0].parameter == "theta");
  CHECK(t[0].rmse == doctest::Approx(std::sqrt((1.0 + 0.0 + 4.0 + 0.0) / 4.0)));
  CHECK(t[0].trials == 4);
  CHECK(t[0].failures == 1);
  CHECK(t[1].rmse == doctest::Approx(std::sqrt(4.0 / 4.0)));
  CHECK(t[2].parameter == "d");
  CHECK(t[2].rmse == doctest::Approx(std::sqrt(1.0 / 4.0)));
  CHECK(t[3].rmse == doctest::Approx(std::sqrt(4.0 / 4.0)));
  CHECK(t[0].swept_value == 5.0);

  const RmseTable none = aggregate({r3}, truth, {Estimator::tms}, Estimator::tms, 0.0);
  CHECK(std::isnan(none[0].rmse));
}

TEST_CASE("csv output round-trips at full precision") {
  const double v = 0.1 + 0.2;
  CHECK(std::stod(format_double(v)) == v);
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(-2.5e-300).find('e') != std::string::npos);

  SpreadSpectrum sp;
  sp.theta_grid = RVector{{deg2rad(1.0), deg2rad(2.0)}};
  sp.sigma_grid = RVector{{0.0, deg2rad(0.5)}};
  sp.values = RMatrix{{1.0 / 3.0, 2.0}, {3.0, 4.0}};
  const auto path = scratch("spectrum.csv");
  write_spectrum_csv(path, sp);
  const std::string text = read_file(path);
  CHECK(text.find('\r') == std::string::npos);
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  CHECK(line == "theta_deg,sigma_theta_deg,value");
  int rows = 0;
  double first = 0.0;
  while (std::getline(in, line)) {
    if (rows == 0) first = std::stod(line.substr(line.rfind(',') + 1));
    ++rows;
  }
  CHECK(rows == 4);
  CHECK(first == 1.0 / 3.0);
}

TEST_CASE("trial csvs") {
  const Scenario s = parse(kSmall);
  kernels::KernelCache cache;
  const TrialContext ctx = make_context(s, cache);
  const auto trials = run_trials(ctx, 1, 2);
  const auto dir = scratch("run");
  write_trial_csvs(dir, trials, ctx);
  for (const char* f : {"angles.csv", "ranges.csv", "beamformer.csv"}) CHECK(std::filesystem::exists(dir / f));
  const std::string angles = read_file(dir / "angles.csv");
  CHECK(std::count(angles.begin(), angles.end(), '\n') == 1 + 2 * 2);
}

TEST_CASE("config and seed determine every emitted byte") {
  auto emit = [](const std::string& name) {
    const Scenario s = parse(kSmall);
    kernels::KernelCache cache;
    const TrialContext ctx = make_context(s, cache);
    const auto trials = run_trials(ctx, 4, 3);
    const auto dir = scratch(name);
    write_trial_csvs(dir, trials, ctx);
    write_rmse_csv(dir / "rmse.csv", aggregate(trials, ctx.cfg, s.opt.estimators, s.opt.range_estimator, 0.0));
    write_spectrum_csv(dir / "spectrum.csv", trial_spectrum(ctx, Estimator::cms_approx, 4));
    return dir;
  };
  const auto a = emit("bytes_a");
  const auto b = emit("bytes_b");
  for (const char* f : {"angles.csv", "ranges.csv", "beamformer.csv", "rmse.csv", "spectrum.csv"}) {
    CHECK(read_file(a / f) == read_file(b / f));
  }
}

TEST_CASE("parallel trials equal serial trials run in reverse order") {
  const Scenario s = parse(kSmall);
  kernels::KernelCache cache;
  const TrialContext ctx = make_context(s, cache);
  const auto parallel = run_trials(ctx, 20, 4);
  std::vector<TrialResult> serial(4);
  for (int i = 3; i >= 0; --i) serial[i] = run_trial(ctx, 20 + i);
  const RmseTable p = aggregate(parallel, ctx.cfg, s.opt.estimators, s.opt.range_estimator, 0.0);
  const RmseTable q = aggregate(serial, ctx.cfg, s.opt.estimators, s.opt.range_estimator, 0.0);
  REQUIRE(p.size() == q.size());
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(format_double(p[i].rmse) == format_double(q[i].rmse));
}
