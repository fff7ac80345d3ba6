#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "isac/harness.hpp"

namespace fs = std::filesystem;
using namespace isac;

namespace {

struct Args {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<int> frames;
  std::string sweep;
  std::string estimator = "tms";
  std::vector<double> rates;
};

Scenario load(const Args& a) {
  Scenario s = load_scenario(a.config);
  if (a.frames) s.opt.frames = *a.frames;
  return s;
}

int cmd_run(const Args& a) {
  Scenario s = load(a);
  if (a.seed) s.opt.seed = *a.seed;
  if (a.trials) s.opt.trials = *a.trials;
  kernels::KernelCache cache;
  const TrialContext ctx = make_context(s, cache);
  const auto trials = run_trials(ctx, s.opt.seed, s.opt.trials);
  fs::create_directories(a.out);
  write_trial_csvs(a.out, trials, ctx);
  const RmseTable table = aggregate(trials, ctx.cfg, s.opt.estimators, s.opt.range_estimator, 0.0);
  write_rmse_csv(fs::path(a.out) / "rmse.csv", table, "swept_value");
  for (const auto& r : table) {
    std::cout << to_string(r.estimator) << ' ' << r.parameter << " rmse " << format_double(r.rmse) << " ("
              << r.trials << " estimates, " << r.failures << " failed trials)\n";
  }
  return 0;
}

int cmd_sweep(const Args& a) {
  const Scenario s = load(a);
  const SweepSpec spec = load_sweep(a.sweep);
  kernels::KernelCache cache;
  const RmseTable table = run_sweep(s, spec, cache);
  fs::create_directories(a.out);
  const fs::path path = fs::path(a.out) / "rmse.csv";
  write_rmse_csv(path, table, to_string(spec.parameter));
  std::cout << "wrote " << table.size() << " rows to " << path.string() << '\n';
  return 0;
}

int cmd_spectrum(const Args& a) {
  Scenario s = load(a);
  const Estimator e = parse_estimator(a.estimator);
  s.opt.estimators = {e};
  kernels::KernelCache cache;
  const TrialContext ctx = make_context(s, cache);
  const SpreadSpectrum sp = trial_spectrum(ctx, e, a.seed.value_or(s.opt.seed));
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  write_spectrum_csv(a.out, sp);
  const auto [i, j] = sp.argmax();
  std::cout << "peak at theta " << format_double(rad2deg(sp.theta_grid[i])) << " deg, sigma "
            << format_double(rad2deg(sp.sigma_grid[j])) << " deg\n";
  return 0;
}

int cmd_beampattern(const Args& a) {
  const Scenario s = load_scenario(a.config);
  const RVector theta = RVector::LinSpaced(1801, -kPi / 2.0, kPi / 2.0);
  std::vector<RVector> patterns;
  for (double rate : a.rates) {
    const BeamformerSolution sol = design_beamformer(s, rate);
    std::cout << "rate " << format_double(rate) << ": " << to_string(sol.solver_status);
    if (sol.solver_status != SolverStatus::optimal) {
      std::cout << '\n';
      std::cerr << "error: beamformer for rate " << format_double(rate) << " is " << to_string(sol.solver_status)
                << '\n';
      return 1;
    }
    std::cout << ", objective " << format_double(sol.objective_value) << '\n';
    patterns.push_back(beampattern(sol.v, theta));
  }
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  write_beampattern_csv(a.out, a.rates, theta, patterns);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Angle/range spread estimation and beamforming for extended-target ISAC"};
  app.require_subcommand(1);
  Args a;

  auto* run = app.add_subcommand("run", "Monte Carlo trials of one scenario");
  run->add_option("--config", a.config, "scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--frames", a.frames, "frames per covariance estimate")->check(CLI::PositiveNumber);
  run->add_option("--out", a.out, "output directory")->required();
  run->add_option("--seed", a.seed, "first trial seed");
  run->add_option("--trials", a.trials, "number of trials")->check(CLI::PositiveNumber);

  auto* sweep = app.add_subcommand("sweep", "RMSE over a swept parameter");
  sweep->add_option("--config", a.config, "scenario file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--sweep", a.sweep, "sweep file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--frames", a.frames, "frames per covariance estimate")->check(CLI::PositiveNumber);
  sweep->add_option("--out", a.out, "output directory")->required();

  auto* spectrum = app.add_subcommand("spectrum", "2-D spectrum of one trial");
  spectrum->add_option("--config", a.config, "scenario file")->required()->check(CLI::ExistingFile);
  spectrum->add_option("--estimator", a.estimator, "estimator")
      ->check(CLI::IsMember({"tms", "tms-approx", "cms", "cms-approx"}));
  spectrum->add_option("--frames", a.frames, "frames per covariance estimate")->check(CLI::PositiveNumber);
  spectrum->add_option("--out", a.out, "output CSV")->required();
  spectrum->add_option("--seed", a.seed, "trial seed");

  auto* pattern = app.add_subcommand("beampattern", "transmit beampattern for each rate threshold");
  pattern->add_option("--config", a.config, "scenario file")->required()->check(CLI::ExistingFile);
  pattern->add_option("--rates", a.rates, "comma-separated rate thresholds (bps/Hz)")
      ->required()
      ->delimiter(',');
  pattern->add_option("--out", a.out, "output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(a);
    if (*sweep) return cmd_sweep(a);
    if (*spectrum) return cmd_spectrum(a);
    if (*pattern) return cmd_beampattern(a);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
