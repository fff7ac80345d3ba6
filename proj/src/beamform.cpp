#include "isac/beamform.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Sparse>

#include "isac/spread_model.hpp"

namespace isac {

namespace {

constexpr double kLambdaRegularization = 1e-9;

int re_index(int n, int i, int j) { return 1 + 2 * (j * n + i); }

}  // namespace

std::string_view to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::optimal: return "optimal";
    case SolverStatus::infeasible: return "infeasible";
    case SolverStatus::max_iter: return "max_iter";
  }
  return "?";
}

RadarObjective radar_objective(const AngleEstimate& estimates, int n) {
  if (estimates.empty()) throw std::invalid_argument("radar_objective: no targets");
  RadarObjective obj;
  obj.m_hat = CMatrix::Zero(n, n);
  for (const auto& e : estimates) obj.m_hat += j_approx(e.theta_rad, e.sigma_theta_rad, n);
  obj.m_hat = 0.5 * (obj.m_hat + obj.m_hat.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<CMatrix> eig(obj.m_hat);
  obj.eigvals = eig.eigenvalues().reverse();
  obj.eigvecs = eig.eigenvectors().rowwise().reverse();
  return obj;
}

CMatrix candidate_beamformer(const RadarObjective& obj) { return obj.eigvecs; }

double achieved_sinr(const CMatrix& v, const DownlinkUser& user, int user_index) {
  const Eigen::RowVectorXcd h = downlink_channel(user, static_cast<int>(v.rows()));
  const Eigen::RowVectorXcd hv = h * v;
  const double signal = std::norm(hv[user_index]);
  const double interference = hv.squaredNorm() - signal;
  return signal / (interference + user.noise_var);
}

double achieved_rate(const CMatrix& v, const DownlinkUser& user, int user_index) {
  return std::log2(1.0 + achieved_sinr(v, user, user_index));
}

double radar_snr(const CMatrix& v, const RadarObjective& obj, double noise_var) {
  return std::max(0.0, (v.adjoint() * obj.m_hat * v).trace().real()) / noise_var;
}

BeamformerProgram build_beamformer_program(const RadarObjective& obj, std::span<const DownlinkUser> users,
                                           double p_b) {
  if (!(p_b > 0.0)) throw std::invalid_argument("solve_beamformer: P_b must be positive");
  const auto n = static_cast<int>(obj.m_hat.rows());
  if (static_cast<int>(users.size()) > n) throw std::invalid_argument("solve_beamformer: more users than antennas");

  BeamformerProgram out;
  out.q_aligned = obj.eigvecs;
  for (std::size_t u = 0; u < users.size(); ++u) {
    const Eigen::RowVectorXcd h = downlink_channel(users[u], n);
    const cd hq = (h * out.q_aligned.col(static_cast<Eigen::Index>(u)))(0);
    if (std::abs(hq) > 0.0) out.q_aligned.col(static_cast<Eigen::Index>(u)) *= std::conj(hq) / std::abs(hq);
  }
  out.weights = obj.eigvals.cwiseMax(0.0).array() + kLambdaRegularization;

  const int n_vars = 1 + 2 * n * n;
  const int big = 1 + 2 * n * n;
  std::vector<int> active;
  for (std::size_t u = 0; u < users.size(); ++u) {
    if (users[u].rate_threshold_bps_hz < 0.0) throw std::invalid_argument("solve_beamformer: negative rate threshold");
    if (users[u].rate_threshold_bps_hz > 0.0) active.push_back(static_cast<int>(u));
  }

  conic::ConeSpec cones;
  cones.soc = {big, big};
  for (std::size_t k = 0; k < active.size(); ++k) cones.soc.push_back(2 * n);
  const int rows = cones.rows();

  std::vector<Eigen::Triplet<double>> trip;
  RVector h = RVector::Zero(rows);

  // Objective cone.
  trip.emplace_back(0, 0, -1.0);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double w = std::sqrt(out.weights[i]);
      const int var = re_index(n, i, j);
      trip.emplace_back(var, var, -w);
      trip.emplace_back(var + 1, var + 1, -w);
      if (i == j) h[var] = -w;
    }
  }
  // Power cone.
  h[big] = 1.0;
  for (int k = 1; k < big; ++k) trip.emplace_back(big + k, k, -1.0);

  // Rate cones. A row r of s = h - G x equal to a^T x needs G(r, :) = -a.
  int row = 2 * big;
  for (int u : active) {
    const DownlinkUser& user = users[static_cast<std::size_t>(u)];
    const CVector g = (downlink_channel(user, n) * out.q_aligned).adjoint() *
                      (std::sqrt(p_b) / std::sqrt(user.noise_var));
    // g^H w = sum_i conj(g_i) w_i; re/im coefficients on (Re w_i, Im w_i).
    auto add_real = [&](int r, int col, double scale) {
      for (int i = 0; i < n; ++i) {
        const int var = re_index(n, i, col);
        trip.emplace_back(r, var, -scale * g[i].real());
        trip.emplace_back(r, var + 1, -scale * g[i].imag());
      }
    };
    auto add_imag = [&](int r, int col) {
      for (int i = 0; i < n; ++i) {
        const int var = re_index(n, i, col);
        trip.emplace_back(r, var, g[i].imag());
        trip.emplace_back(r, var + 1, -g[i].real());
      }
    };
    const double c_u = 1.0 / std::sqrt(std::exp2(user.rate_threshold_bps_hz) - 1.0);
    add_real(row, u, c_u);
    int r = row + 1;
    for (int j = 0; j < n; ++j) {
      if (j == u) continue;
      add_real(r, j, 1.0);
      add_imag(r + 1, j);
      r += 2;
    }
    h[r] = 1.0;
    row += 2 * n;
  }

  out.problem.c = RVector::Zero(n_vars);
  out.problem.c[0] = 1.0;
  out.problem.g.resize(rows, n_vars);
  out.problem.g.setFromTriplets(trip.begin(), trip.end());
  out.problem.h = h;
  out.problem.cones = cones;
  return out;
}

BeamformerSolution solve_beamformer(const RadarObjective& obj, std::span<const DownlinkUser> users,
                                    double p_b, double radar_noise_var, double tolerance) {
  const auto n = static_cast<int>(obj.m_hat.rows());
  const BeamformerProgram prog = build_beamformer_program(obj, users, p_b);

  conic::Settings st;
  st.feastol = st.abstol = st.reltol = tolerance;
  const conic::Result r = conic::solve(prog.problem, st);

  BeamformerSolution sol;
  sol.iterations = r.iterations;
  sol.achieved_rates = RVector::Zero(static_cast<Eigen::Index>(users.size()));
  switch (r.status) {
    case conic::Status::optimal: sol.solver_status = SolverStatus::optimal; break;
    case conic::Status::primal_infeasible: sol.solver_status = SolverStatus::infeasible; break;
    default: sol.solver_status = SolverStatus::max_iter; break;
  }
  if (sol.solver_status == SolverStatus::infeasible) {
    sol.v = CMatrix::Zero(n, n);
    return sol;
  }

  CMatrix w(n, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int var = re_index(n, i, j);
      w(i, j) = cd(r.x[var], r.x[var + 1]);
    }
  }
  sol.v = std::sqrt(p_b) * prog.q_aligned * w;
  const double power = sol.v.squaredNorm();
  if (power > p_b) sol.v *= std::sqrt(p_b / power);

  const CMatrix wq = prog.q_aligned.adjoint() * sol.v / std::sqrt(p_b) - CMatrix::Identity(n, n);
  sol.objective_value = p_b * (prog.weights.asDiagonal() * wq.cwiseAbs2()).sum();
  for (std::size_t u = 0; u < users.size(); ++u) {
    sol.achieved_rates[static_cast<Eigen::Index>(u)] = achieved_rate(sol.v, users[u], static_cast<int>(u));
  }
  sol.radar_snr = radar_snr(sol.v, obj, radar_noise_var);
  return sol;
}

RVector beampattern(const CMatrix& v, const RVector& theta_rad) {
  const auto n = static_cast<int>(v.rows());
  RVector out(theta_rad.size());
  for (Eigen::Index i = 0; i < theta_rad.size(); ++i) {
    const CVector a = steering_vector(theta_rad[i], n);
    out[i] = (a.adjoint() * v).squaredNorm();
  }
  return out;
}

}  // namespace isac
