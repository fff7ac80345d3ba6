#pragma once

#include <span>
#include <vector>

#include "isac/angle_est.hpp"
#include "isac/conic.hpp"
#include "isac/scene.hpp"

namespace isac {

struct RadarObjective {
  CMatrix m_hat;    // sum_k J_app(theta_k, sigma_k)
  CMatrix eigvecs;  // columns ordered by eigvals
  RVector eigvals;  // descending
};

enum class SolverStatus { optimal, infeasible, max_iter };

std::string_view to_string(SolverStatus s);

struct BeamformerSolution {
  CMatrix v;
  RVector achieved_rates;
  double radar_snr = 0.0;
  SolverStatus solver_status = SolverStatus::max_iter;
  double objective_value = 0.0;
  int iterations = 0;
};

RadarObjective radar_objective(const AngleEstimate& estimates, int n);

// Q_M (unitary, unscaled).
CMatrix candidate_beamformer(const RadarObjective& obj);

// User u is served by column u of v; every other column interferes.
double achieved_sinr(const CMatrix& v, const DownlinkUser& user, int user_index);
double achieved_rate(const CMatrix& v, const DownlinkUser& user, int user_index);

// Tr(V^H M V) / noise_var
double radar_snr(const CMatrix& v, const RadarObjective& obj, double noise_var);

// Conic program behind solve_beamformer, in the variable W = Q^H V / sqrt(P_b):
//
//   x = [t, Re W_00, Im W_00, Re W_10, Im W_10, ...]   (column-major, re/im interleaved)
//
// Cones in order:
//   objective  Q^{1 + 2N^2}: (t, sqrt(lambda_i) (W_ij - delta_ij))
//   power      Q^{1 + 2N^2}: (1, W_ij)
//   user u     Q^{2N}:       (c_u Re{g_u^H w_u}, g_u^H w_j for j != u as (re, im), 1)
// with g_u = Q^H h_u sqrt(P_b) / sigma_u and c_u = 1 / sqrt(2^{gamma_u} - 1).
// Users with gamma_u = 0 get no cone. Column u of Q is rotated so that
// h_u^H q_u is real and nonnegative before the program is built.
struct BeamformerProgram {
  conic::Problem problem;
  CMatrix q_aligned;
  RVector weights;  // lambda + regularization
};

BeamformerProgram build_beamformer_program(const RadarObjective& obj, std::span<const DownlinkUser> users,
                                           double p_b);

// min ||Lambda^{1/2} Q^H (V - sqrt(P_b) Q)||_F^2 under per-user rate cones and
// ||V||_F^2 <= P_b.
BeamformerSolution solve_beamformer(const RadarObjective& obj, std::span<const DownlinkUser> users,
                                    double p_b, double radar_noise_var, double tolerance = 1e-8);

// b(theta) = sum_i |a^H(theta) v_i|^2
RVector beampattern(const CMatrix& v, const RVector& theta_rad);

}  // namespace isac
