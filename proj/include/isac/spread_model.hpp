#pragma once

#include "isac/types.hpp"

namespace isac {

// Characteristic function psi(t) of a zero-mean angular perturbation, given
// the law's half-width. Only the uniform law ships; the kernel builders take
// it as a parameter so other densities can be plugged in.
using CharacteristicFn = double (*)(double t, double half_width);

// sin(t d) / (t d), equal to 1 when |t d| < 1e-12.
double char_uniform(double t, double half_width);

// [Phi]_{m,n} = psi(pi (m - n) cos(theta)), half-width sqrt(3) sigma_theta.
RMatrix phi_matrix(double theta, double sigma_theta, int n,
                   CharacteristicFn psi = char_uniform);

// E[conj(A(x)) kron A(x)] with x = theta_tilde cos(theta) and
// A(x)_{a,b} = exp(j pi (a - b) x).
//
// Index convention (column-major vec): row l*n + m pairs conj(A) row l with
// A row m, column l'*n + m' pairs conj(A) column l' with A column m'. The
// entry is exp(j pi x ((m - m') - (l - l'))), so its expectation is
// psi(pi cos(theta) ((m - m') - (l - l'))).
RMatrix phi_tilde_matrix(double theta, double sigma_theta, int n,
                         CharacteristicFn psi = char_uniform);

// diag(a(sin theta))
Eigen::DiagonalMatrix<cd, Eigen::Dynamic> d_diag(double theta, int n);

// diag(conj(a) kron a)
Eigen::DiagonalMatrix<cd, Eigen::Dynamic> d_tilde_diag(double theta, int n);

// Expected spread covariance E[A(sin th) R_X A^H(sin th)] under the
// small-angle linearization: unvec(D~ Phi~ D~^H vec(R_X)). This is the
// literal Kronecker form and costs O(n^4); see j_exact_fast.
CMatrix j_exact(double theta, double sigma_theta, const CMatrix& r_x,
                CharacteristicFn psi = char_uniform);

// Same matrix in O(n^2). With R' = D^H R_X D, the inner sum only depends on
// the diagonal sums S_t = sum_{m'-l'=t} R'_{m',l'}, so J = D T D^H with the
// Toeplitz T_d = sum_t psi(pi cos(theta) (d - t)) S_t.
CMatrix j_exact_fast(double theta, double sigma_theta, const CMatrix& r_x,
                     CharacteristicFn psi = char_uniform);

// D(sin theta) Phi D^H(sin theta)
CMatrix j_approx(double theta, double sigma_theta, int n,
                 CharacteristicFn psi = char_uniform);

// Eigenvalues below zero are clipped; a clip beyond -1e-8 relative to the
// spectral radius is reported on stderr.
CMatrix clip_to_psd(const CMatrix& hermitian);

}  // namespace isac
