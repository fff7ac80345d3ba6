#include "isac/conic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/SparseCholesky>

namespace isac::conic {

namespace {

// Scaled-cone bookkeeping. For a second-order cone with normalized NT point
// wbar (wbar^T J wbar = 1), W = eta (-J + u u^T) with
// u = (wbar_0 + 1, wbar_1) / sqrt(1 + wbar_0), and W^{-1} = (-J + ut ut^T) / eta
// with ut = J u.
struct SocScaling {
  double eta = 1.0;
  RVector u;
  RVector ut;
};

struct Scaling {
  RVector lp_w;  // sqrt(s / z)
  std::vector<SocScaling> soc;
  RVector lambda;
};

struct Layout {
  int linear = 0;
  std::vector<int> offset;
  std::vector<int> dim;
  int rows = 0;

  explicit Layout(const ConeSpec& c) : linear(c.linear) {
    int at = c.linear;
    for (int d : c.soc) {
      offset.push_back(at);
      dim.push_back(d);
      at += d;
    }
    rows = at;
  }
};

double soc_residual(const Eigen::Ref<const RVector>& v) {
  const double t = v[0];
  const double y = v.tail(v.size() - 1).norm();
  return (t - y) * (t + y);
}

// Smallest "eigenvalue" of v with respect to K; positive iff v is interior.
double cone_margin(const RVector& v, const Layout& lay) {
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < lay.linear; ++i) m = std::min(m, v[i]);
  for (std::size_t k = 0; k < lay.dim.size(); ++k) {
    const auto seg = v.segment(lay.offset[k], lay.dim[k]);
    m = std::min(m, seg[0] - seg.tail(lay.dim[k] - 1).norm());
  }
  return m;
}

void add_identity(RVector& v, const Layout& lay, double a) {
  for (int i = 0; i < lay.linear; ++i) v[i] += a;
  for (std::size_t k = 0; k < lay.dim.size(); ++k) v[lay.offset[k]] += a;
}

Scaling compute_scaling(const RVector& s, const RVector& z, const Layout& lay) {
  Scaling sc;
  sc.lambda.resize(lay.rows);
  sc.lp_w.resize(lay.linear);
  for (int i = 0; i < lay.linear; ++i) {
    sc.lp_w[i] = std::sqrt(s[i] / z[i]);
    sc.lambda[i] = std::sqrt(s[i] * z[i]);
  }
  sc.soc.resize(lay.dim.size());
  for (std::size_t k = 0; k < lay.dim.size(); ++k) {
    const int o = lay.offset[k];
    const int d = lay.dim[k];
    const auto sk = s.segment(o, d);
    const auto zk = z.segment(o, d);
    const double s_res = std::max(soc_residual(sk), std::numeric_limits<double>::min());
    const double z_res = std::max(soc_residual(zk), std::numeric_limits<double>::min());
    const RVector sbar = sk / std::sqrt(s_res);
    const RVector zbar = zk / std::sqrt(z_res);
    const double gamma = std::sqrt(0.5 * (1.0 + sbar.dot(zbar)));
    RVector wbar(d);
    wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
    wbar.tail(d - 1) = (sbar.tail(d - 1) - zbar.tail(d - 1)) / (2.0 * gamma);

    SocScaling& w = sc.soc[k];
    w.eta = std::pow(s_res / z_res, 0.25);
    w.u = wbar / std::sqrt(1.0 + wbar[0]);
    w.u[0] = (wbar[0] + 1.0) / std::sqrt(1.0 + wbar[0]);
    w.ut = w.u;
    w.ut.tail(d - 1) *= -1.0;

    // lambda = W z
    const double uz = w.u.dot(zk);
    RVector lam = zk;
    lam[0] = -lam[0];
    lam += uz * w.u;
    sc.lambda.segment(o, d) = w.eta * lam;
  }
  return sc;
}

RVector apply_w(const Scaling& sc, const Layout& lay, const RVector& v, bool inverse) {
  RVector out(lay.rows);
  for (int i = 0; i < lay.linear; ++i) out[i] = inverse ? v[i] / sc.lp_w[i] : v[i] * sc.lp_w[i];
  for (std::size_t k = 0; k < lay.dim.size(); ++k) {
    const int o = lay.offset[k];
    const int d = lay.dim[k];
    const SocScaling& w = sc.soc[k];
    const RVector& vec = inverse ? w.ut : w.u;
    const auto vk = v.segment(o, d);
    RVector r = vk;
    r[0] = -r[0];
    r += vec.dot(vk) * vec;
    out.segment(o, d) = inverse ? RVector(r / w.eta) : RVector(r * w.eta);
  }
  return out;
}

// Jordan product u o v.
RVector cone_product(const RVector& u, const RVector& v, const Layout& lay) {
  RVector out(lay.rows);
  for (int i = 0; i < lay.linear; ++i) out[i] = u[i] * v[i];
  for (std::size_t k = 0; k < lay.dim.size(); ++k) {
    const int o = lay.offset[k];
    const int d = lay.dim[k];
    const auto uk = u.segment(o, d);
    const auto vk = v.segment(o, d);
    out[o] = uk.dot(vk);
    out.segment(o + 1, d - 1) = uk[0] * vk.tail(d - 1) + vk[0] * uk.tail(d - 1);
  }
  return out;
}

// Solves lambda o x = v.
RVector cone_division(const RVector& lambda, const RVector& v, const Layout& lay) {
  RVector out(lay.rows);
  for (int i = 0; i < lay.linear; ++i) out[i] = v[i] / lambda[i];
  for (std::size_t k = 0; k < lay.dim.size(); ++k) {
    const int o = lay.offset[k];
    const int d = lay.dim[k];
    const auto l = lambda.segment(o, d);
    const auto w = v.segment(o, d);
    const double rho = soc_residual(l);
    const double x0 = (l[0] * w[0] - l.tail(d - 1).dot(w.tail(d - 1))) / rho;
    out[o] = x0;
    out.segment(o + 1, d - 1) = (w.tail(d - 1) - x0 * l.tail(d - 1)) / l[0];
  }
  return out;
}

// Largest alpha with lambda + alpha * dir in K (infinity if unbounded).
double max_step_scaled(const RVector& lambda, const RVector& dir, const Layout& lay) {
  double alpha = std::numeric_limits<double>::infinity();
  for (int i = 0; i < lay.linear; ++i) {
    if (dir[i] < 0.0) alpha = std::min(alpha, -lambda[i] / dir[i]);
  }
  for (std::size_t k = 0; k < lay.dim.size(); ++k) {
    const int o = lay.offset[k];
    const int d = lay.dim[k];
    const auto l = lambda.segment(o, d);
    const auto r = dir.segment(o, d);
    // f(a) = C + 2 B a + A a^2 = residual of l + a r.
    const double a_coef = r[0] * r[0] - r.tail(d - 1).squaredNorm();
    const double b_coef = l[0] * r[0] - l.tail(d - 1).dot(r.tail(d - 1));
    const double c_coef = soc_residual(l);
    double root = std::numeric_limits<double>::infinity();
    if (a_coef == 0.0) {
      if (b_coef < 0.0) root = -c_coef / (2.0 * b_coef);
    } else {
      const double disc = b_coef * b_coef - a_coef * c_coef;
      if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        const double q = -(b_coef + std::copysign(sq, b_coef));
        for (double cand : {q / a_coef, q != 0.0 ? c_coef / q : std::numeric_limits<double>::infinity()}) {
          if (cand > 0.0) root = std::min(root, cand);
        }
      }
    }
    // Guard against leaving through the apex when the residual stays positive.
    if (r[0] < 0.0) root = std::min(root, -l[0] / r[0]);
    alpha = std::min(alpha, root);
  }
  return alpha;
}

// Reduced KKT operator H = G^T W^{-2} G, factored as sparse + low rank.
class ReducedSystem {
 public:
  ReducedSystem(const Eigen::SparseMatrix<double>& g, const Layout& lay)
      : g_(g), gt_(g.transpose()), lay_(lay) {
    const auto n = static_cast<int>(g.cols());
    lp_rows_ = g.topRows(lay.linear);
    for (std::size_t k = 0; k < lay.dim.size(); ++k) {
      Eigen::SparseMatrix<double> gk = g.middleRows(lay.offset[k], lay.dim[k]);
      blocks_.push_back(gk);
      gram_.push_back(Eigen::SparseMatrix<double>(gk.transpose() * gk));
    }
    identity_.resize(n, n);
    identity_.setIdentity();
  }

  void factor(const Scaling& sc) {
    sc_ = &sc;
    const auto n = static_cast<int>(g_.cols());
    Eigen::SparseMatrix<double> hs(n, n);
    if (lay_.linear > 0) {
      const RVector d = sc.lp_w.cwiseInverse().cwiseAbs2();
      hs = Eigen::SparseMatrix<double>(lp_rows_.transpose() * d.asDiagonal() * lp_rows_);
    }
    double scale = 0.0;
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
      const double w = 1.0 / (sc.soc[k].eta * sc.soc[k].eta);
      hs += w * gram_[k];
      scale = std::max(scale, w);
    }
    for (int i = 0; i < lay_.linear; ++i) scale = std::max(scale, 1.0 / (sc.lp_w[i] * sc.lp_w[i]));
    hs += (1e-13 * std::max(scale, 1.0)) * identity_;
    llt_.compute(hs);
    if (llt_.info() != Eigen::Success) throw std::runtime_error("conic: KKT factorization failed");

    // Low-rank part: per cone eta^-2 [a b] [[0, -1], [-1, |u|^2]] [a b]^T
    // with a = G_k^T u, b = G_k^T ut.
    const auto kk = static_cast<int>(2 * blocks_.size());
    low_rank_.resize(n, kk);
    RMatrix s_inv = RMatrix::Zero(kk, kk);
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
      const SocScaling& w = sc.soc[k];
      low_rank_.col(2 * k) = blocks_[k].transpose() * w.u;
      low_rank_.col(2 * k + 1) = blocks_[k].transpose() * w.ut;
      const double e2 = w.eta * w.eta;
      const double u2 = w.u.squaredNorm();
      s_inv(2 * k, 2 * k) = -u2 * e2;
      s_inv(2 * k, 2 * k + 1) = -e2;
      s_inv(2 * k + 1, 2 * k) = -e2;
    }
    if (kk > 0) {
      hs_inv_u_ = llt_.solve(low_rank_);
      capacitance_.compute(s_inv + low_rank_.transpose() * hs_inv_u_);
    }
  }

  RVector weighted(const RVector& v) const { return apply_w(*sc_, lay_, apply_w(*sc_, lay_, v, true), true); }

  RVector apply(const RVector& x) const { return gt_ * weighted(g_ * x); }

  RVector solve(const RVector& rhs) const {
    RVector x = solve_once(rhs);
    x += solve_once(rhs - apply(x));
    return x;
  }

 private:
  RVector solve_once(const RVector& rhs) const {
    RVector y = llt_.solve(rhs);
    if (low_rank_.cols() > 0) y -= hs_inv_u_ * capacitance_.solve(low_rank_.transpose() * y);
    return y;
  }

  const Eigen::SparseMatrix<double>& g_;
  Eigen::SparseMatrix<double> gt_;
  const Layout& lay_;
  Eigen::SparseMatrix<double> lp_rows_;
  std::vector<Eigen::SparseMatrix<double>> blocks_;
  std::vector<Eigen::SparseMatrix<double>> gram_;
  Eigen::SparseMatrix<double> identity_;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt_;
  RMatrix low_rank_;
  RMatrix hs_inv_u_;
  Eigen::FullPivLU<RMatrix> capacitance_;
  const Scaling* sc_ = nullptr;
};

struct Direction {
  RVector dx, dz, ds;
  RVector wdz, sds;  // W dz and W^{-1} ds
  double dtau = 0.0, dkappa = 0.0;
};

}  // namespace

int ConeSpec::rows() const {
  int r = linear;
  for (int d : soc) r += d;
  return r;
}

void Problem::validate() const {
  if (cones.linear < 0) throw std::invalid_argument("conic: negative linear cone size");
  for (int d : cones.soc) {
    if (d < 1) throw std::invalid_argument("conic: second-order cone dimension must be >= 1");
  }
  if (g.rows() != cones.rows() || h.size() != g.rows()) {
    throw std::invalid_argument("conic: G/h rows must match the cone dimensions");
  }
  if (c.size() != g.cols()) throw std::invalid_argument("conic: c length must match G columns");
}

std::string_view to_string(Status s) {
  switch (s) {
    case Status::optimal: return "optimal";
    case Status::primal_infeasible: return "infeasible";
    case Status::dual_infeasible: return "unbounded";
    case Status::max_iter: return "max_iter";
  }
  return "?";
}

Result solve(const Problem& p, const Settings& st) {
  p.validate();
  const Layout lay(p.cones);
  const auto n = p.g.cols();
  const double degree = p.cones.degree();
  const double norm_c = std::max(1.0, p.c.norm());
  const double norm_h = std::max(1.0, p.h.norm());

  ReducedSystem kkt(p.g, lay);

  // Start from the W = I solutions of the two least-squares systems, pushed
  // into the cone interior.
  Scaling unit;
  unit.lp_w = RVector::Ones(lay.linear);
  for (std::size_t k = 0; k < lay.dim.size(); ++k) {
    SocScaling w;
    w.eta = 1.0;
    w.u = RVector::Zero(lay.dim[k]);
    w.u[0] = std::sqrt(2.0);
    w.ut = w.u;
    unit.soc.push_back(w);
  }
  kkt.factor(unit);
  RVector x = kkt.solve(p.g.transpose() * p.h);
  RVector s = p.h - p.g * x;
  RVector z = p.g * kkt.solve(-p.c);
  {
    const double ms = cone_margin(s, lay);
    if (ms < 1e-8) add_identity(s, lay, 1.0 - ms);
    const double mz = cone_margin(z, lay);
    if (mz < 1e-8) add_identity(z, lay, 1.0 - mz);
  }
  double tau = 1.0, kappa = 1.0;

  Result res;
  for (int it = 0; it <= st.max_iter; ++it) {
    res.iterations = it;
    const RVector rx = p.g.transpose() * z + p.c * tau;
    const RVector rz = p.g * x + s - p.h * tau;
    const double cx = p.c.dot(x);
    const double hz = p.h.dot(z);
    const double rtau = kappa + cx + hz;
    const double sz = s.dot(z);
    const double mu = (sz + tau * kappa) / (degree + 1.0);

    const double pcost = cx / tau;
    const double dcost = -hz / tau;
    const double pres = rz.norm() / tau / norm_h;
    const double dres = rx.norm() / tau / norm_c;
    const double gap = sz / (tau * tau);
    double relgap = std::numeric_limits<double>::infinity();
    if (pcost < 0.0) relgap = gap / -pcost;
    if (dcost > 0.0) relgap = gap / dcost;

    res.pres = pres;
    res.dres = dres;
    if (pres < st.feastol && dres < st.feastol && (gap < st.abstol || relgap < st.reltol)) {
      res.status = Status::optimal;
      res.x = x / tau;
      res.s = s / tau;
      res.z = z / tau;
      res.primal_objective = pcost;
      res.dual_objective = dcost;
      res.gap = gap;
      return res;
    }
    if (hz < 0.0 && (p.g.transpose() * z).norm() / norm_c < st.feastol * -hz) {
      res.status = Status::primal_infeasible;
      res.z = z / -hz;
      res.x = RVector::Zero(n);
      res.s = RVector::Zero(lay.rows);
      return res;
    }
    if (cx < 0.0 && (p.g * x + s).norm() / norm_h < st.feastol * -cx) {
      res.status = Status::dual_infeasible;
      res.x = x / -cx;
      res.s = s / -cx;
      res.z = RVector::Zero(lay.rows);
      return res;
    }
    if (it == st.max_iter) break;

    const Scaling sc = compute_scaling(s, z, lay);
    kkt.factor(sc);

    // Directions are assembled in NT-scaled coordinates (W dz, W^{-1} ds),
    // which stay well conditioned as iterates approach the cone boundary.
    const RVector winv_h = apply_w(sc, lay, p.h, true);

    // Solves [0 G^T; G -W^2] [x; z] = [bx; bz], returning (x, W z), with
    // iterative refinement on the unreduced system.
    auto solve_kkt = [&](const RVector& bx, const RVector& bz) {
      auto once = [&](const RVector& ex, const RVector& ez) {
        RVector xs = kkt.solve(ex + p.g.transpose() * kkt.weighted(ez));
        RVector wz = apply_w(sc, lay, p.g * xs - ez, true);
        return std::pair{std::move(xs), std::move(wz)};
      };
      auto [xs, wz] = once(bx, bz);
      const double scale = std::max(1.0, std::max(bx.norm(), bz.norm()));
      for (int r = 0; r < st.refinement_steps; ++r) {
        const RVector zs = apply_w(sc, lay, wz, true);
        const RVector ex = bx - p.g.transpose() * zs;
        const RVector ez = bz - p.g * xs + apply_w(sc, lay, wz, false);
        if (std::max(ex.norm(), ez.norm()) <= 1e-14 * scale) break;
        auto [cx_, cz_] = once(ex, ez);
        xs += cx_;
        wz += cz_;
      }
      return std::pair{std::move(xs), std::move(wz)};
    };

    // K [x1; z1] = [-c; h]
    const auto [x1, wz1] = solve_kkt(-p.c, p.h);
    const double denom = p.c.dot(x1) + winv_h.dot(wz1) - kappa / tau;

    auto solve_direction = [&](const RVector& d_x, const RVector& d_z, const RVector& d_s,
                               double d_tau, double d_kappa) {
      Direction dir;
      const RVector ls = cone_division(sc.lambda, d_s, lay);
      const auto [x2, wz2] = solve_kkt(d_x, d_z - apply_w(sc, lay, ls, false));
      dir.dtau = (d_tau - d_kappa / tau - p.c.dot(x2) - winv_h.dot(wz2)) / denom;
      dir.dx = x2 + dir.dtau * x1;
      dir.wdz = wz2 + dir.dtau * wz1;
      dir.sds = ls - dir.wdz;
      dir.dz = apply_w(sc, lay, dir.wdz, true);
      dir.ds = apply_w(sc, lay, dir.sds, false);
      dir.dkappa = (d_kappa - kappa * dir.dtau) / tau;
      return dir;
    };

    auto step_length = [&](const Direction& dir) {
      double a = std::min(max_step_scaled(sc.lambda, dir.sds, lay), max_step_scaled(sc.lambda, dir.wdz, lay));
      if (dir.dtau < 0.0) a = std::min(a, -tau / dir.dtau);
      if (dir.dkappa < 0.0) a = std::min(a, -kappa / dir.dkappa);
      return a;
    };

    // Predictor.
    const RVector lam2 = cone_product(sc.lambda, sc.lambda, lay);
    const Direction aff = solve_direction(-rx, -rz, -lam2, -rtau, -kappa * tau);
    const double alpha_aff = std::min(1.0, step_length(aff));
    const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3.0), 0.0, 1.0);

    // Corrector.
    RVector d_s = -lam2 - cone_product(aff.sds, aff.wdz, lay);
    add_identity(d_s, lay, sigma * mu);
    const double d_kappa = -kappa * tau - aff.dkappa * aff.dtau + sigma * mu;
    const Direction dir =
        solve_direction(-(1.0 - sigma) * rx, -(1.0 - sigma) * rz, d_s, -(1.0 - sigma) * rtau, d_kappa);
    const double alpha = std::min(1.0, 0.99 * step_length(dir));
    if (!std::isfinite(alpha) || alpha < 1e-12) break;

    x += alpha * dir.dx;
    z += alpha * dir.dz;
    s += alpha * dir.ds;
    tau += alpha * dir.dtau;
    kappa += alpha * dir.dkappa;
  }

  res.status = Status::max_iter;
  res.x = x / tau;
  res.s = s / tau;
  res.z = z / tau;
  res.primal_objective = p.c.dot(x) / tau;
  res.dual_objective = -p.h.dot(z) / tau;
  res.gap = s.dot(z) / (tau * tau);
  return res;
}

}  // namespace isac::conic
