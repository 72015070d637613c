#include "tubelab/qp.hpp"

#include <algorithm>
#include <cmath>

namespace tubelab {

namespace {

constexpr double kInf = 1e30;
constexpr double kRhoEqualityFactor = 1e3;
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;

double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

double clamp_norm(double v) {
  if (v < 1e-4) return 1.0;
  return std::min(v, 1e4);
}

}  // namespace

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Solved: return "solved";
    case QpStatus::PrimalInfeasible: return "primal-infeasible";
    case QpStatus::MaxIterations: return "max-iterations";
  }
  return "unknown";
}

QpSolver::QpSolver(const Mat& P, const Mat& A, QpSettings settings)
    : settings_(settings), P_(P), A_(A), rho_(settings.rho) {
  if (P_.rows() != P_.cols() || A_.cols() != P_.rows())
    throw Error(ErrorCode::DimensionMismatch, "QpSolver: inconsistent problem dimensions");
  const Eigen::Index n = P_.rows();
  const Eigen::Index m = A_.rows();

  // Ruiz equilibration of [P A'; A 0].
  D_ = Vec::Ones(n);
  E_ = Vec::Ones(m);
  Ps_ = P_;
  As_ = A_;
  for (int it = 0; it < settings_.scaling_iterations; ++it) {
    Vec dcol(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      double norm = Ps_.col(j).cwiseAbs().maxCoeff();
      if (m > 0) norm = std::max(norm, As_.col(j).cwiseAbs().maxCoeff());
      dcol(j) = 1.0 / std::sqrt(clamp_norm(norm));
    }
    Vec erow(m);
    for (Eigen::Index i = 0; i < m; ++i) erow(i) = 1.0 / std::sqrt(clamp_norm(As_.row(i).cwiseAbs().maxCoeff()));
    Ps_ = dcol.asDiagonal() * Ps_ * dcol.asDiagonal();
    As_ = erow.asDiagonal() * As_ * dcol.asDiagonal();
    D_ = D_.cwiseProduct(dcol);
    E_ = E_.cwiseProduct(erow);
  }
  double mean_col = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) mean_col += Ps_.col(j).cwiseAbs().maxCoeff();
  mean_col /= std::max<Eigen::Index>(n, 1);
  c_ = 1.0 / clamp_norm(mean_col);
  Ps_ *= c_;

  x_ = Vec::Zero(n);
  z_ = Vec::Zero(m);
  y_ = Vec::Zero(m);
  rho_vec_ = Vec::Constant(m, rho_);
}

void QpSolver::set_data(const Vec& q, const Vec& l, const Vec& u) {
  const Eigen::Index n = P_.rows();
  const Eigen::Index m = A_.rows();
  if (q.size() != n || l.size() != m || u.size() != m)
    throw Error(ErrorCode::DimensionMismatch, "QpSolver::set_data: dimension mismatch");
  q_ = q;
  l_ = l.cwiseMax(-kInf);
  u_ = u.cwiseMin(kInf);
  qs_ = c_ * D_.cwiseProduct(q_);
  ls_ = E_.cwiseProduct(l_);
  us_ = E_.cwiseProduct(u_);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (l_(i) > u_(i)) throw Error(ErrorCode::Infeasible, "QpSolver::set_data: lower bound above upper bound");
  }
  has_data_ = true;
  factorize();
}

void QpSolver::factorize() {
  const Eigen::Index m = A_.rows();
  for (Eigen::Index i = 0; i < m; ++i) {
    if (l_(i) <= -kInf && u_(i) >= kInf) {
      rho_vec_(i) = kRhoMin;
    } else if (u_(i) - l_(i) < 1e-12) {
      rho_vec_(i) = kRhoEqualityFactor * rho_;
    } else {
      rho_vec_(i) = rho_;
    }
  }
  Mat K = Ps_;
  K.diagonal().array() += settings_.sigma;
  K.noalias() += As_.transpose() * rho_vec_.asDiagonal() * As_;
  kkt_.compute(K);
  if (kkt_.info() != Eigen::Success) throw Error(ErrorCode::Convergence, "QpSolver: KKT factorization failed");
}

void QpSolver::warm_start(const Vec& x, const Vec& y) {
  if (x.size() != P_.rows() || y.size() != A_.rows())
    throw Error(ErrorCode::DimensionMismatch, "QpSolver::warm_start: dimension mismatch");
  x_ = x.cwiseQuotient(D_);
  z_ = As_ * x_;
  y_ = c_ * y.cwiseQuotient(E_);
}

void QpSolver::reset_warm_start() {
  x_.setZero();
  z_.setZero();
  y_.setZero();
  // Adapted penalty is part of the solver state; restore it so a reset solver
  // behaves exactly like a fresh one.
  if (rho_ != settings_.rho) {
    rho_ = settings_.rho;
    if (has_data_) factorize();
  }
}

double QpSolver::primal_residual(const Vec& x) const {
  const Vec ax = A_ * x;
  return inf_norm((l_ - ax).cwiseMax(ax - u_).cwiseMax(0.0));
}

double QpSolver::dual_residual(const Vec& x, const Vec& y) const {
  return inf_norm(P_ * x + q_ + A_.transpose() * y);
}

bool QpSolver::try_polish(const Vec& x_scaled, const Vec& z_scaled, const Vec& y_scaled, QpResult& out) const {
  const Eigen::Index n = P_.rows();
  const Eigen::Index m = A_.rows();
  const Vec z = z_scaled.cwiseQuotient(E_);
  const Vec y = E_.cwiseProduct(y_scaled) / c_;
  (void)x_scaled;

  std::vector<Eigen::Index> rows;
  std::vector<int> side;  // -1 lower, +1 upper, 0 equality
  for (Eigen::Index i = 0; i < m; ++i) {
    if (u_(i) - l_(i) < 1e-12) {
      rows.push_back(i);
      side.push_back(0);
    } else if (z(i) - l_(i) < -y(i)) {
      rows.push_back(i);
      side.push_back(-1);
    } else if (u_(i) - z(i) < y(i)) {
      rows.push_back(i);
      side.push_back(1);
    }
  }
  const Eigen::Index k = static_cast<Eigen::Index>(rows.size());
  Mat Aact(k, n);
  Vec bact(k);
  for (Eigen::Index r = 0; r < k; ++r) {
    Aact.row(r) = A_.row(rows[r]);
    bact(r) = side[r] < 0 ? l_(rows[r]) : u_(rows[r]);
  }
  const double delta = 1e-9;
  Mat K0 = Mat::Zero(n + k, n + k);
  K0.topLeftCorner(n, n) = P_;
  K0.topRightCorner(n, k) = Aact.transpose();
  K0.bottomLeftCorner(k, n) = Aact;
  Mat Kd = K0;
  Kd.diagonal().head(n).array() += delta;
  Kd.diagonal().tail(k).array() -= delta;
  Eigen::PartialPivLU<Mat> lu(Kd);
  Vec rhs(n + k);
  rhs << -q_, bact;
  Vec sol = lu.solve(rhs);
  for (int r = 0; r < 5; ++r) sol += lu.solve(rhs - K0 * sol);
  if (!sol.allFinite()) return false;

  Vec xp = sol.head(n);
  Vec yp = Vec::Zero(m);
  for (Eigen::Index r = 0; r < k; ++r) {
    const double v = sol(n + r);
    if (side[r] < 0 && v > settings_.eps_abs) return false;
    if (side[r] > 0 && v < -settings_.eps_abs) return false;
    yp(rows[r]) = v;
  }
  const double prim = primal_residual(xp);
  const double dual = dual_residual(xp, yp);
  if (prim > settings_.eps_abs || dual > settings_.eps_abs) return false;
  out.x = std::move(xp);
  out.y = std::move(yp);
  out.primal_residual = prim;
  out.dual_residual = dual;
  out.polished = true;
  out.status = QpStatus::Solved;
  return true;
}

QpResult QpSolver::solve() {
  if (!has_data_) throw Error(ErrorCode::InvalidParameter, "QpSolver::solve: set_data was not called");
  const double alpha = settings_.alpha;
  const double sigma = settings_.sigma;
  QpResult out;
  Vec y_prev = y_;
  Vec xt, zt, zhat, rhs;
  int polish_attempts = 0;
  int next_polish_check = 0;

  for (int it = 1; it <= settings_.max_iterations; ++it) {
    y_prev = y_;
    rhs = sigma * x_ - qs_;
    rhs.noalias() += As_.transpose() * (rho_vec_.cwiseProduct(z_) - y_);
    xt = kkt_.solve(rhs);
    zt.noalias() = As_ * xt;
    x_ = alpha * xt + (1.0 - alpha) * x_;
    zhat = alpha * zt + (1.0 - alpha) * z_;
    const Vec znew = (zhat + y_.cwiseQuotient(rho_vec_)).cwiseMax(ls_).cwiseMin(us_);
    y_ += rho_vec_.cwiseProduct(zhat - znew);
    z_ = znew;

    if (it % settings_.check_interval != 0 && it != settings_.max_iterations) continue;

    const Vec ax_s = As_ * x_;
    const Vec px_s = Ps_ * x_;
    const Vec aty_s = As_.transpose() * y_;
    const double prim = inf_norm((ax_s - z_).cwiseQuotient(E_));
    const double dual = inf_norm((px_s + qs_ + aty_s).cwiseQuotient(D_)) / c_;
    out.iterations = it;

    if (prim <= settings_.eps_abs && dual <= settings_.eps_abs) {
      out.x = D_.cwiseProduct(x_);
      out.y = E_.cwiseProduct(y_) / c_;
      out.primal_residual = primal_residual(out.x);
      out.dual_residual = dual_residual(out.x, out.y);
      if (out.primal_residual <= settings_.eps_abs && out.dual_residual <= settings_.eps_abs) {
        out.status = QpStatus::Solved;
        return out;
      }
    }

    const double prim_scale = std::max({inf_norm(ax_s.cwiseQuotient(E_)), inf_norm(z_.cwiseQuotient(E_)), 1.0});
    const double dual_scale = std::max({inf_norm(px_s.cwiseQuotient(D_)) / c_, inf_norm(aty_s.cwiseQuotient(D_)) / c_,
                                        inf_norm(q_), 1.0});
    if (settings_.polish && prim <= settings_.eps_admm * prim_scale && dual <= settings_.eps_admm * dual_scale &&
        it >= next_polish_check) {
      ++polish_attempts;
      if (try_polish(x_, z_, y_, out)) {
        out.iterations = it;
        // Keep the polished point as the next warm start.
        x_ = out.x.cwiseQuotient(D_);
        z_ = As_ * x_;
        y_ = c_ * out.y.cwiseQuotient(E_);
        return out;
      }
      next_polish_check = it + settings_.check_interval * std::min(polish_attempts * 5, 50);
    }

    // Primal infeasibility certificate.
    const Vec dy = y_ - y_prev;
    const double dy_norm = inf_norm(E_.cwiseProduct(dy));
    if (dy_norm > 1e-12) {
      const double at_dy = inf_norm((As_.transpose() * dy).cwiseQuotient(D_));
      double support = 0.0;
      bool bounded = true;
      for (Eigen::Index i = 0; i < dy.size(); ++i) {
        if (dy(i) > 0.0) {
          if (u_(i) >= kInf) { bounded = false; break; }
          support += us_(i) * dy(i);
        } else if (dy(i) < 0.0) {
          if (l_(i) <= -kInf) { bounded = false; break; }
          support += ls_(i) * dy(i);
        }
      }
      if (bounded && at_dy <= settings_.eps_infeasible * dy_norm && support < -settings_.eps_infeasible * dy_norm) {
        out.status = QpStatus::PrimalInfeasible;
        out.x = D_.cwiseProduct(x_);
        out.y = E_.cwiseProduct(y_) / c_;
        out.primal_residual = prim;
        out.dual_residual = dual;
        return out;
      }
    }

    if (it % settings_.adapt_interval == 0) {
      const double prim_rel = prim / prim_scale;
      const double dual_rel = dual / dual_scale;
      if (prim_rel > 0.0 && dual_rel > 0.0) {
        const double ratio = std::sqrt(prim_rel / dual_rel);
        if (ratio > 5.0 || ratio < 0.2) {
          rho_ = std::clamp(rho_ * ratio, kRhoMin, kRhoMax);
          factorize();
        }
      }
    }

    out.primal_residual = prim;
    out.dual_residual = dual;
  }
  out.status = QpStatus::MaxIterations;
  out.x = D_.cwiseProduct(x_);
  out.y = E_.cwiseProduct(y_) / c_;
  out.primal_residual = primal_residual(out.x);
  out.dual_residual = dual_residual(out.x, out.y);
  return out;
}

}  // namespace tubelab
