#include "tubelab/synthesis.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace tubelab {

namespace {

double min_symmetric_eigenvalue(const Mat& M) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace

void CostSpec::validate() const {
  if (Q.rows() != Q.cols() || R.rows() != R.cols())
    throw Error(ErrorCode::DimensionMismatch, "cost weights must be square");
  if (!Q.allFinite() || !R.allFinite()) throw Error(ErrorCode::InvalidParameter, "cost weights must be finite");
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 || (R - R.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw Error(ErrorCode::InvalidParameter, "cost weights must be symmetric");
  if (min_symmetric_eigenvalue(Q) < -1e-10) throw Error(ErrorCode::InvalidParameter, "Q must be PSD");
  if (min_symmetric_eigenvalue(R) < 1e-10) throw Error(ErrorCode::InvalidParameter, "R must be PD");
}

void UncertaintySpec::validate() const {
  for (const Box* b : {&W, &W_bar, &V}) {
    if (!contains(*b, Vec::Zero(b->dim())))
      throw Error(ErrorCode::InvalidParameter, "uncertainty sets must contain the origin");
  }
  if (!is_subset(W, W_bar)) throw Error(ErrorCode::InvalidParameter, "W must be a subset of W_bar");
}

Vec ErrorSystem::sample_disturbance(Rng& rng) const {
  if (has_generator()) return generator * sample_uniform(source, rng);
  return sample_uniform(D, rng);
}

double spectral_radius(const Mat& M) {
  if (M.size() == 0) return 0.0;
  Eigen::EigenSolver<Mat> es(M, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double dare_residual(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const Mat& P) {
  const Mat BtP = B.transpose() * P;
  const Mat rhs = Q + A.transpose() * P * A -
                  A.transpose() * P * B * (R + BtP * B).ldlt().solve(BtP * A);
  return (P - rhs).cwiseAbs().maxCoeff();
}

DareSolution solve_dare(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, double tol,
                        int max_iterations) {
  if (A.rows() != A.cols() || B.rows() != A.rows() || Q.rows() != A.rows() || R.rows() != B.cols())
    throw Error(ErrorCode::DimensionMismatch, "solve_dare: inconsistent dimensions");
  Mat P = Q;
  DareSolution out;
  for (int k = 1; k <= max_iterations; ++k) {
    const Mat BtP = B.transpose() * P;
    const Mat G = (R + BtP * B).ldlt().solve(BtP * A);
    Mat next = Q + A.transpose() * P * (A - B * G);
    next = 0.5 * (next + next.transpose());
    const double diff = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (!P.allFinite()) throw Error(ErrorCode::Synthesis, "solve_dare: iteration diverged");
    if (diff < tol * std::max(1.0, P.cwiseAbs().maxCoeff())) {
      out.iterations = k;
      break;
    }
    if (k == max_iterations)
      throw Error(ErrorCode::Synthesis, "solve_dare: no convergence within " + std::to_string(max_iterations) +
                                            " iterations");
  }
  const Mat BtP = B.transpose() * P;
  out.K = -(R + BtP * B).ldlt().solve(BtP * A);
  out.P = P;
  if (spectral_radius(A + B * out.K) >= 1.0)
    throw Error(ErrorCode::Synthesis, "solve_dare: closed loop A + B K is not Schur (pair not stabilizable)");
  return out;
}

Mat observer_gain(const Mat& A, const Mat& C, double pole_rate, double dt) {
  if (C.rows() != A.rows() || C.cols() != A.cols() || !C.isIdentity(0.0))
    throw Error(ErrorCode::UnsupportedConfiguration, "observer_gain: only C = identity is supported");
  if (!(dt > 0.0) || !std::isfinite(pole_rate))
    throw Error(ErrorCode::InvalidParameter, "observer_gain: invalid pole rate or dt");
  const double pole = std::exp(-pole_rate * dt);
  return A - pole * Mat::Identity(A.rows(), A.cols());
}

ErrorSystem build_error_system(const LinearSystem& sys, const Mat& K, const Mat& L,
                               const UncertaintySpec& uncertainty) {
  const int n = sys.nx();
  const int no = sys.no();
  if (K.rows() != sys.nu() || K.cols() != n || L.rows() != n || L.cols() != no)
    throw Error(ErrorCode::DimensionMismatch, "build_error_system: gain dimensions mismatch");
  if (uncertainty.W_bar.dim() != n || uncertainty.V.dim() != no)
    throw Error(ErrorCode::DimensionMismatch, "build_error_system: uncertainty dimensions mismatch");
  const Mat est = sys.A - L * sys.C;
  const Mat ctrl = sys.A + sys.B * K;
  const double rho_est = spectral_radius(est);
  const double rho_ctrl = spectral_radius(ctrl);
  if (rho_est >= 1.0 || rho_ctrl >= 1.0) {
    std::ostringstream os;
    os << "build_error_system: unstable blocks (rho(A-LC)=" << rho_est << ", rho(A+BK)=" << rho_ctrl << ")";
    throw Error(ErrorCode::Synthesis, os.str());
  }
  ErrorSystem err;
  err.A_xi = Mat::Zero(2 * n, 2 * n);
  err.A_xi.topLeftCorner(n, n) = est;
  err.A_xi.bottomLeftCorner(n, n) = L * sys.C;
  err.A_xi.bottomRightCorner(n, n) = ctrl;

  err.generator = Mat::Zero(2 * n, n + no);
  err.generator.topLeftCorner(n, n) = Mat::Identity(n, n);
  err.generator.topRightCorner(n, no) = -L;
  err.generator.bottomRightCorner(n, no) = L;
  err.source = stack(uncertainty.W_bar, uncertainty.V);
  err.D = linear_map_outer(err.generator, err.source);
  return err;
}

Box estimate_mrpi_monte_carlo(const ErrorSystem& err, const MrpiOptions& options) {
  if (options.n_rollouts < 1 || options.horizon < 1)
    throw Error(ErrorCode::InvalidParameter, "estimate_mrpi_monte_carlo: n_rollouts and horizon must be >= 1");
  if (options.inflation < 1.0) throw Error(ErrorCode::InvalidParameter, "inflation must be >= 1");
  const Eigen::Index n = err.A_xi.rows();
  Vec lo = Vec::Zero(n);
  Vec hi = Vec::Zero(n);
  Vec xi(n);
  Vec next(n);
  for (int r = 0; r < options.n_rollouts; ++r) {
    Rng rng = make_stream(options.seed, 0x6d727069ULL, static_cast<std::uint64_t>(r));
    xi.setZero();
    for (int t = 0; t < options.horizon; ++t) {
      next.noalias() = err.A_xi * xi;
      next += err.sample_disturbance(rng);
      xi.swap(next);
      if (xi.cwiseAbs().maxCoeff() > options.divergence_limit)
        throw Error(ErrorCode::Instability, "estimate_mrpi_monte_carlo: trajectory diverged in rollout " +
                                                std::to_string(r));
      lo = lo.cwiseMin(xi);
      hi = hi.cwiseMax(xi);
    }
  }
  return Box(lo * options.inflation, hi * options.inflation);
}

Tightening tighten(const Box& X, const Box& U, const Box& S, const Mat& K) {
  const int n = X.dim();
  if (S.dim() != 2 * n || K.cols() != n || K.rows() != U.dim())
    throw Error(ErrorCode::DimensionMismatch, "tighten: dimension mismatch");
  // X may sit away from the origin (altitude band); the tube and U must not.
  if (!contains(S, Vec::Zero(2 * n)) || !contains(U, Vec::Zero(U.dim())))
    throw Error(ErrorCode::InvalidParameter, "tighten: S and U must contain the origin");
  Mat sum_map(n, 2 * n);
  sum_map << Mat::Identity(n, n), Mat::Identity(n, n);
  Mat ctrl_map = Mat::Zero(U.dim(), 2 * n);
  ctrl_map.rightCols(n) = K;

  Tightening out{X, U, linear_map_outer(sum_map, S), segment(S, n, n)};
  const Box KS = linear_map_outer(ctrl_map, S);
  const auto x_bar = pontryagin_diff(X, out.Z);
  const auto u_bar = pontryagin_diff(U, KS);
  if (!x_bar || !u_bar) {
    std::ostringstream os;
    os << "tube too large:";
    for (int i : pontryagin_inverted_components(X, out.Z)) {
      os << " X[" << i << "] width " << X.hi()(i) - X.lo()(i) << " < Z width " << out.Z.hi()(i) - out.Z.lo()(i)
         << ";";
    }
    for (int i : pontryagin_inverted_components(U, KS)) {
      os << " U[" << i << "] width " << U.hi()(i) - U.lo()(i) << " < [0 K]S width " << KS.hi()(i) - KS.lo()(i)
         << ";";
    }
    throw Error(ErrorCode::TubeTooLarge, os.str());
  }
  out.X_bar = *x_bar;
  out.U_bar = *u_bar;
  return out;
}

SynthesisResult synthesize(const SynthesisInputs& in) {
  in.sys.validate();
  in.cost.validate();
  in.uncertainty.validate();
  const DareSolution dare = solve_dare(in.sys.A, in.sys.B, in.cost.Q, in.cost.R);
  const Mat L = observer_gain(in.sys.A, in.sys.C, in.observer_pole_rate, in.sys.dt);
  const ErrorSystem err = build_error_system(in.sys, dare.K, L, in.uncertainty);
  const Box S = estimate_mrpi_monte_carlo(err, in.mrpi);
  const Tightening t = tighten(in.X, in.U, S, dare.K);
  SynthesisResult out{dare.K, L, dare.P, S, t.Z, t.S_ctrl, t.X_bar, t.U_bar, t.X_bar};
  return out;
}

}  // namespace tubelab
