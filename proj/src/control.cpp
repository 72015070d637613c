#include "tubelab/control.hpp"

#include <sstream>

namespace tubelab {

const State& ReferenceTrajectory::at(std::size_t t) const {
  if (samples.empty()) throw Error(ErrorCode::EmptyInput, "reference trajectory is empty");
  return samples[std::min(t, samples.size() - 1)];
}

std::vector<State> ReferenceTrajectory::window(std::size_t t, int horizon) const {
  std::vector<State> out;
  out.reserve(static_cast<std::size_t>(horizon) + 1);
  for (int i = 0; i <= horizon; ++i) out.push_back(at(t + static_cast<std::size_t>(i)));
  return out;
}

struct RtmpcSolver::Condensed {
  int n = 0;
  int m = 0;
  int N = 0;
  int nz = 0;
  Mat Sx;     // stacked states = Sx z
  Mat H;      // QP Hessian (factor 2 included)
  Mat G;      // q = G r
  Mat A_hard;
  Mat A_soft;
  Mat P_soft;
  Vec u_eq;
};

RtmpcSolver::RtmpcSolver(const LinearSystem& sys, const CostSpec& cost, const SynthesisResult& syn, int horizon,
                         MpcOptions options)
    : sys_(sys), cost_(cost), syn_(syn), horizon_(horizon), options_(options), data_(std::make_unique<Condensed>()) {
  if (horizon < 1) throw Error(ErrorCode::InvalidParameter, "MPC horizon must be >= 1");
  sys_.validate();
  cost_.validate();
  const int n = sys_.nx();
  const int m = sys_.nu();
  const int N = horizon;
  if (cost_.Q.rows() != n || cost_.R.rows() != m || syn_.P.rows() != n || syn_.X_bar.dim() != n ||
      syn_.U_bar.dim() != m || syn_.S_ctrl.dim() != n || syn_.X_bar_N.dim() != n)
    throw Error(ErrorCode::DimensionMismatch, "RtmpcSolver: synthesis/cost dimensions do not match the model");

  Condensed& d = *data_;
  d.n = n;
  d.m = m;
  d.N = N;
  d.nz = n + N * m;
  d.u_eq = sys_.u_eq.size() == m ? sys_.u_eq : Vec::Zero(m);

  d.Sx = Mat::Zero((N + 1) * n, d.nz);
  d.Sx.topLeftCorner(n, n) = Mat::Identity(n, n);
  for (int i = 1; i <= N; ++i) {
    d.Sx.block(i * n, 0, n, d.nz) = sys_.A * d.Sx.block((i - 1) * n, 0, n, d.nz);
    d.Sx.block(i * n, n + (i - 1) * m, n, m) += sys_.B;
  }
  Mat QSx(d.Sx.rows(), d.nz);
  for (int i = 0; i <= N; ++i) {
    const Mat& W = i < N ? cost_.Q : syn_.P;
    QSx.block(i * n, 0, n, d.nz) = W * d.Sx.block(i * n, 0, n, d.nz);
  }
  d.H = 2.0 * d.Sx.transpose() * QSx;
  for (int i = 0; i < N; ++i) d.H.block(n + i * m, n + i * m, m, m) += 2.0 * cost_.R;
  d.H = 0.5 * (d.H + d.H.transpose());
  d.G = -2.0 * QSx.transpose();

  d.A_hard = Mat::Zero(d.nz + N * n, d.nz);
  d.A_hard.topRows(d.nz) = Mat::Identity(d.nz, d.nz);
  d.A_hard.bottomRows(N * n) = d.Sx.bottomRows(N * n);

  const int ns = (N + 1) * n;
  d.A_soft = Mat::Zero(d.nz + ns, d.nz + ns);
  d.A_soft.topLeftCorner(d.nz, d.nz) = Mat::Identity(d.nz, d.nz);
  d.A_soft.bottomLeftCorner(ns, d.nz) = d.Sx;
  d.A_soft.bottomRightCorner(ns, ns) = -Mat::Identity(ns, ns);
  d.P_soft = Mat::Zero(d.nz + ns, d.nz + ns);
  d.P_soft.topLeftCorner(d.nz, d.nz) = d.H;
  d.P_soft.bottomRightCorner(ns, ns) = 2.0 * options_.soft_penalty * Mat::Identity(ns, ns);

  hard_ = std::make_unique<QpSolver>(d.H, d.A_hard, options_.qp);
}

RtmpcSolver::~RtmpcSolver() = default;
RtmpcSolver::RtmpcSolver(RtmpcSolver&&) noexcept = default;
RtmpcSolver& RtmpcSolver::operator=(RtmpcSolver&&) noexcept = default;

int RtmpcSolver::num_variables() const { return data_->nz; }

void RtmpcSolver::reset() {
  last_z_.reset();
  last_y_.reset();
  hard_->reset_warm_start();
}

Vec RtmpcSolver::stack_reference(std::span<const State> ref_window) const {
  const Condensed& d = *data_;
  if (static_cast<int>(ref_window.size()) < d.N + 1)
    throw Error(ErrorCode::DimensionMismatch, "reference window shorter than horizon + 1");
  Vec r((d.N + 1) * d.n);
  for (int i = 0; i <= d.N; ++i) {
    if (ref_window[static_cast<std::size_t>(i)].size() != d.n)
      throw Error(ErrorCode::DimensionMismatch, "reference state dimension mismatch");
    r.segment(i * d.n, d.n) = ref_window[static_cast<std::size_t>(i)].head(d.n);
  }
  return r;
}

MpcSolution RtmpcSolver::extract(const Vec& z, int iterations, const QpResult& qp, const Vec& ref_stack,
                                 bool softened) const {
  const Condensed& d = *data_;
  MpcSolution sol;
  Vec x = z.head(d.n);
  sol.predicted_states.push_back(x);
  double objective = 0.0;
  for (int i = 0; i < d.N; ++i) {
    const Vec du = z.segment(d.n + i * d.m, d.m);
    const Vec e = x - ref_stack.segment(i * d.n, d.n);
    objective += e.dot(cost_.Q * e) + du.dot(cost_.R * du);
    sol.predicted_inputs.push_back(du + d.u_eq);
    x = sys_.A * x + sys_.B * du;
    sol.predicted_states.push_back(x);
  }
  const Vec eN = x - ref_stack.segment(d.N * d.n, d.n);
  objective += eN.dot(syn_.P * eN);
  sol.x_bar_star = sol.predicted_states.front();
  sol.u_bar_star = sol.predicted_inputs.front();
  sol.objective = objective;
  sol.qp_iterations = iterations;
  sol.primal_residual = qp.primal_residual;
  sol.dual_residual = qp.dual_residual;
  sol.softened = softened;
  return sol;
}

MpcSolution RtmpcSolver::solve(const Vec& x_hat, std::span<const State> ref_window) {
  const Condensed& d = *data_;
  if (x_hat.size() != d.n) throw Error(ErrorCode::DimensionMismatch, "x_hat dimension mismatch");
  if (!x_hat.allFinite()) throw Error(ErrorCode::InvalidParameter, "x_hat is not finite");
  const Vec r = stack_reference(ref_window);

  // x̂ ∈ x̄_0 ⊕ S_ctrl  <=>  x̄_0 ∈ [x̂ - S_hi, x̂ - S_lo]
  const Vec init_lo = (x_hat - syn_.S_ctrl.hi()).cwiseMax(syn_.X_bar.lo());
  const Vec init_hi = (x_hat - syn_.S_ctrl.lo()).cwiseMin(syn_.X_bar.hi());
  if ((init_lo.array() > init_hi.array()).any()) {
    std::ostringstream os;
    os << "infeasible initial-state block: x_hat ⊖ S_ctrl does not meet X_bar in components";
    for (int i = 0; i < d.n; ++i) {
      if (init_lo(i) > init_hi(i)) os << " " << i << " (x_hat=" << x_hat(i) << ")";
    }
    throw Error(ErrorCode::Infeasible, os.str());
  }

  const int m_rows = d.nz + d.N * d.n;
  Vec l(m_rows), u(m_rows);
  l.head(d.n) = init_lo;
  u.head(d.n) = init_hi;
  for (int i = 0; i < d.N; ++i) {
    l.segment(d.n + i * d.m, d.m) = syn_.U_bar.lo();
    u.segment(d.n + i * d.m, d.m) = syn_.U_bar.hi();
  }
  for (int i = 1; i <= d.N; ++i) {
    const Box& Xi = i < d.N ? syn_.X_bar : syn_.X_bar_N;
    l.segment(d.nz + (i - 1) * d.n, d.n) = Xi.lo();
    u.segment(d.nz + (i - 1) * d.n, d.n) = Xi.hi();
  }
  const Vec q = d.G * r;
  hard_->set_data(q, l, u);
  if (options_.warm_start && last_z_) {
    Vec z = *last_z_;
    // Shift the previous plan by one step.
    z.head(d.n) = d.Sx.block(d.n, 0, d.n, d.nz) * (*last_z_);
    for (int i = 0; i + 1 < d.N; ++i) z.segment(d.n + i * d.m, d.m) = last_z_->segment(d.n + (i + 1) * d.m, d.m);
    hard_->warm_start(z, *last_y_);
  } else {
    hard_->reset_warm_start();
  }
  const QpResult res = hard_->solve();
  if (res.status == QpStatus::PrimalInfeasible) {
    reset();
    throw Error(ErrorCode::Infeasible, "infeasible state-constraint block: no nominal trajectory keeps x̄ in X_bar");
  }
  if (res.status != QpStatus::Solved) {
    reset();
    std::ostringstream os;
    os << "MPC QP did not converge in " << res.iterations << " iterations (primal residual " << res.primal_residual
       << ", dual residual " << res.dual_residual << ")";
    throw Error(ErrorCode::Convergence, os.str());
  }
  last_z_ = res.x;
  last_y_ = res.y;
  return extract(res.x, res.iterations, res, r, false);
}

MpcSolution RtmpcSolver::solve_soft(const Vec& x_hat, std::span<const State> ref_window) {
  const Condensed& d = *data_;
  if (x_hat.size() != d.n) throw Error(ErrorCode::DimensionMismatch, "x_hat dimension mismatch");
  const Vec r = stack_reference(ref_window);
  if (!soft_) soft_ = std::make_unique<QpSolver>(d.P_soft, d.A_soft, options_.qp);
  const int ns = (d.N + 1) * d.n;
  const int m_rows = d.nz + ns;
  Vec l(m_rows), u(m_rows);
  l.head(d.n) = x_hat - syn_.S_ctrl.hi();
  u.head(d.n) = x_hat - syn_.S_ctrl.lo();
  for (int i = 0; i < d.N; ++i) {
    l.segment(d.n + i * d.m, d.m) = syn_.U_bar.lo();
    u.segment(d.n + i * d.m, d.m) = syn_.U_bar.hi();
  }
  for (int i = 0; i <= d.N; ++i) {
    const Box& Xi = i < d.N ? syn_.X_bar : syn_.X_bar_N;
    l.segment(d.nz + i * d.n, d.n) = Xi.lo();
    u.segment(d.nz + i * d.n, d.n) = Xi.hi();
  }
  Vec q = Vec::Zero(d.nz + ns);
  q.head(d.nz) = d.G * r;
  soft_->set_data(q, l, u);
  soft_->reset_warm_start();
  const QpResult res = soft_->solve();
  // The penalty makes this problem badly scaled; a primal-feasible iterate is
  // good enough for a step that is flagged anyway.
  const bool usable = res.status == QpStatus::Solved ||
                      (res.status == QpStatus::MaxIterations && res.x.allFinite() && res.primal_residual < 1e-4);
  if (!usable) {
    std::ostringstream os;
    os << "softened MPC QP failed (" << to_string(res.status) << ", primal residual " << res.primal_residual << ")";
    throw Error(ErrorCode::Convergence, os.str());
  }
  reset();
  return extract(res.x.head(d.nz), res.iterations, res, r, true);
}

MpcSolution solve_rtmpc(const Vec& x_hat, std::span<const State> ref_window, const SynthesisResult& syn,
                        const LinearSystem& sys, const CostSpec& cost, int horizon, const MpcOptions& options) {
  RtmpcSolver solver(sys, cost, syn, horizon, options);
  return solver.solve(x_hat, ref_window);
}

Vec ancillary(const Vec& x_hat, const Vec& x_bar, const Vec& u_bar, const Mat& K) {
  return u_bar + K * (x_hat - x_bar);
}

Vec ancillary(const Vec& x_hat, const MpcSolution& sol, const SynthesisResult& syn) {
  return ancillary(x_hat, sol.x_bar_star, sol.u_bar_star, syn.K);
}

Vec saturate(const Vec& u, const Box& U) {
  if (u.size() != U.dim()) throw Error(ErrorCode::DimensionMismatch, "saturate: dimension mismatch");
  return u.cwiseMax(U.lo()).cwiseMin(U.hi());
}

EstimatorState observer_step(const EstimatorState& est, const Vec& u, const Vec& obs, const LinearSystem& sys,
                             const Mat& L) {
  return {sys.step(est.x_hat, u) + L * (obs - sys.C * est.x_hat)};
}

ExpertController::ExpertController(const LinearSystem& sys, const CostSpec& cost, const SynthesisResult& syn,
                                   const Box& U_abs, ExpertOptions options)
    : sys_(sys),
      syn_(syn),
      U_abs_(U_abs),
      options_(options),
      mpc_(sys, cost, syn, options.horizon, options.mpc) {}

void ExpertController::reset() {
  initialized_ = false;
  mpc_.reset();
  info_ = {};
}

Action ExpertController::act(const SensorFrame& frame, std::span<const State> ref_window) {
  const Vec obs = frame.full;
  if (!initialized_) {
    est_.x_hat = obs;
    initialized_ = true;
  } else {
    est_ = observer_step(est_, last_applied_, last_obs_, sys_, syn_.L);
  }
  last_obs_ = obs;
  info_ = {};
  try {
    last_ = mpc_.solve(est_.x_hat, ref_window);
  } catch (const Error& e) {
    if (!options_.soft_fallback || (e.code() != ErrorCode::Infeasible && e.code() != ErrorCode::Convergence)) throw;
    last_ = mpc_.solve_soft(est_.x_hat, ref_window);
    info_.flagged = true;
  }
  const Action u = saturate(ancillary(est_.x_hat, last_, syn_), U_abs_);
  last_applied_ = u;
  info_.x_hat = State(est_.x_hat);
  info_.x_bar = State(last_.x_bar_star);
  info_.u_bar = Action(last_.u_bar_star);
  info_.qp_iterations = last_.qp_iterations;
  info_.expert_action = u;
  return u;
}

void ExpertController::on_applied(const Action& u) { last_applied_ = u; }

Action ExpertController::label_at(const Vec& x) const {
  return saturate(ancillary(x, last_, syn_), U_abs_);
}

}  // namespace tubelab
