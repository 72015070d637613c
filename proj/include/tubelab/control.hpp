#pragma once

#include "tubelab/controller.hpp"
#include "tubelab/model.hpp"
#include "tubelab/qp.hpp"
#include "tubelab/setops.hpp"
#include "tubelab/synthesis.hpp"

#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace tubelab {

struct ReferenceTrajectory {
  std::vector<State> samples;
  double dt = 0.1;

  std::size_t size() const { return samples.size(); }
  const State& at(std::size_t t) const;
  // X^des_t = {x_des_{0|t}, ..., x_des_{N|t}}, padded by holding the last sample.
  std::vector<State> window(std::size_t t, int horizon) const;
};

struct MpcSolution {
  Vec x_bar_star;                 // x̄*_{0|t}
  Vec u_bar_star;                 // ū*_{0|t}, absolute input
  std::vector<Vec> predicted_states;
  std::vector<Vec> predicted_inputs;  // absolute inputs
  int qp_iterations = 0;
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  bool softened = false;
};

struct MpcOptions {
  QpSettings qp;
  double soft_penalty = 1e6;
  bool warm_start = true;
};

// Condensed output-feedback tube MPC. Decision variables are x̄_{0|t} and the
// input deviations ū_{0..N-1|t} - u_eq; predicted states are eliminated.
class RtmpcSolver {
 public:
  RtmpcSolver(const LinearSystem& sys, const CostSpec& cost, const SynthesisResult& syn, int horizon,
              MpcOptions options = {});
  ~RtmpcSolver();
  RtmpcSolver(RtmpcSolver&&) noexcept;
  RtmpcSolver& operator=(RtmpcSolver&&) noexcept;

  int horizon() const { return horizon_; }
  int num_variables() const;

  // Throws Error(Infeasible) naming the violated block, or Error(Convergence).
  MpcSolution solve(const Vec& x_hat, std::span<const State> ref_window);
  // State constraints replaced by a quadratic penalty on slack; the initial
  // state coupling stays hard.
  MpcSolution solve_soft(const Vec& x_hat, std::span<const State> ref_window);
  void reset();

 private:
  struct Condensed;
  MpcSolution extract(const Vec& z, int iterations, const QpResult& qp, const Vec& ref_stack, bool softened) const;
  Vec stack_reference(std::span<const State> ref_window) const;

  LinearSystem sys_;
  CostSpec cost_;
  SynthesisResult syn_;
  int horizon_ = 0;
  MpcOptions options_;
  std::unique_ptr<Condensed> data_;
  std::unique_ptr<QpSolver> hard_;
  std::unique_ptr<QpSolver> soft_;
  std::optional<Vec> last_z_;
  std::optional<Vec> last_y_;
};

MpcSolution solve_rtmpc(const Vec& x_hat, std::span<const State> ref_window, const SynthesisResult& syn,
                        const LinearSystem& sys, const CostSpec& cost, int horizon, const MpcOptions& options = {});

// u = ū* + K (x̂ - x̄*)
Vec ancillary(const Vec& x_hat, const MpcSolution& sol, const SynthesisResult& syn);
Vec ancillary(const Vec& x_hat, const Vec& x_bar, const Vec& u_bar, const Mat& K);

Vec saturate(const Vec& u, const Box& U);

struct EstimatorState {
  Vec x_hat;
};

// x̂+ = A x̂ + B (u - u_eq) + L (ō - C x̂)
EstimatorState observer_step(const EstimatorState& est, const Vec& u, const Vec& obs, const LinearSystem& sys,
                             const Mat& L);

struct ExpertOptions {
  int horizon = 30;
  MpcOptions mpc;
  bool soft_fallback = true;
};

// Output-feedback RTMPC expert: observer + tube MPC + ancillary law.
class ExpertController final : public Controller {
 public:
  // U_abs is the actuator box in absolute input coordinates.
  ExpertController(const LinearSystem& sys, const CostSpec& cost, const SynthesisResult& syn, const Box& U_abs,
                   ExpertOptions options = {});

  Action act(const SensorFrame& frame, std::span<const State> ref_window) override;
  void on_applied(const Action& u) override;
  void reset() override;
  StepInfo info() const override { return info_; }

  const MpcSolution& last_solution() const { return last_; }
  const Vec& estimate() const { return est_.x_hat; }
  // Label the ancillary law would produce at an arbitrary state, using the last plan.
  Action label_at(const Vec& x) const;

 private:
  LinearSystem sys_;
  SynthesisResult syn_;
  Box U_abs_;
  ExpertOptions options_;
  RtmpcSolver mpc_;
  EstimatorState est_;
  bool initialized_ = false;
  Vec last_obs_;
  Vec last_applied_;
  MpcSolution last_;
  StepInfo info_;
};

}  // namespace tubelab
