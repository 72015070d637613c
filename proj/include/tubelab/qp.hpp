#pragma once

#include "tubelab/common.hpp"

namespace tubelab {

// Dense convex QP
//   minimize   1/2 x'Px + q'x
//   subject to l <= A x <= u
// solved by operator splitting (ADMM) with Ruiz equilibration, adaptive
// penalty and an active-set polishing step.
struct QpSettings {
  double eps_abs = 1e-6;        // required primal/dual residual (unscaled, inf-norm)
  double eps_admm = 1e-4;       // ADMM accuracy at which polishing is attempted
  double eps_infeasible = 1e-6;
  int max_iterations = 20000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  int scaling_iterations = 10;
  int check_interval = 10;
  int adapt_interval = 50;
  bool polish = true;
};

enum class QpStatus { Solved, PrimalInfeasible, MaxIterations };

const char* to_string(QpStatus status);

struct QpResult {
  Vec x;
  Vec y;
  QpStatus status = QpStatus::MaxIterations;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  bool polished = false;
};

class QpSolver {
 public:
  QpSolver(const Mat& P, const Mat& A, QpSettings settings = {});

  int num_variables() const { return static_cast<int>(P_.rows()); }
  int num_constraints() const { return static_cast<int>(A_.rows()); }

  void set_data(const Vec& q, const Vec& l, const Vec& u);
  void warm_start(const Vec& x, const Vec& y);
  void reset_warm_start();

  QpResult solve();

  // Unscaled residuals of a candidate primal/dual pair.
  double primal_residual(const Vec& x) const;
  double dual_residual(const Vec& x, const Vec& y) const;

 private:
  void factorize();
  bool try_polish(const Vec& x_scaled, const Vec& z_scaled, const Vec& y_scaled, QpResult& out) const;

  QpSettings settings_;
  // Original data.
  Mat P_;
  Mat A_;
  Vec q_, l_, u_;
  // Scaled data.
  Vec D_, E_;
  double c_ = 1.0;
  Mat Ps_, As_;
  Vec qs_, ls_, us_;
  Vec rho_vec_;
  double rho_ = 0.1;
  Eigen::LLT<Mat> kkt_;
  // Iterates (scaled).
  Vec x_, z_, y_;
  bool has_data_ = false;
};

}  // namespace tubelab
