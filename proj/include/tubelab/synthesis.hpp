#pragma once

#include "tubelab/common.hpp"
#include "tubelab/model.hpp"
#include "tubelab/setops.hpp"

namespace tubelab {

struct CostSpec {
  Mat Q;  // state weight, PSD
  Mat R;  // input weight, PD

  void validate() const;
};

struct UncertaintySpec {
  Box W;      // process uncertainty seen by the plant
  Box W_bar;  // inflated process prior used for the tube
  Box V;      // sensing uncertainty

  void validate() const;
};

// xi+ = A_xi xi + delta, xi = [estimation error; control error].
//
// When `generator` is set, delta = generator * s with s ~ Uniform(source);
// D is the outer box of that image. Without a generator delta ~ Uniform(D).
struct ErrorSystem {
  Mat A_xi;
  Box D;
  Mat generator;
  Box source;

  bool has_generator() const { return generator.size() > 0; }
  Vec sample_disturbance(Rng& rng) const;
};

struct DareSolution {
  Mat P;
  Mat K;  // stabilizing gain: A + B K is Schur
  int iterations = 0;
};

struct MrpiOptions {
  int n_rollouts = 2000;
  int horizon = 300;
  double inflation = 1.1;
  std::uint64_t seed = 0;
  double divergence_limit = 1e6;
};

struct Tightening {
  Box X_bar;
  Box U_bar;
  Box Z;
  Box S_ctrl;
};

struct SynthesisResult {
  Mat K;  // n_u x n_x ancillary gain
  Mat L;  // n_x x n_o observer gain
  Mat P;  // terminal cost
  Box S;  // 2 n_x
  Box Z;
  Box S_ctrl;
  Box X_bar;
  Box U_bar;  // in the linear model's input coordinates (u - u_eq)
  Box X_bar_N;
};

double spectral_radius(const Mat& M);

double dare_residual(const Mat& A, const Mat& B, const Mat& Q, const Mat& R, const Mat& P);

DareSolution solve_dare(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
                        double tol = 1e-12, int max_iterations = 100000);

Mat observer_gain(const Mat& A, const Mat& C, double pole_rate, double dt);

ErrorSystem build_error_system(const LinearSystem& sys, const Mat& K, const Mat& L,
                               const UncertaintySpec& uncertainty);

Box estimate_mrpi_monte_carlo(const ErrorSystem& err, const MrpiOptions& options);

// Throws Error(TubeTooLarge) naming the offending components.
Tightening tighten(const Box& X, const Box& U, const Box& S, const Mat& K);

struct SynthesisInputs {
  LinearSystem sys;
  CostSpec cost;
  UncertaintySpec uncertainty;
  Box X;  // state constraints
  Box U;  // input constraints, linear-model coordinates
  double observer_pole_rate = 30.0;
  MrpiOptions mrpi;
};

SynthesisResult synthesize(const SynthesisInputs& in);

}  // namespace tubelab
