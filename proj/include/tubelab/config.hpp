#pragma once

#include "tubelab/common.hpp"
#include "tubelab/model.hpp"
#include "tubelab/synthesis.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace tubelab {

struct CostConfig {
  std::vector<double> q_diag = {1, 1, 3, 1, 1, 1, 0.1, 0.1};
  std::vector<double> r_diag = {100, 100, 1};
};

struct ConstraintConfig {
  // State box; attitude bounds are the last two entries.
  std::vector<double> x_lo = {-14.5, -9.5, 0.5, -5.5, -5.5, -5.5, -0.6, -0.6};
  std::vector<double> x_hi = {14.5, 9.5, 4.5, 5.5, 5.5, 5.5, 0.6, 0.6};
};

struct UncertaintyConfig {
  double wind_min_frac = 0.10;  // of m g
  double wind_max_frac = 0.19;
  double wbar_frac = 0.20;
  std::vector<double> sigma3_cam = {0.6, 0.6};
  std::vector<double> sigma3_other = {0.4, 0.2, 0.2, 0.2, 0.05, 0.05};
};

struct MpcConfig {
  int horizon = 30;
  double observer_pole_rate = 30.0;
  int mrpi_rollouts = 2000;
  int mrpi_horizon = 300;
  double mrpi_inflation = 1.1;
  double qp_eps = 1e-6;
  int qp_max_iterations = 20000;
  double soft_penalty = 1e6;
};

struct TaskConfig {
  std::string trajectory = "lemniscate";
  double duration = 30.0;
  double speed_scale = 1.0;
  double altitude = 2.5;
  int t_max = 300;
  double x0_spread = 0.1;
};

struct VisionConfig {
  int width = 16;
  int height = 16;
  double fov_deg = 90.0;
  double tilt_deg = 45.0;
  std::uint64_t texture_seed = 7;
  double perturb_rot_deg = 2.0;
  double perturb_trans = 0.02;
  double p_brightness = 0.5;
  double brightness_min = 0.9;
  double brightness_max = 1.1;
  double p_gamma = 0.5;
  double gamma_min = 0.9;
  double gamma_max = 1.1;
  double p_noise = 0.5;
  double noise_sigma_max = 0.03;
  double p_blur = 0.3;
  double blur_sigma_max = 0.8;
  double p_erase = 0.2;
  double erase_max_frac = 0.25;
};

struct DaConfig {
  int n_samples = 100;
  double epsilon_bar = 0.5;
  bool perturb_extrinsics = true;
  bool randomize_images = true;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 50;
  int patience = 7;
  double lambda_aux = 0.1;
  std::vector<double> image_hidden = {128, 64};
  std::vector<double> fusion_hidden = {128, 64};
  std::string method = "bc_tn100";  // what `train` fits
  int rounds = 1;
};

struct ExperimentConfig {
  int rounds = 5;
  int eval_seeds = 3;
  int episodes_per_seed = 5;
  int demos_per_round_tn = 1;
  int demos_per_round_baseline = 10;
  double success_threshold = 70.0;
  std::vector<std::string> methods = {"bc", "dagger", "bc_dr", "dagger_dr", "bc_tn100", "dagger_tn100",
                                      "bc_tn50", "dagger_tn50"};
  std::vector<std::string> envs = {"noise", "noise_wind"};
  bool record_wallclock = true;
};

struct NoiseSweepConfig {
  std::vector<double> noise_sigmas = {0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.8};
  std::vector<double> blur_sigmas = {0.0, 0.5, 1.0, 2.0, 4.0, 8.0};
  int episodes = 10;
  std::string env = "dr";
  std::string policy = "policy.tlp";
};

struct RunConfig {
  std::uint64_t seed = 0;
  double dt = 0.1;
  double dt_sim = 0.01;
  MultirotorParams model;
  CostConfig cost;
  ConstraintConfig constraints;
  UncertaintyConfig uncertainty;
  MpcConfig mpc;
  TaskConfig task;
  VisionConfig vision;
  DaConfig da;
  TrainConfig train;
  ExperimentConfig experiment;
  NoiseSweepConfig sweep;

  void validate() const;
};

// TOML-style text: `[section]` headers and `key = value` lines, values being
// numbers, booleans, "strings" or [arrays]. Unknown keys are rejected.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Canonical rendering of every field (defaults included); stable across runs.
std::string dump_config(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);
std::string hash_hex(std::uint64_t h);

// Switch to the full evaluation counts (10 seeds x 10 episodes).
void apply_full_scale(RunConfig& cfg);

// Derived objects.
LinearSystem make_linear_system(const RunConfig& cfg);
CostSpec make_cost(const RunConfig& cfg);
Box state_constraints(const RunConfig& cfg);
Box input_constraints(const RunConfig& cfg);  // absolute inputs
Vec sensing_sigma(const RunConfig& cfg);      // 8-vector, one sigma per state
UncertaintySpec make_uncertainty(const RunConfig& cfg);
SynthesisInputs make_synthesis_inputs(const RunConfig& cfg);

}  // namespace tubelab
