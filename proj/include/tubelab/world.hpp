#pragma once

#include "tubelab/control.hpp"
#include "tubelab/controller.hpp"
#include "tubelab/model.hpp"
#include "tubelab/setops.hpp"
#include "tubelab/synthesis.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace tubelab {

enum class TrajectoryKind { Lemniscate, Circle, Hover };
TrajectoryKind parse_trajectory_kind(const std::string& name);

// Closed-form reference at time t (position, analytic velocity, zero attitude).
State reference_point(TrajectoryKind kind, double t, double duration, double speed_scale, double altitude);

// round(duration / dt) samples starting at t = 0.
ReferenceTrajectory make_reference(TrajectoryKind kind, double duration, double speed_scale, double dt,
                                   double altitude);

enum class NoiseMode { None, Bounded, Gaussian };
enum class PlantMode { Linear, Nonlinear };

struct DisturbanceRealization {
  Vec3 wind_force = Vec3::Zero();  // N, constant over the episode
  NoiseMode noise = NoiseMode::None;
  Vec sigma;                       // per-state std (Gaussian mode)
  Box V;                           // bounds (Bounded mode)
  std::optional<Box> process_box;  // extra per-step additive w ~ Uniform(box), linear plant only
  std::uint64_t noise_seed = 0;
};

struct EnvSpec {
  bool wind = false;
  double wind_min = 0.0;  // N
  double wind_max = 0.0;  // N
  NoiseMode noise = NoiseMode::None;
};

// Wind direction uniform on the sphere, magnitude uniform in [wind_min, wind_max].
DisturbanceRealization realize_disturbance(const EnvSpec& env, const Vec& sigma, const Box& V, Rng& rng);

// ō = x + v; o_other = [p_z, v, roll, pitch] of ō.
SensorFrame sense(const State& x, const DisturbanceRealization& dist, Rng& rng);

OtherVec select_other(const Vec& full);

struct StepRecord {
  int t = 0;
  State x;
  State x_des;
  Action u;
  StepInfo info;
  SensorFrame frame;  // image kept only when EpisodeOptions::keep_images
};

struct EpisodeResult {
  int episode_length = 0;
  bool success = false;
  double stage_cost = 0.0;
  double rms_xyz = 0.0;
  bool any_flagged = false;
  std::vector<StepRecord> trace;
};

struct EpisodeOptions {
  PlantMode plant = PlantMode::Nonlinear;
  int t_max = 300;
  LinearSystem sys;        // prediction model; also the plant in Linear mode
  MultirotorParams params;
  double dt_sim = 0.01;
  Box X;                   // termination set
  Box U_abs;               // actuator limits (applied before the plant)
  CostSpec cost;
  std::function<Image(const State&)> camera;  // required if the controller needs images
  std::function<void(Image&, Rng&)> image_stress;
  bool keep_images = false;
  bool keep_trace = true;
};

// Runs until the first state outside X or t_max steps. Controller errors are
// rethrown with the step index attached.
EpisodeResult run_episode(Controller& ctrl, const ReferenceTrajectory& ref, const DisturbanceRealization& dist,
                          const State& x0, const EpisodeOptions& opts, int horizon);

State sample_initial_state(const ReferenceTrajectory& ref, double spread, Rng& rng);

struct Metrics {
  double success_rate = 0.0;  // percent
  double mean_episode_length = 0.0;
  std::optional<double> expert_gap;  // percent, undefined without successes
  double mean_stage_cost = 0.0;      // over successful episodes
  double mean_rms_xyz = 0.0;
  int episodes = 0;
};

Metrics score(const std::vector<EpisodeResult>& results, double expert_cost);

// One row per step: t, x(8), x_hat(8), u(3), x_bar(8), cost.
void write_trace_csv(const std::filesystem::path& path, const EpisodeResult& result, const CostSpec& cost,
                     const Vec& u_eq, const std::string& header);

}  // namespace tubelab
