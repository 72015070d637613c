#pragma once

#include "tubelab/config.hpp"
#include "tubelab/learn.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace tubelab {

// Everything derived from a RunConfig that episodes, experts and learners share.
struct Lab {
  RunConfig cfg;
  std::uint64_t hash = 0;
  SynthesisInputs inputs;
  SynthesisResult syn;
  Box U_abs;
  ReferenceTrajectory ref;
  Camera camera;
  EpisodeOptions episode;
  AugmentConfig da;
  ExpertOptions expert;
  PolicyShape shape;
  Normalizer norm;

  std::string header() const;  // "# config_hash=... seed=..."
};

Lab make_lab(const RunConfig& cfg, const std::optional<SynthesisResult>& cached = std::nullopt);

// Named environments: source (no wind, no noise), dr (wind only), noise
// (Gaussian sensing noise), noise_wind, bounded_wind (wind + bounded noise).
EnvSpec env_spec(const Lab& lab, const std::string& name);

// Episode `episode` of environment `env`: disturbance and initial state.
std::pair<DisturbanceRealization, State> episode_setup(const Lab& lab, const std::string& env, std::uint64_t stream,
                                                       int episode);

std::vector<EpisodeResult> evaluate(const Lab& lab, Controller& ctrl, const std::string& env, int seeds,
                                    int episodes_per_seed,
                                    const std::function<void(Image&, Rng&)>& image_stress = {});

struct MethodSpec {
  std::string name;
  bool dagger = false;
  bool domain_randomization = false;
  bool tube = false;
  int n_samples = 0;
  int demos_per_round = 1;
};

MethodSpec parse_method(const std::string& name, const RunConfig& cfg);

struct RoundRow {
  std::string method;
  std::string env;
  int round = 0;
  int demos = 0;
  std::optional<double> wallclock_s;
  Metrics metrics;
  double ci95 = 0.0;
  std::string error;
};

struct MethodRun {
  std::vector<RoundRow> rows;
  std::optional<PolicyParams> policy;
  std::vector<Demonstration> demos;  // last round only
  std::vector<int> n_real;           // per augmented step, all rounds
  std::vector<int> n_synthetic;
  std::size_t training_samples = 0;  // last round
};

struct ExpertBaseline {
  std::string env;
  Metrics metrics;
};

std::vector<ExpertBaseline> expert_baselines(const Lab& lab, const std::vector<std::string>& envs);

PolicyParams initial_policy(const Lab& lab);

// Rounds of collect / augment / train / evaluate for one method.
MethodRun run_method(const Lab& lab, const MethodSpec& method, int rounds, const std::vector<std::string>& envs,
                     const std::vector<ExpertBaseline>& baselines,
                     const std::function<void(const RoundRow&)>& on_row = {});

// Training samples for one set of demonstrations (demo steps plus augmentation).
std::vector<TrainingSample> build_dataset(const Lab& lab, const MethodSpec& method,
                                          const std::vector<Demonstration>& demos, const ObservationDatabase& db,
                                          int first_demo_index, std::vector<int>* n_real = nullptr,
                                          std::vector<int>* n_synthetic = nullptr);

double ci95(const std::vector<EpisodeResult>& results);

}  // namespace tubelab
