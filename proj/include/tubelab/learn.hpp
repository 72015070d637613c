#pragma once

#include "tubelab/control.hpp"
#include "tubelab/policy.hpp"
#include "tubelab/vision.hpp"
#include "tubelab/world.hpp"

#include <optional>
#include <string>
#include <vector>

namespace tubelab {

// Nominal camera: renders the view from a true state.
struct Camera {
  CameraRig rig;
  GroundTexture texture;

  Image operator()(const State& x) const;
};

struct DemoStep {
  int t = 0;
  Observation obs;
  Action u_label = Action::Zero();     // expert action at the visited state
  Action u_executed = Action::Zero();  // action applied to the plant
  State x_bar = State::Zero();         // x̄*_t
  Action u_bar = Action::Zero();       // ū*_t, absolute
  State x_hat = State::Zero();
  Vec ref;                             // subsampled reference window
  bool flagged = false;
};

struct Demonstration {
  std::vector<DemoStep> steps;
  int episode_length = 0;
  bool success = false;
  bool rejected = false;
  std::string reject_reason;
};

// Expert/learner mixture: each step executes the expert action with
// probability beta, the learner action otherwise. The expert always runs so
// its estimator and labels follow the visited states.
class MixedController final : public Controller {
 public:
  MixedController(ExpertController& expert, Controller* learner, double beta, std::uint64_t seed);
  Action act(const SensorFrame& frame, std::span<const State> ref_window) override;
  void on_applied(const Action& u) override;
  void reset() override;
  bool needs_image() const override { return true; }
  StepInfo info() const override { return info_; }

 private:
  ExpertController& expert_;
  Controller* learner_;
  double beta_;
  std::uint64_t seed_;
  Rng rng_;
  StepInfo info_;
};

struct CollectOptions {
  double beta = 1.0;                 // 1 executes the expert only
  Controller* learner = nullptr;     // required when beta < 1
  bool reject_flagged_episodes = true;  // expert-executed demos
};

// Runs one episode and records the demonstration. Non-flagged steps are
// appended to `db` as (x̂, o) when db is given.
Demonstration collect_demonstration(ExpertController& expert, const ReferenceTrajectory& ref,
                                    const DisturbanceRealization& dist, const State& x0, EpisodeOptions opts,
                                    int horizon, const CollectOptions& collect, ObservationDatabase* db);

struct AugmentConfig {
  int n_samples = 100;
  double epsilon_bar = 0.5;
  std::optional<ExtrinsicPerturbation> perturb;
  bool randomize = true;
  RandomizationConfig randomization;
};

struct AugmentResult {
  std::vector<TrainingSample> samples;
  int n_real = 0;
  int n_synthetic = 0;
};

// Tube-guided samples for one demonstration step: real observations from db
// inside x̄* ⊕ Z (at most floor(eps_bar N)), the rest rendered at states
// drawn uniformly from the tube. Labels follow u = sat(ū* + K(x - x̄*)).
AugmentResult augment_timestep(const DemoStep& step, const SynthesisResult& syn, const Box& U_abs,
                               const ObservationDatabase* db, const AugmentConfig& da, const Camera& camera, Rng& rng);

TrainingSample demo_sample(const DemoStep& step);

}  // namespace tubelab
