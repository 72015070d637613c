#include "tubelab/learn.hpp"

#include <cmath>

namespace tubelab {

Image Camera::operator()(const State& x) const {
  Rng unused(0);
  return render(pose_from_state(x, rig, std::nullopt, unused), rig, texture);
}

MixedController::MixedController(ExpertController& expert, Controller* learner, double beta, std::uint64_t seed)
    : expert_(expert), learner_(learner), beta_(beta), seed_(seed), rng_(make_stream(seed, 0x6d6978)) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error(ErrorCode::InvalidParameter, "beta must be in [0, 1]");
  if (beta < 1.0 && !learner) throw Error(ErrorCode::InvalidParameter, "beta < 1 requires a learner");
}

void MixedController::reset() {
  expert_.reset();
  if (learner_) learner_->reset();
  rng_ = make_stream(seed_, 0x6d6978);
  info_ = {};
}

Action MixedController::act(const SensorFrame& frame, std::span<const State> ref_window) {
  const Action u_expert = expert_.act(frame, ref_window);
  info_ = expert_.info();
  if (beta_ >= 1.0) return u_expert;
  const Action u_learner = learner_->act(frame, ref_window);
  return uniform(rng_, 0.0, 1.0) < beta_ ? u_expert : u_learner;
}

void MixedController::on_applied(const Action& u) {
  expert_.on_applied(u);
  if (learner_) learner_->on_applied(u);
}

Demonstration collect_demonstration(ExpertController& expert, const ReferenceTrajectory& ref,
                                    const DisturbanceRealization& dist, const State& x0, EpisodeOptions opts,
                                    int horizon, const CollectOptions& collect, ObservationDatabase* db) {
  MixedController ctrl(expert, collect.learner, collect.beta, dist.noise_seed);
  opts.keep_images = true;
  opts.keep_trace = true;
  const EpisodeResult res = run_episode(ctrl, ref, dist, x0, opts, horizon);
  Demonstration demo;
  demo.episode_length = res.episode_length;
  demo.success = res.success;
  if (collect.beta >= 1.0 && collect.reject_flagged_episodes && res.any_flagged) {
    demo.rejected = true;
    demo.reject_reason = "expert needed softened constraints";
    return demo;
  }
  for (const auto& r : res.trace) {
    if (r.info.flagged) continue;
    if (!r.info.expert_action || !r.info.x_bar || !r.info.u_bar || !r.info.x_hat)
      throw Error(ErrorCode::Controller, "collect_demonstration: expert did not report its plan");
    DemoStep s;
    s.t = r.t;
    s.obs = r.frame.obs;
    s.u_label = *r.info.expert_action;
    s.u_executed = r.u;
    s.x_bar = *r.info.x_bar;
    s.u_bar = *r.info.u_bar;
    s.x_hat = *r.info.x_hat;
    s.ref = subsample_reference(ref.window(static_cast<std::size_t>(r.t), horizon));
    if (db) db->add(s.x_hat, s.obs);
    demo.steps.push_back(std::move(s));
  }
  return demo;
}

TrainingSample demo_sample(const DemoStep& step) {
  TrainingSample s;
  s.image = step.obs.image;
  s.other = step.obs.other;
  s.ref = step.ref;
  s.action_target = step.u_label;
  s.state_target = step.x_hat;
  s.origin = TrainingSample::Origin::Demo;
  return s;
}

AugmentResult augment_timestep(const DemoStep& step, const SynthesisResult& syn, const Box& U_abs,
                               const ObservationDatabase* db, const AugmentConfig& da, const Camera& camera, Rng& rng) {
  if (da.n_samples < 1) throw Error(ErrorCode::Augmentation, "n_samples must be >= 1");
  if (!(da.epsilon_bar >= 0.0 && da.epsilon_bar <= 1.0))
    throw Error(ErrorCode::Augmentation, "epsilon_bar must be in [0, 1]");
  if (syn.Z.dim() != kStateDim) throw Error(ErrorCode::Augmentation, "tube cross-section Z is empty or malformed");
  const Box tube = translate(syn.Z, step.x_bar);
  auto label = [&](const Vec& x) -> Action { return saturate(ancillary(x, step.x_bar, step.u_bar, syn.K), U_abs); };

  AugmentResult out;
  out.samples.reserve(static_cast<std::size_t>(da.n_samples));
  const int cap = static_cast<int>(std::floor(da.epsilon_bar * da.n_samples + 1e-9));
  if (db && cap > 0) {
    for (const DbEntry* e : db->query_tube(step.x_bar, syn.Z, cap, rng)) {
      TrainingSample s;
      s.image = da.randomize ? randomize_image(e->obs.image, da.randomization, rng) : e->obs.image;
      s.other = e->obs.other;
      s.ref = step.ref;
      s.state_target = e->x_hat;
      s.action_target = label(e->x_hat);
      s.origin = TrainingSample::Origin::RealDb;
      out.samples.push_back(std::move(s));
    }
  }
  out.n_real = static_cast<int>(out.samples.size());
  out.n_synthetic = da.n_samples - out.n_real;
  for (int j = 0; j < out.n_synthetic; ++j) {
    const State x = sample_uniform(tube, rng);
    TrainingSample s;
    try {
      const Image clean = render(pose_from_state(x, camera.rig, da.perturb, rng), camera.rig, camera.texture);
      s.image = da.randomize ? randomize_image(clean, da.randomization, rng) : clean;
    } catch (const Error& e) {
      throw Error(ErrorCode::Augmentation, std::string("augment_timestep: ") + e.what());
    }
    s.other = select_other(x);
    s.ref = step.ref;
    s.state_target = x;
    s.action_target = label(x);
    s.origin = TrainingSample::Origin::Synthetic;
    out.samples.push_back(std::move(s));
  }
  return out;
}

}  // namespace tubelab
