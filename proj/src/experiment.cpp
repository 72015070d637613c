#include "tubelab/experiment.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

namespace tubelab {

namespace {

std::uint64_t tag(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t kEvalTag = 0x6576616c;
constexpr std::uint64_t kDemoTag = 0x64656d6f;
constexpr std::uint64_t kAugTag = 0x617567;

}  // namespace

std::string Lab::header() const { return "# config_hash=" + hash_hex(hash) + " seed=" + std::to_string(cfg.seed); }

Lab make_lab(const RunConfig& cfg, const std::optional<SynthesisResult>& cached) {
  cfg.validate();
  Lab lab;
  lab.cfg = cfg;
  lab.hash = config_hash(cfg);
  lab.inputs = make_synthesis_inputs(cfg);
  lab.syn = cached ? *cached : synthesize(lab.inputs);
  lab.U_abs = input_constraints(cfg);
  lab.ref = make_reference(parse_trajectory_kind(cfg.task.trajectory), cfg.task.duration, cfg.task.speed_scale, cfg.dt,
                           cfg.task.altitude);
  const auto& v = cfg.vision;
  lab.camera = {make_camera_rig(v.width, v.height, v.fov_deg, v.tilt_deg), GroundTexture(v.texture_seed)};

  lab.episode.plant = PlantMode::Nonlinear;
  lab.episode.t_max = cfg.task.t_max;
  lab.episode.sys = lab.inputs.sys;
  lab.episode.params = cfg.model;
  lab.episode.dt_sim = cfg.dt_sim;
  lab.episode.X = lab.inputs.X;
  lab.episode.U_abs = lab.U_abs;
  lab.episode.cost = lab.inputs.cost;
  lab.episode.camera = [camera = lab.camera](const State& x) { return camera(x); };
  lab.episode.keep_trace = false;

  lab.da.n_samples = cfg.da.n_samples;
  lab.da.epsilon_bar = cfg.da.epsilon_bar;
  if (cfg.da.perturb_extrinsics)
    lab.da.perturb = ExtrinsicPerturbation{v.perturb_rot_deg * std::numbers::pi / 180.0, v.perturb_trans};
  lab.da.randomize = cfg.da.randomize_images;
  lab.da.randomization = {v.p_brightness, v.brightness_min, v.brightness_max, v.p_gamma, v.gamma_min,
                          v.gamma_max,    v.p_noise,        v.noise_sigma_max, v.p_blur,  v.blur_sigma_max,
                          v.p_erase,      v.erase_max_frac};

  lab.expert.horizon = cfg.mpc.horizon;
  lab.expert.mpc.qp.eps_abs = cfg.mpc.qp_eps;
  lab.expert.mpc.qp.max_iterations = cfg.mpc.qp_max_iterations;
  lab.expert.mpc.soft_penalty = cfg.mpc.soft_penalty;

  lab.shape.image_pixels = v.width * v.height;
  lab.shape.image_hidden.assign(cfg.train.image_hidden.begin(), cfg.train.image_hidden.end());
  lab.shape.fusion_hidden.assign(cfg.train.fusion_hidden.begin(), cfg.train.fusion_hidden.end());
  lab.norm = Normalizer::from_constraints(lab.shape, lab.inputs.X, lab.U_abs);
  return lab;
}

EnvSpec env_spec(const Lab& lab, const std::string& name) {
  const double weight = lab.cfg.model.hover_thrust();
  EnvSpec e;
  e.wind_min = lab.cfg.uncertainty.wind_min_frac * weight;
  e.wind_max = lab.cfg.uncertainty.wind_max_frac * weight;
  if (name == "source") return e;
  if (name == "dr") {
    e.wind = true;
  } else if (name == "noise") {
    e.noise = NoiseMode::Gaussian;
  } else if (name == "noise_wind") {
    e.wind = true;
    e.noise = NoiseMode::Gaussian;
  } else if (name == "bounded") {
    e.noise = NoiseMode::Bounded;
  } else if (name == "bounded_wind") {
    e.wind = true;
    e.noise = NoiseMode::Bounded;
  } else {
    throw Error(ErrorCode::Config, "unknown environment '" + name + "'");
  }
  return e;
}

std::pair<DisturbanceRealization, State> episode_setup(const Lab& lab, const std::string& env, std::uint64_t stream,
                                                       int episode) {
  Rng rng = make_stream(lab.cfg.seed, tag(env), stream, static_cast<std::uint64_t>(episode));
  DisturbanceRealization d =
      realize_disturbance(env_spec(lab, env), sensing_sigma(lab.cfg), lab.inputs.uncertainty.V, rng);
  const State x0 = sample_initial_state(lab.ref, lab.cfg.task.x0_spread, rng);
  return {d, x0};
}

std::vector<EpisodeResult> evaluate(const Lab& lab, Controller& ctrl, const std::string& env, int seeds,
                                    int episodes_per_seed, const std::function<void(Image&, Rng&)>& image_stress) {
  EpisodeOptions opts = lab.episode;
  opts.image_stress = image_stress;
  std::vector<EpisodeResult> out;
  for (int s = 0; s < seeds; ++s) {
    for (int e = 0; e < episodes_per_seed; ++e) {
      const auto [dist, x0] = episode_setup(lab, env, kEvalTag + static_cast<std::uint64_t>(s), e);
      out.push_back(run_episode(ctrl, lab.ref, dist, x0, opts, lab.cfg.mpc.horizon));
    }
  }
  return out;
}

MethodSpec parse_method(const std::string& name, const RunConfig& cfg) {
  MethodSpec m;
  m.name = name;
  std::string rest;
  if (name.rfind("bc", 0) == 0) {
    rest = name.substr(2);
  } else if (name.rfind("dagger", 0) == 0) {
    m.dagger = true;
    rest = name.substr(6);
  } else {
    throw Error(ErrorCode::Config, "unknown method '" + name + "'");
  }
  m.demos_per_round = cfg.experiment.demos_per_round_baseline;
  if (rest.empty()) return m;
  if (rest == "_dr") {
    m.domain_randomization = true;
  } else if (rest.rfind("_tn", 0) == 0) {
    m.tube = true;
    try {
      m.n_samples = std::stoi(rest.substr(3));
    } catch (const std::exception&) {
      throw Error(ErrorCode::Config, "method '" + name + "': expected _tn<samples>");
    }
    if (m.n_samples < 1) throw Error(ErrorCode::Config, "method '" + name + "': samples must be >= 1");
    m.demos_per_round = cfg.experiment.demos_per_round_tn;
  } else {
    throw Error(ErrorCode::Config, "unknown method suffix in '" + name + "'");
  }
  return m;
}

double ci95(const std::vector<EpisodeResult>& results) {
  if (results.size() < 2) return 0.0;
  double mean = 0.0;
  for (const auto& r : results) mean += r.episode_length;
  mean /= static_cast<double>(results.size());
  double var = 0.0;
  for (const auto& r : results) var += (r.episode_length - mean) * (r.episode_length - mean);
  var /= static_cast<double>(results.size() - 1);
  return 1.96 * std::sqrt(var / static_cast<double>(results.size()));
}

std::vector<ExpertBaseline> expert_baselines(const Lab& lab, const std::vector<std::string>& envs) {
  std::vector<ExpertBaseline> out;
  for (const auto& env : envs) {
    ExpertController expert(lab.inputs.sys, lab.inputs.cost, lab.syn, lab.U_abs, lab.expert);
    const auto results =
        evaluate(lab, expert, env, lab.cfg.experiment.eval_seeds, lab.cfg.experiment.episodes_per_seed);
    // Gap against itself is zero by construction; any positive cost works here.
    double cost = 0.0;
    int n = 0;
    for (const auto& r : results)
      if (r.success) {
        cost += r.stage_cost;
        ++n;
      }
    out.push_back({env, score(results, n > 0 ? cost / n : 1.0)});
  }
  return out;
}

PolicyParams initial_policy(const Lab& lab) {
  PolicyParams p(lab.shape, lab.norm);
  Rng rng = make_stream(lab.cfg.seed, 0x696e6974);
  p.initialize(rng);
  return p;
}

std::vector<TrainingSample> build_dataset(const Lab& lab, const MethodSpec& method,
                                          const std::vector<Demonstration>& demos, const ObservationDatabase& db,
                                          int first_demo_index, std::vector<int>* n_real,
                                          std::vector<int>* n_synthetic) {
  std::vector<TrainingSample> data;
  AugmentConfig da = lab.da;
  if (method.tube) da.n_samples = method.n_samples;
  for (std::size_t k = 0; k < demos.size(); ++k) {
    for (const auto& step : demos[k].steps) {
      data.push_back(demo_sample(step));
      if (!method.tube) continue;
      Rng rng = make_stream(lab.cfg.seed, kAugTag, static_cast<std::uint64_t>(first_demo_index) + k,
                            static_cast<std::uint64_t>(step.t));
      AugmentResult aug = augment_timestep(step, lab.syn, lab.U_abs, &db, da, lab.camera, rng);
      if (n_real) n_real->push_back(aug.n_real);
      if (n_synthetic) n_synthetic->push_back(aug.n_synthetic);
      for (auto& s : aug.samples) data.push_back(std::move(s));
    }
  }
  return data;
}

MethodRun run_method(const Lab& lab, const MethodSpec& method, int rounds, const std::vector<std::string>& envs,
                     const std::vector<ExpertBaseline>& baselines, const std::function<void(const RoundRow&)>& on_row) {
  using clock = std::chrono::steady_clock;
  MethodRun run;
  PolicyParams policy = initial_policy(lab);
  ObservationDatabase db;
  int demo_count = 0;
  double wall = 0.0;
  TrainHyper hyper;
  hyper.learning_rate = lab.cfg.train.learning_rate;
  hyper.batch_size = lab.cfg.train.batch_size;
  hyper.epochs = lab.cfg.train.epochs;
  hyper.patience = lab.cfg.train.patience;
  hyper.lambda_aux = lab.cfg.train.lambda_aux;

  auto emit = [&](RoundRow row) {
    if (on_row) on_row(row);
    run.rows.push_back(std::move(row));
  };

  for (int round = 1; round <= rounds; ++round) {
    try {
      const auto t0 = clock::now();
      const double beta = (!method.dagger || round == 1) ? 1.0 : 0.0;
      std::vector<Demonstration> demos;
      for (int k = 0; k < method.demos_per_round; ++k) {
        const int idx = demo_count + k;
        const std::string env = method.domain_randomization ? "dr" : "source";
        const auto [dist, x0] = episode_setup(lab, env, kDemoTag, idx);
        ExpertController expert(lab.inputs.sys, lab.inputs.cost, lab.syn, lab.U_abs, lab.expert);
        PolicyController learner(policy);
        CollectOptions collect;
        collect.beta = beta;
        collect.learner = beta < 1.0 ? &learner : nullptr;
        demos.push_back(collect_demonstration(expert, lab.ref, dist, x0, lab.episode, lab.cfg.mpc.horizon, collect,
                                              method.tube ? &db : nullptr));
      }
      const std::vector<TrainingSample> data =
          build_dataset(lab, method, demos, db, demo_count, &run.n_real, &run.n_synthetic);
      if (data.empty()) throw Error(ErrorCode::Training, "no usable demonstration steps in round");
      hyper.seed = lab.cfg.seed * 1000003ULL + static_cast<std::uint64_t>(round);
      policy = train_policy(policy, data, hyper);
      wall += std::chrono::duration<double>(clock::now() - t0).count();
      demo_count += method.demos_per_round;
      run.training_samples = data.size();
      run.demos = std::move(demos);

      PolicyController controller(policy);
      for (const auto& env : envs) {
        const auto results =
            evaluate(lab, controller, env, lab.cfg.experiment.eval_seeds, lab.cfg.experiment.episodes_per_seed);
        double expert_cost = 1.0;
        for (const auto& b : baselines)
          if (b.env == env && b.metrics.expert_gap) expert_cost = b.metrics.mean_stage_cost;
        RoundRow row;
        row.method = method.name;
        row.env = env;
        row.round = round;
        row.demos = demo_count;
        if (lab.cfg.experiment.record_wallclock) row.wallclock_s = wall;
        row.metrics = score(results, expert_cost);
        row.ci95 = ci95(results);
        emit(std::move(row));
      }
    } catch (const Error& e) {
      for (const auto& env : envs) {
        RoundRow row;
        row.method = method.name;
        row.env = env;
        row.round = round;
        row.demos = demo_count;
        row.error = "round " + std::to_string(round) + ": " + e.what();
        emit(std::move(row));
      }
      break;
    }
  }
  run.policy = policy;
  return run;
}

}  // namespace tubelab
