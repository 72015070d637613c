#include "tubelab/world.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

namespace tubelab {

TrajectoryKind parse_trajectory_kind(const std::string& name) {
  if (name == "lemniscate") return TrajectoryKind::Lemniscate;
  if (name == "circle") return TrajectoryKind::Circle;
  if (name == "hover") return TrajectoryKind::Hover;
  throw Error(ErrorCode::InvalidParameter, "unknown trajectory kind '" + name + "'");
}

State reference_point(TrajectoryKind kind, double t, double duration, double speed_scale, double altitude) {
  if (!(duration > 0.0)) throw Error(ErrorCode::InvalidParameter, "reference duration must be positive");
  const double w = 2.0 * std::numbers::pi / duration;
  State s = State::Zero();
  s(2) = altitude;
  switch (kind) {
    case TrajectoryKind::Lemniscate: {
      // Peak speed 3.15 m/s (at the crossing point) for speed_scale = 1.
      const double a = 3.15 * speed_scale / (w * std::numbers::sqrt2);
      s(0) = a * std::sin(w * t);
      s(1) = 0.5 * a * std::sin(2.0 * w * t);
      s(3) = a * w * std::cos(w * t);
      s(4) = a * w * std::cos(2.0 * w * t);
      break;
    }
    case TrajectoryKind::Circle: {
      // Constant speed 2.0 m/s for speed_scale = 1.
      const double r = 2.0 * speed_scale / w;
      s(0) = r * std::sin(w * t);
      s(1) = r * std::cos(w * t);
      s(3) = r * w * std::cos(w * t);
      s(4) = -r * w * std::sin(w * t);
      break;
    }
    case TrajectoryKind::Hover:
      break;
  }
  return s;
}

ReferenceTrajectory make_reference(TrajectoryKind kind, double duration, double speed_scale, double dt,
                                   double altitude) {
  if (!(duration > 0.0) || !(dt > 0.0)) throw Error(ErrorCode::InvalidParameter, "duration and dt must be positive");
  const auto n = static_cast<std::size_t>(std::llround(duration / dt));
  ReferenceTrajectory ref;
  ref.dt = dt;
  ref.samples.reserve(n);
  for (std::size_t k = 0; k < n; ++k)
    ref.samples.push_back(reference_point(kind, static_cast<double>(k) * dt, duration, speed_scale, altitude));
  return ref;
}

DisturbanceRealization realize_disturbance(const EnvSpec& env, const Vec& sigma, const Box& V, Rng& rng) {
  DisturbanceRealization d;
  d.noise = env.noise;
  d.sigma = sigma;
  d.V = V;
  if (env.wind) {
    Vec3 dir;
    do {
      dir = Vec3(gaussian(rng, 1.0), gaussian(rng, 1.0), gaussian(rng, 1.0));
    } while (dir.norm() < 1e-9);
    d.wind_force = dir.normalized() * uniform(rng, env.wind_min, env.wind_max);
  }
  d.noise_seed = rng();
  return d;
}

OtherVec select_other(const Vec& full) { return full.segment<kOtherDim>(2); }

SensorFrame sense(const State& x, const DisturbanceRealization& dist, Rng& rng) {
  SensorFrame f;
  f.full = x;
  switch (dist.noise) {
    case NoiseMode::None:
      break;
    case NoiseMode::Bounded:
      f.full += sample_uniform(dist.V, rng);
      break;
    case NoiseMode::Gaussian:
      for (int i = 0; i < kStateDim; ++i) f.full(i) += gaussian(rng, dist.sigma(i));
      break;
  }
  f.obs.other = select_other(f.full);
  return f;
}

State sample_initial_state(const ReferenceTrajectory& ref, double spread, Rng& rng) {
  State x0 = ref.at(0);
  for (int i = 0; i < kStateDim; ++i) x0(i) += uniform(rng, -spread, spread);
  return x0;
}

EpisodeResult run_episode(Controller& ctrl, const ReferenceTrajectory& ref, const DisturbanceRealization& dist,
                          const State& x0, const EpisodeOptions& opts, int horizon) {
  if (opts.t_max < 1) throw Error(ErrorCode::InvalidParameter, "t_max must be >= 1");
  if (ctrl.needs_image() && !opts.camera)
    throw Error(ErrorCode::InvalidParameter, "controller needs images but no camera was provided");
  Rng sense_rng = make_stream(dist.noise_seed, 1);
  Rng process_rng = make_stream(dist.noise_seed, 2);
  Rng image_rng = make_stream(dist.noise_seed, 3);
  const Mat Bw = opts.plant == PlantMode::Linear ? force_input_matrix(opts.params, opts.sys.dt) : Mat();
  const Vec& u_eq = opts.sys.u_eq;

  ctrl.reset();
  EpisodeResult res;
  if (opts.keep_trace) res.trace.reserve(static_cast<std::size_t>(opts.t_max));
  State x = x0;
  double sq_pos = 0.0;
  int executed = 0;
  for (int t = 0; t < opts.t_max; ++t) {
    SensorFrame frame = sense(x, dist, sense_rng);
    const bool record_image = opts.keep_trace && opts.keep_images && opts.camera;
    if (ctrl.needs_image() || record_image) {
      frame.obs.image = opts.camera(x);
      if (opts.image_stress) opts.image_stress(frame.obs.image, image_rng);
    }
    const std::vector<State> window = ref.window(static_cast<std::size_t>(t), horizon);
    Action u;
    try {
      u = ctrl.act(frame, window);
    } catch (const Error& e) {
      throw Error(e.code(), "step " + std::to_string(t) + ": " + e.what());
    }
    if (!u.allFinite()) throw Error(ErrorCode::Controller, "step " + std::to_string(t) + ": non-finite action");
    u = saturate(u, opts.U_abs);
    ctrl.on_applied(u);

    const State& xd = ref.at(static_cast<std::size_t>(t));
    const Vec e = x - xd;
    const Vec du = u - u_eq;
    res.stage_cost += e.dot(opts.cost.Q * e) + du.dot(opts.cost.R * du);
    sq_pos += e.head<3>().squaredNorm();
    ++executed;

    StepInfo info = ctrl.info();
    res.any_flagged = res.any_flagged || info.flagged;
    if (opts.keep_trace) {
      if (!opts.keep_images) frame.obs.image = Image();
      res.trace.push_back({t, x, xd, u, std::move(info), std::move(frame)});
    }

    if (opts.plant == PlantMode::Linear) {
      State next = opts.sys.step(x, u) + Bw * dist.wind_force;
      if (dist.process_box) next += sample_uniform(*dist.process_box, process_rng);
      x = next;
    } else {
      x = propagate_nonlinear(x, u, dist.wind_force, opts.params, opts.sys.dt, opts.dt_sim);
    }
    if (!x.allFinite() || !contains(opts.X, x)) {
      res.episode_length = t;
      break;
    }
    res.episode_length = t + 1;
  }
  res.success = res.episode_length == opts.t_max;
  res.rms_xyz = std::sqrt(sq_pos / std::max(executed, 1));
  return res;
}

Metrics score(const std::vector<EpisodeResult>& results, double expert_cost) {
  if (results.empty()) throw Error(ErrorCode::EmptyInput, "score: no episodes");
  if (!(expert_cost > 0.0)) throw Error(ErrorCode::InvalidParameter, "score: expert cost must be positive");
  Metrics m;
  m.episodes = static_cast<int>(results.size());
  int successes = 0;
  double cost = 0.0;
  double length = 0.0;
  double rms = 0.0;
  for (const auto& r : results) {
    length += r.episode_length;
    rms += r.rms_xyz;
    if (r.success) {
      ++successes;
      cost += r.stage_cost;
    }
  }
  m.success_rate = 100.0 * successes / m.episodes;
  m.mean_episode_length = length / m.episodes;
  m.mean_rms_xyz = rms / m.episodes;
  if (successes > 0) {
    m.mean_stage_cost = cost / successes;
    m.expert_gap = (m.mean_stage_cost - expert_cost) / expert_cost * 100.0;
  }
  return m;
}

void write_trace_csv(const std::filesystem::path& path, const EpisodeResult& result, const CostSpec& cost,
                     const Vec& u_eq, const std::string& header) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.precision(10);
  out << header << "\n";
  out << "t";
  for (int i = 0; i < kStateDim; ++i) out << ",x" << i;
  for (int i = 0; i < kStateDim; ++i) out << ",xhat" << i;
  for (int i = 0; i < kInputDim; ++i) out << ",u" << i;
  for (int i = 0; i < kStateDim; ++i) out << ",xbar" << i;
  out << ",cost\n";
  for (const auto& r : result.trace) {
    out << r.t;
    for (int i = 0; i < kStateDim; ++i) out << "," << r.x(i);
    for (int i = 0; i < kStateDim; ++i) {
      out << ",";
      if (r.info.x_hat) out << (*r.info.x_hat)(i);
      else out << "NA";
    }
    for (int i = 0; i < kInputDim; ++i) out << "," << r.u(i);
    for (int i = 0; i < kStateDim; ++i) {
      out << ",";
      if (r.info.x_bar) out << (*r.info.x_bar)(i);
      else out << "NA";
    }
    const Vec e = r.x - r.x_des;
    const Vec du = r.u - u_eq;
    out << "," << e.dot(cost.Q * e) + du.dot(cost.R * du) << "\n";
  }
}

}  // namespace tubelab
