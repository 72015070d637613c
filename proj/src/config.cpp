#include "tubelab/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace tubelab {

namespace {

// Every configurable field, in canonical order.
template <class V>
void visit_fields(RunConfig& c, V&& v) {
  v("seed", c.seed);
  v("dt", c.dt);
  v("dt_sim", c.dt_sim);

  v("model.mass", c.model.mass);
  v("model.gravity", c.model.gravity);
  v("model.attitude_time_constant", c.model.attitude_time_constant);
  v("model.linear_drag", c.model.linear_drag);
  v("model.thrust_min", c.model.thrust_min);
  v("model.thrust_max", c.model.thrust_max);
  v("model.tilt_max", c.model.tilt_max);

  v("cost.q_diag", c.cost.q_diag);
  v("cost.r_diag", c.cost.r_diag);

  v("constraints.x_lo", c.constraints.x_lo);
  v("constraints.x_hi", c.constraints.x_hi);

  v("uncertainty.wind_min_frac", c.uncertainty.wind_min_frac);
  v("uncertainty.wind_max_frac", c.uncertainty.wind_max_frac);
  v("uncertainty.wbar_frac", c.uncertainty.wbar_frac);
  v("uncertainty.sigma3_cam", c.uncertainty.sigma3_cam);
  v("uncertainty.sigma3_other", c.uncertainty.sigma3_other);

  v("mpc.horizon", c.mpc.horizon);
  v("mpc.observer_pole_rate", c.mpc.observer_pole_rate);
  v("mpc.mrpi_rollouts", c.mpc.mrpi_rollouts);
  v("mpc.mrpi_horizon", c.mpc.mrpi_horizon);
  v("mpc.mrpi_inflation", c.mpc.mrpi_inflation);
  v("mpc.qp_eps", c.mpc.qp_eps);
  v("mpc.qp_max_iterations", c.mpc.qp_max_iterations);
  v("mpc.soft_penalty", c.mpc.soft_penalty);

  v("task.trajectory", c.task.trajectory);
  v("task.duration", c.task.duration);
  v("task.speed_scale", c.task.speed_scale);
  v("task.altitude", c.task.altitude);
  v("task.t_max", c.task.t_max);
  v("task.x0_spread", c.task.x0_spread);

  v("vision.width", c.vision.width);
  v("vision.height", c.vision.height);
  v("vision.fov_deg", c.vision.fov_deg);
  v("vision.tilt_deg", c.vision.tilt_deg);
  v("vision.texture_seed", c.vision.texture_seed);
  v("vision.perturb_rot_deg", c.vision.perturb_rot_deg);
  v("vision.perturb_trans", c.vision.perturb_trans);
  v("vision.p_brightness", c.vision.p_brightness);
  v("vision.brightness_min", c.vision.brightness_min);
  v("vision.brightness_max", c.vision.brightness_max);
  v("vision.p_gamma", c.vision.p_gamma);
  v("vision.gamma_min", c.vision.gamma_min);
  v("vision.gamma_max", c.vision.gamma_max);
  v("vision.p_noise", c.vision.p_noise);
  v("vision.noise_sigma_max", c.vision.noise_sigma_max);
  v("vision.p_blur", c.vision.p_blur);
  v("vision.blur_sigma_max", c.vision.blur_sigma_max);
  v("vision.p_erase", c.vision.p_erase);
  v("vision.erase_max_frac", c.vision.erase_max_frac);

  v("da.n_samples", c.da.n_samples);
  v("da.epsilon_bar", c.da.epsilon_bar);
  v("da.perturb_extrinsics", c.da.perturb_extrinsics);
  v("da.randomize_images", c.da.randomize_images);

  v("train.learning_rate", c.train.learning_rate);
  v("train.batch_size", c.train.batch_size);
  v("train.epochs", c.train.epochs);
  v("train.patience", c.train.patience);
  v("train.lambda_aux", c.train.lambda_aux);
  v("train.image_hidden", c.train.image_hidden);
  v("train.fusion_hidden", c.train.fusion_hidden);
  v("train.method", c.train.method);
  v("train.rounds", c.train.rounds);

  v("experiment.rounds", c.experiment.rounds);
  v("experiment.eval_seeds", c.experiment.eval_seeds);
  v("experiment.episodes_per_seed", c.experiment.episodes_per_seed);
  v("experiment.demos_per_round_tn", c.experiment.demos_per_round_tn);
  v("experiment.demos_per_round_baseline", c.experiment.demos_per_round_baseline);
  v("experiment.success_threshold", c.experiment.success_threshold);
  v("experiment.methods", c.experiment.methods);
  v("experiment.envs", c.experiment.envs);
  v("experiment.record_wallclock", c.experiment.record_wallclock);

  v("sweep.noise_sigmas", c.sweep.noise_sigmas);
  v("sweep.blur_sigmas", c.sweep.blur_sigmas);
  v("sweep.episodes", c.sweep.episodes);
  v("sweep.env", c.sweep.env);
  v("sweep.policy", c.sweep.policy);
}

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorCode::Config, msg); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

std::vector<std::string> split_array(const std::string& key, const std::string& raw) {
  if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') fail(key + ": expected an array");
  std::vector<std::string> items;
  std::string cur;
  bool in_str = false;
  for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
    const char ch = raw[i];
    if (ch == '"') in_str = !in_str;
    if (ch == ',' && !in_str) {
      items.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!trim(cur).empty()) items.push_back(trim(cur));
  for (const auto& it : items)
    if (it.empty()) fail(key + ": empty array element");
  return items;
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || !std::isfinite(v)) fail(key + ": expected a finite number, got '" + s + "'");
  return v;
}

std::string parse_string(const std::string& key, const std::string& s) {
  if (s.size() < 2 || s.front() != '"' || s.back() != '"') fail(key + ": expected a quoted string");
  return s.substr(1, s.size() - 2);
}

struct Loader {
  std::map<std::string, std::string>& raw;

  bool take(const std::string& key, std::string& out) {
    auto it = raw.find(key);
    if (it == raw.end()) return false;
    out = it->second;
    raw.erase(it);
    return true;
  }
  void operator()(const std::string& key, double& f) {
    std::string s;
    if (take(key, s)) f = parse_double(key, s);
  }
  void operator()(const std::string& key, int& f) {
    std::string s;
    if (!take(key, s)) return;
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || v < INT32_MIN || v > INT32_MAX)
      fail(key + ": expected an integer, got '" + s + "'");
    f = static_cast<int>(v);
  }
  void operator()(const std::string& key, std::uint64_t& f) {
    std::string s;
    if (!take(key, s)) return;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), f);
    if (ec != std::errc() || p != s.data() + s.size()) fail(key + ": expected a non-negative integer");
  }
  void operator()(const std::string& key, bool& f) {
    std::string s;
    if (!take(key, s)) return;
    if (s == "true") f = true;
    else if (s == "false") f = false;
    else fail(key + ": expected true or false");
  }
  void operator()(const std::string& key, std::string& f) {
    std::string s;
    if (take(key, s)) f = parse_string(key, s);
  }
  void operator()(const std::string& key, std::vector<double>& f) {
    std::string s;
    if (!take(key, s)) return;
    f.clear();
    for (const auto& item : split_array(key, s)) f.push_back(parse_double(key, item));
  }
  void operator()(const std::string& key, std::vector<std::string>& f) {
    std::string s;
    if (!take(key, s)) return;
    f.clear();
    for (const auto& item : split_array(key, s)) f.push_back(parse_string(key, item));
  }
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct Dumper {
  std::ostringstream& os;
  void operator()(const std::string& k, double v) { os << k << " = " << fmt(v) << "\n"; }
  void operator()(const std::string& k, int v) { os << k << " = " << v << "\n"; }
  void operator()(const std::string& k, std::uint64_t v) { os << k << " = " << v << "\n"; }
  void operator()(const std::string& k, bool v) { os << k << " = " << (v ? "true" : "false") << "\n"; }
  void operator()(const std::string& k, const std::string& v) { os << k << " = \"" << v << "\"\n"; }
  void operator()(const std::string& k, const std::vector<double>& v) {
    os << k << " = [";
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << fmt(v[i]);
    os << "]\n";
  }
  void operator()(const std::string& k, const std::vector<std::string>& v) {
    os << k << " = [";
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << '"' << v[i] << '"';
    os << "]\n";
  }
};

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

void require_size(const std::string& key, const std::vector<double>& v, std::size_t n) {
  if (v.size() != n) fail(key + ": expected " + std::to_string(n) + " values, got " + std::to_string(v.size()));
}

}  // namespace

void RunConfig::validate() const {
  try {
    model.validate();
  } catch (const Error& e) {
    fail(std::string("model: ") + e.what());
  }
  if (!(dt > 0.0) || !(dt_sim > 0.0) || dt_sim > dt) fail("dt and dt_sim must satisfy 0 < dt_sim <= dt");
  require_size("cost.q_diag", cost.q_diag, kStateDim);
  require_size("cost.r_diag", cost.r_diag, kInputDim);
  for (double q : cost.q_diag)
    if (q < 0.0) fail("cost.q_diag must be non-negative");
  for (double r : cost.r_diag)
    if (r <= 0.0) fail("cost.r_diag must be positive");
  require_size("constraints.x_lo", constraints.x_lo, kStateDim);
  require_size("constraints.x_hi", constraints.x_hi, kStateDim);
  for (int i = 0; i < kStateDim; ++i)
    if (constraints.x_lo[i] > constraints.x_hi[i]) fail("constraints: x_lo > x_hi");
  require_size("uncertainty.sigma3_cam", uncertainty.sigma3_cam, 2);
  require_size("uncertainty.sigma3_other", uncertainty.sigma3_other, kOtherDim);
  if (uncertainty.wind_min_frac < 0.0 || uncertainty.wind_min_frac > uncertainty.wind_max_frac ||
      uncertainty.wind_max_frac > uncertainty.wbar_frac)
    fail("uncertainty: need 0 <= wind_min_frac <= wind_max_frac <= wbar_frac");
  for (double s : uncertainty.sigma3_cam)
    if (s < 0.0) fail("uncertainty: negative sigma");
  for (double s : uncertainty.sigma3_other)
    if (s < 0.0) fail("uncertainty: negative sigma");
  if (mpc.horizon < 1) fail("mpc.horizon must be >= 1");
  if (mpc.mrpi_rollouts < 1 || mpc.mrpi_horizon < 1) fail("mpc: Monte-Carlo counts must be >= 1");
  if (mpc.mrpi_inflation < 1.0) fail("mpc.mrpi_inflation must be >= 1");
  if (task.trajectory != "lemniscate" && task.trajectory != "circle" && task.trajectory != "hover")
    fail("task.trajectory must be lemniscate, circle or hover");
  if (!(task.duration > 0.0) || task.t_max < 1) fail("task: duration and t_max must be positive");
  if (vision.width < 2 || vision.height < 2) fail("vision: image must be at least 2x2");
  if (!(vision.fov_deg > 0.0 && vision.fov_deg < 180.0)) fail("vision.fov_deg must be in (0, 180)");
  if (da.n_samples < 1) fail("da.n_samples must be >= 1");
  if (!(da.epsilon_bar >= 0.0 && da.epsilon_bar <= 1.0)) fail("da.epsilon_bar must be in [0, 1]");
  if (!(train.learning_rate > 0.0) || train.batch_size < 1 || train.epochs < 1 || train.patience < 1)
    fail("train: invalid hyperparameters");
  if (train.lambda_aux < 0.0) fail("train.lambda_aux must be non-negative");
  for (const auto* layers : {&train.image_hidden, &train.fusion_hidden}) {
    if (layers->empty()) fail("train: hidden layer lists must be non-empty");
    for (double h : *layers)
      if (h < 1.0 || h != std::floor(h)) fail("train: hidden sizes must be positive integers");
  }
  if (experiment.rounds < 1 || experiment.eval_seeds < 1 || experiment.episodes_per_seed < 1)
    fail("experiment: counts must be >= 1");
  if (experiment.demos_per_round_tn < 1 || experiment.demos_per_round_baseline < 1)
    fail("experiment: demos per round must be >= 1");
  if (train.rounds < 1) fail("train.rounds must be >= 1");
  if (sweep.episodes < 1) fail("sweep.episodes must be >= 1");
  for (const auto* grid : {&sweep.noise_sigmas, &sweep.blur_sigmas})
    for (double m : *grid)
      if (!(m >= 0.0)) fail("sweep: magnitudes must be non-negative");
}

// Collects the section prefix of every field.
struct SectionCollector {
  std::set<std::string>& sections;
  template <class T>
  void operator()(const std::string& key, T&) {
    const auto dot = key.find('.');
    if (dot != std::string::npos) sections.insert(key.substr(0, dot));
  }
};

RunConfig parse_config(const std::string& text) {
  std::set<std::string> known_sections;
  {
    RunConfig probe;
    visit_fields(probe, SectionCollector{known_sections});
  }
  std::map<std::string, std::string> raw;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string::npos) {
      section = trim(line.substr(1, line.size() - 2));
      if (!known_sections.count(section)) fail("line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) fail("line " + std::to_string(lineno) + ": empty key or value");
    const std::string full = section.empty() ? key : section + "." + key;
    if (!raw.emplace(full, value).second) fail("duplicate key " + full);
  }
  RunConfig cfg;
  visit_fields(cfg, Loader{raw});
  if (!raw.empty()) fail("unknown config key " + raw.begin()->first);
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const RunConfig& cfg) {
  std::ostringstream os;
  RunConfig copy = cfg;
  visit_fields(copy, Dumper{os});
  return os.str();
}

std::uint64_t config_hash(const RunConfig& cfg) {
  // FNV-1a over the canonical dump.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : dump_config(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void apply_full_scale(RunConfig& cfg) {
  cfg.experiment.eval_seeds = 10;
  cfg.experiment.episodes_per_seed = 10;
}

LinearSystem make_linear_system(const RunConfig& cfg) { return build_linear_model(cfg.model, cfg.dt); }

CostSpec make_cost(const RunConfig& cfg) {
  return {to_vec(cfg.cost.q_diag).asDiagonal(), to_vec(cfg.cost.r_diag).asDiagonal()};
}

Box state_constraints(const RunConfig& cfg) { return Box(to_vec(cfg.constraints.x_lo), to_vec(cfg.constraints.x_hi)); }

Box input_constraints(const RunConfig& cfg) {
  const double t = cfg.model.tilt_max;
  return Box(Vec3(-t, -t, cfg.model.thrust_min), Vec3(t, t, cfg.model.thrust_max));
}

Vec sensing_sigma(const RunConfig& cfg) {
  Vec s(kStateDim);
  s << cfg.uncertainty.sigma3_cam[0], cfg.uncertainty.sigma3_cam[1], to_vec(cfg.uncertainty.sigma3_other);
  return s / 3.0;
}

UncertaintySpec make_uncertainty(const RunConfig& cfg) {
  const Mat Bw = force_input_matrix(cfg.model, cfg.dt);
  const double weight = cfg.model.hover_thrust();
  const Box W = linear_map_outer(Bw, Box::symmetric(Vec3::Constant(cfg.uncertainty.wind_max_frac * weight)));
  const Box W_bar = linear_map_outer(Bw, Box::symmetric(Vec3::Constant(cfg.uncertainty.wbar_frac * weight)));
  const Box V = Box::symmetric(3.0 * sensing_sigma(cfg));
  return {W, W_bar, V};
}

SynthesisInputs make_synthesis_inputs(const RunConfig& cfg) {
  SynthesisInputs in;
  in.sys = make_linear_system(cfg);
  in.cost = make_cost(cfg);
  in.uncertainty = make_uncertainty(cfg);
  in.X = state_constraints(cfg);
  in.U = translate(input_constraints(cfg), -in.sys.u_eq);
  in.observer_pole_rate = cfg.mpc.observer_pole_rate;
  in.mrpi.n_rollouts = cfg.mpc.mrpi_rollouts;
  in.mrpi.horizon = cfg.mpc.mrpi_horizon;
  in.mrpi.inflation = cfg.mpc.mrpi_inflation;
  in.mrpi.seed = cfg.seed;
  return in;
}

}  // namespace tubelab
