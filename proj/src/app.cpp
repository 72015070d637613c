#include "tubelab/app.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace tubelab {

namespace {

using json = nlohmann::ordered_json;

void emit(const LogSink& log, LogLevel level, const std::string& msg) {
  if (log) log(level, msg);
}

std::filesystem::path ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  return out;
}

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

template <class T>
std::string opt(const std::optional<T>& v) {
  if (!v) return "NA";
  if constexpr (std::is_floating_point_v<T>) return num(*v);
  else return std::to_string(*v);
}

// Field values never contain quotes; commas or newlines get quoted.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\n\"") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c == '\n' ? ' ' : c;
  }
  return q + "\"";
}

json box_json(const Box& b) {
  return {{"lo", std::vector<double>(b.lo().data(), b.lo().data() + b.dim())},
          {"hi", std::vector<double>(b.hi().data(), b.hi().data() + b.dim())}};
}

Box box_from(const json& j) {
  const auto lo = j.at("lo").get<std::vector<double>>();
  const auto hi = j.at("hi").get<std::vector<double>>();
  if (lo.size() != hi.size()) throw Error(ErrorCode::Io, "synthesis JSON: box lo/hi size mismatch");
  const auto n = static_cast<Eigen::Index>(lo.size());
  return Box(Eigen::Map<const Vec>(lo.data(), n), Eigen::Map<const Vec>(hi.data(), n));
}

json mat_json(const Mat& m) {
  std::vector<double> data;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Mat mat_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw Error(ErrorCode::Io, "synthesis JSON: matrix size mismatch");
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  return m;
}

std::string widths(const Box& b) {
  std::ostringstream os;
  for (int i = 0; i < b.dim(); ++i) os << (i ? " " : "") << num(b.hi()(i) - b.lo()(i));
  return os.str();
}

void write_metrics(json& j, const Metrics& m) {
  j["success_pct"] = m.success_rate;
  j["mean_episode_length"] = m.mean_episode_length;
  j["expert_gap_pct"] = m.expert_gap ? json(*m.expert_gap) : json(nullptr);
  j["mean_stage_cost"] = m.mean_stage_cost;
  j["mean_rms_xyz"] = m.mean_rms_xyz;
  j["episodes"] = m.episodes;
}

PolicyParams load_policy_for(const Lab& lab, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::Io, "policy file not found: " + path.string());
  PolicyParams p = PolicyParams::load(path);
  if (p.shape().image_pixels != lab.shape.image_pixels)
    throw Error(ErrorCode::Config, "policy image size " + std::to_string(p.shape().image_pixels) +
                                       " does not match the configured camera (" +
                                       std::to_string(lab.shape.image_pixels) + " pixels)");
  return p;
}

double expert_cost_for(const std::vector<ExpertBaseline>& baselines, const std::string& env) {
  for (const auto& b : baselines)
    if (b.env == env && b.metrics.expert_gap) return b.metrics.mean_stage_cost;
  return 1.0;
}

const char* kFigHeader = "method,env,demos,wallclock_s,mean_episode_length,ci95,round,success_pct,expert_gap_pct,error";
const char* kTableHeader = "method,env,success_pct,expert_gap_pct,demo_efficiency,error";

}  // namespace

std::string synthesis_to_json(const SynthesisResult& syn, const std::string& config_hash, std::uint64_t seed) {
  json j;
  j["meta"] = {{"config_hash", config_hash}, {"seed", seed}, {"format", "tubelab-synthesis-1"}};
  j["K"] = mat_json(syn.K);
  j["L"] = mat_json(syn.L);
  j["P"] = mat_json(syn.P);
  j["S"] = box_json(syn.S);
  j["Z"] = box_json(syn.Z);
  j["S_ctrl"] = box_json(syn.S_ctrl);
  j["X_bar"] = box_json(syn.X_bar);
  j["U_bar"] = box_json(syn.U_bar);
  j["X_bar_N"] = box_json(syn.X_bar_N);
  return j.dump(2) + "\n";
}

SynthesisResult synthesis_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    SynthesisResult s;
    s.K = mat_from(j.at("K"));
    s.L = mat_from(j.at("L"));
    s.P = mat_from(j.at("P"));
    s.S = box_from(j.at("S"));
    s.Z = box_from(j.at("Z"));
    s.S_ctrl = box_from(j.at("S_ctrl"));
    s.X_bar = box_from(j.at("X_bar"));
    s.U_bar = box_from(j.at("U_bar"));
    s.X_bar_N = box_from(j.at("X_bar_N"));
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, std::string("synthesis JSON: ") + e.what());
  }
}

SynthesisResult cmd_synth(const RunConfig& cfg, const std::filesystem::path& out, const LogSink& log) {
  ensure_dir(out);
  const Lab lab = make_lab(cfg);
  open_out(out / "synthesis.json") << synthesis_to_json(lab.syn, hash_hex(lab.hash), cfg.seed);
  emit(log, LogLevel::Info, "tube Z widths: " + widths(lab.syn.Z));
  emit(log, LogLevel::Info, "tightened X widths: " + widths(lab.syn.X_bar));
  emit(log, LogLevel::Info, "tightened U widths: " + widths(lab.syn.U_bar));
  return lab.syn;
}

DemoArchive cmd_demo(const RunConfig& cfg, const std::filesystem::path& out, const LogSink& log) {
  const Lab lab = make_lab(cfg);
  ensure_dir(out);
  const auto frames = ensure_dir(out / "frames");
  const auto [dist, x0] = episode_setup(lab, "source", 0x64656d6f, 0);
  ExpertController expert(lab.inputs.sys, lab.inputs.cost, lab.syn, lab.U_abs, lab.expert);
  EpisodeOptions opts = lab.episode;
  opts.keep_trace = true;
  opts.keep_images = true;
  const EpisodeResult res = run_episode(expert, lab.ref, dist, x0, opts, cfg.mpc.horizon);

  write_trace_csv(out / "trace.csv", res, lab.inputs.cost, lab.inputs.sys.u_eq, lab.header());
  ObservationDatabase db;
  DemoArchive a;
  for (const auto& r : res.trace) {
    std::ostringstream name;
    name << std::setw(4) << std::setfill('0') << r.t << ".pgm";
    write_pgm(frames / name.str(), r.frame.obs.image);
    ++a.images;
    if (!r.info.flagged && r.info.x_hat) db.add(*r.info.x_hat, r.frame.obs);
  }
  db.save(out / "db", lab.header());
  a.episode_length = res.episode_length;
  a.db_entries = db.size();
  a.success = res.success;
  emit(log, LogLevel::Info,
       "demo: length " + std::to_string(a.episode_length) + ", " + std::to_string(a.images) + " frames");
  return a;
}

MethodRun cmd_train(const RunConfig& cfg, const std::filesystem::path& out, const LogSink& log) {
  const Lab lab = make_lab(cfg);
  ensure_dir(out);
  const MethodSpec spec = parse_method(cfg.train.method, cfg);
  MethodRun run = run_method(lab, spec, cfg.train.rounds, {}, {});
  for (const auto& row : run.rows)
    if (!row.error.empty()) throw Error(ErrorCode::Training, row.error);
  if (!run.policy) throw Error(ErrorCode::Training, "training produced no policy");
  run.policy->save(out / "policy.tlp");

  json j;
  j["meta"] = {{"config_hash", hash_hex(lab.hash)}, {"seed", cfg.seed}};
  j["method"] = spec.name;
  j["rounds"] = cfg.train.rounds;
  j["demos"] = cfg.train.rounds * spec.demos_per_round;
  j["training_samples_last_round"] = run.training_samples;
  j["augmented_steps"] = run.n_real.size();
  int real = 0;
  for (int n : run.n_real) real += n;
  j["real_db_samples"] = real;
  open_out(out / "train_report.json") << j.dump(2) << "\n";
  emit(log, LogLevel::Info, "trained " + spec.name + " on " + std::to_string(run.training_samples) + " samples");
  return run;
}

std::vector<EnvMetrics> cmd_eval(const RunConfig& cfg, const std::filesystem::path& policy,
                                 const std::filesystem::path& out, const LogSink& log) {
  const Lab lab = make_lab(cfg);
  ensure_dir(out);
  const auto& envs = cfg.experiment.envs;
  const auto baselines = expert_baselines(lab, envs);
  std::vector<EnvMetrics> result;
  std::optional<PolicyParams> params;
  if (!policy.empty()) params = load_policy_for(lab, policy);
  for (const auto& env : envs) {
    std::vector<EpisodeResult> episodes;
    if (params) {
      PolicyController ctrl(*params);
      episodes = evaluate(lab, ctrl, env, cfg.experiment.eval_seeds, cfg.experiment.episodes_per_seed);
    } else {
      ExpertController ctrl(lab.inputs.sys, lab.inputs.cost, lab.syn, lab.U_abs, lab.expert);
      episodes = evaluate(lab, ctrl, env, cfg.experiment.eval_seeds, cfg.experiment.episodes_per_seed);
    }
    result.push_back({env, score(episodes, expert_cost_for(baselines, env)), ci95(episodes)});
    emit(log, LogLevel::Info, env + ": success " + num(result.back().metrics.success_rate) + "%");
  }
  json j;
  j["meta"] = {{"config_hash", hash_hex(lab.hash)}, {"seed", cfg.seed}};
  j["controller"] = params ? "policy" : "expert";
  j["envs"] = json::array();
  for (const auto& r : result) {
    json e;
    e["env"] = r.env;
    write_metrics(e, r.metrics);
    e["ci95"] = r.ci95;
    j["envs"].push_back(e);
  }
  open_out(out / "eval_metrics.json") << j.dump(2) << "\n";
  return result;
}

std::vector<TableRow> summarize_table(const std::vector<RoundRow>& rows, double success_threshold) {
  std::vector<TableRow> table;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.method, r.env);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, table.size()).first;
      table.push_back({r.method, r.env, std::nullopt, std::nullopt, std::nullopt, ""});
    }
    TableRow& t = table[it->second];
    if (!r.error.empty()) {
      t.error = r.error;
      continue;
    }
    t.success_pct = r.metrics.success_rate;
    t.expert_gap_pct = r.metrics.expert_gap;
    if (!t.demo_efficiency && r.metrics.success_rate >= success_threshold) t.demo_efficiency = r.demos;
  }
  return table;
}

ExperimentSummary cmd_experiment(const RunConfig& cfg, const std::filesystem::path& out, const LogSink& log) {
  const Lab lab = make_lab(cfg);
  ensure_dir(out);
  const auto& envs = cfg.experiment.envs;
  ExperimentSummary summary;
  summary.baselines = expert_baselines(lab, envs);

  {
    auto base = open_out(out / "expert_baseline.csv");
    base << lab.header() << "\nenv,success_pct,mean_episode_length,mean_stage_cost,mean_rms_xyz\n";
    for (const auto& b : summary.baselines)
      base << b.env << "," << num(b.metrics.success_rate) << "," << num(b.metrics.mean_episode_length) << ","
           << num(b.metrics.mean_stage_cost) << "," << num(b.metrics.mean_rms_xyz) << "\n";
  }

  // Single writer: rows are appended and flushed as each round finishes.
  auto fig = open_out(out / "fig4_curves.csv");
  fig << lab.header() << "\n" << kFigHeader << "\n" << std::flush;
  for (const auto& name : cfg.experiment.methods) {
    emit(log, LogLevel::Info, "method " + name);
    auto on_row = [&](const RoundRow& r) {
      fig << r.method << "," << r.env << "," << r.demos << "," << opt(r.wallclock_s) << ","
          << (r.error.empty() ? num(r.metrics.mean_episode_length) : "NA") << ","
          << (r.error.empty() ? num(r.ci95) : "NA") << "," << r.round << ","
          << (r.error.empty() ? num(r.metrics.success_rate) : "NA") << ","
          << (r.error.empty() ? opt(r.metrics.expert_gap) : "NA") << "," << csv_field(r.error) << "\n"
          << std::flush;
      if (!r.error.empty()) emit(log, LogLevel::Warn, r.method + "/" + r.env + ": " + r.error);
    };
    try {
      const MethodSpec spec = parse_method(name, cfg);
      MethodRun run = run_method(lab, spec, cfg.experiment.rounds, envs, summary.baselines, on_row);
      summary.rows.insert(summary.rows.end(), run.rows.begin(), run.rows.end());
    } catch (const Error& e) {
      for (const auto& env : envs) {
        RoundRow r;
        r.method = name;
        r.env = env;
        r.error = e.what();
        on_row(r);
        summary.rows.push_back(r);
      }
    }
  }

  const auto table = summarize_table(summary.rows, cfg.experiment.success_threshold);
  auto tab = open_out(out / "table2.csv");
  tab << lab.header() << "\n" << kTableHeader << "\n";
  for (const auto& t : table) {
    tab << t.method << "," << t.env << "," << opt(t.success_pct) << "," << opt(t.expert_gap_pct) << ","
        << opt(t.demo_efficiency) << "," << csv_field(t.error) << "\n";
    if (!t.error.empty()) ++summary.failed_cells;
  }
  return summary;
}

std::vector<SweepRow> cmd_noise_sweep(const RunConfig& cfg, const std::filesystem::path& policy,
                                      const std::filesystem::path& out, const LogSink& log) {
  const Lab lab = make_lab(cfg);
  const PolicyParams params = load_policy_for(lab, policy);
  ensure_dir(out);

  struct Cell {
    std::string kind;
    VisualStress stress;
    double magnitude;
  };
  std::vector<Cell> cells{{"clean", VisualStress::GaussianNoise, 0.0}};
  auto add = [&](const std::string& kind, VisualStress s, std::vector<double> grid) {
    std::sort(grid.begin(), grid.end());
    for (double m : grid)
      if (m > 0.0) cells.push_back({kind, s, m});
  };
  add("noise", VisualStress::GaussianNoise, cfg.sweep.noise_sigmas);
  add("blur", VisualStress::GaussianBlur, cfg.sweep.blur_sigmas);

  std::vector<SweepRow> rows;
  for (const auto& c : cells) {
    double psnr_sum = 0.0;
    long frames = 0;
    bool all_inf = true;
    std::function<void(Image&, Rng&)> stress;
    if (c.magnitude > 0.0) {
      stress = [&](Image& img, Rng& rng) {
        auto [noisy, p] = apply_visual_stress(img, c.stress, c.magnitude, rng);
        img = std::move(noisy);
        if (std::isfinite(p)) {
          psnr_sum += p;
          all_inf = false;
        }
        ++frames;
      };
    }
    PolicyController ctrl(params);
    const auto episodes = evaluate(lab, ctrl, cfg.sweep.env, 1, cfg.sweep.episodes, stress);
    const Metrics m = score(episodes, 1.0);
    SweepRow row;
    row.kind = c.kind;
    row.magnitude = c.magnitude;
    row.psnr_db = (frames == 0 || all_inf) ? std::numeric_limits<double>::infinity() : psnr_sum / frames;
    double rms = 0.0;
    for (const auto& e : episodes) rms += e.rms_xyz;
    row.rms_xyz = rms / static_cast<double>(episodes.size());
    row.success_pct = m.success_rate;
    row.mean_episode_length = m.mean_episode_length;
    rows.push_back(row);
    emit(log, LogLevel::Info,
         c.kind + " " + num(c.magnitude) + ": rms " + num(row.rms_xyz) + " success " + num(row.success_pct) + "%");
  }

  auto f = open_out(out / "noise_sweep.csv");
  f << lab.header() << "\nkind,magnitude,psnr_db,rms_xyz,success_pct,mean_episode_length\n";
  for (const auto& r : rows)
    f << r.kind << "," << num(r.magnitude) << "," << num(r.psnr_db) << "," << num(r.rms_xyz) << ","
      << num(r.success_pct) << "," << num(r.mean_episode_length) << "\n";
  return rows;
}

}  // namespace tubelab
