#include <doctest.h>

#include "tubelab/app.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace tubelab;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(TUBELAB_SOURCE_DIR) / "configs";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("tubelab_test_" + name);
  fs::remove_all(d);
  return d;
}

RunConfig smoke() { return load_config(kConfigs / "smoke.toml"); }

std::string expected_header(const RunConfig& cfg) {
  return "# config_hash=" + hash_hex(config_hash(cfg)) + " seed=" + std::to_string(cfg.seed);
}

}  // namespace

TEST_CASE("configuration parsing") {
  const RunConfig def;
  CHECK(config_hash(load_config(kConfigs / "default.toml")) == config_hash(def));
  CHECK(hash_hex(config_hash(def)).size() == 16);
  CHECK(config_hash(parse_config(dump_config(smoke()))) == config_hash(smoke()));

  RunConfig other = def;
  other.seed = 1;
  CHECK(config_hash(other) != config_hash(def));

  const RunConfig c = parse_config("seed = 5\n[mpc]\nhorizon = 20\n[experiment]\nenvs = [\"noise\"]\n");
  CHECK(c.seed == 5);
  CHECK(c.mpc.horizon == 20);
  CHECK(c.experiment.envs == std::vector<std::string>{"noise"});

  auto config_error = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const Error& e) {
      return e.code() == ErrorCode::Config;
    }
    return false;
  };
  CHECK(config_error("[mpc]\nhorizn = 3\n"));
  CHECK(config_error("[nope]\n"));
  CHECK(config_error("[mpc]\nhorizon = \"thirty\"\n"));
  CHECK(config_error("[mpc]\nhorizon = 0\n"));
  CHECK(config_error("[da]\nepsilon_bar = 1.5\n"));
  CHECK(config_error("[train]\nrounds = 0\n"));
  CHECK_THROWS_AS(load_config(kConfigs / "missing.toml"), Error);

  RunConfig full = def;
  apply_full_scale(full);
  CHECK(full.experiment.eval_seeds == 10);
  CHECK(full.experiment.episodes_per_seed == 10);
}

TEST_CASE("synth output is reproducible and round-trips") {
  const RunConfig cfg = smoke();
  const fs::path a = fresh_dir("synth_a"), b = fresh_dir("synth_b");
  const SynthesisResult syn = cmd_synth(cfg, a);
  cmd_synth(cfg, b);
  const std::string text = slurp(a / "synthesis.json");
  CHECK(text == slurp(b / "synthesis.json"));

  const auto j = nlohmann::json::parse(text);
  CHECK(j["meta"]["config_hash"] == hash_hex(config_hash(cfg)));
  CHECK(j["meta"]["seed"] == cfg.seed);
  const SynthesisResult back = synthesis_from_json(text);
  CHECK(back.Z == syn.Z);
  CHECK(back.X_bar == syn.X_bar);
  CHECK(back.U_bar == syn.U_bar);
  CHECK(back.K == syn.K);
  CHECK(back.P == syn.P);
  CHECK(syn.X_bar.dim() == kStateDim);
  CHECK(syn.U_bar.dim() == kInputDim);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("synth without uncertainty leaves the constraints untouched") {
  RunConfig cfg = smoke();
  cfg.uncertainty.wind_min_frac = cfg.uncertainty.wind_max_frac = cfg.uncertainty.wbar_frac = 0.0;
  cfg.uncertainty.sigma3_cam = {0.0, 0.0};
  cfg.uncertainty.sigma3_other = {0, 0, 0, 0, 0, 0};
  const fs::path d = fresh_dir("synth_zero");
  const SynthesisResult syn = cmd_synth(cfg, d);
  CHECK(syn.Z.half_width().maxCoeff() == 0.0);
  CHECK(syn.X_bar == state_constraints(cfg));
  fs::remove_all(d);
}

TEST_CASE("an oversized tube is reported") {
  RunConfig cfg = smoke();
  cfg.uncertainty.wbar_frac = 3.0;
  cfg.uncertainty.wind_max_frac = 2.5;
  cfg.uncertainty.wind_min_frac = 2.0;
  try {
    cmd_synth(cfg, fresh_dir("synth_big"));
    FAIL("expected TubeTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TubeTooLarge);
    CHECK(std::string(e.what()).find("width") != std::string::npos);
  }
}

TEST_CASE("demo archive") {
  const RunConfig cfg = smoke();
  const fs::path d = fresh_dir("demo");
  const DemoArchive a = cmd_demo(cfg, d);
  CHECK(a.success);
  CHECK(a.images == a.episode_length);
  CHECK(a.db_entries == static_cast<std::size_t>(a.episode_length));
  int pgm = 0;
  for (const auto& e : fs::directory_iterator(d / "frames")) pgm += e.path().extension() == ".pgm";
  CHECK(pgm == a.episode_length);
  const auto trace = lines_of(d / "trace.csv");
  REQUIRE(trace.size() == static_cast<std::size_t>(a.episode_length) + 2);
  CHECK(trace[0] == expected_header(cfg));
  CHECK(trace[1].rfind("t,", 0) == 0);
  CHECK(lines_of(d / "db" / "index.csv").front() == expected_header(cfg));
  CHECK(ObservationDatabase::load(d / "db").size() == a.db_entries);
  fs::remove_all(d);
}

TEST_CASE("expert evaluation matches the experiment baseline and is deterministic") {
  RunConfig cfg = smoke();
  cfg.experiment.methods = {"bc_tn20"};
  cfg.experiment.rounds = 1;
  const fs::path e1 = fresh_dir("eval1"), e2 = fresh_dir("eval2"), ex = fresh_dir("exp");
  const auto m1 = cmd_eval(cfg, "", e1);
  cmd_eval(cfg, "", e2);
  CHECK(slurp(e1 / "eval_metrics.json") == slurp(e2 / "eval_metrics.json"));

  const auto summary = cmd_experiment(cfg, ex);
  CHECK(summary.failed_cells == 0);
  REQUIRE(summary.baselines.size() == m1.size());
  for (std::size_t i = 0; i < m1.size(); ++i) {
    CHECK(m1[i].env == summary.baselines[i].env);
    CHECK(m1[i].metrics.success_rate == summary.baselines[i].metrics.success_rate);
    CHECK(m1[i].metrics.mean_stage_cost == summary.baselines[i].metrics.mean_stage_cost);
    CHECK(m1[i].metrics.mean_episode_length == summary.baselines[i].metrics.mean_episode_length);
  }

  // Documented CSV schemas.
  const auto fig = lines_of(ex / "fig4_curves.csv");
  REQUIRE(fig.size() >= 2);
  CHECK(fig[0] == expected_header(cfg));
  CHECK(fig[1] ==
        "method,env,demos,wallclock_s,mean_episode_length,ci95,round,success_pct,expert_gap_pct,error");
  CHECK(fig.size() == 2 + cfg.experiment.envs.size());
  for (std::size_t i = 2; i < fig.size(); ++i) {
    CHECK(std::count(fig[i].begin(), fig[i].end(), ',') == 9);
    CHECK(fig[i].find(",NA,") != std::string::npos);  // wall-clock disabled
  }
  const auto tab = lines_of(ex / "table2.csv");
  REQUIRE(tab.size() == 2 + cfg.experiment.envs.size());
  CHECK(tab[0] == expected_header(cfg));
  CHECK(tab[1] == "method,env,success_pct,expert_gap_pct,demo_efficiency,error");
  const auto base = lines_of(ex / "expert_baseline.csv");
  CHECK(base[1] == "env,success_pct,mean_episode_length,mean_stage_cost,mean_rms_xyz");
  for (const auto& d : {e1, e2, ex}) fs::remove_all(d);
}

TEST_CASE("table reduction") {
  auto row = [](int round, int demos, double success, std::optional<double> gap) {
    RoundRow r;
    r.method = "bc";
    r.env = "noise";
    r.round = round;
    r.demos = demos;
    r.metrics.success_rate = success;
    r.metrics.expert_gap = gap;
    return r;
  };
  const std::vector<RoundRow> rows{row(0, 10, 20.0, std::nullopt), row(1, 20, 80.0, 30.0), row(2, 30, 60.0, 25.0)};
  const auto t = summarize_table(rows, 70.0);
  REQUIRE(t.size() == 1);
  CHECK(*t[0].success_pct == 60.0);
  CHECK(*t[0].expert_gap_pct == 25.0);
  CHECK(*t[0].demo_efficiency == 20);

  const auto never = summarize_table({row(0, 10, 20.0, std::nullopt)}, 70.0);
  CHECK_FALSE(never[0].demo_efficiency.has_value());
  CHECK_FALSE(never[0].expert_gap_pct.has_value());
}

TEST_CASE("train then noise sweep") {
  RunConfig cfg = smoke();
  cfg.train.method = "bc_tn20";
  const fs::path d = fresh_dir("train");
  const MethodRun run = cmd_train(cfg, d);
  CHECK(run.policy.has_value());
  CHECK(fs::exists(d / "policy.tlp"));
  CHECK(fs::exists(d / "train_report.json"));

  const auto rows = cmd_noise_sweep(cfg, d / "policy.tlp", d);
  REQUIRE(rows.size() == 1 + cfg.sweep.noise_sigmas.size() + cfg.sweep.blur_sigmas.size());
  CHECK(rows[0].kind == "clean");
  CHECK(rows[0].magnitude == 0.0);
  CHECK(std::isinf(rows[0].psnr_db));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].kind == rows[i - 1].kind) CHECK(rows[i].magnitude >= rows[i - 1].magnitude);
    CHECK(rows[i].psnr_db < 100.0);
  }
  const auto csv = lines_of(d / "noise_sweep.csv");
  CHECK(csv[0] == expected_header(cfg));
  CHECK(csv[1] == "kind,magnitude,psnr_db,rms_xyz,success_pct,mean_episode_length");
  CHECK(csv.size() == rows.size() + 2);

  CHECK_THROWS_AS(cmd_noise_sweep(cfg, d / "absent.tlp", d), Error);
  RunConfig wrong = cfg;
  wrong.vision.width = 8;
  wrong.vision.height = 8;
  CHECK_THROWS_AS(cmd_eval(wrong, d / "policy.tlp", d), Error);
  fs::remove_all(d);
}
