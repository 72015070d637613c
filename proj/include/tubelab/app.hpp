#pragma once

#include "tubelab/experiment.hpp"

#include <filesystem>
#include <functional>
#include <string>

namespace tubelab {

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3 };
using LogSink = std::function<void(LogLevel, const std::string&)>;

std::string synthesis_to_json(const SynthesisResult& syn, const std::string& config_hash, std::uint64_t seed);
SynthesisResult synthesis_from_json(const std::string& text);

// Each command writes its artifacts under `out` (created if missing). Every
// text artifact starts with the Lab header line or carries it in a "meta" key.
SynthesisResult cmd_synth(const RunConfig& cfg, const std::filesystem::path& out, const LogSink& log = {});

struct DemoArchive {
  int episode_length = 0;
  int images = 0;
  std::size_t db_entries = 0;
  bool success = false;
};
DemoArchive cmd_demo(const RunConfig& cfg, const std::filesystem::path& out, const LogSink& log = {});

// Fits cfg.train.method for cfg.train.rounds rounds and writes policy.tlp.
MethodRun cmd_train(const RunConfig& cfg, const std::filesystem::path& out, const LogSink& log = {});

struct EnvMetrics {
  std::string env;
  Metrics metrics;
  double ci95 = 0.0;
};
// Empty policy path evaluates the expert itself.
std::vector<EnvMetrics> cmd_eval(const RunConfig& cfg, const std::filesystem::path& policy,
                                 const std::filesystem::path& out, const LogSink& log = {});

struct ExperimentSummary {
  std::vector<RoundRow> rows;
  std::vector<ExpertBaseline> baselines;
  int failed_cells = 0;
};
ExperimentSummary cmd_experiment(const RunConfig& cfg, const std::filesystem::path& out, const LogSink& log = {});

struct SweepRow {
  std::string kind;  // clean, noise or blur
  double magnitude = 0.0;
  double psnr_db = 0.0;  // +inf for the clean row
  double rms_xyz = 0.0;
  double success_pct = 0.0;
  double mean_episode_length = 0.0;
};
std::vector<SweepRow> cmd_noise_sweep(const RunConfig& cfg, const std::filesystem::path& policy,
                                      const std::filesystem::path& out, const LogSink& log = {});

// Table II reduction of the per-round rows of one (method, env) cell.
struct TableRow {
  std::string method;
  std::string env;
  std::optional<double> success_pct;
  std::optional<double> expert_gap_pct;
  std::optional<int> demo_efficiency;
  std::string error;
};
std::vector<TableRow> summarize_table(const std::vector<RoundRow>& rows, double success_threshold);

}  // namespace tubelab
