// Command-line front end. Talks to the core only through the C interface.
#include "tubelab/tubelab.h"

#include <CLI11.hpp>

#include <cstdio>
#include <memory>
#include <optional>
#include <string>

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  bool full_scale = false;
  std::string policy;
  bool verbose = false;
};

void log_to_stderr(tl_log_level level, const char* message, void* user) {
  const bool verbose = *static_cast<bool*>(user);
  if (level == TL_LOG_DEBUG && !verbose) return;
  static const char* names[] = {"debug", "info", "warn", "error"};
  std::fprintf(stderr, "[%s] %s\n", names[level], message);
}

using SessionPtr = std::unique_ptr<tl_session, decltype(&tl_session_destroy)>;

int report(tl_status st) {
  if (st == TL_OK) return 0;
  std::fprintf(stderr, "tubelab: %s (status %d)\n", tl_last_error(), static_cast<int>(st));
  return st == TL_ERR_PARTIAL ? 3 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tube-guided imitation learning lab"};
  app.require_subcommand(1);
  app.fallthrough();
  Options opt;
  app.add_option("--config", opt.config, "TOML-style run configuration (defaults when omitted)")->check(CLI::ExistingFile);
  app.add_option("--seed", opt.seed, "Override the configured seed");
  app.add_option("--out", opt.out, "Output directory")->capture_default_str();
  app.add_flag("--full-scale", opt.full_scale, "Evaluate with 10 seeds x 10 episodes");
  app.add_flag("-v,--verbose", opt.verbose, "Show debug messages");

  auto* synth = app.add_subcommand("synth", "Synthesize the tube and tightened constraints");
  auto* demo = app.add_subcommand("demo", "Record one expert demonstration archive");
  auto* train = app.add_subcommand("train", "Train the configured method and save policy.tlp");
  auto* eval = app.add_subcommand("eval", "Evaluate a policy (or the expert) in the configured environments");
  eval->add_option("--policy", opt.policy, "Policy file; omit to evaluate the expert");
  auto* experiment = app.add_subcommand("experiment", "Run every method cell and write fig4_curves.csv, table2.csv");
  auto* sweep = app.add_subcommand("noise-sweep", "Image-corruption sweep of a trained policy");
  sweep->add_option("--policy", opt.policy, "Policy file; defaults to sweep.policy from the config");

  CLI11_PARSE(app, argc, argv);

  tl_set_log_callback(log_to_stderr, &opt.verbose);
  tl_session* raw = nullptr;
  if (int rc = report(tl_session_create(opt.config.empty() ? nullptr : opt.config.c_str(), &raw))) return rc;
  SessionPtr session(raw, tl_session_destroy);
  if (opt.seed)
    if (int rc = report(tl_session_set_seed(session.get(), *opt.seed))) return rc;
  if (int rc = report(tl_session_set_full_scale(session.get(), opt.full_scale ? 1 : 0))) return rc;

  const char* out = opt.out.c_str();
  const char* policy = opt.policy.empty() ? nullptr : opt.policy.c_str();
  tl_status st = TL_OK;
  if (synth->parsed()) st = tl_cmd_synth(session.get(), out);
  else if (demo->parsed()) st = tl_cmd_demo(session.get(), out);
  else if (train->parsed()) st = tl_cmd_train(session.get(), out);
  else if (eval->parsed()) st = tl_cmd_eval(session.get(), policy, out);
  else if (experiment->parsed()) st = tl_cmd_experiment(session.get(), out);
  else if (sweep->parsed()) st = tl_cmd_noise_sweep(session.get(), policy, out);
  return report(st);
}
