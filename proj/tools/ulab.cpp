// ulab command line: training, moment tracking, EM-distance tracking and
// bound verification, driven by "key = value" config files.

#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ulab/config.hpp"
#include "ulab/experiments.hpp"
#include "ulab/version.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "config file (key = value lines)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts.seed, "override the config seed");
  cmd->add_option("--out-dir", opts.out_dir, "override the output directory");
  cmd->add_flag("--quiet", opts.quiet, "suppress progress output");
}

int execute(ulab::Mode mode, const CommonOptions& opts) {
  ulab::ExperimentConfig cfg;
  if (!opts.config_path.empty()) cfg = ulab::parse_config(opts.config_path);
  cfg.mode = mode;
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.out_dir) cfg.out_dir = *opts.out_dir;
  std::ostream* log = opts.quiet ? nullptr : &std::cout;
  return ulab::run_experiment(cfg, log);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unitization layers and Earth Mover distance experiments"};
  app.set_version_flag("--version", ulab::kVersion);
  app.require_subcommand(1);
  app.footer("Config keys and their defaults (key = value lines, '#' comments):\n\n" +
             ulab::serialize_config(ulab::ExperimentConfig{}));

  struct Sub {
    ulab::Mode mode;
    CLI::App* cmd;
    CommonOptions opts;
  };
  std::vector<Sub> subs;
  subs.reserve(8);  // CLI11 keeps pointers into the elements
  auto add = [&](ulab::Mode mode, const char* name, const char* help) {
    subs.push_back({mode, app.add_subcommand(name, help), {}});
    add_common(subs.back().cmd, subs.back().opts);
  };
  add(ulab::Mode::Train, "train",
      "train a classifier and checkpoint every epoch (run.csv, alpha.csv)");
  add(ulab::Mode::Moments, "moments",
      "train paired BN/unitization variants and sweep per-unit moments "
      "(moments.csv, stability.csv)");
  add(ulab::Mode::Emdist, "emdist",
      "estimate per-layer EM distances between epoch snapshots (emdist.csv)");
  add(ulab::Mode::Bounds, "bounds",
      "run the transport-bound property battery (bounds.csv)");
  add(ulab::Mode::OracleCheck, "oracle-check",
      "cross-check the exact transport oracles (oracle.csv)");

  CLI11_PARSE(app, argc, argv);

  try {
    for (auto& sub : subs)
      if (sub.cmd->parsed()) return execute(sub.mode, sub.opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
