// Command-line front end: train, attack, trace and ablate.
#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>

#include "landscape/config.hpp"
#include "landscape/error.hpp"
#include "landscape/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace landscape;

// Exit codes: 0 success, 2 usage or config error, 3 data or format error,
// 4 numeric failure, 1 anything else.
int fail(const std::string& command, const std::string& kind, const std::string& message, int line, int code) {
  nlohmann::json record{{"status", "error"}, {"command", command}, {"kind", kind}, {"message", message}};
  if (line > 0) record["line"] = line;
  std::cerr << record.dump() << "\n";
  return code;
}

int code_for(const Error& e) {
  const std::string kind = e.kind();
  if (kind == "config" || kind == "value" || kind == "shape") return 2;
  if (kind == "format") return 3;
  if (kind == "numeric") return 4;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Loss-landscape probes for symmetry-breaking dimensional expansion"};
  app.require_subcommand(1);

  std::string config_path;
  std::string checkpoint_path;
  std::string out_dir;
  std::size_t jobs = 1;
  std::optional<std::uint64_t> seed;
  bool quiet = false;

  auto add_common = [&](CLI::App* cmd, bool needs_checkpoint) {
    cmd->add_option("--config", config_path, "Run configuration (INI)")->required()->check(CLI::ExistingFile);
    if (needs_checkpoint) {
      cmd->add_option("--checkpoint", checkpoint_path, "Trained model checkpoint")->required()->check(CLI::ExistingFile);
    }
    cmd->add_option("--out", out_dir, "Output directory (default: output.dir of the config)");
    cmd->add_option("--seed", seed, "Seed for model init, training order and attack starts");
    cmd->add_flag("--quiet", quiet, "Suppress progress lines");
  };
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model, write checkpoint and history");
  add_common(train_cmd, false);
  CLI::App* attack_cmd = app.add_subcommand("attack", "Robust accuracy table for a checkpoint");
  add_common(attack_cmd, true);
  CLI::App* trace_cmd = app.add_subcommand("trace", "Attack trajectory, recovery and gradient geometry");
  add_common(trace_cmd, true);
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "Train and attack every cell of the probe grid");
  add_common(ablate_cmd, false);
  ablate_cmd->add_option("--jobs", jobs, "Cells trained in parallel")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    return fail(subs.empty() ? "" : subs.front()->get_name(), "usage", e.what(), 0, 2);
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    config::RunConfig cfg = config::load(config_path);
    if (seed) cfg.set_seed(*seed);
    const fs::path out = out_dir.empty() ? cfg.output : fs::path(out_dir);
    const pipeline::Log log = [quiet](const std::string& line) {
      if (!quiet) std::cerr << line << "\n";
    };
    std::vector<fs::path> written;
    if (command == "train") {
      written = pipeline::cmd_train(cfg, out, log);
    } else if (command == "attack") {
      written = pipeline::cmd_attack(cfg, checkpoint_path, out, log);
    } else if (command == "trace") {
      written = pipeline::cmd_trace(cfg, checkpoint_path, out, log);
    } else {
      written = pipeline::cmd_ablate(cfg, out, jobs, log);
    }
    for (const auto& p : written) std::cout << p.string() << "\n";
    return 0;
  } catch (const ConfigError& e) {
    return fail(command, e.kind(), e.what(), e.line(), 2);
  } catch (const Error& e) {
    return fail(command, e.kind(), e.what(), 0, code_for(e));
  } catch (const std::exception& e) {
    return fail(command, "internal", e.what(), 0, 1);
  }
}
