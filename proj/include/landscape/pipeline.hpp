#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "landscape/checkpoint.hpp"
#include "landscape/config.hpp"
#include "landscape/data.hpp"
#include "landscape/probe.hpp"
#include "landscape/report.hpp"

namespace landscape::pipeline {

// Name of the environment variable holding the dataset root.
inline constexpr const char* kDataEnv = "LANDSCAPE_PROBE_DATA";

struct Splits {
  data::Dataset train;
  data::Dataset test;
};

// Dataset root: the environment variable when set, otherwise data.root.
std::filesystem::path data_root(const config::RunConfig& config);

// Synthetic data: one pool of train_per_class + test_per_class samples per
// class, split disjointly with data.subset_seed. CIFAR-10: the binary batches
// under the data root, optionally reduced to stratified subsets.
Splits load_splits(const config::RunConfig& config);

using Log = std::function<void(const std::string&)>;

// Output file names inside the output directory.
inline constexpr const char* kCheckpoint = "model.lpck";
inline constexpr const char* kHistory = "history.csv";
inline constexpr const char* kConfigEcho = "config.ini";
inline constexpr const char* kRobustness = "robustness.csv";
inline constexpr const char* kTrajectory = "trajectory.csv";
inline constexpr const char* kRecovery = "recovery.csv";
inline constexpr const char* kGeometry = "geometry.json";
inline constexpr const char* kAblation = "ablation.csv";
inline constexpr const char* kPhases = "phases.csv";

// Each command writes its artifacts under `out` (plus the canonical config
// echo) and returns the paths written.
std::vector<std::filesystem::path> cmd_train(const config::RunConfig& config, const std::filesystem::path& out,
                                             const Log& log = {});
std::vector<std::filesystem::path> cmd_attack(const config::RunConfig& config,
                                              const std::filesystem::path& checkpoint_path,
                                              const std::filesystem::path& out, const Log& log = {});
std::vector<std::filesystem::path> cmd_trace(const config::RunConfig& config,
                                             const std::filesystem::path& checkpoint_path,
                                             const std::filesystem::path& out, const Log& log = {});
std::vector<std::filesystem::path> cmd_ablate(const config::RunConfig& config, const std::filesystem::path& out,
                                              std::size_t jobs, const Log& log = {});

// Throws ConfigError when the checkpoint was trained with a different network
// or expansion than the config describes.
void check_compatible(const checkpoint::Header& header, const config::RunConfig& config);

// Phase statistics for every (factor, stride) of the grid with the stem kernel
// and padding of the config.
report::CsvTable phase_table(const config::RunConfig& config);

}  // namespace landscape::pipeline
