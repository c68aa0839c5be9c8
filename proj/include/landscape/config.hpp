#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "landscape/data.hpp"
#include "landscape/model.hpp"
#include "landscape/probe.hpp"
#include "landscape/sbde.hpp"
#include "landscape/train.hpp"

namespace landscape::config {

enum class Source { synthetic, cifar10 };
enum class ProjectionRows { both, with, without };

struct DataConfig {
  Source source = Source::synthetic;
  // Dataset root for CIFAR-10; LANDSCAPE_PROBE_DATA wins when set.
  std::string root;
  // Stratified subset sizes; 0 keeps the whole split.
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::uint64_t subset_seed = 0;
  // Synthetic generator.
  data::SyntheticSpec synthetic;
  std::size_t test_per_class = 50;
};

struct AttackConfig {
  probe::AttackPlan plan;
  ProjectionRows projection = ProjectionRows::both;
  std::size_t batch = 100;
};

struct ProbeConfig {
  std::size_t samples = 256;
  std::size_t trace_sample = 0;
  attacks::Kind trace_attack = attacks::Kind::pgd;
  // Empty picks a random signal pixel.
  std::optional<probe::TrackedPixel> pixel;
  probe::AblationGrid grid{{4, 5}, {2}, {sbde::FillScheme::constant(0.0)}, {0, 1, 2}};
};

struct RunConfig {
  DataConfig data;
  model::NetConfig net = model::NetConfig::desk();
  std::uint64_t model_seed = 0;
  // Absent when the config has no [sbde] section: the natural baseline.
  std::optional<sbde::ExpansionSpec> sbde;
  train::TrainConfig train;
  AttackConfig attack;
  ProbeConfig probe;
  std::filesystem::path output = "out";
  int threads = 1;

  // Channel and spatial sizes of the expansion follow the data section.
  void validate() const;
  // Applies a seed to model, training and attack.
  void set_seed(std::uint64_t seed);
};

// INI-style document: "[section]" headers, "key = value" lines, '#' or ';'
// comments. Keys are addressed as section.key; unknown sections, unknown keys,
// duplicates and bad values raise ConfigError with the line number.
RunConfig parse(const std::string& text);
RunConfig load(const std::filesystem::path& path);

// Every key in a fixed order with canonical values; parse(canonical(c))
// reproduces c.
std::string canonical(const RunConfig& config);

// All addressable keys, in canonical order.
std::vector<std::string> keys();

// Parses "8/255" style fractions as well as plain decimals.
double parse_real(const std::string& text);

}  // namespace landscape::config
