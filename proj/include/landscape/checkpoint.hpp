#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "landscape/model.hpp"
#include "landscape/sbde.hpp"

namespace landscape::checkpoint {

// File layout: the bytes "LPCK", a little-endian u32 format version, a u64
// header length, a JSON header (network config, expansion, dtype, tensor
// names and shapes), then the raw little-endian values of every parameter
// followed by every batchnorm running mean and variance, in header order.
struct Header {
  model::NetConfig net;
  std::optional<sbde::ExpansionSpec> sbde;
  std::string dtype;
  // Free-form provenance such as the canonical config text.
  std::string note;
};

template <typename T>
void save(const std::filesystem::path& path, model::ResNet<T>& net,
          const std::optional<sbde::ExpansionSpec>& spec, const std::string& note = "");

Header read_header(const std::filesystem::path& path);

// Restores a network saved with the same dtype. Throws FormatError on
// malformed files or tensor layout mismatches.
template <typename T>
model::ResNet<T> load(const std::filesystem::path& path, Header* header = nullptr);

}  // namespace landscape::checkpoint
