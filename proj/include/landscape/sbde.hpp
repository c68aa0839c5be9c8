#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "landscape/tensor.hpp"

namespace landscape::sbde {

enum class FillKind { constant, gap_cycle };

// Values held on the auxiliary coordinates. A constant fill uses `value`
// everywhere; a gap cycle walks -value, 0, +value in raster order.
struct FillScheme {
  FillKind kind = FillKind::constant;
  double value = 0.0;

  static FillScheme constant(double c);
  static FillScheme gap_cycle(double amplitude);

  // "constant:0.2" / "gapcycle:0.3"; also accepts the table labels "0.2" and
  // "0.3-GapCycle".
  static FillScheme parse(const std::string& text);
  // Canonical form accepted by parse().
  std::string to_string() const;
  // Row label as used in ablation tables: "0.0", "0.2-GapCycle".
  std::string label() const;

  void validate() const;
  friend bool operator==(const FillScheme&, const FillScheme&) = default;
};

// Per-coordinate clipping range of the expanded input.
struct Box {
  double lower = 0.0;
  double upper = 1.0;
  friend bool operator==(const Box&, const Box&) = default;
};

struct ExpansionSpec {
  std::size_t factor = 1;
  FillScheme fill;
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;

  std::size_t expanded_height() const noexcept { return height * factor; }
  std::size_t expanded_width() const noexcept { return width * factor; }
  Shape source_shape() const { return {channels, height, width}; }
  Shape expanded_shape() const { return {channels, expanded_height(), expanded_width()}; }

  // [0,1] for constant fills, widened to [-a, 1] for gap cycles.
  Box default_box() const;

  void validate() const;
  friend bool operator==(const ExpansionSpec&, const ExpansionSpec&) = default;
};

// Boolean grid over the expanded plane; true marks a signal coordinate.
class CoordinateMask {
 public:
  CoordinateMask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> signal);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool is_signal(std::size_t i, std::size_t j) const { return signal_[i * cols_ + j] != 0; }
  bool is_signal(std::size_t flat) const { return signal_[flat] != 0; }
  std::size_t signal_count() const noexcept { return signal_count_; }
  std::size_t aux_count() const noexcept { return rows_ * cols_ - signal_count_; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::uint8_t> signal_;
  std::size_t signal_count_;
};

// Source pixel (i, j) lands at (i*F, j*F), the top-left corner of its block.
CoordinateMask partition(const ExpansionSpec& spec);

// Raster ordinal of (i, j) among the auxiliary coordinates of one channel.
std::size_t aux_index_of(const ExpansionSpec& spec, std::size_t i, std::size_t j);

// Fill value at auxiliary coordinate (i, j); throws ValueError on a signal
// coordinate. The pattern is identical across channels.
double fill_value_at(const ExpansionSpec& spec, std::size_t channel, std::size_t i, std::size_t j,
                     std::size_t aux_index);

// Fill values over one expanded plane; entries on signal coordinates are 0.
std::vector<double> fill_plane(const ExpansionSpec& spec);

// The following accept a single image [C,H,W] (or its expanded form) or a
// batch [N,C,H,W].
template <typename T>
Tensor<T> expand(const Tensor<T>& image, const ExpansionSpec& spec);

// Mask projection: keeps signal coordinates and resets auxiliary ones to
// their fill values.
template <typename T>
Tensor<T> project(const Tensor<T>& x, const ExpansionSpec& spec);

// Signal coordinates gathered back into a compact image.
template <typename T>
Tensor<T> extract(const Tensor<T>& x, const ExpansionSpec& spec);

// True iff every auxiliary coordinate holds exactly its fill value.
template <typename T>
bool aux_matches_fill(const Tensor<T>& x, const ExpansionSpec& spec);

}  // namespace landscape::sbde
