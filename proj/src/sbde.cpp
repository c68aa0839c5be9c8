#include "landscape/sbde.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "landscape/error.hpp"

namespace landscape::sbde {

FillScheme FillScheme::constant(double c) {
  FillScheme f{FillKind::constant, c};
  f.validate();
  return f;
}

FillScheme FillScheme::gap_cycle(double amplitude) {
  FillScheme f{FillKind::gap_cycle, amplitude};
  f.validate();
  return f;
}

namespace {

double parse_number(const std::string& s, const std::string& whole) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ValueError("invalid fill scheme '" + whole + "'");
  }
  if (used != s.size()) throw ValueError("invalid fill scheme '" + whole + "'");
  return v;
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  if (std::stod(buf) == v) return buf;
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

FillScheme FillScheme::parse(const std::string& text) {
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const std::string kind = text.substr(0, colon);
    const double v = parse_number(text.substr(colon + 1), text);
    if (kind == "constant") return constant(v);
    if (kind == "gapcycle") return gap_cycle(v);
    throw ValueError("unknown fill kind '" + kind + "' in '" + text + "'");
  }
  const std::string suffix = "-GapCycle";
  if (text.size() > suffix.size() && text.compare(text.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return gap_cycle(parse_number(text.substr(0, text.size() - suffix.size()), text));
  }
  return constant(parse_number(text, text));
}

std::string FillScheme::to_string() const {
  return (kind == FillKind::constant ? "constant:" : "gapcycle:") + format_value(value);
}

std::string FillScheme::label() const {
  return kind == FillKind::constant ? format_value(value) : format_value(value) + "-GapCycle";
}

void FillScheme::validate() const {
  if (!std::isfinite(value)) throw ValueError("fill value must be finite");
  if (kind == FillKind::constant && (value < 0.0 || value > 1.0)) {
    throw ValueError("constant fill " + format_value(value) + " outside the pixel range [0, 1]");
  }
  if (kind == FillKind::gap_cycle && !(value > 0.0 && value <= 1.0)) {
    throw ValueError("gap-cycle amplitude must lie in (0, 1], got " + format_value(value));
  }
}

Box ExpansionSpec::default_box() const {
  if (fill.kind == FillKind::gap_cycle) return Box{-fill.value, 1.0};
  return Box{0.0, 1.0};
}

void ExpansionSpec::validate() const {
  if (factor < 1) throw ValueError("expansion factor must be >= 1");
  if (channels == 0 || height == 0 || width == 0) throw ValueError("expansion source shape must be non-empty");
  fill.validate();
}

CoordinateMask::CoordinateMask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> signal)
    : rows_(rows), cols_(cols), signal_(std::move(signal)), signal_count_(0) {
  if (signal_.size() != rows_ * cols_) throw ShapeError("coordinate mask size does not match its grid");
  for (auto s : signal_) signal_count_ += s != 0;
}

CoordinateMask partition(const ExpansionSpec& spec) {
  spec.validate();
  const std::size_t rows = spec.expanded_height();
  const std::size_t cols = spec.expanded_width();
  std::vector<std::uint8_t> signal(rows * cols, 0);
  for (std::size_t i = 0; i < rows; i += spec.factor) {
    for (std::size_t j = 0; j < cols; j += spec.factor) signal[i * cols + j] = 1;
  }
  return CoordinateMask(rows, cols, std::move(signal));
}

std::size_t aux_index_of(const ExpansionSpec& spec, std::size_t i, std::size_t j) {
  const std::size_t f = spec.factor;
  const std::size_t cols = spec.expanded_width();
  if (i % f == 0 && j % f == 0) throw ValueError("coordinate is a signal coordinate");
  // Signal coordinates strictly before (i, j) in raster order.
  const std::size_t signal_rows_before = (i + f - 1) / f;
  std::size_t before = signal_rows_before * spec.width;
  if (i % f == 0) before += (j + f - 1) / f;
  return i * cols + j - before;
}

double fill_value_at(const ExpansionSpec& spec, std::size_t channel, std::size_t i, std::size_t j,
                     std::size_t aux_index) {
  if (channel >= spec.channels || i >= spec.expanded_height() || j >= spec.expanded_width()) {
    throw ValueError("coordinate outside the expanded grid");
  }
  if (i % spec.factor == 0 && j % spec.factor == 0) {
    throw ValueError("fill_value_at called on signal coordinate (" + std::to_string(i) + ", " + std::to_string(j) +
                     ")");
  }
  if (spec.fill.kind == FillKind::constant) return spec.fill.value;
  switch (aux_index % 3) {
    case 0:
      return -spec.fill.value;
    case 1:
      return 0.0;
    default:
      return spec.fill.value;
  }
}

std::vector<double> fill_plane(const ExpansionSpec& spec) {
  const std::size_t rows = spec.expanded_height();
  const std::size_t cols = spec.expanded_width();
  std::vector<double> plane(rows * cols, 0.0);
  std::size_t aux = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (i % spec.factor == 0 && j % spec.factor == 0) continue;
      plane[i * cols + j] = fill_value_at(spec, 0, i, j, aux++);
    }
  }
  return plane;
}

namespace {

// Splits a rank-3 or rank-4 shape into (batch, channels, h, w).
struct Layout {
  std::size_t batch;
  std::size_t channels;
  std::size_t h;
  std::size_t w;
  bool batched;
};

Layout layout_of(const Shape& s, const char* op) {
  if (s.size() == 3) return {1, s[0], s[1], s[2], false};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
  throw ShapeError(std::string(op) + " expects [C,H,W] or [N,C,H,W], got " + to_string(s));
}

Shape with_batch(const Layout& l, std::size_t h, std::size_t w) {
  if (l.batched) return {l.batch, l.channels, h, w};
  return {l.channels, h, w};
}

void check_layout(const Layout& l, const ExpansionSpec& spec, std::size_t h, std::size_t w, const char* op) {
  if (l.channels != spec.channels || l.h != h || l.w != w) {
    throw ShapeError(std::string(op) + ": tensor plane " + std::to_string(l.channels) + "x" + std::to_string(l.h) +
                     "x" + std::to_string(l.w) + " does not match " + std::to_string(spec.channels) + "x" +
                     std::to_string(h) + "x" + std::to_string(w));
  }
}

}  // namespace

template <typename T>
Tensor<T> expand(const Tensor<T>& image, const ExpansionSpec& spec) {
  spec.validate();
  const Layout l = layout_of(image.shape(), "expand");
  check_layout(l, spec, spec.height, spec.width, "expand");
  const std::size_t f = spec.factor;
  const std::size_t eh = spec.expanded_height();
  const std::size_t ew = spec.expanded_width();
  const std::vector<double> fill = fill_plane(spec);
  Tensor<T> out(with_batch(l, eh, ew));
  for (std::size_t p = 0; p < l.batch * l.channels; ++p) {
    T* dst = out.data() + p * eh * ew;
    const T* src = image.data() + p * l.h * l.w;
    for (std::size_t q = 0; q < eh * ew; ++q) dst[q] = static_cast<T>(fill[q]);
    for (std::size_t i = 0; i < l.h; ++i) {
      for (std::size_t j = 0; j < l.w; ++j) dst[(i * f) * ew + j * f] = src[i * l.w + j];
    }
  }
  return out;
}

template <typename T>
Tensor<T> project(const Tensor<T>& x, const ExpansionSpec& spec) {
  spec.validate();
  const Layout l = layout_of(x.shape(), "project");
  check_layout(l, spec, spec.expanded_height(), spec.expanded_width(), "project");
  const std::vector<double> fill = fill_plane(spec);
  const CoordinateMask mask = partition(spec);
  const std::size_t plane = l.h * l.w;
  Tensor<T> out = x;
  out.drop_grad();
  for (std::size_t p = 0; p < l.batch * l.channels; ++p) {
    T* dst = out.data() + p * plane;
    for (std::size_t q = 0; q < plane; ++q) {
      if (!mask.is_signal(q)) dst[q] = static_cast<T>(fill[q]);
    }
  }
  return out;
}

template <typename T>
Tensor<T> extract(const Tensor<T>& x, const ExpansionSpec& spec) {
  spec.validate();
  const Layout l = layout_of(x.shape(), "extract");
  check_layout(l, spec, spec.expanded_height(), spec.expanded_width(), "extract");
  const std::size_t f = spec.factor;
  Tensor<T> out(with_batch(l, spec.height, spec.width));
  for (std::size_t p = 0; p < l.batch * l.channels; ++p) {
    const T* src = x.data() + p * l.h * l.w;
    T* dst = out.data() + p * spec.height * spec.width;
    for (std::size_t i = 0; i < spec.height; ++i) {
      for (std::size_t j = 0; j < spec.width; ++j) dst[i * spec.width + j] = src[(i * f) * l.w + j * f];
    }
  }
  return out;
}

template <typename T>
bool aux_matches_fill(const Tensor<T>& x, const ExpansionSpec& spec) {
  const Layout l = layout_of(x.shape(), "aux_matches_fill");
  check_layout(l, spec, spec.expanded_height(), spec.expanded_width(), "aux_matches_fill");
  const std::vector<double> fill = fill_plane(spec);
  const CoordinateMask mask = partition(spec);
  const std::size_t plane = l.h * l.w;
  for (std::size_t p = 0; p < l.batch * l.channels; ++p) {
    const T* src = x.data() + p * plane;
    for (std::size_t q = 0; q < plane; ++q) {
      if (!mask.is_signal(q) && src[q] != static_cast<T>(fill[q])) return false;
    }
  }
  return true;
}

template Tensor<float> expand<float>(const Tensor<float>&, const ExpansionSpec&);
template Tensor<double> expand<double>(const Tensor<double>&, const ExpansionSpec&);
template Tensor<float> project<float>(const Tensor<float>&, const ExpansionSpec&);
template Tensor<double> project<double>(const Tensor<double>&, const ExpansionSpec&);
template Tensor<float> extract<float>(const Tensor<float>&, const ExpansionSpec&);
template Tensor<double> extract<double>(const Tensor<double>&, const ExpansionSpec&);
template bool aux_matches_fill<float>(const Tensor<float>&, const ExpansionSpec&);
template bool aux_matches_fill<double>(const Tensor<double>&, const ExpansionSpec&);

}  // namespace landscape::sbde
