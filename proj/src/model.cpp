#include "landscape/model.hpp"

#include <cmath>
#include <sstream>

#include "landscape/error.hpp"

namespace landscape::model {

NetConfig NetConfig::desk() { return NetConfig{}; }

NetConfig NetConfig::full() {
  NetConfig c;
  c.stem = StemConfig{7, 2, 3, 64};
  c.stages = {{2, 64}, {2, 128}, {2, 256}, {2, 512}};
  c.scale = Scale::full;
  return c;
}

void NetConfig::validate() const {
  if (stem.kernel == 0 || stem.kernel % 2 == 0) throw ValueError("stem kernel must be odd");
  if (stem.stride < 1) throw ValueError("stem stride must be >= 1");
  if (stem.out_channels == 0) throw ValueError("stem channels must be positive");
  if (stages.empty()) throw ValueError("network needs at least one stage");
  for (const auto& s : stages) {
    if (s.blocks == 0 || s.width == 0) throw ValueError("stage block counts and widths must be positive");
  }
  if (num_classes < 2) throw ValueError("network needs at least two classes");
  if (in_channels == 0) throw ValueError("network needs at least one input channel");
}

std::vector<StageConfig> parse_stages(const std::string& text) {
  std::vector<StageConfig> stages;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto x = item.find('x');
    if (x == std::string::npos) throw ValueError("stage '" + item + "' is not of the form <blocks>x<width>");
    try {
      std::size_t used_a = 0;
      std::size_t used_b = 0;
      const std::string a = item.substr(0, x);
      const std::string b = item.substr(x + 1);
      const long blocks = std::stol(a, &used_a);
      const long width = std::stol(b, &used_b);
      if (used_a != a.size() || used_b != b.size() || blocks <= 0 || width <= 0) throw std::invalid_argument(item);
      stages.push_back({static_cast<std::size_t>(blocks), static_cast<std::size_t>(width)});
    } catch (const std::logic_error&) {
      throw ValueError("stage '" + item + "' is not of the form <blocks>x<width>");
    }
  }
  if (stages.empty()) throw ValueError("empty stage list");
  return stages;
}

std::string format_stages(const std::vector<StageConfig>& stages) {
  std::string out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(stages[i].blocks) + "x" + std::to_string(stages[i].width);
  }
  return out;
}

std::string to_string(Scale scale) { return scale == Scale::desk ? "desk" : "full"; }

Scale parse_scale(const std::string& text) {
  if (text == "desk") return Scale::desk;
  if (text == "full") return Scale::full;
  throw ValueError("unknown model scale '" + text + "'");
}

template <typename T>
typename ResNet<T>::ConvBn ResNet<T>::make_conv_bn(const std::string& name, std::size_t in, std::size_t out,
                                                   std::size_t kernel, std::size_t stride, std::size_t padding,
                                                   std::mt19937_64& rng) {
  ConvBn layer;
  layer.name = name;
  layer.stride = stride;
  layer.padding = padding;
  const double fan_in = static_cast<double>(in * kernel * kernel);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  layer.weight = Parameter<T>{name + ".weight", Tensor<T>({out, in, kernel, kernel})};
  for (auto& v : layer.weight.tensor.values()) v = static_cast<T>(dist(rng));
  layer.gamma = Parameter<T>{name + ".bn.gamma", Tensor<T>({out}, T{1}), true, false};
  layer.beta = Parameter<T>{name + ".bn.beta", Tensor<T>({out}, T{0}), true, false};
  layer.stats = BatchNormStats<T>(out);
  return layer;
}

template <typename T>
ResNet<T>::ResNet(NetConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t c = config_.in_channels;
  norm_shift_ = Parameter<T>{"input.shift", Tensor<T>({c}, T{0}), false, false};
  norm_scale_ = Parameter<T>{"input.scale", Tensor<T>({c}, T{1}), false, false};

  const auto& st = config_.stem;
  stem_ = make_conv_bn("stem", c, st.out_channels, st.kernel, st.stride, st.padding, rng);

  std::size_t in = st.out_channels;
  for (std::size_t s = 0; s < config_.stages.size(); ++s) {
    const auto& stage = config_.stages[s];
    for (std::size_t b = 0; b < stage.blocks; ++b) {
      const std::string name = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      Block block;
      block.conv1 = make_conv_bn(name + ".conv1", in, stage.width, 3, stride, 1, rng);
      block.conv2 = make_conv_bn(name + ".conv2", stage.width, stage.width, 3, 1, 1, rng);
      if (stride != 1 || in != stage.width) {
        block.shortcut = make_conv_bn(name + ".shortcut", in, stage.width, 1, stride, 0, rng);
      }
      blocks_.push_back(std::move(block));
      in = stage.width;
    }
  }

  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  fc_weight_ = Parameter<T>{"fc.weight", Tensor<T>({config_.num_classes, in})};
  for (auto& v : fc_weight_.tensor.values()) v = static_cast<T>(dist(rng));
  fc_bias_ = Parameter<T>{"fc.bias", Tensor<T>({config_.num_classes}, T{0})};
}

template <typename T>
Var<T> ResNet<T>::apply(Tape<T>& tape, ConvBn& layer, const Var<T>& x, Mode mode, bool track) {
  Var<T> w = tape.parameter(layer.weight, track);
  Var<T> y = conv2d<T>(x, w, std::nullopt, layer.stride, layer.padding);
  return batchnorm2d<T>(y, tape.parameter(layer.gamma, track), tape.parameter(layer.beta, track), layer.stats,
                        mode == Mode::train);
}

template <typename T>
Var<T> ResNet<T>::forward(Tape<T>& tape, const Var<T>& x, Mode mode, bool track_params) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != config_.in_channels) {
    throw ShapeError("model expects [N," + std::to_string(config_.in_channels) + ",H,W] input, got " +
                     landscape::to_string(s));
  }
  final_spatial_size(s[2], s[3]);

  Var<T> h = channel_affine<T>(x, norm_shift_.tensor.values(), norm_scale_.tensor.values());
  h = relu(apply(tape, stem_, h, mode, track_params));
  // The usual max-pool after the stem is an identity here.
  for (Block& block : blocks_) {
    Var<T> out = relu(apply(tape, block.conv1, h, mode, track_params));
    out = apply(tape, block.conv2, out, mode, track_params);
    Var<T> skip = block.shortcut ? apply(tape, *block.shortcut, h, mode, track_params) : h;
    h = relu(add(out, skip));
  }
  h = global_avg_pool(h);
  return linear(h, tape.parameter(fc_weight_, track_params), tape.parameter(fc_bias_, track_params));
}

template <typename T>
std::vector<Parameter<T>*> ResNet<T>::parameters() {
  std::vector<Parameter<T>*> out{&norm_shift_, &norm_scale_};
  auto push = [&out](ConvBn& l) {
    out.push_back(&l.weight);
    out.push_back(&l.gamma);
    out.push_back(&l.beta);
  };
  push(stem_);
  for (Block& b : blocks_) {
    push(b.conv1);
    push(b.conv2);
    if (b.shortcut) push(*b.shortcut);
  }
  out.push_back(&fc_weight_);
  out.push_back(&fc_bias_);
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> ResNet<T>::parameters() const {
  auto mut = const_cast<ResNet<T>*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

template <typename T>
std::vector<BatchNormStats<T>*> ResNet<T>::batchnorms() {
  std::vector<BatchNormStats<T>*> out{&stem_.stats};
  for (Block& b : blocks_) {
    out.push_back(&b.conv1.stats);
    out.push_back(&b.conv2.stats);
    if (b.shortcut) out.push_back(&b.shortcut->stats);
  }
  return out;
}

template <typename T>
std::vector<std::string> ResNet<T>::batchnorm_names() const {
  std::vector<std::string> out{stem_.name + ".bn"};
  for (const Block& b : blocks_) {
    out.push_back(b.conv1.name + ".bn");
    out.push_back(b.conv2.name + ".bn");
    if (b.shortcut) out.push_back(b.shortcut->name + ".bn");
  }
  return out;
}

template <typename T>
void ResNet<T>::zero_grad() {
  for (Parameter<T>* p : parameters()) p->tensor.drop_grad();
}

template <typename T>
void ResNet<T>::set_normalization(const std::vector<double>& mean, const std::vector<double>& stddev) {
  if (mean.size() != config_.in_channels || stddev.size() != config_.in_channels) {
    throw ShapeError("normalization needs one mean and stddev per input channel");
  }
  for (std::size_t c = 0; c < mean.size(); ++c) {
    if (!(stddev[c] > 0.0)) throw ValueError("normalization stddev must be positive");
    norm_shift_.tensor[c] = static_cast<T>(mean[c]);
    norm_scale_.tensor[c] = static_cast<T>(1.0 / stddev[c]);
  }
}

template <typename T>
std::pair<std::size_t, std::size_t> ResNet<T>::stem_output_size(std::size_t h, std::size_t w) const {
  const auto& st = config_.stem;
  if (h + 2 * st.padding < st.kernel || w + 2 * st.padding < st.kernel) {
    throw ValueError("input " + std::to_string(h) + "x" + std::to_string(w) + " too small for the stem kernel");
  }
  return {(h + 2 * st.padding - st.kernel) / st.stride + 1, (w + 2 * st.padding - st.kernel) / st.stride + 1};
}

template <typename T>
std::pair<std::size_t, std::size_t> ResNet<T>::final_spatial_size(std::size_t h, std::size_t w) const {
  auto [sh, sw] = stem_output_size(h, w);
  for (std::size_t s = 1; s < config_.stages.size(); ++s) {
    // 3x3, stride 2, padding 1.
    sh = (sh + 2 - 3) / 2 + 1;
    sw = (sw + 2 - 3) / 2 + 1;
  }
  if (sh == 0 || sw == 0) throw ValueError("spatial size collapses to zero");
  return {sh, sw};
}

template <typename T>
bool ResNet<T>::batchnorm_initialized() const {
  if (!stem_.stats.initialized) return false;
  for (const Block& b : blocks_) {
    if (!b.conv1.stats.initialized || !b.conv2.stats.initialized) return false;
    if (b.shortcut && !b.shortcut->stats.initialized) return false;
  }
  return true;
}

template class ResNet<float>;
template class ResNet<double>;

}  // namespace landscape::model
