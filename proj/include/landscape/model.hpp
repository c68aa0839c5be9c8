#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "landscape/ops.hpp"
#include "landscape/tape.hpp"

namespace landscape::model {

struct StemConfig {
  std::size_t kernel = 7;
  std::size_t stride = 2;
  std::size_t padding = 3;
  std::size_t out_channels = 32;
  friend bool operator==(const StemConfig&, const StemConfig&) = default;
};

struct StageConfig {
  std::size_t blocks = 2;
  std::size_t width = 32;
  friend bool operator==(const StageConfig&, const StageConfig&) = default;
};

enum class Scale { desk, full };

struct NetConfig {
  StemConfig stem;
  std::vector<StageConfig> stages{{2, 32}, {2, 64}};
  std::size_t num_classes = 10;
  std::size_t in_channels = 3;
  Scale scale = Scale::desk;

  // 7x7/2 stem with 32 channels, stages (2, 32) and (2, 64).
  static NetConfig desk();
  // ResNet-18 layout: 64-channel stem, stages 64/128/256/512 of two blocks.
  static NetConfig full();

  void validate() const;
  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

// "2x32,2x64" <-> stages.
std::vector<StageConfig> parse_stages(const std::string& text);
std::string format_stages(const std::vector<StageConfig>& stages);
std::string to_string(Scale scale);
Scale parse_scale(const std::string& text);

enum class Mode { train, eval };

// Anything an attack can differentiate through: maps a batch to logits in
// eval mode with parameters frozen.
template <typename T>
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual Var<T> logits(Tape<T>& tape, const Var<T>& x) = 0;
};

// Residual classifier: fixed per-channel normalization, conv stem, batchnorm,
// relu, no pooling, basic-block stages, global average pool, linear head.
template <typename T>
class ResNet : public Classifier<T> {
 public:
  ResNet(NetConfig config, std::uint64_t seed);

  Var<T> forward(Tape<T>& tape, const Var<T>& x, Mode mode, bool track_params);
  Var<T> logits(Tape<T>& tape, const Var<T>& x) override { return forward(tape, x, Mode::eval, false); }

  const NetConfig& config() const noexcept { return config_; }

  // Every parameter in a fixed order, trainable or not. Pointers stay valid
  // until the model is moved or destroyed.
  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  std::vector<BatchNormStats<T>*> batchnorms();
  std::vector<std::string> batchnorm_names() const;

  void zero_grad();

  // Normalization applied to every input coordinate before the stem.
  void set_normalization(const std::vector<double>& mean, const std::vector<double>& stddev);

  // Spatial size after the stem and after the last stage; throws ValueError
  // if any stage would collapse to zero.
  std::pair<std::size_t, std::size_t> stem_output_size(std::size_t h, std::size_t w) const;
  std::pair<std::size_t, std::size_t> final_spatial_size(std::size_t h, std::size_t w) const;

  bool batchnorm_initialized() const;

 private:
  struct ConvBn {
    std::string name;
    Parameter<T> weight;
    Parameter<T> gamma;
    Parameter<T> beta;
    BatchNormStats<T> stats;
    std::size_t stride = 1;
    std::size_t padding = 0;
  };
  struct Block {
    ConvBn conv1;
    ConvBn conv2;
    std::optional<ConvBn> shortcut;
  };

  ConvBn make_conv_bn(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
                      std::size_t stride, std::size_t padding, std::mt19937_64& rng);
  Var<T> apply(Tape<T>& tape, ConvBn& layer, const Var<T>& x, Mode mode, bool track);

  NetConfig config_;
  Parameter<T> norm_shift_;
  Parameter<T> norm_scale_;
  ConvBn stem_;
  std::vector<Block> blocks_;
  Parameter<T> fc_weight_;
  Parameter<T> fc_bias_;
};

}  // namespace landscape::model
