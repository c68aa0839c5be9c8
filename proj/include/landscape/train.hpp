#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "landscape/data.hpp"
#include "landscape/model.hpp"
#include "landscape/sbde.hpp"

namespace landscape::train {

struct TrainConfig {
  double lr0 = 0.1;
  double lr_min = 1e-5;
  std::size_t epochs = 200;
  std::size_t batch = 256;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  bool crop = true;
  bool flip = true;
  std::size_t crop_padding = 4;
  // Value of the padding border the random crop may pull in.
  double crop_fill = 0.0;

  void validate() const;
};

// lr_min + (lr0 - lr_min) * (1 + cos(pi * t / total)) / 2.
double cosine_lr(std::size_t t, std::size_t total, double lr0, double lr_min);

// Pads an image [C,h,w] by `padding` on every side with `fill`, takes the
// h x w window whose top-left corner sits at (top, left) of the padded image,
// then mirrors it horizontally if `flip`.
template <typename T>
Tensor<T> crop_flip(const Tensor<T>& image, std::size_t padding, std::size_t top, std::size_t left, bool flip,
                    T fill = T{0});

// Random crop (uniform offsets) and horizontal flip (probability 1/2), each
// applied only if enabled in `config`. Draws from `rng` in a fixed order.
template <typename T>
Tensor<T> augment(const Tensor<T>& image, std::mt19937_64& rng, const TrainConfig& config);

// SGD with momentum and decoupled-from-batchnorm weight decay:
// g = grad + wd * p (if p.decay), v = momentum * v + g, p -= lr * v.
template <typename T>
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}
  void step(const std::vector<Parameter<T>*>& params, double lr);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<T>> velocity_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  // Negative when no test split was supplied.
  double test_acc = -1.0;
};

using History = std::vector<EpochRecord>;
using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains in place. Images are augmented at source resolution, then expanded
// when `spec` is set; the auxiliary coordinates of every batch are checked to
// equal the fill before the forward pass. The model's input normalization is
// set from the training split. Throws NumericError on a non-finite loss.
template <typename T>
History fit(model::ResNet<T>& net, const data::Dataset& train_set, const data::Dataset* test_set,
            const std::optional<sbde::ExpansionSpec>& spec, const TrainConfig& config,
            const EpochCallback& on_epoch = {});

// Builds a batch of expanded (or raw) inputs for the given samples.
template <typename T>
Tensor<T> make_inputs(const data::Dataset& ds, std::span<const std::size_t> indices,
                      const std::optional<sbde::ExpansionSpec>& spec);

template <typename T>
std::vector<int> predict(model::Classifier<T>& net, const Tensor<T>& inputs);

// Fraction of argmax-correct predictions in eval mode; ties go to the lowest
// class index.
template <typename T>
double evaluate_clean(model::Classifier<T>& net, const data::Dataset& ds,
                      const std::optional<sbde::ExpansionSpec>& spec, std::size_t batch = 100);

// Runs training-mode forward passes without updating parameters so that the
// batchnorm running statistics equal the statistics of `inputs`. Used to put
// untrained networks into a usable eval mode.
template <typename T>
void calibrate_batchnorm(model::ResNet<T>& net, const Tensor<T>& inputs);

}  // namespace landscape::train
