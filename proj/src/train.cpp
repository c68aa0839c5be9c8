#include "landscape/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "landscape/error.hpp"

namespace landscape::train {

void TrainConfig::validate() const {
  if (!(lr0 >= 0.0) || !(lr_min >= 0.0) || lr_min > lr0) throw ValueError("need 0 <= lr_min <= lr0");
  if (epochs < 1) throw ValueError("epochs must be >= 1");
  if (batch < 1) throw ValueError("batch must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValueError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ValueError("weight decay must be >= 0");
}

double cosine_lr(std::size_t t, std::size_t total, double lr0, double lr_min) {
  if (total == 0) throw ValueError("cosine schedule needs a positive step count");
  if (t > total) throw ValueError("cosine schedule step beyond the total");
  const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(total);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(phase));
}

template <typename T>
Tensor<T> crop_flip(const Tensor<T>& image, std::size_t padding, std::size_t top, std::size_t left, bool flip,
                    T fill) {
  if (image.rank() != 3) throw ShapeError("crop_flip expects [C,h,w], got " + to_string(image.shape()));
  const std::size_t c = image.dim(0);
  const std::size_t h = image.dim(1);
  const std::size_t w = image.dim(2);
  if (top > 2 * padding || left > 2 * padding) throw ValueError("crop offset outside the padded image");
  Tensor<T> out(image.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      const long sy = static_cast<long>(y + top) - static_cast<long>(padding);
      for (std::size_t x = 0; x < w; ++x) {
        const long sx = static_cast<long>(x + left) - static_cast<long>(padding);
        const bool inside = sy >= 0 && sy < static_cast<long>(h) && sx >= 0 && sx < static_cast<long>(w);
        const T v = inside ? image[(ch * h + sy) * w + sx] : fill;
        const std::size_t dx = flip ? w - 1 - x : x;
        out[(ch * h + y) * w + dx] = v;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> augment(const Tensor<T>& image, std::mt19937_64& rng, const TrainConfig& config) {
  std::size_t top = config.crop_padding;
  std::size_t left = config.crop_padding;
  if (config.crop) {
    std::uniform_int_distribution<std::size_t> offset(0, 2 * config.crop_padding);
    top = offset(rng);
    left = offset(rng);
  }
  bool flip = false;
  if (config.flip) flip = std::bernoulli_distribution(0.5)(rng);
  return crop_flip(image, config.crop_padding, top, left, flip, static_cast<T>(config.crop_fill));
}

template <typename T>
void Sgd<T>::step(const std::vector<Parameter<T>*>& params, double lr) {
  if (velocity_.size() != params.size()) {
    velocity_.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) velocity_[i].assign(params[i]->tensor.size(), T{0});
  }
  const T m = static_cast<T>(momentum_);
  const T wd = static_cast<T>(weight_decay_);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i];
    if (!p.trainable || !p.tensor.has_grad()) continue;
    auto g = std::as_const(p.tensor).grad();
    auto& v = velocity_[i];
    auto values = p.tensor.values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      T d = g[j];
      if (p.decay && wd != T{0}) d += wd * values[j];
      v[j] = m * v[j] + d;
      values[j] -= rate * v[j];
    }
  }
}

template <typename T>
Tensor<T> make_inputs(const data::Dataset& ds, std::span<const std::size_t> indices,
                      const std::optional<sbde::ExpansionSpec>& spec) {
  Tensor<T> raw = data::gather_images<T>(ds, indices);
  return spec ? sbde::expand(raw, *spec) : raw;
}

template <typename T>
std::vector<int> predict(model::Classifier<T>& net, const Tensor<T>& inputs) {
  Tape<T> tape;
  Var<T> x = tape.constant(inputs);
  return argmax_rows(net.logits(tape, x).value());
}

template <typename T>
double evaluate_clean(model::Classifier<T>& net, const data::Dataset& ds,
                      const std::optional<sbde::ExpansionSpec>& spec, std::size_t batch) {
  if (ds.size() == 0) return 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += batch) {
    const std::size_t end = std::min(ds.size(), start + batch);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto preds = predict(net, make_inputs<T>(ds, idx, spec));
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == ds.labels[start + i];
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

template <typename T>
void calibrate_batchnorm(model::ResNet<T>& net, const Tensor<T>& inputs) {
  auto bns = net.batchnorms();
  std::vector<T> saved;
  for (auto* bn : bns) {
    saved.push_back(bn->momentum);
    bn->momentum = T{1};
  }
  Tape<T> tape;
  net.forward(tape, tape.constant(inputs), model::Mode::train, false);
  for (std::size_t i = 0; i < bns.size(); ++i) bns[i]->momentum = saved[i];
}

template <typename T>
History fit(model::ResNet<T>& net, const data::Dataset& train_set, const data::Dataset* test_set,
            const std::optional<sbde::ExpansionSpec>& spec, const TrainConfig& config,
            const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.size() == 0) throw ValueError("training set is empty");
  if (spec) spec->validate();

  const auto stats = data::channel_stats(train_set);
  net.set_normalization(stats.mean, stats.stddev);

  std::mt19937_64 rng(config.seed);
  Sgd<T> sgd(config.momentum, config.weight_decay);
  const auto params = net.parameters();
  const std::size_t n = train_set.size();
  const std::size_t plane = train_set.channels() * train_set.height() * train_set.width();
  std::vector<std::size_t> order(n);

  History history;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, config.epochs, config.lr0, config.lr_min);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < n; start += config.batch) {
      const std::size_t end = std::min(n, start + config.batch);
      const std::size_t b = end - start;
      // Batchnorm needs more than one value per channel.
      if (b < 2 && start > 0) break;

      Tensor<T> raw({b, train_set.channels(), train_set.height(), train_set.width()});
      std::vector<int> labels(b);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t src = order[start + i];
        Tensor<T> image({train_set.channels(), train_set.height(), train_set.width()});
        std::copy(train_set.images.data() + src * plane, train_set.images.data() + (src + 1) * plane, image.data());
        const Tensor<T> aug = augment(image, rng, config);
        std::copy(aug.data(), aug.data() + plane, raw.data() + i * plane);
        labels[i] = train_set.labels[src];
      }
      Tensor<T> inputs = spec ? sbde::expand(raw, *spec) : std::move(raw);
      if (spec && !sbde::aux_matches_fill(inputs, *spec)) {
        throw StateError("training batch has auxiliary coordinates away from their fill values");
      }

      net.zero_grad();
      Tape<T> tape;
      Var<T> logits = net.forward(tape, tape.constant(std::move(inputs)), model::Mode::train, true);
      Var<T> loss = cross_entropy<T>(logits, labels);
      const double lv = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(lv)) {
        throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(start / config.batch));
      }
      const auto preds = argmax_rows(logits.value());
      for (std::size_t i = 0; i < b; ++i) correct += preds[i] == labels[i];
      loss_sum += lv * static_cast<double>(b);
      seen += b;
      tape.backward(loss);
      sgd.step(params, lr);
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
    if (test_set != nullptr) rec.test_acc = evaluate_clean(net, *test_set, spec);
    history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return history;
}

#define LANDSCAPE_INSTANTIATE_TRAIN(T)                                                                            \
  template Tensor<T> crop_flip<T>(const Tensor<T>&, std::size_t, std::size_t, std::size_t, bool, T);              \
  template Tensor<T> augment<T>(const Tensor<T>&, std::mt19937_64&, const TrainConfig&);                          \
  template class Sgd<T>;                                                                                          \
  template Tensor<T> make_inputs<T>(const data::Dataset&, std::span<const std::size_t>,                           \
                                    const std::optional<sbde::ExpansionSpec>&);                                   \
  template std::vector<int> predict<T>(model::Classifier<T>&, const Tensor<T>&);                                  \
  template double evaluate_clean<T>(model::Classifier<T>&, const data::Dataset&,                                  \
                                    const std::optional<sbde::ExpansionSpec>&, std::size_t);                      \
  template void calibrate_batchnorm<T>(model::ResNet<T>&, const Tensor<T>&);                                      \
  template History fit<T>(model::ResNet<T>&, const data::Dataset&, const data::Dataset*,                          \
                          const std::optional<sbde::ExpansionSpec>&, const TrainConfig&, const EpochCallback&);

LANDSCAPE_INSTANTIATE_TRAIN(float)
LANDSCAPE_INSTANTIATE_TRAIN(double)

#undef LANDSCAPE_INSTANTIATE_TRAIN

}  // namespace landscape::train
