#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "landscape/data.hpp"
#include "landscape/model.hpp"
#include "landscape/sbde.hpp"

namespace landscape::attacks {

enum class Kind { pgd, bim, apgd };

std::string to_string(Kind kind);
Kind parse_kind(const std::string& text);

struct AttackSpec {
  Kind kind = Kind::pgd;
  double epsilon = 8.0 / 255.0;
  double alpha = 2.0 / 255.0;
  int steps = 20;
  bool random_start = true;
  sbde::Box box;
  std::uint64_t seed = 0;

  // PGD: alpha 2/255, 20 steps, random start. BIM: alpha eps/10, 10 steps,
  // no random start. APGD: 20 steps, random start; alpha is unused (the step
  // size starts at 2*eps and adapts).
  static AttackSpec defaults(Kind kind, double epsilon = 8.0 / 255.0, sbde::Box box = {});

  // steps >= 1, box.lower < box.upper, epsilon >= 0, and 0 < alpha <= epsilon
  // whenever epsilon > 0.
  void validate() const;
};

struct StepTrace {
  int step = 0;
  // Per-sample loss at the iterate after `step` updates.
  std::vector<double> loss;
  // Per-sample best loss seen up to and including `step`.
  std::vector<double> best_loss;
};

template <typename T>
struct AdvResult {
  Tensor<T> adversarial;
  // One entry per iterate, starting with the (possibly randomized) start at
  // step 0.
  std::vector<StepTrace> trace;
  // Loss of `adversarial` per sample.
  std::vector<double> final_loss;
  // Prediction on `adversarial` differs from the label.
  std::vector<bool> success;
};

// Called with every iterate (step 0 = start point) and its per-sample losses.
template <typename T>
using StepObserver = std::function<void(int step, const Tensor<T>& iterate, std::span<const double> loss)>;

template <typename T>
struct RunOptions {
  // Global index of the first sample in the batch; random starts draw from a
  // generator keyed by (seed, global index), so results do not depend on
  // batching.
  std::size_t first_index = 0;
  StepObserver<T> observer;
};

// Coordinatewise clamp of x_adv into [x0 - eps, x0 + eps] intersected with
// the box.
template <typename T>
Tensor<T> linf_project(const Tensor<T>& x_adv, const Tensor<T>& x0, double epsilon, const sbde::Box& box);

// x <- P(x + alpha * sign(grad L)) for `steps` iterations, optionally from a
// uniform random start in the ball. Returns the final iterate.
template <typename T>
AdvResult<T> pgd(model::Classifier<T>& net, const Tensor<T>& x0, std::span<const int> labels,
                 const AttackSpec& spec, const RunOptions<T>& options = {});

// The PGD update with the random start turned off.
template <typename T>
AdvResult<T> bim(model::Classifier<T>& net, const Tensor<T>& x0, std::span<const int> labels,
                 const AttackSpec& spec, const RunOptions<T>& options = {});

// Auto-PGD: sign steps with momentum 0.75, step size starting at 2*eps and
// halved at checkpoints where progress stalled (restarting from the best
// iterate). Returns the best-loss iterate per sample.
template <typename T>
AdvResult<T> apgd(model::Classifier<T>& net, const Tensor<T>& x0, std::span<const int> labels,
                  const AttackSpec& spec, const RunOptions<T>& options = {});

// Dispatches on spec.kind.
template <typename T>
AdvResult<T> run(model::Classifier<T>& net, const Tensor<T>& x0, std::span<const int> labels,
                 const AttackSpec& spec, const RunOptions<T>& options = {});

// Per-sample loss and input gradient of the summed cross-entropy.
template <typename T>
std::vector<double> loss_and_gradient(model::Classifier<T>& net, const Tensor<T>& x, std::span<const int> labels,
                                      Tensor<T>& gradient);

template <typename T>
std::vector<double> losses(model::Classifier<T>& net, const Tensor<T>& x, std::span<const int> labels);

struct RobustCounts {
  std::size_t total = 0;
  std::size_t clean_correct = 0;
  std::size_t adv_correct = 0;
  std::size_t projected_correct = 0;

  double clean() const { return total ? static_cast<double>(clean_correct) / total : 0.0; }
  double without_projection() const { return total ? static_cast<double>(adv_correct) / total : 0.0; }
  double with_projection() const { return total ? static_cast<double>(projected_correct) / total : 0.0; }
};

// Attacks every sample in the expanded space (raw space when `spec` is empty)
// and counts correct predictions on the clean input, the adversarial input,
// and the adversarial input after mask projection. The attack never sees the
// projection.
template <typename T>
RobustCounts evaluate_robust_counts(model::Classifier<T>& net, const data::Dataset& ds,
                                    const std::optional<sbde::ExpansionSpec>& spec, const AttackSpec& attack,
                                    std::size_t batch = 100);

// Robust accuracy with or without the projection applied before inference.
template <typename T>
double evaluate_robust(model::Classifier<T>& net, const data::Dataset& ds,
                       const std::optional<sbde::ExpansionSpec>& spec, const AttackSpec& attack,
                       bool apply_projection, std::size_t batch = 100);

}  // namespace landscape::attacks
