#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "landscape/error.hpp"
#include "landscape/tape.hpp"

namespace landscape {

// Central-difference check of the gradient a tape produces for `target`.
//
// `loss_fn` must record a scalar loss on the tape it is given and must route
// `target` through Tape::watch or Tape::parameter, so that after backward the
// analytic gradient sits in target.grad(). Each coordinate is then perturbed
// by +-h and the loss re-evaluated. Returns the maximum over the checked
// coordinates of |analytic - numeric| / max(1, |analytic|).
//
// `max_coords` > 0 checks a seeded random subset of that many coordinates.
template <typename T>
T grad_check_target(const std::function<Var<T>(Tape<T>&)>& loss_fn, Tensor<T>& target, T h,
                    std::size_t max_coords = 0, std::uint64_t seed = 0) {
  auto evaluate = [&]() {
    Tape<T> tape;
    const T v = loss_fn(tape).value()[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
    return v;
  };

  target.drop_grad();
  {
    Tape<T> tape;
    Var<T> loss = loss_fn(tape);
    if (!std::isfinite(loss.value()[0])) throw NumericError("grad_check: non-finite function value");
    tape.backward(loss);
  }
  const std::vector<T> analytic(target.grad().begin(), target.grad().end());

  std::vector<std::size_t> coords(target.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (max_coords > 0 && max_coords < coords.size()) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
  }

  T worst{0};
  for (std::size_t i : coords) {
    const T saved = target[i];
    target[i] = saved + h;
    const T up = evaluate();
    target[i] = saved - h;
    const T down = evaluate();
    target[i] = saved;
    const T numeric = (up - down) / (T{2} * h);
    const T err = std::abs(analytic[i] - numeric) / std::max(T{1}, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

struct GradCheckReport {
  double worst = 0.0;       // max relative error over the smooth coordinates
  std::size_t checked = 0;  // smooth coordinates compared
  std::size_t kinks = 0;    // coordinates skipped as non-smooth at scale h
};

// Like grad_check_target, but first tests whether the loss is smooth along the
// coordinate at scale h, using x, x +- h/2 and x +- h. For a smooth function
// the fourth difference is about (h/2)^4 times the fourth derivative and the
// central differences at h and h/2 agree to about h^2 f'''/8. A single slope
// jump J at offset d inside (-h, h), such as a ReLU input crossing zero,
// moves the fourth difference by J |h - 3|d|| near the centre and moves the
// two central differences apart by the full contamination when |d| > h/2.
// A coordinate is skipped, and the next one in the seeded order taken, when
// the fourth difference exceeds kink_tol * h or the two central differences
// differ by more than kink_tol / 8, both relative to max(1, |slope|). A kink
// that passes both tests biases the central difference by at most 0.75
// kink_tol. The decision never looks at the analytic gradient, so it can
// produce a spurious error but not a spurious pass.
template <typename T>
GradCheckReport grad_check_smooth(const std::function<Var<T>(Tape<T>&)>& loss_fn, Tensor<T>& target, T h,
                                  T kink_tol, std::size_t max_coords = 0, std::uint64_t seed = 0) {
  auto evaluate = [&]() {
    Tape<T> tape;
    const T v = loss_fn(tape).value()[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
    return v;
  };

  target.drop_grad();
  T centre;
  {
    Tape<T> tape;
    Var<T> loss = loss_fn(tape);
    centre = loss.value()[0];
    if (!std::isfinite(centre)) throw NumericError("grad_check: non-finite function value");
    tape.backward(loss);
  }
  const std::vector<T> analytic(target.grad().begin(), target.grad().end());

  std::vector<std::size_t> coords(target.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  if (max_coords > 0) std::shuffle(coords.begin(), coords.end(), rng);
  const std::size_t want = max_coords > 0 ? std::min(max_coords, coords.size()) : coords.size();

  GradCheckReport r;
  for (std::size_t i : coords) {
    if (r.checked == want) break;
    const T saved = target[i];
    target[i] = saved + h;
    const T up = evaluate();
    target[i] = saved - h;
    const T down = evaluate();
    target[i] = saved + h / 2;
    const T up_half = evaluate();
    target[i] = saved - h / 2;
    const T down_half = evaluate();
    target[i] = saved;
    const T numeric = (up - down) / (T{2} * h);
    const T half = (up_half - down_half) / h;
    const T fourth = up - T{4} * up_half + T{6} * centre - T{4} * down_half + down;
    const T scale = std::max(T{1}, std::abs(numeric));
    if (std::abs(fourth) > kink_tol * h * scale || std::abs(numeric - half) > kink_tol / 8 * scale) {
      ++r.kinks;
      continue;
    }
    ++r.checked;
    const T err = std::abs(analytic[i] - numeric) / std::max(T{1}, std::abs(analytic[i]));
    r.worst = std::max(r.worst, static_cast<double>(err));
  }
  return r;
}

// Gradient check of a scalar function of one tensor argument.
template <typename T>
T grad_check(const std::function<Var<T>(Tape<T>&, const Var<T>&)>& f, const Tensor<T>& point, T h) {
  Tensor<T> x = point;
  return grad_check_target<T>([&](Tape<T>& tape) { return f(tape, tape.watch(x)); }, x, h);
}

}  // namespace landscape
