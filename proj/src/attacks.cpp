#include "landscape/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "landscape/error.hpp"
#include "landscape/ops.hpp"
#include "landscape/train.hpp"

namespace landscape::attacks {

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::pgd:
      return "PGD";
    case Kind::bim:
      return "BIM";
    case Kind::apgd:
      return "APGD";
  }
  return "?";
}

Kind parse_kind(const std::string& text) {
  std::string t;
  for (char c : text) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (t == "pgd") return Kind::pgd;
  if (t == "bim") return Kind::bim;
  if (t == "apgd") return Kind::apgd;
  throw ValueError("unknown attack '" + text + "' (expected pgd, bim or apgd)");
}

AttackSpec AttackSpec::defaults(Kind kind, double epsilon, sbde::Box box) {
  AttackSpec s;
  s.kind = kind;
  s.epsilon = epsilon;
  s.box = box;
  switch (kind) {
    case Kind::pgd:
      s.alpha = 2.0 / 255.0;
      s.steps = 20;
      s.random_start = true;
      break;
    case Kind::bim:
      s.steps = 10;
      s.alpha = epsilon / 10.0;
      s.random_start = false;
      break;
    case Kind::apgd:
      s.steps = 20;
      s.alpha = 2.0 * epsilon;
      s.random_start = true;
      break;
  }
  if (epsilon > 0.0) s.alpha = std::min(s.alpha, epsilon);
  return s;
}

void AttackSpec::validate() const {
  if (steps < 1) throw ValueError("attack needs at least one step");
  if (!(box.lower < box.upper)) throw ValueError("attack box needs lower < upper");
  if (!(epsilon >= 0.0)) throw ValueError("attack epsilon must be >= 0");
  if (epsilon > 0.0 && !(alpha > 0.0 && alpha <= epsilon)) {
    throw ValueError("attack step size must satisfy 0 < alpha <= epsilon");
  }
}

template <typename T>
Tensor<T> linf_project(const Tensor<T>& x_adv, const Tensor<T>& x0, double epsilon, const sbde::Box& box) {
  require_shape(x_adv.shape(), x0.shape(), "linf_project");
  const T eps = static_cast<T>(epsilon);
  const T lower = static_cast<T>(box.lower);
  const T upper = static_cast<T>(box.upper);
  Tensor<T> out(x0.shape());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const T lo = std::max(x0[i] - eps, lower);
    const T hi = std::min(x0[i] + eps, upper);
    out[i] = std::min(std::max(x_adv[i], lo), hi);
  }
  return out;
}

namespace {

template <typename T>
struct Evaluation {
  std::vector<double> loss;
  std::vector<int> pred;
};

// Forward (and backward when `gradient` is set) on a fresh tape.
template <typename T>
Evaluation<T> evaluate(model::Classifier<T>& net, const Tensor<T>& x, std::span<const int> labels,
                       Tensor<T>* gradient) {
  Tape<T> tape;
  Tensor<T> input = x;
  Var<T> in = gradient ? tape.watch(input) : tape.constant(input);
  Var<T> logits = net.logits(tape, in);
  Evaluation<T> ev;
  const auto per = per_sample_cross_entropy(logits.value(), labels);
  ev.loss.assign(per.begin(), per.end());
  ev.pred = argmax_rows(logits.value());
  for (double l : ev.loss) {
    if (!std::isfinite(l)) throw NumericError("non-finite loss during attack iteration");
  }
  if (gradient) {
    Var<T> loss = cross_entropy<T>(logits, labels, Reduction::sum);
    tape.backward(loss);
    *gradient = Tensor<T>(x.shape());
    auto g = std::as_const(input).grad();
    std::copy(g.begin(), g.end(), gradient->data());
  }
  return ev;
}

template <typename T>
T sign(T v) {
  return static_cast<T>((v > T{0}) - (v < T{0}));
}

std::size_t samples_of(const Shape& s) {
  if (s.empty()) throw ShapeError("attack input must be batched");
  return s[0];
}

template <typename T>
void check_inputs(const Tensor<T>& x0, std::span<const int> labels, const AttackSpec& spec) {
  spec.validate();
  if (x0.rank() < 2 || samples_of(x0.shape()) != labels.size()) {
    throw ShapeError("attack batch " + landscape::to_string(x0.shape()) + " does not match " + std::to_string(labels.size()) +
                     " labels");
  }
}

template <typename T>
Tensor<T> random_start(const Tensor<T>& x0, const AttackSpec& spec, std::size_t first_index) {
  const std::size_t n = x0.dim(0);
  const std::size_t per = x0.size() / n;
  Tensor<T> x = x0;
  for (std::size_t i = 0; i < n; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(first_index + i), static_cast<std::uint32_t>((first_index + i) >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> u(-spec.epsilon, spec.epsilon);
    for (std::size_t j = 0; j < per; ++j) x[i * per + j] += static_cast<T>(u(rng));
  }
  return linf_project(x, x0, spec.epsilon, spec.box);
}

void push_trace(std::vector<StepTrace>& trace, int step, const std::vector<double>& loss,
                const std::vector<double>& best) {
  trace.push_back(StepTrace{step, loss, best});
}

template <typename T>
std::vector<bool> mispredicted(const std::vector<int>& pred, std::span<const int> labels) {
  std::vector<bool> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = pred[i] != labels[i];
  return out;
}

template <typename T>
AdvResult<T> sign_ascent(model::Classifier<T>& net, const Tensor<T>& x0, std::span<const int> labels,
                         const AttackSpec& spec, bool use_random_start, const RunOptions<T>& options) {
  check_inputs(x0, labels, spec);
  AdvResult<T> r;
  Tensor<T> x = use_random_start ? random_start(x0, spec, options.first_index) : x0;
  std::vector<double> best(labels.size(), -std::numeric_limits<double>::infinity());
  const T alpha = static_cast<T>(spec.alpha);
  Tensor<T> grad;
  for (int t = 0; t < spec.steps; ++t) {
    const auto ev = evaluate(net, x, labels, &grad);
    for (std::size_t i = 0; i < best.size(); ++i) best[i] = std::max(best[i], ev.loss[i]);
    push_trace(r.trace, t, ev.loss, best);
    if (options.observer) options.observer(t, x, ev.loss);
    Tensor<T> stepped = x;
    for (std::size_t i = 0; i < x.size(); ++i) stepped[i] += alpha * sign(grad[i]);
    x = linf_project(stepped, x0, spec.epsilon, spec.box);
  }
  const auto ev = evaluate<T>(net, x, labels, nullptr);
  for (std::size_t i = 0; i < best.size(); ++i) best[i] = std::max(best[i], ev.loss[i]);
  push_trace(r.trace, spec.steps, ev.loss, best);
  if (options.observer) options.observer(spec.steps, x, ev.loss);
  r.final_loss = ev.loss;
  r.success = mispredicted<T>(ev.pred, labels);
  r.adversarial = std::move(x);
  return r;
}

}  // namespace

template <typename T>
std::vector<double> loss_and_gradient(model::Classifier<T>& net, const Tensor<T>& x, std::span<const int> labels,
                                      Tensor<T>& gradient) {
  return evaluate(net, x, labels, &gradient).loss;
}

template <typename T>
std::vector<double> losses(model::Classifier<T>& net, const Tensor<T>& x, std::span<const int> labels) {
  return evaluate<T>(net, x, labels, nullptr).loss;
}

template <typename T>
AdvResult<T> pgd(model::Classifier<T>& net, const Tensor<T>& x0, std::span<const int> labels,
                 const AttackSpec& spec, const RunOptions<T>& options) {
  return sign_ascent(net, x0, labels, spec, spec.random_start, options);
}

template <typename T>
AdvResult<T> bim(model::Classifier<T>& net, const Tensor<T>& x0, std::span<const int> labels,
                 const AttackSpec& spec, const RunOptions<T>& options) {
  return sign_ascent(net, x0, labels, spec, false, options);
}

template <typename T>
AdvResult<T> apgd(model::Classifier<T>& net, const Tensor<T>& x0, std::span<const int> labels,
                  const AttackSpec& spec, const RunOptions<T>& options) {
  check_inputs(x0, labels, spec);
  constexpr double kMomentum = 0.75;
  constexpr double kThreshold = 0.75;
  const int total = spec.steps;
  const std::size_t n = labels.size();
  const std::size_t per = x0.size() / n;

  // Checkpoint interval: ceil(0.22 T) first, then shrinking by ceil(0.03 T)
  // down to ceil(0.06 T).
  int interval = static_cast<int>(std::ceil(0.22 * total));
  const int shrink = static_cast<int>(std::ceil(0.03 * total));
  const int min_interval = static_cast<int>(std::ceil(0.06 * total));

  AdvResult<T> r;
  Tensor<T> x = spec.random_start ? random_start(x0, spec, options.first_index) : x0;
  Tensor<T> grad;
  auto ev = evaluate(net, x, labels, &grad);
  if (options.observer) options.observer(0, x, ev.loss);

  std::vector<double> eta(n, 2.0 * spec.epsilon);
  std::vector<double> best = ev.loss;
  Tensor<T> x_best = x;
  Tensor<T> grad_best = grad;
  std::vector<std::vector<double>> history{ev.loss};
  std::vector<double> best_at_last_check = best;
  std::vector<bool> reduced_at_last_check(n, false);
  push_trace(r.trace, 0, ev.loss, best);

  Tensor<T> x_prev = x;
  int since_check = 0;
  for (int i = 0; i < total; ++i) {
    const double a = i > 0 ? kMomentum : 1.0;
    Tensor<T> z = x;
    for (std::size_t s = 0; s < n; ++s) {
      const T step = static_cast<T>(eta[s]);
      for (std::size_t j = 0; j < per; ++j) z[s * per + j] += step * sign(grad[s * per + j]);
    }
    z = linf_project(z, x0, spec.epsilon, spec.box);
    Tensor<T> next = x;
    const T ta = static_cast<T>(a);
    for (std::size_t j = 0; j < x.size(); ++j) {
      next[j] = x[j] + ta * (z[j] - x[j]) + (T{1} - ta) * (x[j] - x_prev[j]);
    }
    x_prev = x;
    x = linf_project(next, x0, spec.epsilon, spec.box);

    ev = evaluate(net, x, labels, &grad);
    history.push_back(ev.loss);
    for (std::size_t s = 0; s < n; ++s) {
      if (ev.loss[s] > best[s]) {
        best[s] = ev.loss[s];
        std::copy(x.data() + s * per, x.data() + (s + 1) * per, x_best.data() + s * per);
        std::copy(grad.data() + s * per, grad.data() + (s + 1) * per, grad_best.data() + s * per);
      }
    }
    push_trace(r.trace, i + 1, ev.loss, best);
    if (options.observer) options.observer(i + 1, x, ev.loss);

    if (++since_check == interval) {
      const std::size_t end = history.size() - 1;
      for (std::size_t s = 0; s < n; ++s) {
        int improved = 0;
        for (std::size_t k = end + 1 - static_cast<std::size_t>(interval); k <= end; ++k) {
          improved += history[k][s] > history[k - 1][s];
        }
        const bool oscillating = improved < kThreshold * interval;
        const bool stalled = !reduced_at_last_check[s] && best_at_last_check[s] >= best[s];
        const bool reduce = oscillating || stalled;
        reduced_at_last_check[s] = reduce;
        best_at_last_check[s] = best[s];
        if (reduce) {
          eta[s] /= 2.0;
          std::copy(x_best.data() + s * per, x_best.data() + (s + 1) * per, x.data() + s * per);
          std::copy(grad_best.data() + s * per, grad_best.data() + (s + 1) * per, grad.data() + s * per);
        }
      }
      since_check = 0;
      interval = std::max(interval - shrink, min_interval);
    }
  }

  const auto final_ev = evaluate<T>(net, x_best, labels, nullptr);
  r.final_loss = final_ev.loss;
  r.success = mispredicted<T>(final_ev.pred, labels);
  r.adversarial = std::move(x_best);
  return r;
}

template <typename T>
AdvResult<T> run(model::Classifier<T>& net, const Tensor<T>& x0, std::span<const int> labels,
                 const AttackSpec& spec, const RunOptions<T>& options) {
  switch (spec.kind) {
    case Kind::pgd:
      return pgd(net, x0, labels, spec, options);
    case Kind::bim:
      return bim(net, x0, labels, spec, options);
    case Kind::apgd:
      return apgd(net, x0, labels, spec, options);
  }
  throw ValueError("unknown attack kind");
}

template <typename T>
RobustCounts evaluate_robust_counts(model::Classifier<T>& net, const data::Dataset& ds,
                                    const std::optional<sbde::ExpansionSpec>& spec, const AttackSpec& attack,
                                    std::size_t batch) {
  RobustCounts counts;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += batch) {
    const std::size_t end = std::min(ds.size(), start + batch);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor<T> x0 = train::make_inputs<T>(ds, idx, spec);
    const std::vector<int> labels = data::gather_labels(ds, idx);

    const auto clean = train::predict(net, x0);
    RunOptions<T> options;
    options.first_index = start;
    const AdvResult<T> adv = run(net, x0, labels, attack, options);
    const auto adv_pred = train::predict(net, adv.adversarial);
    const auto proj_pred = spec ? train::predict(net, sbde::project(adv.adversarial, *spec)) : adv_pred;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      counts.clean_correct += clean[i] == labels[i];
      counts.adv_correct += adv_pred[i] == labels[i];
      counts.projected_correct += proj_pred[i] == labels[i];
    }
    counts.total += labels.size();
  }
  return counts;
}

template <typename T>
double evaluate_robust(model::Classifier<T>& net, const data::Dataset& ds,
                       const std::optional<sbde::ExpansionSpec>& spec, const AttackSpec& attack,
                       bool apply_projection, std::size_t batch) {
  const RobustCounts c = evaluate_robust_counts(net, ds, spec, attack, batch);
  return apply_projection ? c.with_projection() : c.without_projection();
}

#define LANDSCAPE_INSTANTIATE_ATTACKS(T)                                                                         \
  template Tensor<T> linf_project<T>(const Tensor<T>&, const Tensor<T>&, double, const sbde::Box&);              \
  template AdvResult<T> pgd<T>(model::Classifier<T>&, const Tensor<T>&, std::span<const int>, const AttackSpec&, \
                               const RunOptions<T>&);                                                            \
  template AdvResult<T> bim<T>(model::Classifier<T>&, const Tensor<T>&, std::span<const int>, const AttackSpec&, \
                               const RunOptions<T>&);                                                            \
  template AdvResult<T> apgd<T>(model::Classifier<T>&, const Tensor<T>&, std::span<const int>,                   \
                                const AttackSpec&, const RunOptions<T>&);                                        \
  template AdvResult<T> run<T>(model::Classifier<T>&, const Tensor<T>&, std::span<const int>, const AttackSpec&, \
                               const RunOptions<T>&);                                                            \
  template std::vector<double> loss_and_gradient<T>(model::Classifier<T>&, const Tensor<T>&,                     \
                                                    std::span<const int>, Tensor<T>&);                           \
  template std::vector<double> losses<T>(model::Classifier<T>&, const Tensor<T>&, std::span<const int>);        \
  template RobustCounts evaluate_robust_counts<T>(model::Classifier<T>&, const data::Dataset&,                   \
                                                  const std::optional<sbde::ExpansionSpec>&, const AttackSpec&,  \
                                                  std::size_t);                                                  \
  template double evaluate_robust<T>(model::Classifier<T>&, const data::Dataset&,                               \
                                     const std::optional<sbde::ExpansionSpec>&, const AttackSpec&, bool,         \
                                     std::size_t);

LANDSCAPE_INSTANTIATE_ATTACKS(float)
LANDSCAPE_INSTANTIATE_ATTACKS(double)

#undef LANDSCAPE_INSTANTIATE_ATTACKS

}  // namespace landscape::attacks
