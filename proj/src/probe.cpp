#include "landscape/probe.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "landscape/error.hpp"
#include "landscape/kernels.hpp"
#include "landscape/ops.hpp"

namespace landscape::probe {

std::string to_string(MassNorm norm) {
  switch (norm) {
    case MassNorm::l1:
      return "l1";
    case MassNorm::l2sq:
      return "l2sq";
    case MassNorm::linf_count:
      return "linf_count";
  }
  return "?";
}

MassNorm parse_mass_norm(const std::string& text) {
  if (text == "l1") return MassNorm::l1;
  if (text == "l2sq") return MassNorm::l2sq;
  if (text == "linf_count") return MassNorm::linf_count;
  throw ValueError("unknown mass norm '" + text + "' (expected l1, l2sq or linf_count)");
}

namespace {

// Number of planes and the plane size, after checking the trailing two
// dimensions against the mask.
template <typename T>
std::pair<std::size_t, std::size_t> planes_of(const Tensor<T>& t, const sbde::CoordinateMask& mask) {
  if (t.rank() < 2) throw ShapeError("mass decomposition needs a spatial tensor, got " + landscape::to_string(t.shape()));
  const std::size_t h = t.dim(t.rank() - 2);
  const std::size_t w = t.dim(t.rank() - 1);
  if (h != mask.rows() || w != mask.cols()) {
    throw ShapeError("tensor plane " + std::to_string(h) + "x" + std::to_string(w) + " does not match mask " +
                     std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()));
  }
  const std::size_t plane = h * w;
  return {t.size() / plane, plane};
}

}  // namespace

template <typename T>
Mass mass_decomposition(const Tensor<T>& t, const sbde::CoordinateMask& mask, MassNorm norm) {
  const auto [planes, plane] = planes_of(t, mask);
  Mass m;
  if (norm == MassNorm::linf_count) {
    double peak = 0.0;
    for (T v : t.values()) peak = std::max(peak, static_cast<double>(std::abs(v)));
    if (peak > 0.0) {
      const T threshold = std::nextafter(static_cast<T>(peak), T{0});
      for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t k = 0; k < plane; ++k) {
          if (std::abs(t[p * plane + k]) >= threshold) (mask.is_signal(k) ? m.sig : m.aux) += 1.0;
        }
      }
    }
  } else {
    for (std::size_t p = 0; p < planes; ++p) {
      for (std::size_t k = 0; k < plane; ++k) {
        const double v = static_cast<double>(t[p * plane + k]);
        const double mag = norm == MassNorm::l1 ? std::abs(v) : v * v;
        (mask.is_signal(k) ? m.sig : m.aux) += mag;
      }
    }
  }
  if (m.total() > 0.0) m.fraction_aux = m.aux / m.total();
  return m;
}

template <typename T>
Concentration mean_abs_by_region(const Tensor<T>& t, const sbde::CoordinateMask& mask) {
  const std::size_t planes = planes_of(t, mask).first;
  const Mass m = mass_decomposition(t, mask, MassNorm::l1);
  Concentration c;
  const double aux_n = static_cast<double>(planes) * static_cast<double>(mask.aux_count());
  const double sig_n = static_cast<double>(planes) * static_cast<double>(mask.signal_count());
  c.aux_mean = aux_n > 0.0 ? m.aux / aux_n : 0.0;
  c.sig_mean = sig_n > 0.0 ? m.sig / sig_n : 0.0;
  return c;
}

template <typename T>
Concentration gradient_concentration(model::Classifier<T>& net, const data::Dataset& ds,
                                     const sbde::ExpansionSpec& spec, std::size_t count, std::size_t batch) {
  const std::size_t n = std::min(count, ds.size());
  if (n == 0) throw ValueError("gradient concentration needs at least one sample");
  const auto mask = sbde::partition(spec);
  double aux = 0.0;
  double sig = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t end = std::min(n, start + batch);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor<T> x = train::make_inputs<T>(ds, idx, spec);
    const auto labels = data::gather_labels(ds, idx);
    Tensor<T> grad;
    attacks::loss_and_gradient(net, x, labels, grad);
    // Per-sample means are equal-weighted, so summing over a batch then
    // dividing by n at the end averages over samples.
    const Concentration c = mean_abs_by_region(grad, mask);
    aux += c.aux_mean * static_cast<double>(idx.size());
    sig += c.sig_mean * static_cast<double>(idx.size());
  }
  return Concentration{aux / static_cast<double>(n), sig / static_cast<double>(n)};
}

TrackedPixel random_signal_pixel(const sbde::ExpansionSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> ch(0, spec.channels - 1);
  std::uniform_int_distribution<std::size_t> row(0, spec.height - 1);
  std::uniform_int_distribution<std::size_t> col(0, spec.width - 1);
  TrackedPixel p;
  p.channel = ch(rng);
  p.row = row(rng) * spec.factor;
  p.col = col(rng) * spec.factor;
  return p;
}

template <typename T>
Trace trace_attack(model::Classifier<T>& net, const Tensor<T>& x0, int label, const attacks::AttackSpec& attack,
                   const sbde::ExpansionSpec& spec, const std::optional<TrackedPixel>& pixel,
                   std::size_t sample_index) {
  spec.validate();
  if (spec.factor < 2) throw ValueError("tracing needs an expansion factor >= 2 (no auxiliary neighbour exists)");
  Tensor<T> batch = x0;
  if (batch.rank() == 3) batch.reshape({1, x0.dim(0), x0.dim(1), x0.dim(2)});
  Shape want = spec.expanded_shape();
  want.insert(want.begin(), 1);
  require_shape(batch.shape(), want, "trace_attack input");

  Trace out;
  out.pixel = pixel ? *pixel : random_signal_pixel(spec, attack.seed ^ static_cast<std::uint64_t>(sample_index));
  const auto mask = sbde::partition(spec);
  const auto& px = out.pixel;
  if (px.channel >= spec.channels || px.row >= mask.rows() || px.col >= mask.cols()) {
    throw ValueError("tracked pixel lies outside the expanded image");
  }
  if (!mask.is_signal(px.row, px.col)) throw ValueError("tracked pixel is not a signal coordinate");
  if (px.col + 1 >= mask.cols()) throw ValueError("tracked pixel has no right-hand auxiliary neighbour");
  const std::size_t hw = mask.rows() * mask.cols();
  const std::size_t sig_at = px.channel * hw + px.row * mask.cols() + px.col;
  const std::size_t aux_at = sig_at + 1;

  auto record = [&](int step, const Tensor<T>& x, double loss) {
    Tensor<T> delta(x.shape());
    for (std::size_t k = 0; k < x.size(); ++k) delta[k] = x[k] - batch[k];
    const Mass m = mass_decomposition(delta, mask, MassNorm::l1);
    out.records.push_back(TrajectoryRecord{step, loss, static_cast<double>(x[sig_at]),
                                           static_cast<double>(x[aux_at]), m.aux, m.sig});
  };

  const std::vector<int> labels{label};
  attacks::RunOptions<T> options;
  options.first_index = sample_index;
  options.observer = [&](int step, const Tensor<T>& x, std::span<const double> loss) { record(step, x, loss[0]); };
  const auto adv = attacks::run(net, batch, labels, attack, options);

  const Tensor<T> projected = sbde::project(adv.adversarial, spec);
  const auto clean_loss = attacks::losses(net, batch, labels);
  const auto proj_loss = attacks::losses(net, projected, labels);
  record(attack.steps + 1, projected, proj_loss[0]);

  RecoveryReport& r = out.recovery;
  r.loss_clean = clean_loss[0];
  r.loss_adv = adv.final_loss[0];
  r.loss_projected = proj_loss[0];
  r.pred_clean = train::predict(net, batch)[0];
  r.pred_adv = train::predict(net, adv.adversarial)[0];
  r.pred_projected = train::predict(net, projected)[0];
  r.recovered = r.pred_projected == r.pred_clean;
  return out;
}

template <typename T>
std::vector<RecoveryReport> recovery_reports(model::Classifier<T>& net, const data::Dataset& ds,
                                             const sbde::ExpansionSpec& spec, const attacks::AttackSpec& attack,
                                             std::size_t count, std::size_t batch) {
  const std::size_t n = std::min(count, ds.size());
  std::vector<RecoveryReport> out;
  out.reserve(n);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += batch) {
    const std::size_t end = std::min(n, start + batch);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor<T> x = train::make_inputs<T>(ds, idx, spec);
    const auto labels = data::gather_labels(ds, idx);
    attacks::RunOptions<T> options;
    options.first_index = start;
    const auto adv = attacks::run(net, x, labels, attack, options);
    const Tensor<T> projected = sbde::project(adv.adversarial, spec);
    const auto lc = attacks::losses(net, x, labels);
    const auto lp = attacks::losses(net, projected, labels);
    const auto pc = train::predict(net, x);
    const auto pa = train::predict(net, adv.adversarial);
    const auto pp = train::predict(net, projected);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      RecoveryReport r;
      r.loss_clean = lc[i];
      r.loss_adv = adv.final_loss[i];
      r.loss_projected = lp[i];
      r.pred_clean = pc[i];
      r.pred_adv = pa[i];
      r.pred_projected = pp[i];
      r.recovered = pp[i] == pc[i];
      out.push_back(r);
    }
  }
  return out;
}

double median_drop_ratio(const std::vector<RecoveryReport>& reports) {
  std::vector<double> ratios;
  for (const auto& r : reports) {
    const double rise = r.loss_adv - r.loss_clean;
    if (rise > 0.0) ratios.push_back((r.loss_adv - r.loss_projected) / rise);
  }
  if (ratios.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(ratios.begin(), ratios.end());
  const std::size_t m = ratios.size() / 2;
  return ratios.size() % 2 ? ratios[m] : 0.5 * (ratios[m - 1] + ratios[m]);
}

const std::vector<Column>& table_columns() {
  static const std::vector<Column> cols{Column::pgd, Column::autoattack, Column::bim, Column::apgd, Column::apgdt};
  return cols;
}

std::string column_name(Column c) {
  switch (c) {
    case Column::pgd:
      return "PGD";
    case Column::autoattack:
      return "AutoAttack";
    case Column::bim:
      return "BIM";
    case Column::apgd:
      return "APGD";
    case Column::apgdt:
      return "APGDT";
  }
  return "?";
}

std::optional<attacks::Kind> column_attack(Column c) {
  switch (c) {
    case Column::pgd:
      return attacks::Kind::pgd;
    case Column::bim:
      return attacks::Kind::bim;
    case Column::apgd:
      return attacks::Kind::apgd;
    default:
      return std::nullopt;
  }
}

std::optional<double> ResultRow::robust_for(attacks::Kind kind) const {
  for (const auto& [k, v] : robust) {
    if (k == kind) return v;
  }
  return std::nullopt;
}

double mean_of(const std::vector<std::pair<attacks::Kind, double>>& robust) {
  if (robust.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : robust) s += e.second;
  return s / static_cast<double>(robust.size());
}

attacks::AttackSpec AttackPlan::spec_for(attacks::Kind kind, const sbde::Box& box) const {
  attacks::AttackSpec s = attacks::AttackSpec::defaults(kind, epsilon, box);
  s.seed = seed;
  if (kind == attacks::Kind::pgd) {
    if (pgd_steps) s.steps = *pgd_steps;
    if (pgd_alpha) s.alpha = *pgd_alpha;
    if (epsilon > 0.0) s.alpha = std::min(s.alpha, epsilon);
  }
  return s;
}

template <typename T>
std::vector<ResultRow> robustness_rows(model::Classifier<T>& net, const std::string& method,
                                       const data::Dataset& test_set, const AttackPlan& plan,
                                       const std::optional<sbde::ExpansionSpec>& spec, std::size_t batch) {
  const sbde::Box box = spec ? spec->default_box() : sbde::Box{};
  ResultRow without{method, spec ? "without" : "none", 0.0, {}, 0.0};
  ResultRow with{method, "with", 0.0, {}, 0.0};
  const double clean = 100.0 * train::evaluate_clean(net, test_set, spec, batch);
  without.clean = clean;
  with.clean = clean;
  for (attacks::Kind kind : plan.kinds) {
    const auto counts = attacks::evaluate_robust_counts(net, test_set, spec, plan.spec_for(kind, box), batch);
    without.robust.emplace_back(kind, 100.0 * counts.without_projection());
    with.robust.emplace_back(kind, 100.0 * counts.with_projection());
  }
  without.average = mean_of(without.robust);
  with.average = mean_of(with.robust);
  if (!spec) return {without};
  return {without, with};
}

template <typename T>
ExperimentReport table1_experiment(model::Classifier<T>& natural, model::Classifier<T>& sbde_net,
                                   const data::Dataset& test_set, const AttackPlan& plan,
                                   const sbde::ExpansionSpec& spec, std::size_t batch) {
  ExperimentReport report;
  for (auto& row : robustness_rows(natural, "Natural", test_set, plan, std::nullopt, batch)) {
    report.rows.push_back(std::move(row));
  }
  for (auto& row : robustness_rows(sbde_net, "SBDE", test_set, plan, spec, batch)) {
    report.rows.push_back(std::move(row));
  }
  return report;
}

void AblationGrid::validate() const {
  if (factors.empty() || strides.empty() || fills.empty() || seeds.empty()) {
    throw ConfigError("ablation grid needs at least one factor, stride, fill and seed");
  }
  for (std::size_t f : factors) {
    if (f == 0) throw ConfigError("ablation factors must be >= 1");
  }
  for (std::size_t s : strides) {
    if (s == 0) throw ConfigError("ablation strides must be >= 1");
  }
  for (const auto& fill : fills) fill.validate();
}

AblationCell aggregate_cells(const std::vector<AblationCell>& cells, bool take_min) {
  if (cells.empty()) throw ValueError("nothing to aggregate");
  AblationCell out = cells.front();
  out.seed = take_min ? "min" : "mean";
  auto combine = [&](auto get) {
    double acc = take_min ? std::numeric_limits<double>::infinity() : 0.0;
    for (const auto& c : cells) acc = take_min ? std::min(acc, get(c)) : acc + get(c);
    return take_min ? acc : acc / static_cast<double>(cells.size());
  };
  out.clean = combine([](const AblationCell& c) { return c.clean; });
  for (std::size_t k = 0; k < out.robust.size(); ++k) {
    out.robust[k].second = combine([k](const AblationCell& c) { return c.robust.at(k).second; });
  }
  // Both rows keep average == mean of their own entries; for the min row that
  // is the mean of the entrywise minima, not the worst per-seed average.
  out.average = mean_of(out.robust);
  return out;
}

template <typename T>
std::vector<AblationCell> ablation_sweep(const AblationGrid& grid, const data::Dataset& train_set,
                                         const data::Dataset& test_set, const AblationSetup& setup,
                                         const CellCallback& on_cell) {
  grid.validate();
  struct Job {
    std::size_t factor, stride;
    sbde::FillScheme fill;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t f : grid.factors) {
    for (std::size_t s : grid.strides) {
      for (const auto& fill : grid.fills) {
        for (std::uint64_t seed : grid.seeds) jobs.push_back({f, s, fill, seed});
      }
    }
  }

  std::vector<AblationCell> cells(jobs.size());
  std::mutex report_mutex;
  auto run_job = [&](const Job& job) {
    sbde::ExpansionSpec spec;
    spec.factor = job.factor;
    spec.fill = job.fill;
    spec.channels = train_set.channels();
    spec.height = train_set.height();
    spec.width = train_set.width();
    model::NetConfig net_cfg = setup.net;
    net_cfg.stem.stride = job.stride;
    net_cfg.in_channels = spec.channels;
    model::ResNet<T> net(net_cfg, job.seed);
    train::TrainConfig tc = setup.train;
    tc.seed = job.seed;
    train::fit(net, train_set, nullptr, spec, tc);
    AttackPlan plan = setup.attack;
    plan.seed = job.seed;
    const auto rows = robustness_rows(net, "SBDE", test_set, plan, spec);
    AblationCell cell;
    cell.factor = job.factor;
    cell.stride = job.stride;
    cell.fill = job.fill;
    cell.seed = std::to_string(job.seed);
    cell.clean = rows.back().clean;
    cell.robust = rows.back().robust;
    cell.average = rows.back().average;
    return cell;
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(setup.jobs, jobs.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      cells[i] = run_job(jobs[i]);
      if (on_cell) on_cell(cells[i]);
    }
  } else {
    const int saved_threads = kernels::num_threads();
    kernels::set_num_threads(1);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
          try {
            cells[i] = run_job(jobs[i]);
            std::lock_guard<std::mutex> lock(report_mutex);
            if (on_cell) on_cell(cells[i]);
          } catch (...) {
            std::lock_guard<std::mutex> lock(report_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    kernels::set_num_threads(saved_threads);
    if (failure) std::rethrow_exception(failure);
  }

  std::vector<AblationCell> out = cells;
  const std::size_t per = grid.seeds.size();
  for (std::size_t start = 0; start < cells.size(); start += per) {
    const std::vector<AblationCell> group(cells.begin() + static_cast<long>(start),
                                          cells.begin() + static_cast<long>(start + per));
    out.push_back(aggregate_cells(group, false));
    out.push_back(aggregate_cells(group, true));
  }
  return out;
}

PhaseStats alignment_phase(std::size_t factor, std::size_t stride, std::size_t kernel, std::size_t padding) {
  if (factor == 0 || stride == 0 || kernel == 0) throw ValueError("factor, stride and kernel must be >= 1");
  PhaseStats p;
  p.factor = factor;
  p.stride = stride;
  p.kernel = kernel;
  p.padding = padding;
  p.phase_counts.assign(factor, 0);
  p.min_signal_taps = std::numeric_limits<std::size_t>::max();
  // Window origins (o * stride - padding) taken modulo factor; factor output
  // positions cover a full period of the phase sequence.
  const std::size_t shift = (factor - padding % factor) % factor;
  for (std::size_t o = 0; o < factor; ++o) {
    const std::size_t phase = (o * stride + shift) % factor;
    p.phases.push_back(phase);
    ++p.phase_counts[phase];
    std::size_t taps = 0;
    for (std::size_t k = 0; k < kernel; ++k) taps += (phase + k) % factor == 0;
    p.min_signal_taps = std::min(p.min_signal_taps, taps);
    p.max_signal_taps = std::max(p.max_signal_taps, taps);
  }
  p.distinct = static_cast<std::size_t>(std::count_if(p.phase_counts.begin(), p.phase_counts.end(),
                                                      [](std::size_t c) { return c > 0; }));
  p.aligned_gcd = p.distinct < factor;
  p.aligned_multiple = factor % stride == 0;
  return p;
}

#define LANDSCAPE_INSTANTIATE_PROBE(T)                                                                            \
  template Mass mass_decomposition<T>(const Tensor<T>&, const sbde::CoordinateMask&, MassNorm);                  \
  template Concentration mean_abs_by_region<T>(const Tensor<T>&, const sbde::CoordinateMask&);                   \
  template Concentration gradient_concentration<T>(model::Classifier<T>&, const data::Dataset&,                  \
                                                   const sbde::ExpansionSpec&, std::size_t, std::size_t);        \
  template Trace trace_attack<T>(model::Classifier<T>&, const Tensor<T>&, int, const attacks::AttackSpec&,       \
                                 const sbde::ExpansionSpec&, const std::optional<TrackedPixel>&, std::size_t);   \
  template std::vector<RecoveryReport> recovery_reports<T>(model::Classifier<T>&, const data::Dataset&,          \
                                                           const sbde::ExpansionSpec&,                            \
                                                           const attacks::AttackSpec&, std::size_t, std::size_t); \
  template std::vector<ResultRow> robustness_rows<T>(model::Classifier<T>&, const std::string&,                  \
                                                     const data::Dataset&, const AttackPlan&,                     \
                                                     const std::optional<sbde::ExpansionSpec>&, std::size_t);     \
  template ExperimentReport table1_experiment<T>(model::Classifier<T>&, model::Classifier<T>&,                   \
                                                 const data::Dataset&, const AttackPlan&,                         \
                                                 const sbde::ExpansionSpec&, std::size_t);                        \
  template std::vector<AblationCell> ablation_sweep<T>(const AblationGrid&, const data::Dataset&,                \
                                                       const data::Dataset&, const AblationSetup&,                \
                                                       const CellCallback&);

LANDSCAPE_INSTANTIATE_PROBE(float)
LANDSCAPE_INSTANTIATE_PROBE(double)

#undef LANDSCAPE_INSTANTIATE_PROBE

}  // namespace landscape::probe
