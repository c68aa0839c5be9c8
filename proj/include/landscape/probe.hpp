#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "landscape/attacks.hpp"
#include "landscape/data.hpp"
#include "landscape/model.hpp"
#include "landscape/sbde.hpp"
#include "landscape/train.hpp"

namespace landscape::probe {

enum class MassNorm { l1, l2sq, linf_count };

std::string to_string(MassNorm norm);
MassNorm parse_mass_norm(const std::string& text);

struct Mass {
  double aux = 0.0;
  double sig = 0.0;
  // Empty when both regions carry zero mass.
  std::optional<double> fraction_aux;

  double total() const noexcept { return aux + sig; }
  bool empty() const noexcept { return !fraction_aux.has_value(); }
};

// Splits the per-coordinate magnitude of a [C,H,W] or [N,C,H,W] tensor
// between auxiliary and signal coordinates. l1 sums |v|, l2sq sums v^2,
// linf_count counts coordinates within one ulp of the largest |v|.
template <typename T>
Mass mass_decomposition(const Tensor<T>& t, const sbde::CoordinateMask& mask, MassNorm norm);

// Mean |v| over auxiliary and over signal coordinates of each sample.
struct Concentration {
  double aux_mean = 0.0;
  double sig_mean = 0.0;
  double ratio() const noexcept { return sig_mean > 0.0 ? aux_mean / sig_mean : 0.0; }
};

template <typename T>
Concentration mean_abs_by_region(const Tensor<T>& t, const sbde::CoordinateMask& mask);

// Input gradient of the loss at clean expanded inputs, summarized per region
// and averaged over samples.
template <typename T>
Concentration gradient_concentration(model::Classifier<T>& net, const data::Dataset& ds,
                                     const sbde::ExpansionSpec& spec, std::size_t count, std::size_t batch = 64);

struct TrajectoryRecord {
  int step = 0;
  double loss = 0.0;
  double x_sig = 0.0;
  double y_aux = 0.0;
  // l1 mass of the perturbation (iterate minus clean input) per region.
  double mass_aux = 0.0;
  double mass_sig = 0.0;
};

struct RecoveryReport {
  double loss_clean = 0.0;
  double loss_adv = 0.0;
  double loss_projected = 0.0;
  int pred_clean = 0;
  int pred_adv = 0;
  int pred_projected = 0;
  bool recovered = false;
};

struct TrackedPixel {
  std::size_t channel = 0;
  // Expanded-grid coordinates of the signal pixel; the auxiliary partner is
  // (row, col + 1).
  std::size_t row = 0;
  std::size_t col = 0;
};

// Picks a signal pixel uniformly from a generator seeded with `seed`.
TrackedPixel random_signal_pixel(const sbde::ExpansionSpec& spec, std::uint64_t seed);

struct Trace {
  TrackedPixel pixel;
  // One record per attack iterate (step 0 = start point), then a terminal
  // record for the projected adversarial input at step steps + 1.
  std::vector<TrajectoryRecord> records;
  RecoveryReport recovery;
};

// Attacks a single expanded image x0 [C,H',W'] with label y and records the
// tracked pixel pair, loss and perturbation mass at every iterate.
template <typename T>
Trace trace_attack(model::Classifier<T>& net, const Tensor<T>& x0, int label, const attacks::AttackSpec& attack,
                   const sbde::ExpansionSpec& spec, const std::optional<TrackedPixel>& pixel = std::nullopt,
                   std::size_t sample_index = 0);

// Clean, adversarial and projected loss/prediction for each sample of `ds`
// (the first `count` samples).
template <typename T>
std::vector<RecoveryReport> recovery_reports(model::Classifier<T>& net, const data::Dataset& ds,
                                             const sbde::ExpansionSpec& spec, const attacks::AttackSpec& attack,
                                             std::size_t count, std::size_t batch = 64);

// Median over samples of (loss_adv - loss_projected) / (loss_adv - loss_clean),
// over samples whose attack raised the loss.
double median_drop_ratio(const std::vector<RecoveryReport>& reports);

// Column order of the robustness tables. Entries not implemented here are
// written as markers rather than numbers.
enum class Column { pgd, autoattack, bim, apgd, apgdt };
const std::vector<Column>& table_columns();
std::string column_name(Column c);
std::optional<attacks::Kind> column_attack(Column c);

struct ResultRow {
  std::string method;
  // "none" for undefended inputs, otherwise "without" or "with".
  std::string projection;
  double clean = 0.0;
  // Robust accuracy per implemented attack, in attack order.
  std::vector<std::pair<attacks::Kind, double>> robust;
  // Mean of the robust entries.
  double average = 0.0;

  std::optional<double> robust_for(attacks::Kind kind) const;
};

double mean_of(const std::vector<std::pair<attacks::Kind, double>>& robust);

struct ExperimentReport {
  std::vector<ResultRow> rows;
};

struct AttackPlan {
  std::vector<attacks::Kind> kinds{attacks::Kind::pgd, attacks::Kind::bim, attacks::Kind::apgd};
  double epsilon = 8.0 / 255.0;
  std::uint64_t seed = 0;
  // Overrides for the PGD defaults.
  std::optional<int> pgd_steps;
  std::optional<double> pgd_alpha;

  attacks::AttackSpec spec_for(attacks::Kind kind, const sbde::Box& box) const;
};

// Rows: natural model (raw inputs), SBDE model without projection, SBDE model
// with projection. Accuracies are percentages.
template <typename T>
ExperimentReport table1_experiment(model::Classifier<T>& natural, model::Classifier<T>& sbde_net,
                                   const data::Dataset& test_set, const AttackPlan& plan,
                                   const sbde::ExpansionSpec& spec, std::size_t batch = 100);

// Robust rows for one model: a single "none" row without `spec`, otherwise a
// "without" and a "with" row.
template <typename T>
std::vector<ResultRow> robustness_rows(model::Classifier<T>& net, const std::string& method,
                                       const data::Dataset& test_set, const AttackPlan& plan,
                                       const std::optional<sbde::ExpansionSpec>& spec, std::size_t batch = 100);

struct AblationCell {
  std::size_t factor = 1;
  std::size_t stride = 2;
  sbde::FillScheme fill;
  // "0", "1", ... for single seeds; "mean" or "min" for aggregates.
  std::string seed;
  double clean = 0.0;
  // Robust accuracy with projection per attack.
  std::vector<std::pair<attacks::Kind, double>> robust;
  double average = 0.0;
};

struct AblationGrid {
  std::vector<std::size_t> factors;
  std::vector<std::size_t> strides;
  std::vector<sbde::FillScheme> fills;
  std::vector<std::uint64_t> seeds{0, 1, 2};

  void validate() const;
};

struct AblationSetup {
  model::NetConfig net;
  train::TrainConfig train;
  AttackPlan attack;
  std::size_t jobs = 1;
};

using CellCallback = std::function<void(const AblationCell&)>;

// Trains one model per (factor, stride, fill, seed) and attacks it with
// projection. Returns per-seed cells followed by mean and min aggregates for
// every triple. The stride replaces the stem stride of `setup.net`.
template <typename T>
std::vector<AblationCell> ablation_sweep(const AblationGrid& grid, const data::Dataset& train_set,
                                         const data::Dataset& test_set, const AblationSetup& setup,
                                         const CellCallback& on_cell = {});

// Aggregates per-seed cells of one triple.
AblationCell aggregate_cells(const std::vector<AblationCell>& cells, bool take_min);

struct PhaseStats {
  std::size_t factor = 1;
  std::size_t stride = 1;
  std::size_t kernel = 1;
  std::size_t padding = 0;
  // Lattice phase (origin offset mod factor) of the first `factor` output
  // positions along one axis, and how often each phase occurs.
  std::vector<std::size_t> phases;
  std::vector<std::size_t> phase_counts;
  std::size_t distinct = 0;
  // distinct < factor: windows revisit a subset of phases.
  bool aligned_gcd = false;
  // factor is an integer multiple of stride.
  bool aligned_multiple = false;
  // Range over output positions of the number of kernel taps (one axis) that
  // land on the signal lattice.
  std::size_t min_signal_taps = 0;
  std::size_t max_signal_taps = 0;
};

PhaseStats alignment_phase(std::size_t factor, std::size_t stride, std::size_t kernel, std::size_t padding = 0);

}  // namespace landscape::probe
