#include "landscape/pipeline.hpp"

#include <cstdlib>
#include <json.hpp>

#include "landscape/error.hpp"
#include "landscape/kernels.hpp"
#include "landscape/train.hpp"

namespace landscape::pipeline {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void say(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

fs::path write_artifact(const fs::path& out, const char* name, const std::string& text) {
  const fs::path p = out / name;
  report::write_text(p, text);
  return p;
}

fs::path echo_config(const config::RunConfig& config, const fs::path& out) {
  return write_artifact(out, kConfigEcho, config::canonical(config));
}

std::string pct(double fraction) { return report::format_number(100.0 * fraction); }

}  // namespace

fs::path data_root(const config::RunConfig& config) {
  if (const char* env = std::getenv(kDataEnv); env != nullptr && *env != '\0') return env;
  return config.data.root;
}

Splits load_splits(const config::RunConfig& config) {
  const auto& d = config.data;
  Splits s;
  if (d.source == config::Source::synthetic) {
    data::SyntheticSpec pool = d.synthetic;
    pool.per_class = d.synthetic.per_class + d.test_per_class;
    const data::Dataset all = data::make_synthetic(pool);
    const std::size_t k = static_cast<std::size_t>(d.synthetic.classes);
    auto [train_set, test_set] =
        data::subsample(all, k * d.synthetic.per_class, k * d.test_per_class, d.subset_seed);
    s.train = std::move(train_set);
    s.test = std::move(test_set);
    s.test.split = data::Split::test;
  } else {
    const fs::path root = data_root(config);
    if (root.empty()) throw ConfigError(std::string("CIFAR-10 needs data.root or ") + kDataEnv);
    const auto files = data::find_cifar10(root);
    if (!files.complete()) throw FormatError("no complete CIFAR-10 binary set under " + root.string());
    s.train = data::load_cifar10_binary(files.train, data::Split::train);
    s.test = data::load_cifar10_binary(files.test, data::Split::test);
  }
  if (d.train_size > 0 && d.train_size != s.train.size()) {
    s.train = data::stratified_subset(s.train, d.train_size, d.subset_seed);
  }
  if (d.test_size > 0 && d.test_size != s.test.size()) {
    s.test = data::stratified_subset(s.test, d.test_size, d.subset_seed + 1);
  }
  return s;
}

void check_compatible(const checkpoint::Header& header, const config::RunConfig& config) {
  if (!(header.net == config.net)) {
    throw ConfigError("checkpoint network (stem " + std::to_string(header.net.stem.kernel) + "x" +
                      std::to_string(header.net.stem.kernel) + "/" + std::to_string(header.net.stem.stride) +
                      ", stages " + model::format_stages(header.net.stages) +
                      ") does not match the config network (stem " + std::to_string(config.net.stem.kernel) + "x" +
                      std::to_string(config.net.stem.kernel) + "/" + std::to_string(config.net.stem.stride) +
                      ", stages " + model::format_stages(config.net.stages) + ")");
  }
  if (header.sbde.has_value() != config.sbde.has_value() || (header.sbde && !(*header.sbde == *config.sbde))) {
    auto describe = [](const std::optional<sbde::ExpansionSpec>& s) {
      return s ? "factor " + std::to_string(s->factor) + " fill " + s->fill.to_string() : std::string("none");
    };
    throw ConfigError("checkpoint expansion (" + describe(header.sbde) + ") does not match the config (" +
                      describe(config.sbde) + ")");
  }
}

std::vector<fs::path> cmd_train(const config::RunConfig& config, const fs::path& out, const Log& log) {
  config.validate();
  kernels::set_num_threads(config.threads);
  const Splits splits = load_splits(config);
  say(log, "train: " + std::to_string(splits.train.size()) + " train / " + std::to_string(splits.test.size()) +
               " test samples, " + (config.sbde ? "expansion factor " + std::to_string(config.sbde->factor) : "natural"));
  model::ResNet<float> net(config.net, config.model_seed);
  const auto history = train::fit(net, splits.train, &splits.test, config.sbde, config.train,
                                  [&](const train::EpochRecord& r) {
                                    say(log, "epoch " + std::to_string(r.epoch) + " lr " +
                                                 report::format_number(r.lr) + " loss " +
                                                 report::format_number(r.train_loss) + " test_acc " +
                                                 pct(r.test_acc));
                                  });
  std::vector<fs::path> written;
  const fs::path ckpt = out / kCheckpoint;
  checkpoint::save(ckpt, net, config.sbde, config::canonical(config));
  written.push_back(ckpt);
  written.push_back(write_artifact(out, kHistory, report::to_csv(report::history_table(history))));
  written.push_back(echo_config(config, out));
  return written;
}

std::vector<fs::path> cmd_attack(const config::RunConfig& config, const fs::path& checkpoint_path, const fs::path& out,
                                 const Log& log) {
  config.validate();
  kernels::set_num_threads(config.threads);
  checkpoint::Header header;
  auto net = checkpoint::load<float>(checkpoint_path, &header);
  check_compatible(header, config);
  const Splits splits = load_splits(config);
  const std::string method = config.sbde ? "SBDE" : "Natural";
  say(log, "attack: " + method + " on " + std::to_string(splits.test.size()) + " test samples");
  auto rows = probe::robustness_rows(net, method, splits.test, config.attack.plan, config.sbde, config.attack.batch);
  std::vector<probe::ResultRow> kept;
  for (auto& r : rows) {
    const bool keep = r.projection == "none" || config.attack.projection == config::ProjectionRows::both ||
                      (r.projection == "with") == (config.attack.projection == config::ProjectionRows::with);
    if (keep) kept.push_back(std::move(r));
  }
  std::vector<fs::path> written;
  written.push_back(write_artifact(out, kRobustness, report::to_csv(report::robustness_table(kept))));
  written.push_back(echo_config(config, out));
  return written;
}

std::vector<fs::path> cmd_trace(const config::RunConfig& config, const fs::path& checkpoint_path, const fs::path& out,
                                const Log& log) {
  config.validate();
  if (!config.sbde) throw ConfigError("trace needs an [sbde] section");
  kernels::set_num_threads(config.threads);
  checkpoint::Header header;
  auto net = checkpoint::load<float>(checkpoint_path, &header);
  check_compatible(header, config);
  const Splits splits = load_splits(config);
  const auto& spec = *config.sbde;
  const auto attack = config.attack.plan.spec_for(config.probe.trace_attack, spec.default_box());

  const std::size_t index = config.probe.trace_sample;
  if (index >= splits.test.size()) {
    throw ConfigError("probe.trace_sample " + std::to_string(index) + " is outside the test split");
  }
  const std::vector<std::size_t> one{index};
  Tensor<float> x0 = train::make_inputs<float>(splits.test, one, spec);
  const auto trace = probe::trace_attack(net, x0, splits.test.labels[index], attack, spec, config.probe.pixel, index);

  const std::size_t n = std::min(config.probe.samples, splits.test.size());
  say(log, "trace: sample " + std::to_string(index) + ", geometry over " + std::to_string(n) + " samples");
  const auto reports = probe::recovery_reports(net, splits.test, spec, attack, n, config.attack.batch);
  const auto conc = probe::gradient_concentration(net, splits.test, spec, n, config.attack.batch);
  std::size_t recovered = 0;
  for (const auto& r : reports) recovered += r.recovered;

  json geo{{"samples", n},
           {"attack", attacks::to_string(attack.kind)},
           {"grad_mean_abs_aux", conc.aux_mean},
           {"grad_mean_abs_sig", conc.sig_mean},
           {"grad_ratio_aux_over_sig", conc.ratio()},
           {"median_drop_ratio", probe::median_drop_ratio(reports)},
           {"recovered_fraction", n ? static_cast<double>(recovered) / static_cast<double>(n) : 0.0},
           {"trace",
            {{"sample", index},
             {"channel", trace.pixel.channel},
             {"row", trace.pixel.row},
             {"col", trace.pixel.col},
             {"loss_clean", trace.recovery.loss_clean},
             {"loss_adv", trace.recovery.loss_adv},
             {"loss_projected", trace.recovery.loss_projected},
             {"pred_clean", trace.recovery.pred_clean},
             {"pred_adv", trace.recovery.pred_adv},
             {"pred_projected", trace.recovery.pred_projected},
             {"recovered", trace.recovery.recovered}}}};
  std::vector<fs::path> written;
  written.push_back(write_artifact(out, kTrajectory, report::to_csv(report::trajectory_table(trace.records))));
  written.push_back(write_artifact(out, kRecovery, report::to_csv(report::recovery_table(reports))));
  written.push_back(write_artifact(out, kGeometry, geo.dump(2) + "\n"));
  written.push_back(echo_config(config, out));
  return written;
}

report::CsvTable phase_table(const config::RunConfig& config) {
  report::CsvTable t;
  t.header = {"factor",          "stride",          "kernel",          "padding", "distinct_phases",
              "aligned_gcd",     "aligned_multiple", "min_signal_taps", "max_signal_taps", "phases"};
  for (std::size_t f : config.probe.grid.factors) {
    for (std::size_t s : config.probe.grid.strides) {
      const auto p = probe::alignment_phase(f, s, config.net.stem.kernel, config.net.stem.padding);
      std::string phases;
      for (std::size_t i = 0; i < p.phases.size(); ++i) phases += (i ? ";" : "") + std::to_string(p.phases[i]);
      t.rows.push_back({std::to_string(f), std::to_string(s), std::to_string(p.kernel), std::to_string(p.padding),
                        std::to_string(p.distinct), p.aligned_gcd ? "1" : "0", p.aligned_multiple ? "1" : "0",
                        std::to_string(p.min_signal_taps), std::to_string(p.max_signal_taps), phases});
    }
  }
  return t;
}

std::vector<fs::path> cmd_ablate(const config::RunConfig& config, const fs::path& out, std::size_t jobs,
                                 const Log& log) {
  config.validate();
  config.probe.grid.validate();
  kernels::set_num_threads(config.threads);
  const Splits splits = load_splits(config);
  probe::AblationSetup setup;
  setup.net = config.net;
  setup.train = config.train;
  setup.attack = config.attack.plan;
  setup.jobs = jobs;
  const auto cells = probe::ablation_sweep<float>(config.probe.grid, splits.train, splits.test, setup,
                                                  [&](const probe::AblationCell& c) {
                                                    say(log, "cell F=" + std::to_string(c.factor) + " s=" +
                                                                 std::to_string(c.stride) + " fill " +
                                                                 c.fill.to_string() + " seed " + c.seed + ": clean " +
                                                                 report::format_number(c.clean) + " AVG " +
                                                                 report::format_number(c.average));
                                                  });
  std::vector<fs::path> written;
  written.push_back(write_artifact(out, kAblation, report::to_csv(report::ablation_table(cells))));
  written.push_back(write_artifact(out, kPhases, report::to_csv(phase_table(config))));
  written.push_back(echo_config(config, out));
  return written;
}

}  // namespace landscape::pipeline
