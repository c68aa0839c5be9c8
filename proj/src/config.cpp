#include "landscape/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "landscape/error.hpp"
#include "landscape/report.hpp"

namespace landscape::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

std::uint64_t parse_uint(const std::string& text) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || text.empty()) {
    throw ValueError("'" + text + "' is not a non-negative integer");
  }
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ValueError("'" + text + "' is not a boolean");
}

std::string fmt(double v) { return report::format_number(v); }
std::string fmt_bool(bool v) { return v ? "true" : "false"; }

template <typename T>
std::string join(const std::vector<T>& items, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += f(items[i]);
  }
  return out;
}

std::vector<std::uint64_t> parse_uint_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_uint(item));
  if (out.empty()) throw ValueError("empty list");
  return out;
}

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

sbde::ExpansionSpec& sbde_of(RunConfig& c) {
  if (!c.sbde) c.sbde = sbde::ExpansionSpec{};
  return *c.sbde;
}

const std::vector<Key>& key_table() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    auto add = [&k](std::string name, std::function<void(RunConfig&, const std::string&)> set,
                    std::function<std::string(const RunConfig&)> get) {
      k.push_back({std::move(name), std::move(set), std::move(get)});
    };
    using C = RunConfig;
    using S = const std::string&;

    add("data.source",
        [](C& c, S v) {
          if (v == "synthetic") c.data.source = Source::synthetic;
          else if (v == "cifar10") c.data.source = Source::cifar10;
          else throw ValueError("expected synthetic or cifar10");
        },
        [](const C& c) { return std::string(c.data.source == Source::synthetic ? "synthetic" : "cifar10"); });
    add("data.root", [](C& c, S v) { c.data.root = v; }, [](const C& c) { return c.data.root; });
    add("data.train_size", [](C& c, S v) { c.data.train_size = parse_uint(v); },
        [](const C& c) { return std::to_string(c.data.train_size); });
    add("data.test_size", [](C& c, S v) { c.data.test_size = parse_uint(v); },
        [](const C& c) { return std::to_string(c.data.test_size); });
    add("data.subset_seed", [](C& c, S v) { c.data.subset_seed = parse_uint(v); },
        [](const C& c) { return std::to_string(c.data.subset_seed); });
    add("data.classes", [](C& c, S v) { c.data.synthetic.classes = static_cast<int>(parse_uint(v)); },
        [](const C& c) { return std::to_string(c.data.synthetic.classes); });
    add("data.train_per_class", [](C& c, S v) { c.data.synthetic.per_class = parse_uint(v); },
        [](const C& c) { return std::to_string(c.data.synthetic.per_class); });
    add("data.test_per_class", [](C& c, S v) { c.data.test_per_class = parse_uint(v); },
        [](const C& c) { return std::to_string(c.data.test_per_class); });
    add("data.channels", [](C& c, S v) { c.data.synthetic.channels = parse_uint(v); },
        [](const C& c) { return std::to_string(c.data.synthetic.channels); });
    add("data.height", [](C& c, S v) { c.data.synthetic.height = parse_uint(v); },
        [](const C& c) { return std::to_string(c.data.synthetic.height); });
    add("data.width", [](C& c, S v) { c.data.synthetic.width = parse_uint(v); },
        [](const C& c) { return std::to_string(c.data.synthetic.width); });
    add("data.pattern",
        [](C& c, S v) {
          if (v == "gratings") c.data.synthetic.pattern = data::Pattern::gratings;
          else if (v == "blobs") c.data.synthetic.pattern = data::Pattern::blobs;
          else throw ValueError("expected gratings or blobs");
        },
        [](const C& c) {
          return std::string(c.data.synthetic.pattern == data::Pattern::gratings ? "gratings" : "blobs");
        });
    add("data.noise", [](C& c, S v) { c.data.synthetic.noise = parse_real(v); },
        [](const C& c) { return fmt(c.data.synthetic.noise); });
    add("data.seed", [](C& c, S v) { c.data.synthetic.seed = parse_uint(v); },
        [](const C& c) { return std::to_string(c.data.synthetic.seed); });

    add("model.scale",
        [](C& c, S v) {
          const auto scale = model::parse_scale(v);
          const auto classes = c.net.num_classes;
          const auto channels = c.net.in_channels;
          c.net = scale == model::Scale::desk ? model::NetConfig::desk() : model::NetConfig::full();
          c.net.num_classes = classes;
          c.net.in_channels = channels;
        },
        [](const C& c) { return model::to_string(c.net.scale); });
    add("model.stem_kernel", [](C& c, S v) { c.net.stem.kernel = parse_uint(v); },
        [](const C& c) { return std::to_string(c.net.stem.kernel); });
    add("model.stem_stride", [](C& c, S v) { c.net.stem.stride = parse_uint(v); },
        [](const C& c) { return std::to_string(c.net.stem.stride); });
    add("model.stem_padding", [](C& c, S v) { c.net.stem.padding = parse_uint(v); },
        [](const C& c) { return std::to_string(c.net.stem.padding); });
    add("model.stem_channels", [](C& c, S v) { c.net.stem.out_channels = parse_uint(v); },
        [](const C& c) { return std::to_string(c.net.stem.out_channels); });
    add("model.stages", [](C& c, S v) { c.net.stages = model::parse_stages(v); },
        [](const C& c) { return model::format_stages(c.net.stages); });
    add("model.seed", [](C& c, S v) { c.model_seed = parse_uint(v); },
        [](const C& c) { return std::to_string(c.model_seed); });

    add("sbde.factor", [](C& c, S v) { sbde_of(c).factor = parse_uint(v); },
        [](const C& c) { return c.sbde ? std::to_string(c.sbde->factor) : ""; });
    add("sbde.fill", [](C& c, S v) { sbde_of(c).fill = sbde::FillScheme::parse(v); },
        [](const C& c) { return c.sbde ? c.sbde->fill.to_string() : ""; });

    add("train.lr", [](C& c, S v) { c.train.lr0 = parse_real(v); }, [](const C& c) { return fmt(c.train.lr0); });
    add("train.lr_min", [](C& c, S v) { c.train.lr_min = parse_real(v); },
        [](const C& c) { return fmt(c.train.lr_min); });
    add("train.epochs", [](C& c, S v) { c.train.epochs = parse_uint(v); },
        [](const C& c) { return std::to_string(c.train.epochs); });
    add("train.batch", [](C& c, S v) { c.train.batch = parse_uint(v); },
        [](const C& c) { return std::to_string(c.train.batch); });
    add("train.momentum", [](C& c, S v) { c.train.momentum = parse_real(v); },
        [](const C& c) { return fmt(c.train.momentum); });
    add("train.weight_decay", [](C& c, S v) { c.train.weight_decay = parse_real(v); },
        [](const C& c) { return fmt(c.train.weight_decay); });
    add("train.seed", [](C& c, S v) { c.train.seed = parse_uint(v); },
        [](const C& c) { return std::to_string(c.train.seed); });
    add("train.crop", [](C& c, S v) { c.train.crop = parse_bool(v); },
        [](const C& c) { return fmt_bool(c.train.crop); });
    add("train.flip", [](C& c, S v) { c.train.flip = parse_bool(v); },
        [](const C& c) { return fmt_bool(c.train.flip); });
    add("train.crop_padding", [](C& c, S v) { c.train.crop_padding = parse_uint(v); },
        [](const C& c) { return std::to_string(c.train.crop_padding); });
    add("train.crop_fill", [](C& c, S v) { c.train.crop_fill = parse_real(v); },
        [](const C& c) { return fmt(c.train.crop_fill); });
    add("train.threads", [](C& c, S v) { c.threads = static_cast<int>(parse_uint(v)); },
        [](const C& c) { return std::to_string(c.threads); });

    add("attack.kinds",
        [](C& c, S v) {
          c.attack.plan.kinds.clear();
          for (const auto& item : split(v, ',')) c.attack.plan.kinds.push_back(attacks::parse_kind(item));
          if (c.attack.plan.kinds.empty()) throw ValueError("empty attack list");
        },
        [](const C& c) {
          return join<attacks::Kind>(c.attack.plan.kinds, [](const attacks::Kind& k) {
            std::string s = attacks::to_string(k);
            for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            return s;
          });
        });
    add("attack.epsilon", [](C& c, S v) { c.attack.plan.epsilon = parse_real(v); },
        [](const C& c) { return fmt(c.attack.plan.epsilon); });
    add("attack.pgd_steps", [](C& c, S v) { c.attack.plan.pgd_steps = static_cast<int>(parse_uint(v)); },
        [](const C& c) { return c.attack.plan.pgd_steps ? std::to_string(*c.attack.plan.pgd_steps) : ""; });
    add("attack.pgd_alpha", [](C& c, S v) { c.attack.plan.pgd_alpha = parse_real(v); },
        [](const C& c) { return c.attack.plan.pgd_alpha ? fmt(*c.attack.plan.pgd_alpha) : ""; });
    add("attack.seed", [](C& c, S v) { c.attack.plan.seed = parse_uint(v); },
        [](const C& c) { return std::to_string(c.attack.plan.seed); });
    add("attack.projection",
        [](C& c, S v) {
          if (v == "both") c.attack.projection = ProjectionRows::both;
          else if (v == "with") c.attack.projection = ProjectionRows::with;
          else if (v == "without") c.attack.projection = ProjectionRows::without;
          else throw ValueError("expected both, with or without");
        },
        [](const C& c) {
          switch (c.attack.projection) {
            case ProjectionRows::both:
              return std::string("both");
            case ProjectionRows::with:
              return std::string("with");
            case ProjectionRows::without:
              return std::string("without");
          }
          return std::string();
        });
    add("attack.batch", [](C& c, S v) { c.attack.batch = parse_uint(v); },
        [](const C& c) { return std::to_string(c.attack.batch); });

    add("probe.samples", [](C& c, S v) { c.probe.samples = parse_uint(v); },
        [](const C& c) { return std::to_string(c.probe.samples); });
    add("probe.trace_sample", [](C& c, S v) { c.probe.trace_sample = parse_uint(v); },
        [](const C& c) { return std::to_string(c.probe.trace_sample); });
    add("probe.trace_attack", [](C& c, S v) { c.probe.trace_attack = attacks::parse_kind(v); },
        [](const C& c) {
          std::string s = attacks::to_string(c.probe.trace_attack);
          for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
          return s;
        });
    add("probe.pixel",
        [](C& c, S v) {
          if (v == "random") {
            c.probe.pixel.reset();
            return;
          }
          const auto parts = split(v, ',');
          if (parts.size() != 3) throw ValueError("expected 'random' or channel,row,col");
          c.probe.pixel = probe::TrackedPixel{parse_uint(parts[0]), parse_uint(parts[1]), parse_uint(parts[2])};
        },
        [](const C& c) {
          if (!c.probe.pixel) return std::string("random");
          const auto& p = *c.probe.pixel;
          return std::to_string(p.channel) + "," + std::to_string(p.row) + "," + std::to_string(p.col);
        });
    add("probe.factors",
        [](C& c, S v) {
          c.probe.grid.factors.clear();
          for (auto x : parse_uint_list(v)) c.probe.grid.factors.push_back(x);
        },
        [](const C& c) {
          return join<std::size_t>(c.probe.grid.factors, [](const std::size_t& x) { return std::to_string(x); });
        });
    add("probe.strides",
        [](C& c, S v) {
          c.probe.grid.strides.clear();
          for (auto x : parse_uint_list(v)) c.probe.grid.strides.push_back(x);
        },
        [](const C& c) {
          return join<std::size_t>(c.probe.grid.strides, [](const std::size_t& x) { return std::to_string(x); });
        });
    add("probe.fills",
        [](C& c, S v) {
          c.probe.grid.fills.clear();
          for (const auto& item : split(v, ',')) c.probe.grid.fills.push_back(sbde::FillScheme::parse(item));
          if (c.probe.grid.fills.empty()) throw ValueError("empty fill list");
        },
        [](const C& c) {
          return join<sbde::FillScheme>(c.probe.grid.fills, [](const sbde::FillScheme& f) { return f.to_string(); });
        });
    add("probe.seeds", [](C& c, S v) { c.probe.grid.seeds = parse_uint_list(v); },
        [](const C& c) {
          return join<std::uint64_t>(c.probe.grid.seeds, [](const std::uint64_t& x) { return std::to_string(x); });
        });

    add("output.dir", [](C& c, S v) { c.output = v; }, [](const C& c) { return c.output.string(); });
    return k;
  }();
  return table;
}

const std::set<std::string> kSections{"data", "model", "sbde", "train", "attack", "probe", "output"};

// Fills the sizes that follow from other sections.
void derive(RunConfig& c) {
  const bool synthetic = c.data.source == Source::synthetic;
  const std::size_t channels = synthetic ? c.data.synthetic.channels : 3;
  c.net.in_channels = channels;
  c.net.num_classes = synthetic ? static_cast<std::size_t>(c.data.synthetic.classes) : 10;
  if (c.sbde) {
    c.sbde->channels = channels;
    c.sbde->height = synthetic ? c.data.synthetic.height : 32;
    c.sbde->width = synthetic ? c.data.synthetic.width : 32;
  }
}

}  // namespace

double parse_real(const std::string& text) {
  const auto slash = text.find('/');
  if (slash != std::string::npos) {
    const double num = parse_real(trim(text.substr(0, slash)));
    const double den = parse_real(trim(text.substr(slash + 1)));
    if (den == 0.0) throw ValueError("division by zero in '" + text + "'");
    return num / den;
  }
  try {
    return report::parse_number(text);
  } catch (const FormatError&) {
    throw ValueError("'" + text + "' is not a number");
  }
}

void RunConfig::validate() const {
  if (data.source == Source::synthetic) data.synthetic.validate();
  if (data.test_per_class == 0 && data.source == Source::synthetic) {
    throw ValueError("data.test_per_class must be positive");
  }
  net.validate();
  if (sbde) sbde->validate();
  train.validate();
  if (!(attack.plan.epsilon >= 0.0)) throw ValueError("attack.epsilon must be >= 0");
  if (attack.batch == 0) throw ValueError("attack.batch must be positive");
  if (threads < 1) throw ValueError("train.threads must be >= 1");
  for (attacks::Kind kind : attack.plan.kinds) {
    attack.plan.spec_for(kind, sbde ? sbde->default_box() : sbde::Box{}).validate();
  }
}

void RunConfig::set_seed(std::uint64_t seed) {
  model_seed = seed;
  train.seed = seed;
  attack.plan.seed = seed;
}

RunConfig parse(const std::string& text) {
  std::map<std::string, const Key*> by_name;
  for (const auto& k : key_table()) by_name[k.name] = &k;

  RunConfig c;
  std::string section;
  std::map<std::string, int> seen;
  std::map<std::string, std::string> values;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto comment = raw.find_first_of("#;");
    const std::string body = trim(comment == std::string::npos ? raw : raw.substr(0, comment));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigError("unterminated section header", line);
      section = trim(body.substr(1, body.size() - 2));
      if (!kSections.count(section)) throw ConfigError("unknown section [" + section + "]", line);
      if (section == "sbde") sbde_of(c);
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value", line);
    if (section.empty()) throw ConfigError("key outside of a section", line);
    const std::string key = section + "." + trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const auto it = by_name.find(key);
    if (it == by_name.end()) throw ConfigError("unknown key '" + key + "'", line);
    if (seen.count(key)) {
      throw ConfigError("duplicate key '" + key + "' (first set on line " + std::to_string(seen[key]) + ")", line);
    }
    seen[key] = line;
    values[key] = value;
  }
  // Keys apply in table order so that model.scale presets never clobber
  // explicit model keys, whatever their order in the file.
  for (const auto& k : key_table()) {
    const auto v = values.find(k.name);
    if (v == values.end()) continue;
    try {
      k.set(c, v->second);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(k.name + ": " + e.what(), seen[k.name]);
    } catch (const std::exception& e) {
      throw ConfigError(k.name + ": " + e.what(), seen[k.name]);
    }
  }
  derive(c);
  try {
    c.validate();
  } catch (const Error& e) {
    // Blame the first key (in application order) after which the document
    // no longer validates.
    RunConfig partial;
    if (c.sbde) sbde_of(partial);
    for (const auto& k : key_table()) {
      const auto v = values.find(k.name);
      if (v == values.end()) continue;
      k.set(partial, v->second);
      RunConfig probe = partial;
      derive(probe);
      try {
        probe.validate();
      } catch (const Error&) {
        throw ConfigError(k.name + ": " + e.what(), seen[k.name]);
      }
    }
    throw ConfigError(e.what());
  }
  return c;
}

RunConfig load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = report::read_text(path);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  return parse(text);
}

std::string canonical(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const auto& k : key_table()) {
    const auto dot = k.name.find('.');
    const std::string sec = k.name.substr(0, dot);
    if (sec == "sbde" && !config.sbde) continue;
    const std::string value = k.get(config);
    // Unset optional values are omitted so they keep their defaults.
    if (value.empty() && (k.name == "attack.pgd_steps" || k.name == "attack.pgd_alpha")) continue;
    if (sec != section) {
      if (!section.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += k.name.substr(dot + 1) + " = " + value + "\n";
  }
  return out;
}

std::vector<std::string> keys() {
  std::vector<std::string> out;
  for (const auto& k : key_table()) out.push_back(k.name);
  return out;
}

}  // namespace landscape::config
