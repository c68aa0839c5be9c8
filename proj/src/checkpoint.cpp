#include "landscape/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "landscape/error.hpp"
#include "landscape/report.hpp"

namespace landscape::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoints are stored little-endian");

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'L', 'P', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
std::string dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

json net_to_json(const model::NetConfig& n) {
  return json{{"scale", model::to_string(n.scale)},
              {"stem_kernel", n.stem.kernel},
              {"stem_stride", n.stem.stride},
              {"stem_padding", n.stem.padding},
              {"stem_channels", n.stem.out_channels},
              {"stages", model::format_stages(n.stages)},
              {"num_classes", n.num_classes},
              {"in_channels", n.in_channels}};
}

model::NetConfig net_from_json(const json& j) {
  model::NetConfig n;
  n.scale = model::parse_scale(j.at("scale").get<std::string>());
  n.stem.kernel = j.at("stem_kernel").get<std::size_t>();
  n.stem.stride = j.at("stem_stride").get<std::size_t>();
  n.stem.padding = j.at("stem_padding").get<std::size_t>();
  n.stem.out_channels = j.at("stem_channels").get<std::size_t>();
  n.stages = model::parse_stages(j.at("stages").get<std::string>());
  n.num_classes = j.at("num_classes").get<std::size_t>();
  n.in_channels = j.at("in_channels").get<std::size_t>();
  return n;
}

json spec_to_json(const sbde::ExpansionSpec& s) {
  return json{{"factor", s.factor},
              {"fill", s.fill.to_string()},
              {"channels", s.channels},
              {"height", s.height},
              {"width", s.width}};
}

sbde::ExpansionSpec spec_from_json(const json& j) {
  sbde::ExpansionSpec s;
  s.factor = j.at("factor").get<std::size_t>();
  s.fill = sbde::FillScheme::parse(j.at("fill").get<std::string>());
  s.channels = j.at("channels").get<std::size_t>();
  s.height = j.at("height").get<std::size_t>();
  s.width = j.at("width").get<std::size_t>();
  return s;
}

struct Raw {
  json header;
  std::string payload;
};

Raw read_raw(const std::filesystem::path& path) {
  const std::string bytes = report::read_text(path);
  const std::string where = path.string();
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(where + " is not a checkpoint (bad magic)");
  }
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&length, bytes.data() + 8, 8);
  if (version != kVersion) throw FormatError(where + " has unsupported version " + std::to_string(version));
  if (length > bytes.size() - 16) throw FormatError(where + " is truncated inside its header");
  Raw raw;
  try {
    raw.header = json::parse(bytes.substr(16, length));
  } catch (const json::exception& e) {
    throw FormatError(where + " has a malformed header: " + e.what());
  }
  raw.payload = bytes.substr(16 + length);
  return raw;
}

Header header_from_json(const json& j) {
  Header h;
  try {
    h.net = net_from_json(j.at("net"));
    if (j.contains("sbde") && !j.at("sbde").is_null()) h.sbde = spec_from_json(j.at("sbde"));
    h.dtype = j.at("dtype").get<std::string>();
    h.note = j.value("note", "");
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  } catch (const ValueError& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  return h;
}

}  // namespace

template <typename T>
void save(const std::filesystem::path& path, model::ResNet<T>& net, const std::optional<sbde::ExpansionSpec>& spec,
          const std::string& note) {
  json tensors = json::array();
  std::string payload;
  auto append = [&payload](const T* data, std::size_t n) {
    payload.append(reinterpret_cast<const char*>(data), n * sizeof(T));
  };
  for (const Parameter<T>* p : net.parameters()) {
    tensors.push_back({{"name", p->name}, {"shape", p->tensor.shape()}});
    append(p->tensor.data(), p->tensor.size());
  }
  const auto bns = net.batchnorms();
  const auto names = net.batchnorm_names();
  json stats = json::array();
  for (std::size_t i = 0; i < bns.size(); ++i) {
    stats.push_back({{"name", names[i]}, {"channels", bns[i]->running_mean.size()}, {"initialized", bns[i]->initialized}});
    append(bns[i]->running_mean.data(), bns[i]->running_mean.size());
    append(bns[i]->running_var.data(), bns[i]->running_var.size());
  }
  json header{{"net", net_to_json(net.config())},
              {"sbde", spec ? spec_to_json(*spec) : json(nullptr)},
              {"dtype", dtype_name<T>()},
              {"note", note},
              {"tensors", tensors},
              {"batchnorms", stats}};
  const std::string text = header.dump();
  std::string out(kMagic, 4);
  const std::uint32_t version = kVersion;
  const std::uint64_t length = text.size();
  out.append(reinterpret_cast<const char*>(&version), 4);
  out.append(reinterpret_cast<const char*>(&length), 8);
  out += text;
  out += payload;
  report::write_text(path, out);
}

Header read_header(const std::filesystem::path& path) { return header_from_json(read_raw(path).header); }

template <typename T>
model::ResNet<T> load(const std::filesystem::path& path, Header* header_out) {
  const Raw raw = read_raw(path);
  const Header header = header_from_json(raw.header);
  if (header.dtype != dtype_name<T>()) {
    throw FormatError("checkpoint holds " + header.dtype + " values, expected " + dtype_name<T>());
  }
  model::ResNet<T> net(header.net, 0);
  std::size_t offset = 0;
  auto take = [&](T* dst, std::size_t n, const std::string& what) {
    const std::size_t bytes = n * sizeof(T);
    if (offset + bytes > raw.payload.size()) throw FormatError("checkpoint is truncated at " + what);
    std::memcpy(dst, raw.payload.data() + offset, bytes);
    offset += bytes;
  };
  try {
    const json& tensors = raw.header.at("tensors");
    const auto params = net.parameters();
    if (tensors.size() != params.size()) throw FormatError("checkpoint parameter count does not match its network");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto name = tensors[i].at("name").get<std::string>();
      const auto shape = tensors[i].at("shape").get<Shape>();
      if (name != params[i]->name || shape != params[i]->tensor.shape()) {
        throw FormatError("checkpoint tensor " + name + " " + to_string(shape) + " does not match " +
                          params[i]->name + " " + to_string(params[i]->tensor.shape()));
      }
      take(params[i]->tensor.data(), params[i]->tensor.size(), name);
    }
    const json& stats = raw.header.at("batchnorms");
    const auto bns = net.batchnorms();
    const auto names = net.batchnorm_names();
    if (stats.size() != bns.size()) throw FormatError("checkpoint batchnorm count does not match its network");
    for (std::size_t i = 0; i < bns.size(); ++i) {
      const auto name = stats[i].at("name").get<std::string>();
      if (name != names[i] || stats[i].at("channels").get<std::size_t>() != bns[i]->running_mean.size()) {
        throw FormatError("checkpoint batchnorm " + name + " does not match " + names[i]);
      }
      bns[i]->initialized = stats[i].at("initialized").get<bool>();
      take(bns[i]->running_mean.data(), bns[i]->running_mean.size(), name);
      take(bns[i]->running_var.data(), bns[i]->running_var.size(), name);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  if (offset != raw.payload.size()) throw FormatError("checkpoint has trailing bytes");
  if (header_out) *header_out = header;
  return net;
}

template void save<float>(const std::filesystem::path&, model::ResNet<float>&,
                          const std::optional<sbde::ExpansionSpec>&, const std::string&);
template void save<double>(const std::filesystem::path&, model::ResNet<double>&,
                           const std::optional<sbde::ExpansionSpec>&, const std::string&);
template model::ResNet<float> load<float>(const std::filesystem::path&, Header*);
template model::ResNet<double> load<double>(const std::filesystem::path&, Header*);

}  // namespace landscape::checkpoint
