#include "plumecast/dataio.hpp"

#include <algorithm>
#include <cmath>

#include "plumecast/error.hpp"
#include "plumecast/field_io.hpp"

namespace plumecast::dataio {

namespace fs = std::filesystem;

const ChannelRange& NormStats::at(const std::string& channel) const {
  const auto it = channels.find(channel);
  if (it == channels.end()) throw ConfigError("norm_stats", "no statistics for channel '" + channel + "'");
  return it->second;
}

nlohmann::json NormStats::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, r] : channels) j[name] = {{"min", r.min}, {"max", r.max}};
  return j;
}

NormStats NormStats::from_json(const nlohmann::json& j) {
  NormStats s;
  for (const auto& [name, r] : j.items()) {
    s.channels[name] = {r.at("min").get<double>(), r.at("max").get<double>()};
  }
  return s;
}

NormStats compute_stats(const std::vector<std::map<std::string, ScalarField2D>>& cases,
                        std::vector<std::string>* degenerate) {
  NormStats stats;
  for (const auto& fields : cases) {
    for (const auto& [name, f] : fields) {
      auto [it, fresh] = stats.channels.try_emplace(name, ChannelRange{f.min(), f.max()});
      if (!fresh) {
        it->second.min = std::min(it->second.min, f.min());
        it->second.max = std::max(it->second.max, f.max());
      }
    }
  }
  for (auto& [name, r] : stats.channels) {
    if (r.degenerate()) {
      if (degenerate) degenerate->push_back(name);
      r.max = r.min + 1.0;
    }
  }
  return stats;
}

ScalarField2D normalize(const ScalarField2D& field, const ChannelRange& range) {
  if (range.degenerate()) throw DomainError("degenerate normalization range");
  std::vector<double> v(field.values().begin(), field.values().end());
  for (double& x : v) x = range.normalize(x);
  return {field.spec(), Unit::unitless, std::move(v)};
}

ScalarField2D denormalize(const ScalarField2D& field, const ChannelRange& range, Unit unit) {
  if (range.degenerate()) throw DomainError("degenerate normalization range");
  std::vector<double> v(field.values().begin(), field.values().end());
  for (double& x : v) x = range.denormalize(x);
  return {field.spec(), unit, std::move(v)};
}

void PatchSpec::validate(const GridSpec& spec) const {
  if (skip_per_direction < 1) throw ConfigError("patch.skip_per_direction", "must be >= 1");
  if (skip_per_direction > box_length) throw ConfigError("patch.skip_per_direction", "must not exceed box_length");
  if (box_length > spec.width || box_length > spec.height) {
    throw ShapeError("patch box " + std::to_string(box_length) + " exceeds the " + std::to_string(spec.width) + "x" +
                     std::to_string(spec.height) + " domain");
  }
}

namespace {

std::size_t axis_count(std::size_t extent, const PatchSpec& ps) {
  return std::max<std::size_t>(1, (extent - ps.box_length) / ps.skip_per_direction);
}

}  // namespace

std::size_t partition_count(const GridSpec& spec, const PatchSpec& ps) {
  ps.validate(spec);
  return axis_count(spec.height, ps) * axis_count(spec.width, ps);
}

std::vector<Cell> partition(const GridSpec& spec, const PatchSpec& ps) {
  ps.validate(spec);
  const std::size_t rows = axis_count(spec.height, ps);
  const std::size_t cols = axis_count(spec.width, ps);
  std::vector<Cell> origins;
  origins.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      origins.push_back({static_cast<std::int64_t>(r * ps.skip_per_direction),
                         static_cast<std::int64_t>(c * ps.skip_per_direction)});
    }
  }
  return origins;
}

std::string role_name(Role r) {
  switch (r) {
    case Role::train: return "train";
    case Role::val: return "val";
    case Role::test: return "test";
    case Role::scaling: return "scaling";
  }
  return "train";
}

Role role_from_name(const std::string& name) {
  if (name == "train") return Role::train;
  if (name == "val") return Role::val;
  if (name == "test") return Role::test;
  if (name == "scaling") return Role::scaling;
  throw ConfigError("role", "unknown case role '" + name + "'");
}

const ScalarField2D& CaseBundle::field(const std::string& channel) const {
  const auto it = fields.find(channel);
  if (it == fields.end()) throw ConfigError("channels", "case is missing channel '" + channel + "'");
  return it->second;
}

void CaseBundle::set(const std::string& channel, ScalarField2D f) {
  if (fields.empty() && spec.cells() <= 1) spec = f.spec();
  if (!(f.spec() == spec)) throw ShapeError("channel '" + channel + "' grid differs from the case grid");
  fields.insert_or_assign(channel, std::move(f));
}

CaseBundle CaseBundle::crop(const Region& r) const {
  CaseBundle out;
  out.role = role;
  out.spec = GridSpec{r.width, r.height, spec.cell_size};
  out.provenance = provenance;
  for (const auto& [name, f] : fields) out.fields.emplace(name, f.crop(r));
  return out;
}

void save_case(const fs::path& dir, const CaseBundle& bundle, const std::optional<NormStats>& stats) {
  fs::create_directories(dir);
  nlohmann::json meta;
  meta["role"] = role_name(bundle.role);
  meta["grid"] = {{"width", bundle.spec.width}, {"height", bundle.spec.height}, {"cell_size", bundle.spec.cell_size}};
  meta["channels"] = nlohmann::json::array();
  for (const auto& [name, f] : bundle.fields) {
    FieldMeta fm;
    if (stats && stats->channels.count(name)) {
      fm.norm_min = stats->channels.at(name).min;
      fm.norm_max = stats->channels.at(name).max;
    }
    fm.provenance = {{"case_role", role_name(bundle.role)}};
    save_field(dir / (name + ".lgf1"), f, fm);
    meta["channels"].push_back(name);
  }
  meta["norm_stats"] = stats ? stats->to_json() : nlohmann::json(nullptr);
  meta["provenance"] = bundle.provenance;
  write_json_file(dir / "meta.json", meta);
}

CaseBundle load_case(const fs::path& dir) {
  const auto meta = read_json_file(dir / "meta.json");
  CaseBundle b;
  try {
    b.role = role_from_name(meta.at("role").get<std::string>());
    b.spec = {meta.at("grid").at("width").get<std::size_t>(), meta.at("grid").at("height").get<std::size_t>(),
              meta.at("grid").at("cell_size").get<double>()};
    if (meta.contains("provenance")) b.provenance = meta["provenance"];
  } catch (const nlohmann::json::exception& e) {
    throw IoError((dir / "meta.json").string() + ": " + e.what());
  }
  for (const auto& name : kAllChannels) {
    const auto path = dir / (name + ".lgf1");
    if (fs::exists(path)) b.set(name, load_field(path));
  }
  return b;
}

Crop central_crop(std::size_t in, std::size_t out) {
  if (out > in) throw ShapeError("output larger than input window");
  const std::size_t margin = in - out;
  return {margin / 2, margin - margin / 2};
}

SampleSet assemble(const CaseBundle& bundle, const std::vector<std::string>& inputs,
                   const std::vector<std::string>& labels, const NormStats& stats,
                   const std::optional<PatchSpec>& patch, const std::function<std::size_t(std::size_t)>& output_size) {
  const GridSpec& spec = bundle.spec;
  std::vector<Cell> origins;
  std::size_t box_h, box_w;
  if (patch) {
    origins = partition(spec, *patch);
    box_h = box_w = patch->box_length;
  } else {
    origins = {Cell{0, 0}};
    box_h = spec.height;
    box_w = spec.width;
  }
  const std::size_t out_h = output_size(box_h);
  const std::size_t out_w = output_size(box_w);
  const Crop cy = central_crop(box_h, out_h);
  const Crop cx = central_crop(box_w, out_w);

  std::vector<std::vector<double>> in_norm, lab_norm;
  for (const auto& ch : inputs) {
    const auto f = normalize(bundle.field(ch), stats.at(ch));
    in_norm.emplace_back(f.values().begin(), f.values().end());
  }
  for (const auto& ch : labels) {
    const auto f = normalize(bundle.field(ch), stats.at(ch));
    lab_norm.emplace_back(f.values().begin(), f.values().end());
  }

  SampleSet set;
  set.origins = origins;
  set.inputs = neural::Tensor<float>(origins.size(), inputs.size(), box_h, box_w);
  set.labels = neural::Tensor<float>(origins.size(), labels.size(), out_h, out_w);
  for (std::size_t s = 0; s < origins.size(); ++s) {
    const auto r0 = static_cast<std::size_t>(origins[s].row);
    const auto c0 = static_cast<std::size_t>(origins[s].col);
    for (std::size_t ch = 0; ch < inputs.size(); ++ch) {
      float* dst = set.inputs.channel(s, ch);
      for (std::size_t y = 0; y < box_h; ++y) {
        for (std::size_t x = 0; x < box_w; ++x) {
          dst[y * box_w + x] = static_cast<float>(in_norm[ch][spec.index(r0 + y, c0 + x)]);
        }
      }
    }
    for (std::size_t ch = 0; ch < labels.size(); ++ch) {
      float* dst = set.labels.channel(s, ch);
      for (std::size_t y = 0; y < out_h; ++y) {
        for (std::size_t x = 0; x < out_w; ++x) {
          dst[y * out_w + x] = static_cast<float>(lab_norm[ch][spec.index(r0 + cy.before + y, c0 + cx.before + x)]);
        }
      }
    }
  }
  return set;
}

neural::Tensor<float> stack_channels(const CaseBundle& bundle, const std::vector<std::string>& channels,
                                     const NormStats& stats) {
  neural::Tensor<float> t(1, channels.size(), bundle.spec.height, bundle.spec.width);
  for (std::size_t ch = 0; ch < channels.size(); ++ch) {
    const auto f = normalize(bundle.field(channels[ch]), stats.at(channels[ch]));
    float* dst = t.channel(0, ch);
    for (std::size_t i = 0; i < f.values().size(); ++i) dst[i] = static_cast<float>(f[i]);
  }
  return t;
}

}  // namespace plumecast::dataio
