#include "plumecast/config.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "plumecast/error.hpp"

namespace plumecast::pipeline {

using nlohmann::json;

std::string_view variant_name(StreamlineVariant v) {
  switch (v) {
    case StreamlineVariant::both: return "both";
    case StreamlineVariant::s_only: return "s_only";
    case StreamlineVariant::so_only: return "so_only";
    case StreamlineVariant::none: return "none";
    case StreamlineVariant::not_faded: return "not_faded";
  }
  return "both";
}

StreamlineVariant variant_from_name(std::string_view s) {
  for (auto v : {StreamlineVariant::both, StreamlineVariant::s_only, StreamlineVariant::so_only,
                 StreamlineVariant::none, StreamlineVariant::not_faded}) {
    if (variant_name(v) == s) return v;
  }
  throw ConfigError("ablations.streamline_variant",
                    "unknown streamline variant '" + std::string(s) + "' (expected both, s_only, so_only, none, not_faded)");
}

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names = {"baseline", "train_in_sequence", "zero_padding", "no_partitioning",
                                                 "s_only",   "so_only",           "no_streamlines", "not_faded"};
  return names;
}

Ablations ablation_from_name(std::string_view name) {
  Ablations a;
  if (name == "baseline") return a;
  if (name == "train_in_sequence") {
    a.train_in_sequence = true;
  } else if (name == "zero_padding") {
    a.zero_padding = true;
  } else if (name == "no_partitioning") {
    a.no_partitioning = true;
  } else if (name == "s_only") {
    a.streamline_variant = StreamlineVariant::s_only;
  } else if (name == "so_only") {
    a.streamline_variant = StreamlineVariant::so_only;
  } else if (name == "no_streamlines") {
    a.streamline_variant = StreamlineVariant::none;
  } else if (name == "not_faded") {
    a.streamline_variant = StreamlineVariant::not_faded;
  } else {
    std::string known;
    for (const auto& n : ablation_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("ablation", "unknown ablation '" + std::string(name) + "' (expected one of " + known + ")");
  }
  return a;
}

std::string ablation_label(const Ablations& a) {
  std::string out;
  auto add = [&](const std::string& s) { out += (out.empty() ? "" : "+") + s; };
  if (a.train_in_sequence) add("train_in_sequence");
  if (a.zero_padding) add("zero_padding");
  if (a.no_partitioning) add("no_partitioning");
  switch (a.streamline_variant) {
    case StreamlineVariant::both: break;
    case StreamlineVariant::none: add("no_streamlines"); break;
    default: add(std::string(variant_name(a.streamline_variant)));
  }
  return out.empty() ? "baseline" : out;
}

std::vector<std::string> step1_inputs() { return {"p", "k", "i"}; }
std::vector<std::string> step1_labels() { return {"vx", "vy"}; }
std::vector<std::string> step3_labels() { return {"T"}; }

std::vector<std::string> step3_inputs(StreamlineVariant v) {
  switch (v) {
    case StreamlineVariant::both:
    case StreamlineVariant::not_faded: return {"i", "vx", "vy", "s", "s_o", "k"};
    case StreamlineVariant::s_only: return {"i", "vx", "vy", "s", "k"};
    case StreamlineVariant::so_only: return {"i", "vx", "vy", "s_o", "k"};
    case StreamlineVariant::none: return {"i", "k", "vx", "vy"};
  }
  return {};
}

namespace {

StepConfig effective(StepConfig s, const Ablations& a, std::size_t in, std::size_t out) {
  s.model.in_channels = in;
  s.model.out_channels = out;
  if (a.zero_padding) s.model.padding = neural::Padding::zero;
  s.full_image = a.no_partitioning;
  return s;
}

}  // namespace

StepConfig effective_step1(const PipelineConfig& cfg) {
  return effective(cfg.step1, cfg.ablations, step1_inputs().size(), step1_labels().size());
}

StepConfig effective_step3(const PipelineConfig& cfg) {
  return effective(cfg.step3, cfg.ablations, step3_inputs(cfg.ablations.streamline_variant).size(),
                   step3_labels().size());
}

PipelineConfig::PipelineConfig() {
  step1.model.kernel_size = 5;
  step1.train.loss = neural::Loss::mse;
  step1.patch = {256, 16};
  step3.model.kernel_size = 4;
  step3.model.in_channels = 6;
  step3.model.out_channels = 1;
  step3.train.loss = neural::Loss::mae;
  step3.patch = {256, 8};
}

PipelineConfig desk_protocol() {
  PipelineConfig c;
  c.seed = 1;
  c.cases.grid = {256, 256, 5.0};
  c.cases.pump_count = 4;
  c.cases.border = 40;
  c.cases.perlin.log_space = true;
  c.trace.max_steps = 1000;
  for (StepConfig* s : {&c.step1, &c.step3}) {
    s->model.depth = 2;
    s->model.init_features = 8;
    s->train.learning_rate = 1e-3;
    s->train.batch_size = 8;
    s->train.max_epochs = 30;
    s->train.early_stopping_patience = 6;
  }
  c.step1.train.seed = 11;
  c.step3.train.seed = 13;
  c.step1.patch = {64, 16};
  c.step3.patch = {64, 8};
  c.tile_output = 96;
  return c;
}

void PipelineConfig::validate() const {
  try {
    cases.grid.validate();
  } catch (const DomainError& e) {
    throw ConfigError("cases", e.what());
  }
  try {
    cases.perlin.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("cases.permeability." + e.field().substr(e.field().find('.') + 1), e.detail());
  }
  try {
    trace.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(e.field() == "trace.step" ? "trace.step_seconds" : e.field(), e.detail());
  }
  if (!(cases.injection_rate > 0.0)) throw ConfigError("cases.injection_rate", "must be > 0");
  if (!std::isfinite(cases.injection_delta_t)) throw ConfigError("cases.injection_delta_t", "must be finite");
  if (2 * cases.border >= std::min(cases.grid.width, cases.grid.height)) {
    throw ConfigError("cases.border", "border leaves no room for pumps");
  }
  for (const auto& [name, s] : {std::pair{"step1", &step1}, std::pair{"step3", &step3}}) {
    try {
      s->model.validate();
      s->train.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(name) + "." + e.field(), e.detail());
    }
    if (s->patch.skip_per_direction < 1 || s->patch.skip_per_direction > s->patch.box_length) {
      throw ConfigError(std::string(name) + ".patch", "need 1 <= skip_per_direction <= box_length");
    }
    if (s->patch.box_length > std::min(cases.grid.width, cases.grid.height)) {
      throw ConfigError(std::string(name) + ".patch.box_length", "box_length exceeds the domain");
    }
  }
  if (tile_output < 1) throw ConfigError("tile_output", "must be >= 1");
  if (scaling.factor < 1) throw ConfigError("scaling.factor", "must be >= 1");
}

json PipelineConfig::to_json() const {
  const auto& k = cases.perlin;
  const auto& h = cases.hydro;
  const auto& t = cases.thermal;
  auto step = [](const StepConfig& s) {
    return json{{"model", s.model.to_json()},
                {"train", s.train.to_json()},
                {"patch", {{"box_length", s.patch.box_length}, {"skip_per_direction", s.patch.skip_per_direction}}}};
  };
  return {{"schema", kSchemaVersion},
          {"seed", seed},
          {"cases",
           {{"width", cases.grid.width},
            {"height", cases.grid.height},
            {"cell_size", cases.grid.cell_size},
            {"pump_count", cases.pump_count},
            {"min_spacing", cases.min_spacing},
            {"border", cases.border},
            {"injection_rate", cases.injection_rate},
            {"injection_delta_t", cases.injection_delta_t},
            {"permeability",
             {{"octaves", k.octaves},
              {"base_frequency", k.base_frequency},
              {"persistence", k.persistence},
              {"k_min", k.k_min},
              {"k_max", k.k_max},
              {"log_space", k.log_space}}},
            {"hydro",
             {{"grad_p", h.grad_p},
              {"fluid_viscosity", h.fluid_viscosity},
              {"fluid_density", h.fluid_density},
              {"gravity", h.gravity},
              {"porosity", h.porosity},
              {"aquifer_thickness", h.aquifer_thickness},
              {"tolerance", h.tolerance},
              {"max_iterations", h.max_iterations}}},
            {"thermal",
             {{"conductivity", t.conductivity},
              {"density", t.density},
              {"specific_heat", t.specific_heat},
              {"background_t", t.background_t},
              {"dispersivity", t.dispersivity},
              {"tolerance", t.tolerance},
              {"max_iterations", t.max_iterations}}}}},
          {"trace",
           {{"scheme", tracer::scheme_name(trace.scheme)},
            {"step_seconds", trace.step},
            {"max_steps", trace.max_steps},
            {"offset_cells", trace.offset_cells},
            {"fade", trace.fade},
            {"adaptive_tolerance", trace.adaptive_tolerance}}},
          {"step1", step(step1)},
          {"step3", step(step3)},
          {"ablations",
           {{"train_in_sequence", ablations.train_in_sequence},
            {"zero_padding", ablations.zero_padding},
            {"no_partitioning", ablations.no_partitioning},
            {"streamline_variant", variant_name(ablations.streamline_variant)}}},
          {"tile_output", tile_output},
          {"scaling", {{"factor", scaling.factor}, {"enabled", scaling.enabled}}}};
}

namespace {

// Strict object reader: every key must be consumed.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "must be an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void get(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || v->get<long long>() < 0) throw ConfigError(at(key), "must be a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void get(const std::string& key, std::uint64_t& out, int) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0)) {
        throw ConfigError(at(key), "must be a non-negative integer");
      }
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(at(key), "must be an integer");
      out = v->get<int>();
    }
  }
  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(at(key), "must be a number");
      out = v->get<double>();
      if (!std::isfinite(out)) throw ConfigError(at(key), "must be finite");
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(at(key), "must be a boolean");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(at(key), "must be a string");
      out = v->get<std::string>();
    }
  }
  const json* sub(const std::string& key) { return find(key); }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!used_.count(key)) throw ConfigError(at(key), "unknown field");
    }
  }

 private:
  const json* find(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <typename F>
void with_prefix(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    throw ConfigError(e.field().empty() ? path : path + "." + e.field(), e.detail());
  }
}

void read_step(const json& j, const std::string& path, StepConfig& s) {
  Reader r(j, path);
  if (const json* m = r.sub("model")) with_prefix(path + ".model", [&] { s.model = neural::ConvNetConfig::from_json(*m); });
  if (const json* t = r.sub("train")) with_prefix(path + ".train", [&] { s.train = neural::TrainConfig::from_json(*t); });
  if (const json* p = r.sub("patch")) {
    Reader pr(*p, path + ".patch");
    pr.get("box_length", s.patch.box_length);
    pr.get("skip_per_direction", s.patch.skip_per_direction);
    pr.finish();
  }
  r.finish();
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& input) {
  if (!input.is_object()) throw ConfigError("", "config must be a JSON object");
  if (!input.contains("schema")) throw ConfigError("schema", "missing schema version");
  if (!input.at("schema").is_number_integer() || input.at("schema").get<long long>() != kSchemaVersion) {
    throw ConfigError("schema", "unsupported schema version (expected " + std::to_string(kSchemaVersion) + ")");
  }
  std::string base = "full";
  if (input.contains("base")) {
    if (!input.at("base").is_string()) throw ConfigError("base", "must be a string");
    base = input.at("base").get<std::string>();
  }
  PipelineConfig c;
  if (base == "3dp-desk") {
    c = desk_protocol();
  } else if (base != "full") {
    throw ConfigError("base", "unknown base '" + base + "' (expected full or 3dp-desk)");
  }

  json j = c.to_json();
  json patch = input;
  patch.erase("base");
  // merge_patch treats null as deletion; forbid it so every field stays typed.
  std::function<void(const json&, const std::string&)> no_nulls = [&](const json& v, const std::string& path) {
    if (v.is_null()) throw ConfigError(path, "null is not allowed");
    if (v.is_object()) {
      for (const auto& [k, x] : v.items()) no_nulls(x, path.empty() ? k : path + "." + k);
    }
  };
  no_nulls(patch, "");
  j.merge_patch(patch);

  Reader r(j, "");
  int schema = 0;
  r.get("schema", schema);
  r.get("seed", c.seed, 0);
  if (const json* cs = r.sub("cases")) {
    Reader cr(*cs, "cases");
    cr.get("width", c.cases.grid.width);
    cr.get("height", c.cases.grid.height);
    cr.get("cell_size", c.cases.grid.cell_size);
    cr.get("pump_count", c.cases.pump_count);
    cr.get("min_spacing", c.cases.min_spacing);
    cr.get("border", c.cases.border);
    cr.get("injection_rate", c.cases.injection_rate);
    cr.get("injection_delta_t", c.cases.injection_delta_t);
    if (const json* k = cr.sub("permeability")) {
      Reader kr(*k, "cases.permeability");
      kr.get("octaves", c.cases.perlin.octaves);
      kr.get("base_frequency", c.cases.perlin.base_frequency);
      kr.get("persistence", c.cases.perlin.persistence);
      kr.get("k_min", c.cases.perlin.k_min);
      kr.get("k_max", c.cases.perlin.k_max);
      kr.get("log_space", c.cases.perlin.log_space);
      kr.finish();
    }
    if (const json* h = cr.sub("hydro")) {
      Reader hr(*h, "cases.hydro");
      auto& hp = c.cases.hydro;
      hr.get("grad_p", hp.grad_p);
      hr.get("fluid_viscosity", hp.fluid_viscosity);
      hr.get("fluid_density", hp.fluid_density);
      hr.get("gravity", hp.gravity);
      hr.get("porosity", hp.porosity);
      hr.get("aquifer_thickness", hp.aquifer_thickness);
      hr.get("tolerance", hp.tolerance);
      hr.get("max_iterations", hp.max_iterations);
      hr.finish();
    }
    if (const json* t = cr.sub("thermal")) {
      Reader tr(*t, "cases.thermal");
      auto& tp = c.cases.thermal;
      tr.get("conductivity", tp.conductivity);
      tr.get("density", tp.density);
      tr.get("specific_heat", tp.specific_heat);
      tr.get("background_t", tp.background_t);
      tr.get("dispersivity", tp.dispersivity);
      tr.get("tolerance", tp.tolerance);
      tr.get("max_iterations", tp.max_iterations);
      tr.finish();
    }
    cr.finish();
  }
  if (const json* t = r.sub("trace")) {
    Reader tr(*t, "trace");
    std::string scheme(tracer::scheme_name(c.trace.scheme));
    tr.get("scheme", scheme);
    with_prefix("trace.scheme", [&] {
      try {
        c.trace.scheme = tracer::scheme_from_name(scheme);
      } catch (const Error& e) {
        throw ConfigError("", e.what());
      }
    });
    tr.get("step_seconds", c.trace.step);
    tr.get("max_steps", c.trace.max_steps);
    tr.get("offset_cells", c.trace.offset_cells);
    tr.get("fade", c.trace.fade);
    tr.get("adaptive_tolerance", c.trace.adaptive_tolerance);
    tr.finish();
  }
  if (const json* s = r.sub("step1")) read_step(*s, "step1", c.step1);
  if (const json* s = r.sub("step3")) read_step(*s, "step3", c.step3);
  if (const json* a = r.sub("ablations")) {
    Reader ar(*a, "ablations");
    ar.get("train_in_sequence", c.ablations.train_in_sequence);
    ar.get("zero_padding", c.ablations.zero_padding);
    ar.get("no_partitioning", c.ablations.no_partitioning);
    std::string variant(variant_name(c.ablations.streamline_variant));
    ar.get("streamline_variant", variant);
    c.ablations.streamline_variant = variant_from_name(variant);
    ar.finish();
  }
  r.get("tile_output", c.tile_output);
  if (const json* s = r.sub("scaling")) {
    Reader sr(*s, "scaling");
    sr.get("factor", c.scaling.factor);
    sr.get("enabled", c.scaling.enabled);
    sr.finish();
  }
  r.finish();
  try {
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("", e.what());
  }
  return c;
}

}  // namespace plumecast::pipeline
