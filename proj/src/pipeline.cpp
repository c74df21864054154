#include "plumecast/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "plumecast/error.hpp"
#include "plumecast/field_io.hpp"
#include "plumecast/neural/checkpoint.hpp"
#include "plumecast/render.hpp"
#include "plumecast/rng.hpp"
#include "plumecast/simkit.hpp"
#include "plumecast/synth.hpp"
#include "plumecast/tracer.hpp"

namespace plumecast::pipeline {

namespace fs = std::filesystem;
using dataio::CaseBundle;
using dataio::NormStats;
using nlohmann::json;

namespace {

json region_json(const Region& r) { return {{"row0", r.row0}, {"col0", r.col0}, {"height", r.height}, {"width", r.width}}; }

Region translate(const Region& inner, const Region& outer) {
  return {outer.row0 + inner.row0, outer.col0 + inner.col0, inner.height, inner.width};
}

std::size_t largest_compatible(const neural::ConvNetConfig& cfg, std::size_t extent) {
  for (std::size_t m = extent; m >= 1; --m) {
    if (neural::size_compatible(cfg, m)) return m;
  }
  throw ShapeError("extent " + std::to_string(extent) + " is below the smallest size the model accepts (" +
                   std::to_string(neural::next_compatible_size(cfg, 1)) + ")");
}

ScalarField2D from_plane(const neural::Tensor<float>& t, std::size_t channel, const GridSpec& spec) {
  const float* p = t.channel(0, channel);
  return {spec, Unit::unitless, std::vector<double>(p, p + t.plane())};
}

void say(Log log, const std::string& line) {
  if (log) *log << line << std::endl;
}

json solver_summary(const simkit::SolverReport& r) {
  json j = r.to_json();
  j.erase("residual_history");
  return j;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::uint64_t case_seed(std::uint64_t seed, dataio::Role role) { return substream(seed, "case/" + dataio::role_name(role)); }

std::pair<ScalarField2D, ScalarField2D> streamline_channels(const VectorField2D& v, const PumpSet& pumps,
                                                            const tracer::TraceConfig& tc, bool fade) {
  tracer::TraceConfig t = tc;
  t.fade = fade;
  auto set = tracer::trace_all(v, pumps, t);
  return {quantize_f32(set.s_field), quantize_f32(set.s_o_field)};
}

GeneratedCase generate_case(const CaseConfig& cc, const tracer::TraceConfig& tc, std::uint64_t cseed,
                            dataio::Role role) {
  const GridSpec& g = cc.grid;
  synth::PerlinConfig pc = cc.perlin;
  pc.seed = substream(cseed, "perlin");
  const ScalarField2D k = quantize_f32(synth::generate_permeability(pc, g));
  PumpSet pumps = synth::place_pumps(substream(cseed, "pumps"), cc.pump_count, g, cc.min_spacing, cc.border);
  pumps.injection_rate = cc.injection_rate;
  pumps.injection_delta_t = cc.injection_delta_t;

  const ScalarField2D p = quantize_f32(simkit::initial_head(g, cc.hydro));
  const auto darcy = simkit::darcy_solve(k, pumps, cc.hydro);
  const VectorField2D v = quantize_f32(darcy.velocity);
  const auto heat = simkit::heat_transport(v, pumps, cc.thermal, cc.hydro);
  auto [s, s_o] = streamline_channels(v, pumps, tc, tc.fade);

  GeneratedCase out;
  out.bundle.role = role;
  out.bundle.spec = g;
  out.bundle.set("p", p);
  out.bundle.set("k", k);
  out.bundle.set("i", rasterize_pumps(pumps, g));
  out.bundle.set("vx", v.vx_field());
  out.bundle.set("vy", v.vy_field());
  out.bundle.set("s", std::move(s));
  out.bundle.set("s_o", std::move(s_o));
  out.bundle.set("T", quantize_f32(heat.temperature));
  out.bundle.provenance = {{"case_seed", cseed},
                           {"role", dataio::role_name(role)},
                           {"pump_count", pumps.positions.size()},
                           {"darcy", solver_summary(darcy.report)},
                           {"heat", solver_summary(heat.report)}};
  out.pumps = std::move(pumps);
  out.darcy = darcy.report;
  out.heat = heat.report;
  return out;
}

PumpSet pumps_of(const CaseBundle& bundle, const CaseConfig& cc) {
  PumpSet p;
  p.positions = pump_cells(bundle.field("i"));
  p.injection_rate = cc.injection_rate;
  p.injection_delta_t = cc.injection_delta_t;
  return p;
}

CaseBundle with_streamlines(const CaseBundle& bundle, const CaseConfig& cc, const tracer::TraceConfig& tc,
                            StreamlineVariant variant) {
  const bool fade = variant == StreamlineVariant::not_faded ? false : tc.fade;
  if (bundle.has("s") && bundle.has("s_o") && fade == tc.fade) return bundle;
  CaseBundle out = bundle;
  const VectorField2D v(bundle.field("vx"), bundle.field("vy"));
  auto [s, s_o] = streamline_channels(v, pumps_of(bundle, cc), tc, fade);
  out.fields.erase("s");
  out.fields.erase("s_o");
  out.set("s", std::move(s));
  out.set("s_o", std::move(s_o));
  return out;
}

Region compatible_window(const neural::ConvNetConfig& cfg, const GridSpec& spec) {
  const std::size_t h = largest_compatible(cfg, spec.height);
  const std::size_t w = largest_compatible(cfg, spec.width);
  return {(spec.height - h) / 2, (spec.width - w) / 2, h, w};
}

Region output_region(const neural::ConvNetConfig& cfg, const Region& in) {
  const std::size_t oh = neural::output_size(cfg, in.height);
  const std::size_t ow = neural::output_size(cfg, in.width);
  return {in.row0 + dataio::central_crop(in.height, oh).before, in.col0 + dataio::central_crop(in.width, ow).before, oh,
          ow};
}

json TrainedStep::to_json() const {
  return {{"fit", fit.to_json()},
          {"box_length", box_length},
          {"samples", samples},
          {"parameter_count", neural::parameter_count(model.config())},
          {"margin", neural::margin(model.config())}};
}

TrainedStep train_step(const CaseBundle& train, const CaseBundle& val, const StepConfig& sc,
                       const std::vector<std::string>& inputs, const std::vector<std::string>& labels,
                       const NormStats& stats, const std::string& label, Log log) {
  const auto& mc = sc.model;
  auto out_size = [&](std::size_t n) { return neural::output_size(mc, n); };
  dataio::SampleSet tr;
  std::size_t box = 0;
  if (sc.full_image) {
    tr = dataio::assemble(train.crop(compatible_window(mc, train.spec)), inputs, labels, stats, std::nullopt, out_size);
  } else {
    const std::size_t limit = std::min({sc.patch.box_length, train.spec.width, train.spec.height});
    box = largest_compatible(mc, limit);
    const dataio::PatchSpec ps{box, std::min(sc.patch.skip_per_direction, box)};
    tr = dataio::assemble(train, inputs, labels, stats, ps, out_size);
  }
  const auto va = dataio::assemble(val.crop(compatible_window(mc, val.spec)), inputs, labels, stats, std::nullopt,
                                   out_size);
  say(log, label + ": " + std::to_string(tr.inputs.n) + " samples of " + std::to_string(tr.inputs.h) + "x" +
               std::to_string(tr.inputs.w) + ", " + std::to_string(neural::parameter_count(mc)) + " parameters");

  TrainedStep result{neural::UNet<float>(mc, substream(sc.train.seed, "init/" + label)), {}, box, tr.inputs.n};
  const auto t0 = std::chrono::steady_clock::now();
  result.fit = neural::fit(result.model, tr.inputs, tr.labels, va.inputs, va.labels, sc.train,
                           [&](std::size_t epoch, double loss, double val_huber) {
                             char buf[160];
                             std::snprintf(buf, sizeof buf, "%s epoch %zu: train %s %.6g, val huber %.6g (%.1fs)",
                                           label.c_str(), epoch, std::string(neural::loss_name(sc.train.loss)).c_str(),
                                           loss, val_huber, seconds_since(t0));
                             say(log, buf);
                           });
  return result;
}

TrainedStep train_step1(const CaseBundle& train, const CaseBundle& val, const StepConfig& sc, const NormStats& stats,
                        Log log) {
  return train_step(train, val, sc, step1_inputs(), step1_labels(), stats, "step1", log);
}

TrainedStep train_step3(const CaseBundle& train, const CaseBundle& val, const StepConfig& sc,
                        StreamlineVariant variant, const NormStats& stats, Log log) {
  return train_step(train, val, sc, step3_inputs(variant), step3_labels(), stats, "step3", log);
}

std::vector<ScalarField2D> apply_model(neural::UNet<float>& model, const CaseBundle& bundle,
                                       const std::vector<std::string>& inputs, const NormStats& stats,
                                       std::size_t tile_output, Region* out_region) {
  const auto& mc = model.config();
  if (mc.in_channels != inputs.size()) {
    throw ShapeError("model takes " + std::to_string(mc.in_channels) + " channels, signature has " +
                     std::to_string(inputs.size()));
  }
  const Region window = compatible_window(mc, bundle.spec);
  CaseBundle sub;
  sub.spec = GridSpec{window.width, window.height, bundle.spec.cell_size};
  for (const auto& ch : inputs) sub.fields.emplace(ch, bundle.field(ch).crop(window));
  const auto y = neural::infer_tiled(model, dataio::stack_channels(sub, inputs, stats), tile_output);
  const Region region = output_region(mc, window);
  const GridSpec spec{region.width, region.height, bundle.spec.cell_size};
  std::vector<ScalarField2D> out;
  for (std::size_t c = 0; c < y.c; ++c) out.push_back(from_plane(y, c, spec));
  if (out_region) *out_region = region;
  return out;
}

StepOneOutput run_step1(neural::UNet<float>& model_v, const CaseBundle& bundle, const NormStats& stats,
                        std::size_t tile_output) {
  StepOneOutput s1;
  const auto fields = apply_model(model_v, bundle, step1_inputs(), stats, tile_output, &s1.v_region);
  s1.input_region = compatible_window(model_v.config(), bundle.spec);
  const auto vx = dataio::denormalize(fields[0], stats.at("vx"), Unit::meters_per_year);
  const auto vy = dataio::denormalize(fields[1], stats.at("vy"), Unit::meters_per_year);
  s1.v_pred = quantize_f32(VectorField2D(vx, vy));
  return s1;
}

CaseBundle predicted_inputs(const CaseBundle& bundle, const StepOneOutput& s1, const CaseConfig& cc,
                            const tracer::TraceConfig& tc, StreamlineVariant variant) {
  CaseBundle out = bundle.crop(s1.v_region);
  for (const char* ch : {"vx", "vy", "s", "s_o"}) out.fields.erase(ch);
  out.set("vx", s1.v_pred.vx_field());
  out.set("vy", s1.v_pred.vy_field());
  const bool fade = variant == StreamlineVariant::not_faded ? false : tc.fade;
  auto [s, s_o] = streamline_channels(s1.v_pred, pumps_of(out, cc), tc, fade);
  out.set("s", std::move(s));
  out.set("s_o", std::move(s_o));
  return out;
}

Inference infer(neural::UNet<float>& model_v, neural::UNet<float>& model_t, const CaseBundle& bundle,
                const PipelineConfig& cfg, const NormStats& stats) {
  const auto variant = cfg.ablations.streamline_variant;
  const StepOneOutput s1 = run_step1(model_v, bundle, stats, cfg.tile_output);
  const CaseBundle pred = predicted_inputs(bundle, s1, cfg.cases, cfg.trace, variant);
  Region local;
  auto t = apply_model(model_t, pred, step3_inputs(variant), stats, cfg.tile_output, &local);
  Inference inf;
  inf.v_region = s1.v_region;
  inf.t_region = translate(local, s1.v_region);
  inf.v_pred = s1.v_pred;
  inf.s_pred = pred.field("s");
  inf.s_o_pred = pred.field("s_o");
  inf.t_pred = quantize_f32(dataio::denormalize(t[0], stats.at("T"), Unit::celsius));
  inf.t_pred_normalized = std::move(t[0]);
  return inf;
}

json Evaluation::to_json() const {
  return {{"v_region", region_json(v_region)},
          {"t_region", region_json(t_region)},
          {"step1", step1.to_json()},
          {"step3_on_vsim", step3_on_vsim.to_json()},
          {"pipeline", pipeline.to_json()}};
}

Evaluation evaluate_pipeline(neural::UNet<float>& model_v, neural::UNet<float>& model_t, const CaseBundle& bundle,
                             const PipelineConfig& cfg, const NormStats& stats) {
  const auto variant = cfg.ablations.streamline_variant;
  Evaluation ev;
  ev.inference = infer(model_v, model_t, bundle, cfg, stats);
  ev.v_region = ev.inference.v_region;
  ev.t_region = ev.inference.t_region;

  // Isolated Step 3: simulated velocity and streamlines traced on it over the
  // full domain, cut to the same window the pipeline sees.
  const CaseBundle iso = with_streamlines(bundle, cfg.cases, cfg.trace, variant).crop(ev.v_region);
  Region local;
  auto t_iso = apply_model(model_t, iso, step3_inputs(variant), stats, cfg.tile_output, &local);
  if (!(translate(local, ev.v_region) == ev.t_region)) {
    throw StateError("isolated Step-3 region differs from the pipeline region");
  }
  ev.t_isolated = quantize_f32(dataio::denormalize(t_iso[0], stats.at("T"), Unit::celsius));

  const auto& tr = stats.at("T");
  const auto t_label = dataio::normalize(bundle.field("T").crop(ev.t_region), tr);
  auto fill = [&](metrics::MetricsReport& rep, const std::string& ch, const ScalarField2D& pred,
                  const ScalarField2D& label) {
    rep.channels[ch] = metrics::evaluate_channel(pred, label, stats.at(ch), ch);
    rep.width = label.spec().width;
    rep.height = label.spec().height;
  };
  fill(ev.step3_on_vsim, "T", t_iso[0], t_label);
  fill(ev.pipeline, "T", ev.inference.t_pred_normalized, t_label);
  const auto& v = ev.inference.v_pred;
  fill(ev.step1, "vx", dataio::normalize(v.vx_field(), stats.at("vx")),
       dataio::normalize(bundle.field("vx").crop(ev.v_region), stats.at("vx")));
  fill(ev.step1, "vy", dataio::normalize(v.vy_field(), stats.at("vy")),
       dataio::normalize(bundle.field("vy").crop(ev.v_region), stats.at("vy")));
  return ev;
}

// --- experiment driver ----------------------------------------------------------

std::string text_digest(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return text_digest({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
}

namespace {

CaseBundle obtain_case(const CaseConfig& cc, const tracer::TraceConfig& tc, std::uint64_t cseed, dataio::Role role,
                       const ExperimentOptions& opts, const PipelineConfig& full) {
  std::optional<fs::path> dir;
  if (opts.cache_dir) {
    PipelineConfig keycfg = full;
    keycfg.cases = cc;
    const json key = {{"cases", keycfg.to_json()["cases"]}, {"trace", keycfg.to_json()["trace"]}, {"seed", cseed},
                      {"role", dataio::role_name(role)}};
    dir = *opts.cache_dir / ("case-" + text_digest(key.dump()));
    if (fs::exists(*dir / "meta.json")) {
      say(opts.log, "using cached " + dataio::role_name(role) + " case " + dir->string());
      return dataio::load_case(*dir);
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  GeneratedCase g = generate_case(cc, tc, cseed, role);
  char buf[200];
  std::snprintf(buf, sizeof buf, "generated %s case %zux%zu with %zu pumps (darcy %zu it, heat %zu it, %.1fs)",
                dataio::role_name(role).c_str(), cc.grid.width, cc.grid.height, g.pumps.positions.size(),
                g.darcy.iterations, g.heat.iterations, seconds_since(t0));
  say(opts.log, buf);
  if (dir) {
    // Round-trip through disk so cached and fresh runs see identical data.
    dataio::save_case(*dir, g.bundle);
    return dataio::load_case(*dir);
  }
  return std::move(g.bundle);
}

void write_case_outputs(const fs::path& dir, const Evaluation& ev, const CaseBundle& bundle, bool images) {
  const Region& tr = ev.t_region;
  save_vector_field(dir / "v_pred.lgf1", ev.inference.v_pred, {Unit::meters_per_year, {}, {}, {{"region", region_json(ev.v_region)}}});
  save_field(dir / "s_pred.lgf1", ev.inference.s_pred, {Unit::unitless, {}, {}, {{"region", region_json(ev.v_region)}}});
  save_field(dir / "s_o_pred.lgf1", ev.inference.s_o_pred, {Unit::unitless, {}, {}, {{"region", region_json(ev.v_region)}}});
  save_field(dir / "T_pipeline.lgf1", ev.inference.t_pred, {Unit::celsius, {}, {}, {{"region", region_json(tr)}}});
  save_field(dir / "T_isolated.lgf1", ev.t_isolated, {Unit::celsius, {}, {}, {{"region", region_json(tr)}}});
  if (!images) return;
  const ScalarField2D label = bundle.field("T").crop(tr);
  const double lo = label.min();
  const double hi = std::max(label.max(), lo + 1e-6);
  render::RenderConfig tcfg{render::Colormap::diverging, lo, hi};
  render::render(label, dir / "T_label.ppm", tcfg);
  render::render(ev.inference.t_pred, dir / "T_pipeline.ppm", tcfg);
  render::render(ev.t_isolated, dir / "T_isolated.ppm", tcfg);
  render::RenderConfig ecfg{render::Colormap::grayscale, 0.0, 1.0};
  render::render(render::abs_error(ev.inference.t_pred, label), dir / "T_pipeline_error.pgm", ecfg);
  render::render(render::abs_error(ev.t_isolated, label), dir / "T_isolated_error.pgm", ecfg);
  render::render(bundle.field("k").crop(tr), dir / "k.pgm");
}

json checkpoint_extra(const TrainedStep& t, const std::vector<std::string>& inputs,
                      const std::vector<std::string>& labels, const NormStats& stats, const StepConfig& sc) {
  return {{"epoch", t.fit.best_epoch},
          {"metrics", {{"val_huber", t.fit.best_val_huber}}},
          {"step", t.to_json()},
          {"inputs", inputs},
          {"labels", labels},
          {"norm_stats", stats.to_json()},
          {"train", sc.train.to_json()}};
}

TrainedStep from_checkpoint(const fs::path& path) {
  neural::Checkpoint info;
  neural::UNet<float> model = neural::load_model(path, &info);
  TrainedStep t{std::move(model), {}, 0, 0};
  const json& step = info.header.at("step");
  const json& fit = step.at("fit");
  t.fit.epochs_run = fit.at("epochs_run").get<std::size_t>();
  t.fit.best_epoch = fit.at("best_epoch").get<std::size_t>();
  t.fit.best_val_huber = fit.at("best_val_huber").get<double>();
  t.fit.train_loss = fit.at("train_loss").get<std::vector<double>>();
  t.fit.val_huber = fit.at("val_huber").get<std::vector<double>>();
  t.box_length = step.at("box_length").get<std::size_t>();
  t.samples = step.at("samples").get<std::size_t>();
  return t;
}

}  // namespace

ExperimentResult run_experiment(const PipelineConfig& cfg, const fs::path& out_dir, const ExperimentOptions& opts) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  const Log log = opts.log;
  const auto variant = cfg.ablations.streamline_variant;
  say(log, "experiment " + ablation_label(cfg.ablations) + " -> " + out_dir.string());

  std::map<std::string, CaseBundle> cases;
  json seeds = json::object();
  for (auto role : {dataio::Role::train, dataio::Role::val, dataio::Role::test}) {
    const auto cs = case_seed(cfg.seed, role);
    seeds[dataio::role_name(role)] = cs;
    cases.emplace(dataio::role_name(role), obtain_case(cfg.cases, cfg.trace, cs, role, opts, cfg));
  }
  std::vector<std::string> degenerate;
  const NormStats stats = dataio::compute_stats({cases.at("train").fields}, &degenerate);
  for (const auto& [role, bundle] : cases) dataio::save_case(out_dir / "cases" / role, bundle, stats);

  // Step 1, optionally shared through the cache (it does not depend on the
  // streamline variant).
  const StepConfig s1cfg = effective_step1(cfg);
  const json s1key = {{"cases", cfg.to_json()["cases"]},
                      {"trace", cfg.to_json()["trace"]},
                      {"seed", cfg.seed},
                      {"model", s1cfg.model.to_json()},
                      {"train", s1cfg.train.to_json()},
                      {"patch", {s1cfg.patch.box_length, s1cfg.patch.skip_per_direction}},
                      {"full_image", s1cfg.full_image}};
  const fs::path step1_path = out_dir / "models" / "step1.lgc1";
  std::optional<TrainedStep> step1;
  std::optional<fs::path> cached1;
  if (opts.cache_dir) cached1 = *opts.cache_dir / ("step1-" + text_digest(s1key.dump()) + ".lgc1");
  if (cached1 && fs::exists(*cached1)) {
    say(log, "using cached Step-1 model " + cached1->string());
    step1.emplace(from_checkpoint(*cached1));
  } else {
    step1.emplace(train_step1(cases.at("train"), cases.at("val"), s1cfg, stats, log));
    if (cached1) {
      neural::save_checkpoint(*cached1, step1->model, checkpoint_extra(*step1, step1_inputs(), step1_labels(), stats, s1cfg));
    }
  }
  neural::save_checkpoint(step1_path, step1->model,
                          checkpoint_extra(*step1, step1_inputs(), step1_labels(), stats, s1cfg));

  // Step 3 on simulated velocities (or on v_pred when training in sequence).
  const StepConfig s3cfg = effective_step3(cfg);
  CaseBundle train3, val3;
  if (cfg.ablations.train_in_sequence) {
    const auto a = run_step1(step1->model, cases.at("train"), stats, cfg.tile_output);
    const auto b = run_step1(step1->model, cases.at("val"), stats, cfg.tile_output);
    train3 = predicted_inputs(cases.at("train"), a, cfg.cases, cfg.trace, variant);
    val3 = predicted_inputs(cases.at("val"), b, cfg.cases, cfg.trace, variant);
  } else {
    train3 = with_streamlines(cases.at("train"), cfg.cases, cfg.trace, variant);
    val3 = with_streamlines(cases.at("val"), cfg.cases, cfg.trace, variant);
  }
  TrainedStep step3 = train_step3(train3, val3, s3cfg, variant, stats, log);
  neural::save_checkpoint(out_dir / "models" / "step3.lgc1", step3.model,
                          checkpoint_extra(step3, step3_inputs(variant), step3_labels(), stats, s3cfg));

  const Evaluation ev = evaluate_pipeline(step1->model, step3.model, cases.at("test"), cfg, stats);
  write_case_outputs(out_dir / "predictions" / "test", ev, cases.at("test"), opts.render);
  const double mae_iso = ev.step3_on_vsim.channels.at("T").mae;
  const double mae_pipe = ev.pipeline.channels.at("T").mae;
  char buf[200];
  std::snprintf(buf, sizeof buf, "test MAE T: step3 on v_sim %.5f degC, pipeline %.5f degC", mae_iso, mae_pipe);
  say(log, buf);

  json report = {{"ablation", ablation_label(cfg.ablations)},
                 {"streamline_variant", variant_name(variant)},
                 {"norm_stats", stats.to_json()},
                 {"degenerate_channels", degenerate},
                 {"step1", step1->to_json()},
                 {"step3", step3.to_json()},
                 {"test", ev.to_json()},
                 {"ordering", {{"mae_step3_on_vsim", mae_iso}, {"mae_pipeline", mae_pipe}, {"holds", mae_iso <= mae_pipe}}}};

  if (cfg.scaling.enabled) {
    CaseConfig big = cfg.cases;
    big.grid.width *= cfg.scaling.factor;
    big.grid.height *= cfg.scaling.factor;
    big.pump_count *= cfg.scaling.factor * cfg.scaling.factor;
    const auto cs = case_seed(cfg.seed, dataio::Role::scaling);
    seeds["scaling"] = cs;
    const CaseBundle scase = obtain_case(big, cfg.trace, cs, dataio::Role::scaling, opts, cfg);
    dataio::save_case(out_dir / "cases" / "scaling", scase, stats);
    const Evaluation sev = evaluate_pipeline(step1->model, step3.model, scase, cfg, stats);
    write_case_outputs(out_dir / "predictions" / "scaling", sev, scase, opts.render);
    report["scaling"] = sev.to_json();
    report["scaling"]["grid"] = {{"width", big.grid.width}, {"height", big.grid.height}};
    std::snprintf(buf, sizeof buf, "scaling %zux%zu MAE T: step3 on v_sim %.5f, pipeline %.5f", big.grid.width,
                  big.grid.height, sev.step3_on_vsim.channels.at("T").mae, sev.pipeline.channels.at("T").mae);
    say(log, buf);
  }
  write_json_file(out_dir / "report.json", report);

  json files = json::object();
  std::vector<fs::path> paths;
  for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) files[fs::relative(p, out_dir).generic_string()] = file_digest(p);
  json manifest = {{"schema", kSchemaVersion},
                   {"protocol", "3dp-desk"},
                   {"ablation", ablation_label(cfg.ablations)},
                   {"config", cfg.to_json()},
                   {"case_seeds", seeds},
                   {"files", files}};
  write_json_file(out_dir / "manifest.json", manifest);
  std::snprintf(buf, sizeof buf, "experiment finished in %.1fs", seconds_since(t_start));
  say(log, buf);
  return {report, manifest};
}

}  // namespace plumecast::pipeline
