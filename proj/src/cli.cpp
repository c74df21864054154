#include "plumecast/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "plumecast/config.hpp"
#include "plumecast/dataio.hpp"
#include "plumecast/error.hpp"
#include "plumecast/field_io.hpp"
#include "plumecast/metrics.hpp"
#include "plumecast/neural/checkpoint.hpp"
#include "plumecast/pipeline.hpp"
#include "plumecast/render.hpp"
#include "plumecast/simkit.hpp"
#include "plumecast/tracer.hpp"

namespace plumecast {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void print_error(const std::string& kind, const std::string& message, const std::string& field = {}) {
  json e = {{"error", kind}, {"message", message}};
  if (!field.empty()) e["field"] = field;
  std::cerr << e.dump() << std::endl;
}

pipeline::PipelineConfig load_config(const std::string& path) {
  if (path.empty()) return pipeline::desk_protocol();
  if (!fs::exists(path)) throw ConfigError("config", "no such file " + path);
  json j;
  try {
    j = read_json_file(path);
  } catch (const IoError& e) {
    throw ConfigError("config", e.what());
  }
  return pipeline::PipelineConfig::from_json(j);
}

dataio::NormStats stats_from_header(const json& header) { return dataio::NormStats::from_json(header.at("norm_stats")); }

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"plumecast: local-global groundwater heat plume surrogate"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand help for all subcommands");

  // generate
  auto* gen = app.add_subcommand("generate", "Synthesize one simulation case (k, pumps, p, v, T, streamlines)");
  std::string gen_out, gen_role = "train", config_path;
  std::uint64_t seed = 1;
  std::optional<std::size_t> gen_width, gen_height, gen_pumps;
  gen->add_option("--out", gen_out, "Case directory")->required();
  gen->add_option("--role", gen_role, "train | val | test | scaling");
  gen->add_option("--seed", seed, "Root seed");
  gen->add_option("--config", config_path, "Pipeline config JSON (default: 3dp-desk protocol)");
  gen->add_option("--width", gen_width, "Domain width in cells");
  gen->add_option("--height", gen_height, "Domain height in cells");
  gen->add_option("--pumps", gen_pumps, "Number of pumps");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Solve Darcy flow and heat transport for a case's k and i");
  std::string sim_case;
  sim->add_option("--case", sim_case, "Case directory")->required();
  sim->add_option("--config", config_path, "Pipeline config JSON");

  // trace
  auto* tr = app.add_subcommand("trace", "Trace streamlines from every pump and embed them as s and s_o");
  std::string tr_case, tr_scheme = "rk4";
  std::size_t tr_steps = 10000, tr_offset = 10;
  double tr_step = 86400.0;
  bool tr_no_fade = false;
  tr->add_option("--case", tr_case, "Case directory with vx, vy, i")->required();
  tr->add_option("--scheme", tr_scheme, "rk2 | rk4 | adaptive_implicit");
  tr->add_option("--steps", tr_steps, "Maximum number of steps");
  tr->add_option("--step-seconds", tr_step, "Time step in seconds");
  tr->add_option("--offset", tr_offset, "Offset of the side streamlines in cells");
  tr->add_flag("--no-fade", tr_no_fade, "Write 1 to every visited cell");

  // partition
  auto* part = app.add_subcommand("partition", "Count overlapping training patches");
  std::string part_case;
  std::optional<std::size_t> part_w, part_h;
  std::size_t part_box = 256, part_skip = 16;
  part->add_option("--case", part_case, "Case directory (grid taken from it)");
  part->add_option("--width", part_w, "Domain width when no case is given");
  part->add_option("--height", part_h, "Domain height when no case is given");
  part->add_option("--box", part_box, "Patch box length");
  part->add_option("--skip", part_skip, "Skip per direction");

  // train
  auto* trn = app.add_subcommand("train", "Train the Step-1 or Step-3 network");
  int trn_step = 1;
  std::string trn_train, trn_val, trn_out;
  trn->add_option("--step", trn_step, "1 (velocity) or 3 (temperature)")->required()->check(CLI::IsMember({1, 3}));
  trn->add_option("--config", config_path, "Pipeline config JSON");
  trn->add_option("--train", trn_train, "Training case directory")->required();
  trn->add_option("--val", trn_val, "Validation case directory")->required();
  trn->add_option("--out", trn_out, "Checkpoint path (.lgc1)")->required();

  // infer
  auto* inf = app.add_subcommand("infer", "Run Step 1 -> Step 2 -> Step 3 on a case");
  std::string inf_case, inf_models, inf_out;
  inf->add_option("--case", inf_case, "Case directory with p, k, i")->required();
  inf->add_option("--models", inf_models, "Directory holding step1.lgc1 and step3.lgc1")->required();
  inf->add_option("--out", inf_out, "Output directory")->required();
  inf->add_option("--config", config_path, "Pipeline config JSON (trace settings, tiling)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Compare a prediction with a label field");
  std::string ev_pred, ev_label, ev_channel = "T";
  ev->add_option("--pred", ev_pred, "Predicted field (.lgf1)")->required();
  ev->add_option("--label", ev_label, "Label field (.lgf1)")->required();
  ev->add_option("--channel", ev_channel, "Channel name (PAT only for T)");

  // render
  auto* rd = app.add_subcommand("render", "Write a field as a PGM/PPM heatmap");
  std::string rd_field, rd_out, rd_map = "grayscale";
  std::optional<double> rd_min, rd_max;
  std::size_t rd_component = 0;
  rd->add_option("--field", rd_field, "Field (.lgf1)")->required();
  rd->add_option("--out", rd_out, "Image path")->required();
  rd->add_option("--colormap", rd_map, "grayscale | diverging");
  rd->add_option("--min", rd_min, "Clamp minimum");
  rd->add_option("--max", rd_max, "Clamp maximum");
  rd->add_option("--component", rd_component, "Channel of a multi-channel field");

  // run-experiment
  auto* rx = app.add_subcommand("run-experiment", "Generate data, train both steps and evaluate");
  std::string rx_protocol = "3dp-desk", rx_ablation = "baseline", rx_out, rx_cache;
  std::optional<std::uint64_t> rx_seed;
  bool rx_no_render = false, rx_no_scaling = false, rx_quiet = false;
  rx->add_option("--protocol", rx_protocol, "Experiment protocol")->check(CLI::IsMember({"3dp-desk"}));
  rx->add_option("--ablation", rx_ablation, "baseline | train_in_sequence | zero_padding | no_partitioning | s_only | so_only | no_streamlines | not_faded");
  rx->add_option("--out", rx_out, "Output directory")->required();
  rx->add_option("--config", config_path, "Pipeline config JSON");
  rx->add_option("--seed", rx_seed, "Root seed (overrides the config)");
  rx->add_option("--cache", rx_cache, "Cache directory for cases and Step-1 models");
  rx->add_flag("--no-render", rx_no_render, "Skip heatmap images");
  rx->add_flag("--no-scaling", rx_no_scaling, "Skip the larger-domain run");
  rx->add_flag("--quiet", rx_quiet, "No progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (*gen) {
      auto cfg = load_config(config_path);
      if (gen_width) cfg.cases.grid.width = *gen_width;
      if (gen_height) cfg.cases.grid.height = *gen_height;
      if (gen_pumps) cfg.cases.pump_count = *gen_pumps;
      cfg.validate();
      const auto role = dataio::role_from_name(gen_role);
      const auto g = pipeline::generate_case(cfg.cases, cfg.trace, pipeline::case_seed(seed, role), role);
      dataio::save_case(gen_out, g.bundle);
      emit({{"case", gen_out}, {"provenance", g.bundle.provenance}});
    } else if (*sim) {
      const auto cfg = load_config(config_path);
      auto bundle = dataio::load_case(sim_case);
      const PumpSet pumps = pipeline::pumps_of(bundle, cfg.cases);
      const auto darcy = simkit::darcy_solve(bundle.field("k"), pumps, cfg.cases.hydro);
      const VectorField2D v = quantize_f32(darcy.velocity);
      const auto heat = simkit::heat_transport(v, pumps, cfg.cases.thermal, cfg.cases.hydro);
      save_field(fs::path(sim_case) / "vx.lgf1", v.vx_field(), {Unit::meters_per_year, {}, {}, {}});
      save_field(fs::path(sim_case) / "vy.lgf1", v.vy_field(), {Unit::meters_per_year, {}, {}, {}});
      save_field(fs::path(sim_case) / "T.lgf1", heat.temperature, {Unit::celsius, {}, {}, {}});
      save_field(fs::path(sim_case) / "head.lgf1", darcy.head, {Unit::head_m, {}, {}, {{"note", "solved head, diagnostic"}}});
      emit({{"darcy", darcy.report.to_json()},
            {"heat", heat.report.to_json()},
            {"mass_balance_error", simkit::mass_balance_error(bundle.field("k"), pumps, cfg.cases.hydro, darcy.head)}});
    } else if (*tr) {
      tracer::TraceConfig tc;
      try {
        tc.scheme = tracer::scheme_from_name(tr_scheme);
      } catch (const Error& e) {
        throw ConfigError("scheme", e.what());
      }
      tc.step = tr_step;
      tc.max_steps = tr_steps;
      tc.offset_cells = tr_offset;
      tc.fade = !tr_no_fade;
      tc.validate();
      const auto bundle = dataio::load_case(tr_case);
      const VectorField2D v(bundle.field("vx"), bundle.field("vy"));
      PumpSet pumps;
      pumps.positions = pump_cells(bundle.field("i"));
      const auto set = tracer::trace_all(v, pumps, tc);
      save_field(fs::path(tr_case) / "s.lgf1", quantize_f32(set.s_field));
      save_field(fs::path(tr_case) / "s_o.lgf1", quantize_f32(set.s_o_field));
      std::ofstream lines(fs::path(tr_case) / "streamlines.jsonl");
      if (!lines) throw IoError("cannot write streamlines.jsonl in " + tr_case);
      auto dump_line = [&](std::size_t pump, const std::string& kind, const tracer::Streamline& l) {
        json pts = json::array();
        for (const auto& p : l.points) pts.push_back({p.x, p.y});
        lines << json{{"pump", pump}, {"kind", kind}, {"termination", tracer::termination_name(l.terminated)},
                      {"points", pts}, {"times", l.times}}.dump()
              << "\n";
      };
      for (std::size_t i = 0; i < set.center.size(); ++i) {
        dump_line(i, "center", set.center[i]);
        dump_line(i, "offset_plus", set.offsets[i].first);
        dump_line(i, "offset_minus", set.offsets[i].second);
      }
      emit({{"pumps", pumps.positions.size()}, {"scheme", tracer::scheme_name(tc.scheme)}});
    } else if (*part) {
      GridSpec spec;
      if (!part_case.empty()) {
        spec = dataio::load_case(part_case).spec;
      } else {
        if (!part_w || !part_h) throw ConfigError("width", "give --case or both --width and --height");
        spec = GridSpec{*part_w, *part_h, 1.0};
      }
      const dataio::PatchSpec ps{part_box, part_skip};
      emit({{"width", spec.width}, {"height", spec.height}, {"box_length", part_box}, {"skip_per_direction", part_skip},
            {"count", dataio::partition_count(spec, ps)}});
    } else if (*trn) {
      const auto cfg = load_config(config_path);
      const auto train = dataio::load_case(trn_train);
      const auto val = dataio::load_case(trn_val);
      const auto stats = dataio::compute_stats({train.fields});
      const auto variant = cfg.ablations.streamline_variant;
      pipeline::StepConfig sc = trn_step == 1 ? pipeline::effective_step1(cfg) : pipeline::effective_step3(cfg);
      const auto inputs = trn_step == 1 ? pipeline::step1_inputs() : pipeline::step3_inputs(variant);
      const auto labels = trn_step == 1 ? pipeline::step1_labels() : pipeline::step3_labels();
      auto t3 = trn_step == 1 ? train : pipeline::with_streamlines(train, cfg.cases, cfg.trace, variant);
      auto v3 = trn_step == 1 ? val : pipeline::with_streamlines(val, cfg.cases, cfg.trace, variant);
      auto result = pipeline::train_step(t3, v3, sc, inputs, labels, stats, "step" + std::to_string(trn_step), &std::cerr);
      neural::save_checkpoint(trn_out, result.model,
                              {{"epoch", result.fit.best_epoch},
                               {"metrics", {{"val_huber", result.fit.best_val_huber}}},
                               {"step", result.to_json()},
                               {"inputs", inputs},
                               {"labels", labels},
                               {"norm_stats", stats.to_json()},
                               {"train", sc.train.to_json()}});
      emit(result.to_json());
    } else if (*inf) {
      auto cfg = load_config(config_path);
      neural::Checkpoint c1, c3;
      auto mv = neural::load_model(fs::path(inf_models) / "step1.lgc1", &c1);
      auto mt = neural::load_model(fs::path(inf_models) / "step3.lgc1", &c3);
      const auto stats = stats_from_header(c1.header);
      const auto inputs3 = c3.header.at("inputs").get<std::vector<std::string>>();
      for (auto v : {pipeline::StreamlineVariant::both, pipeline::StreamlineVariant::s_only,
                     pipeline::StreamlineVariant::so_only, pipeline::StreamlineVariant::none}) {
        if (pipeline::step3_inputs(v) == inputs3 && pipeline::step3_inputs(cfg.ablations.streamline_variant) != inputs3) {
          cfg.ablations.streamline_variant = v;
        }
      }
      const auto bundle = dataio::load_case(inf_case);
      const auto res = pipeline::infer(mv, mt, bundle, cfg, stats);
      const fs::path out(inf_out);
      save_vector_field(out / "v_pred.lgf1", res.v_pred, {Unit::meters_per_year, {}, {}, {}});
      save_field(out / "s_pred.lgf1", res.s_pred);
      save_field(out / "s_o_pred.lgf1", res.s_o_pred);
      auto region = [](const Region& r) { return json{{"row0", r.row0}, {"col0", r.col0}, {"height", r.height}, {"width", r.width}}; };
      save_field(out / "T_pred.lgf1", res.t_pred, {Unit::celsius, {}, {}, {{"region", region(res.t_region)}}});
      emit({{"v_region", region(res.v_region)}, {"t_region", region(res.t_region)},
            {"step1_margin", neural::margin(mv.config())}, {"step3_margin", neural::margin(mt.config())}});
    } else if (*ev) {
      const auto pred = load_field(ev_pred);
      auto label = load_field(ev_label);
      const auto pmeta = fs::exists(meta_path(ev_pred)) ? read_meta(meta_path(ev_pred)) : FieldMeta{};
      if (!(pred.spec() == label.spec()) && pmeta.provenance.contains("region")) {
        const auto& r = pmeta.provenance.at("region");
        label = label.crop({r.at("row0").get<std::size_t>(), r.at("col0").get<std::size_t>(),
                            r.at("height").get<std::size_t>(), r.at("width").get<std::size_t>()});
      }
      if (!(pred.spec() == label.spec())) throw ShapeError("prediction and label grids differ");
      const auto lmeta = fs::exists(meta_path(ev_label)) ? read_meta(meta_path(ev_label)) : FieldMeta{};
      dataio::ChannelRange range{label.min(), label.max()};
      if (lmeta.norm_min && lmeta.norm_max) range = {*lmeta.norm_min, *lmeta.norm_max};
      if (range.degenerate()) range.max = range.min + 1.0;
      metrics::MetricsReport rep;
      rep.width = pred.spec().width;
      rep.height = pred.spec().height;
      rep.channels[ev_channel] =
          metrics::evaluate_channel(dataio::normalize(pred, range), dataio::normalize(label, range), range, ev_channel);
      emit(rep.to_json());
    } else if (*rd) {
      const auto img = read_lgf1(rd_field);
      if (rd_component >= img.channels) throw ConfigError("component", "field has " + std::to_string(img.channels) + " channel(s)");
      const std::size_t n = img.spec.cells();
      std::vector<double> values(img.values.begin() + rd_component * n, img.values.begin() + (rd_component + 1) * n);
      render::RenderConfig rc{render::colormap_from_name(rd_map), rd_min, rd_max};
      render::render(ScalarField2D(img.spec, Unit::unitless, std::move(values)), rd_out, rc);
      emit({{"image", rd_out}});
    } else if (*rx) {
      auto cfg = load_config(config_path);
      if (rx_seed) cfg.seed = *rx_seed;
      if (rx_ablation != "baseline") {
        const auto a = pipeline::ablation_from_name(rx_ablation);
        cfg.ablations = a;
      }
      if (rx_no_scaling) cfg.scaling.enabled = false;
      cfg.validate();
      pipeline::ExperimentOptions opts;
      if (!rx_cache.empty()) opts.cache_dir = fs::path(rx_cache);
      opts.render = !rx_no_render;
      opts.log = rx_quiet ? nullptr : &std::cerr;
      const auto result = pipeline::run_experiment(cfg, rx_out, opts);
      emit({{"out", rx_out}, {"ordering", result.report.at("ordering")}});
    }
  } catch (const ConfigError& e) {
    print_error(e.kind(), e.detail(), e.field());
    return 2;
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
    return 1;
  } catch (const nlohmann::json::exception& e) {
    print_error("format", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("error", e.what());
    return 1;
  }
  return 0;
}

}  // namespace plumecast
