/* Copyright 2026 The monobev Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "monobev/checkpoint.hpp"
#include "monobev/errors.hpp"
#include "monobev/fileio.hpp"
#include "monobev/maskcurriculum.hpp"
#include "monobev/metrics.hpp"
#include "monobev/render.hpp"
#include "monobev/synthscene.hpp"
#include "monobev/trainer.hpp"

namespace monobev::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void configure_logging() {
  static const auto logger = spdlog::stderr_color_mt("monobev");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* level = std::getenv("MONOBEV_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
}

FovFilterSpec fov_from_total(double total_deg) {
  FovFilterSpec spec;
  spec.tolerance_deg = 0.5 * (total_deg - spec.aperture_deg);
  if (spec.tolerance_deg < 0.0) {
    spec.aperture_deg = total_deg;
    spec.tolerance_deg = 0.0;
  }
  spec.validate();
  return spec;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("not an integer list: '" + text + "'");
    }
  }
  return out;
}

// ---- generate -----------------------------------------------------------------

struct GenerateArgs {
  std::string out;
  int scenes = 10;
  std::uint64_t seed = 0;
  int height = 128;
  int width = 224;
  int grid = 50;
  double extent = 50.0;
  double duration = 3.0;
  double hz = 2.0;
  int actors = 6;
};

int cmd_generate(const GenerateArgs& a) {
  if (a.scenes < 1) throw ValidationError("--scenes must be at least 1");
  DatasetSpec spec;
  spec.seed = a.seed;
  spec.num_scenes = a.scenes;
  spec.rig.image_height = a.height;
  spec.rig.image_width = a.width;
  spec.grid.rows = spec.grid.cols = a.grid;
  spec.grid.extent = a.extent;
  spec.scene_template.duration_s = a.duration;
  spec.scene_template.frame_hz = a.hz;
  spec.scene_template.num_actors = a.actors;
  const auto scenes = generate_dataset(spec);
  save_dataset(scenes, a.out);
  spdlog::info("wrote {} scenes to {}", scenes.size(), a.out);
  return kOk;
}

// ---- train --------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::string dataset;
  std::string out;
  std::optional<int> epochs;
  std::optional<int> steps_per_epoch;
  std::string resume;
  std::optional<long> stop_at_step;
  bool dry_run = false;
  bool epoch_checkpoints = false;
};

TrainConfig resolve_config(const std::string& path, const std::string& mode,
                           std::optional<std::uint64_t> seed, const std::string& dataset,
                           std::optional<int> epochs, std::optional<int> steps) {
  TrainConfig c = path.empty() ? TrainConfig{} : load_train_config(path);
  if (!mode.empty()) c.mode = train_mode_from_string(mode);
  if (seed) c.seed = *seed;
  if (!dataset.empty()) c.dataset = dataset;
  if (epochs) c.epochs = *epochs;
  if (steps) c.steps_per_epoch = *steps;
  c.validate();
  return c;
}

void print_schedule(const TrainConfig& c, std::ostream& os) {
  const RunPlan plan = resolve_plan(c);
  const int steps = c.steps_per_epoch > 0 ? c.steps_per_epoch : 100;
  os << "# mode " << to_string(c.mode) << ", " << steps << " steps per epoch\n";
  os << "epoch\tmu\tsigma\tlr_first\tlr_last\tgt_filter\n";
  os << std::setprecision(6);
  for (int e = 0; e < c.epochs; ++e) {
    const MaskScheduleState st = effective_mask_state(c, plan, e);
    os << e << '\t' << st.mu << '\t' << st.sigma << '\t'
       << effective_lr(c, plan, e, 0, steps) << '\t'
       << effective_lr(c, plan, e, steps - 1, steps) << '\t'
       << (gt_filter_active(c, st) ? "on" : "off") << '\n';
  }
}

int cmd_train(const TrainArgs& a) {
  const TrainConfig c =
      resolve_config(a.config, a.mode, a.seed, a.dataset, a.epochs, a.steps_per_epoch);
  if (a.dry_run) {
    print_schedule(c, std::cout);
    return kOk;
  }
  if (a.out.empty()) throw ValidationError("--out is required unless --dry-run");
  RunOptions ro;
  ro.out_dir = a.out;
  if (!a.resume.empty()) ro.resume = fs::path(a.resume);
  ro.stop_at_step = a.stop_at_step;
  ro.save_epoch_checkpoints = a.epoch_checkpoints;
  ro.on_log = [](const json& j) {
    if (j.at("type") == "eval") {
      spdlog::info("epoch {} NDS {:.4f} mAP {:.4f} mIoU {:.4f}", j.at("epoch").get<int>(),
                   j.at("NDS").get<double>(), j.at("mAP").get<double>(),
                   j.at("mIoU").get<double>());
    } else {
      spdlog::debug("step {} loss {:.4f} lr {:.3g}", j.at("step").get<long>(),
                    j.at("loss_total").get<double>(), j.at("lr").get<double>());
    }
  };
  const TrainResult r = run_training(c, ro);
  write_file_atomic(fs::path(a.out) / "config.json", train_config_to_json(c).dump(2));
  spdlog::info("{} steps, {}", r.steps.size(), r.completed ? "completed" : "stopped early");
  return kOk;
}

// ---- predict / eval -----------------------------------------------------------

struct PredictArgs {
  std::string checkpoint;
  std::string dataset;
  std::string out;
  std::string split = "val";
  bool all_cameras = false;
  int top_k = 100;
};

std::vector<int> split_indices(const std::vector<SceneSequence>& scenes, const std::string& split) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(scenes.size()); ++i) {
    const bool val = is_validation_scene(i);
    if (split == "all" || (split == "val" && val) || (split == "train" && !val)) out.push_back(i);
  }
  return out;
}

int cmd_predict(const PredictArgs& a) {
  const BevModel model = load_model(a.checkpoint);
  const auto scenes = load_dataset(a.dataset);
  std::vector<SceneRef> refs;
  for (int i : split_indices(scenes, a.split)) refs.push_back({i, &scenes[static_cast<std::size_t>(i)]});
  if (refs.empty()) throw ValidationError("split '" + a.split + "' selects no scenes");
  EvalOptions eo;
  eo.front_only = !a.all_cameras;
  eo.top_k = a.top_k;
  save_predictions(a.out, run_inference(model, refs, eo));
  spdlog::info("wrote predictions for {} scenes to {}", refs.size(), a.out);
  return kOk;
}

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string report;
  double fov = 90.0;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  json out;
  if (!a.report.empty()) {
    const json stored = read_json_file(a.report);
    const EvalReport r = report_from_json(stored);
    const double nds = compute_nds(r.map, r.tp);
    out = stored;
    out["NDS"] = nds;
    if (stored.contains("NDS")) out["stored_NDS"] = stored.at("NDS");
    std::cout << std::fixed << std::setprecision(4) << "NDS " << nds;
    if (stored.contains("NDS")) {
      std::cout << " (stored " << stored.at("NDS").get<double>() << ", diff "
                << std::scientific << std::setprecision(2)
                << std::abs(nds - stored.at("NDS").get<double>()) << ")";
    }
    std::cout << '\n';
  } else {
    if (a.pred.empty() || a.gt.empty()) {
      throw ValidationError("eval needs --pred and --gt, or --report");
    }
    const auto preds = load_predictions(a.pred);
    const auto scenes = load_dataset(a.gt);
    std::optional<FovFilterSpec> fov;
    if (a.fov > 0.0 && a.fov < 360.0) fov = fov_from_total(a.fov);
    const EvalResult r = score_predictions(preds, scenes, fov);
    out = report_to_json(r.report);
    if (r.feature_gap) out["feature_gap"] = *r.feature_gap;
    std::cout << std::fixed << std::setprecision(4) << "NDS " << r.report.nds << " mAP "
              << r.report.map << " mIoU " << r.report.miou << '\n';
  }
  if (!a.out.empty()) write_file_atomic(a.out, out.dump(2));
  return kOk;
}

// ---- ablate -------------------------------------------------------------------

struct AblateArgs {
  std::string config;
  std::string dataset;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<int> steps_per_epoch;
};

int cmd_ablate(const AblateArgs& a) {
  TrainConfig c = resolve_config(a.config, "", a.seed, a.dataset, a.epochs, a.steps_per_epoch);
  if (c.dataset.empty()) throw ConfigError("dataset path missing (--dataset or config)");
  c.eval_every = 0;
  const auto scenes = load_dataset(c.dataset);
  RunOptions ro;
  ro.out_dir = a.out;
  const auto rows = run_ablation_grid(c, scenes, ro);
  const json table = ablation_to_json(rows);
  write_file_atomic(fs::path(a.out) / "ablation.json", table.dump(2));
  std::ostringstream tsv;
  tsv << std::setprecision(4) << std::fixed;
  const auto& cols = ablation_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) tsv << (i ? "\t" : "") << cols[i];
  tsv << '\n';
  for (const json& row : table.at("rows")) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      tsv << (i ? "\t" : "");
      if (row[i].is_boolean()) tsv << (row[i].get<bool>() ? "x" : "-");
      else if (row[i].is_null()) tsv << "error";
      else tsv << row[i].get<double>();
    }
    tsv << '\n';
  }
  write_file_atomic(fs::path(a.out) / "ablation.tsv", tsv.str());
  std::cout << tsv.str();
  int failed = 0;
  for (const auto& r : rows) failed += !r.error.empty();
  if (failed) spdlog::warn("{} of {} rows failed", failed, rows.size());
  return failed == static_cast<int>(rows.size()) ? kRuntimeError : kOk;
}

// ---- figures ------------------------------------------------------------------

struct MaskPreviewArgs {
  int epoch = 10;
  std::uint64_t seed = 0;
  std::string out;
  std::string dataset;
  int scene = 0;
  int frame = 0;
  bool random_patch = false;
  int block_size = 3;
  int patch_size = 8;
};

const FrameSample& pick_frame(const std::vector<SceneSequence>& scenes, int scene, int frame) {
  if (scene < 0 || scene >= static_cast<int>(scenes.size())) {
    throw ValidationError("scene " + std::to_string(scene) + " out of range [0, " +
                          std::to_string(scenes.size()) + ")");
  }
  const auto& frames = scenes[static_cast<std::size_t>(scene)].frames;
  if (frame < 0 || frame >= static_cast<int>(frames.size())) {
    throw ValidationError("frame " + std::to_string(frame) + " out of range [0, " +
                          std::to_string(frames.size()) + ")");
  }
  return frames[static_cast<std::size_t>(frame)];
}

int cmd_mask_preview(const MaskPreviewArgs& a) {
  std::vector<SceneSequence> scenes;
  if (a.dataset.empty()) {
    SceneSpec spec;
    spec.seed = a.seed;
    scenes.push_back(generate_scene(spec, default_rig(), BevGridSpec{}));
  } else {
    scenes = load_dataset(a.dataset);
  }
  const FrameSample& f = pick_frame(scenes, a.scene, a.frame);
  const CameraRig& rig = scenes[static_cast<std::size_t>(a.scene)].rig;
  const MaskScheduleState state = mask_schedule(a.epoch);
  Rng rng(a.seed);
  const int pr = rig.front().height / a.patch_size;
  const int pc = rig.front().width / a.patch_size;
  std::vector<std::optional<PatchMask>> masks(rig.size());
  for (std::size_t c = 0; c < rig.size(); ++c) {
    if (c == rig.front_index()) continue;
    const double ratio = sample_ratio(state, rng);
    masks[c] = a.random_patch ? random_patch_mask(pr, pc, ratio, rng)
                              : inverse_block_mask(pr, pc, ratio, a.block_size, rng);
    spdlog::info("{}: target {:.3f} achieved {:.3f}", rig.camera(c).id, ratio,
                 masks[c]->achieved_ratio);
  }
  write_png(a.out, mask_preview(f.images, rig, masks, a.patch_size, a.seed));
  spdlog::info("epoch {} (mu {:.1f}, sigma {:.1f}) preview written to {}", a.epoch, state.mu,
               state.sigma, a.out);
  return kOk;
}

struct RenderArgs {
  std::string checkpoint;
  std::string dataset;
  int scene = 0;
  int frame = 0;
  std::string out;
  std::string channels = "0,1";
  bool all_cameras = false;
  double score_threshold = 0.3;
  int scale = 8;
};

int cmd_render(const RenderArgs& a) {
  const std::vector<int> channels = parse_int_list(a.channels);
  const BevModel model = load_model(a.checkpoint);
  const auto scenes = load_dataset(a.dataset);
  const FrameSample& f = pick_frame(scenes, a.scene, a.frame);
  const SceneSequence& scene = scenes[static_cast<std::size_t>(a.scene)];
  for (int ch : channels) {
    if (ch < 0 || ch >= model.config().embed_dim()) {
      throw ValidationError("channel " + std::to_string(ch) + " out of range [0, " +
                            std::to_string(model.config().embed_dim()) + ")");
    }
  }

  ad::NoGradGuard no_grad;
  Rng unused(0);
  const auto idx = temporal_sampler(static_cast<int>(scene.frames.size()), scene.spec.frame_hz,
                                    a.frame, SamplerMode::kInfer, unused);
  std::vector<const FrameSample*> ptrs;
  for (int i : idx) ptrs.push_back(&scene.frames[static_cast<std::size_t>(i)]);
  std::vector<std::optional<PatchMask>> cam_masks(scene.rig.size());
  BevFigure fig;
  if (!a.all_cameras) {
    for (std::size_t c = 0; c < scene.rig.size(); ++c) {
      if (c == scene.rig.front_index()) continue;
      cam_masks[c] = PatchMask::full(model.config().patch_rows(), model.config().patch_cols());
      fig.masked_cameras.push_back(static_cast<int>(c));
    }
  }
  std::vector<std::vector<std::optional<PatchMask>>> masks;
  if (!a.all_cameras) masks.assign(ptrs.size(), cam_masks);
  const ForwardResult result = model.forward(ptrs, masks, scene.rig);

  const BevView view{scene.grid, a.scale};
  const fs::path out(a.out);
  write_png(out / "gt_segmentation.png", render_segmentation(f.bev_seg, view));
  fig.segmentation = threshold_segmentation(result.seg, scene.grid);
  fig.gt_boxes = f.boxes;
  fig.predictions = decode_detections(result.det, scene.grid, 100);
  fig.score_threshold = a.score_threshold;
  write_png(out / "prediction_bev.png", render_bev_figure(fig, scene.rig, view));
  for (int ch : channels) {
    std::ostringstream name;
    name << "feature_ch" << std::setw(2) << std::setfill('0') << ch << ".png";
    write_png(out / name.str(), render_feature_channel(result.bev.embeddings.value(), ch, view));
  }
  spdlog::info("figures written to {}", a.out);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  configure_logging();
  CLI::App app{"Single-camera BEV training harness"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate a synthetic multi-camera dataset");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--scenes", gen.scenes, "Number of scenes");
  g->add_option("--seed", gen.seed, "Base seed");
  g->add_option("--height", gen.height, "Image height in pixels");
  g->add_option("--width", gen.width, "Image width in pixels");
  g->add_option("--grid", gen.grid, "BEV cells per side");
  g->add_option("--extent", gen.extent, "BEV side length in meters");
  g->add_option("--duration", gen.duration, "Scene duration in seconds");
  g->add_option("--hz", gen.hz, "Frame rate");
  g->add_option("--actors", gen.actors, "Actors per scene");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", tr.config, "Training config (JSON)");
  t->add_option("--mode", tr.mode, "ours | baseline_1cam | baseline_6cam | ablation");
  t->add_option("--seed", tr.seed, "Seed override");
  t->add_option("--dataset", tr.dataset, "Dataset directory override");
  t->add_option("--out", tr.out, "Run directory");
  t->add_option("--epochs", tr.epochs, "Epoch count override");
  t->add_option("--steps-per-epoch", tr.steps_per_epoch, "Steps per epoch override");
  t->add_option("--resume", tr.resume, "Checkpoint to resume from");
  t->add_option("--stop-at-step", tr.stop_at_step, "Stop before this global step");
  t->add_flag("--epoch-checkpoints", tr.epoch_checkpoints, "Keep a checkpoint per epoch");
  t->add_flag("--dry-run", tr.dry_run, "Print the epoch schedule and exit");

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Write predictions of a checkpoint");
  p->add_option("--checkpoint", pr.checkpoint, "Checkpoint file")->required();
  p->add_option("--dataset", pr.dataset, "Dataset directory")->required();
  p->add_option("--out", pr.out, "Prediction directory")->required();
  p->add_option("--split", pr.split, "val | train | all")
      ->check(CLI::IsMember({"val", "train", "all"}));
  p->add_flag("--all-cameras", pr.all_cameras, "Feed all cameras instead of the front one");
  p->add_option("--top-k", pr.top_k, "Boxes kept per frame");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score predictions or recompute a stored report");
  e->add_option("--pred", ev.pred, "Prediction directory");
  e->add_option("--gt", ev.gt, "Ground-truth dataset directory");
  e->add_option("--report", ev.report, "Stored report JSON to recompute NDS from");
  e->add_option("--fov", ev.fov, "Total evaluated field of view in degrees (360: none)");
  e->add_option("--out", ev.out, "Report JSON path");

  AblateArgs ab;
  auto* b = app.add_subcommand("ablate", "Train all eight feature combinations");
  b->add_option("--config", ab.config, "Base training config (JSON)");
  b->add_option("--dataset", ab.dataset, "Dataset directory override");
  b->add_option("--out", ab.out, "Output directory")->required();
  b->add_option("--seed", ab.seed, "Seed override");
  b->add_option("--epochs", ab.epochs, "Epoch count override");
  b->add_option("--steps-per-epoch", ab.steps_per_epoch, "Steps per epoch override");

  MaskPreviewArgs mp;
  auto* m = app.add_subcommand("mask-preview", "Render curriculum masks over one frame");
  m->add_option("--epoch", mp.epoch, "Curriculum epoch")->check(CLI::Range(0, 29));
  m->add_option("--seed", mp.seed, "Mask and scene seed");
  m->add_option("--out", mp.out, "PNG path")->required();
  m->add_option("--dataset", mp.dataset, "Dataset directory (default: a generated scene)");
  m->add_option("--scene", mp.scene, "Scene index");
  m->add_option("--frame", mp.frame, "Frame index");
  m->add_option("--block-size", mp.block_size, "Inverse block size in patches");
  m->add_flag("--random-patch", mp.random_patch, "Random patch masks instead of blocks");

  RenderArgs rd;
  auto* r = app.add_subcommand("render", "Render BEV maps and feature channels");
  r->add_option("--checkpoint", rd.checkpoint, "Checkpoint file")->required();
  r->add_option("--dataset", rd.dataset, "Dataset directory")->required();
  r->add_option("--scene", rd.scene, "Scene index");
  r->add_option("--frame", rd.frame, "Frame index");
  r->add_option("--out", rd.out, "Output directory")->required();
  r->add_option("--channels", rd.channels, "Comma-separated feature channels");
  r->add_flag("--all-cameras", rd.all_cameras, "Feed all cameras instead of the front one");
  r->add_option("--score-threshold", rd.score_threshold, "Minimum score of drawn boxes");
  r->add_option("--scale", rd.scale, "Pixels per BEV cell");

  std::vector<std::string> rest(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (g->parsed()) return cmd_generate(gen);
    if (t->parsed()) return cmd_train(tr);
    if (p->parsed()) return cmd_predict(pr);
    if (e->parsed()) return cmd_eval(ev);
    if (b->parsed()) return cmd_ablate(ab);
    if (m->parsed()) return cmd_mask_preview(mp);
    if (r->parsed()) return cmd_render(rd);
  } catch (const ConfigError& err) {
    spdlog::error("config error: {}", err.what());
    return kUsageError;
  } catch (const ValidationError& err) {
    spdlog::error("invalid input: {}", err.what());
    return kUsageError;
  } catch (const IoError& err) {
    spdlog::error("io error: {}", err.what());
    return kIoError;
  } catch (const DivergenceError& err) {
    spdlog::error("training diverged: {}", err.what());
    return kDiverged;
  } catch (const std::exception& err) {
    spdlog::error("{}", err.what());
    return kRuntimeError;
  }
  return kUsageError;
}

}  // namespace monobev::cli
