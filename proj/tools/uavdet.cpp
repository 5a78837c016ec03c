// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// uavdet: dataset generation, training, evaluation, detection and overlay
// rendering from one binary.
//
//   uavdet gen-data --config run.json --out data/
//   uavdet train    --config run.json --data data/manifest.json --out runs/a/
//   uavdet eval     --config run.json --data data/manifest.json --model runs/a/model.ckpt [--scale-sweep]
//   uavdet detect   --config run.json --model runs/a/model.ckpt --out dets.jsonl img.png...
//   uavdet render   --detections dets.jsonl --out-dir overlays/ img.png...
//
// Exit status: 0 ok, 1 usage or configuration error, 2 data error,
// 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "uavdet/config.hpp"
#include "uavdet/evaluation.hpp"
#include "uavdet/inference.hpp"
#include "uavdet/render.hpp"
#include "uavdet/synthetic.hpp"
#include "uavdet/training.hpp"

namespace fs = std::filesystem;
using namespace uavdet;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) set_seed(cfg, *c.seed);
  cfg.validate();
  if (!c.quiet) {
    std::fprintf(stderr, "config %016llx seed %llu\n%s\n", static_cast<unsigned long long>(config_hash(cfg)),
                 static_cast<unsigned long long>(cfg.train.seed), to_json(cfg).dump(2).c_str());
  }
  return cfg;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << text;
    if (!out) throw DataError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

struct Networks {
  ModelParams rpn;
  ModelParams det;
};

ModelParams strip(const ModelParams& p, const std::string& prefix) {
  ModelParams out;
  for (const auto& [k, v] : p) {
    if (k.starts_with(prefix)) out.emplace(k.substr(prefix.size()), v);
  }
  return out;
}

// variant: unified | step2-only | untrained
Networks load_networks(const std::string& model, const std::string& variant, const RunConfig& cfg) {
  if (variant == "untrained") {
    Rng rng = Rng::derive(cfg.train.seed, 1);
    const ModelParams p = init_params(rng, cfg.train.detector);
    return {p, p};
  }
  if (model.empty()) throw ConfigError("--model is required for variant '" + variant + "'");
  const TrainState state = load_checkpoint(model);
  if (state.config_hash != 0 && state.config_hash != config_hash(cfg)) {
    std::fprintf(stderr, "warning: %s was trained with config %016llx\n", model.c_str(),
                 static_cast<unsigned long long>(state.config_hash));
  }
  if (variant == "unified") {
    if (state.phase != 4) std::fprintf(stderr, "warning: %s stops at step %u\n", model.c_str(), state.phase);
    return {state.params, state.params};
  }
  if (variant == "step2-only") {
    Networks n{strip(state.aux, "step1/"), strip(state.aux, "step2/")};
    if (n.rpn.empty() || n.det.empty()) throw DataError(model + " holds no step-1/step-2 networks");
    return n;
  }
  throw ConfigError("unknown model variant '" + variant + "'");
}

int cmd_gen_data(const Common& c, const std::string& out) {
  const RunConfig cfg = resolve(c);
  const Dataset ds = generate_synthetic_dataset(cfg.synthetic, out);
  std::size_t n = 0;
  for (const auto& [name, recs] : ds.records) n += recs.size();
  std::fprintf(stderr, "wrote %zu images to %s\n", n, out.c_str());
  return 0;
}

int cmd_train(const Common& c, const std::string& data, const std::string& out, const std::string& resume,
              std::int64_t log_every) {
  const RunConfig cfg = resolve(c);
  const Dataset ds = load_dataset(data);
  const TrainingSet set = training_images(ds, cfg);
  FourStepOptions opts;
  opts.checkpoint_dir = fs::path(out);
  opts.config_hash = config_hash(cfg);
  if (!resume.empty()) opts.resume = load_checkpoint(resume);
  opts.log_every = log_every;
  opts.log = [q = c.quiet](const std::string& msg) {
    if (!q) std::fprintf(stderr, "%s\n", msg.c_str());
  };
  alternate_train_4step(set, cfg.train, opts);
  fs::copy_file(fs::path(out) / "step4.ckpt", fs::path(out) / "model.ckpt", fs::copy_options::overwrite_existing);
  std::fprintf(stderr, "model written to %s\n", (fs::path(out) / "model.ckpt").c_str());
  return 0;
}

struct EvalArgs {
  std::string data;
  std::string model;
  std::string variant = "unified";
  std::string split = "test";
  std::string detections_in;
  std::string detections_out;
  std::string report;
  std::string csv;
  bool scale_sweep = false;
};

int cmd_eval(const Common& c, const EvalArgs& a) {
  const RunConfig cfg = resolve(c);
  const Dataset ds = load_dataset(a.data);
  const auto& records = ds.split(a.split);
  const ReportMeta meta{config_hash(cfg), cfg.train.seed};
  std::vector<ReportRow> rows;
  std::vector<DetectionRecord> last;
  if (!a.detections_in.empty()) {
    last = read_detections(a.detections_in);
    rows.push_back({cfg.backbone_name, cfg.scales.test_short_side,
                    mean_ap(last, ground_truth_of(records), ds.manifest.num_classes(), cfg.match_iou)});
  } else {
    const Networks nets = load_networks(a.model, a.variant, cfg);
    const std::vector<int> scales = a.scale_sweep ? cfg.scales.sweep : std::vector<int>{cfg.scales.test_short_side};
    for (int s : scales) {
      const int max_side = std::max(cfg.scales.max_side, s);
      SplitEvaluation ev =
          evaluate_split(ds, a.split, s, max_side, nets.rpn, nets.det, cfg.train.detector, cfg.inference, cfg.match_iou);
      rows.push_back({cfg.backbone_name, s, ev.result});
      last = std::move(ev.detections);
    }
  }
  const std::string text = format_report_text(rows, ds.manifest.classes, meta);
  std::fputs(text.c_str(), stdout);
  if (!a.report.empty()) write_text_atomic(a.report, text);
  if (!a.csv.empty()) write_text_atomic(a.csv, format_report_csv(rows, ds.manifest.classes, meta));
  if (!a.detections_out.empty()) write_detections(last, a.detections_out);
  return 0;
}

int cmd_detect(const Common& c, const std::string& model, const std::string& variant,
               const std::vector<std::string>& images, const std::string& out) {
  const RunConfig cfg = resolve(c);
  const Networks nets = load_networks(model, variant, cfg);
  std::vector<DetectionRecord> all;
  for (const auto& path : images) {
    const Image img = read_png(path);
    auto dets = detect(img, path, cfg.scales.test_short_side, cfg.scales.max_side, nets.rpn, nets.det,
                       cfg.train.detector, cfg.inference);
    all.insert(all.end(), dets.begin(), dets.end());
  }
  if (out.empty() || out == "-") {
    std::cout << detections_to_jsonl(all);
  } else {
    write_detections(all, out);
  }
  return 0;
}

int cmd_render(const std::string& detections, const std::vector<std::string>& images, const std::string& out_dir,
               double min_score) {
  const auto dets = read_detections(detections);
  std::map<std::string, std::vector<DetectionRecord>> by_image;
  for (const auto& d : dets) by_image[d.image_id].push_back(d);
  const auto classes = default_class_table();
  fs::create_directories(out_dir);
  for (const auto& path : images) {
    const Image img = read_png(path);
    auto it = by_image.find(path);
    const std::vector<DetectionRecord> none;
    const Image drawn = render_detections(img, it == by_image.end() ? none : it->second, classes, min_score);
    const fs::path target = fs::path(out_dir) / fs::path(path).filename();
    write_png(drawn, target);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  uavdet::retain_freed_buffers();
  CLI::App app{"Two-stage defect detector for UAV inspection imagery"};
  app.require_subcommand(1);
  Common common;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config, "run configuration (JSON)");
    sub->add_option("--seed", common.seed, "override the configured seed");
    sub->add_flag("-q,--quiet", common.quiet, "do not echo the resolved configuration");
  };

  std::string out, data, resume, model, variant = "unified", detections, out_dir;
  std::vector<std::string> images;
  double min_score = 0.5;
  std::int64_t log_every = 100;
  EvalArgs eval;

  auto* gen = app.add_subcommand("gen-data", "write a seeded synthetic dataset");
  add_common(gen);
  gen->add_option("-o,--out", out, "output directory")->required();

  auto* train = app.add_subcommand("train", "four-step alternating training");
  add_common(train);
  train->add_option("-d,--data", data, "dataset manifest")->required()->check(CLI::ExistingFile);
  train->add_option("-o,--out", out, "checkpoint directory")->required();
  train->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);
  train->add_option("--log-every", log_every, "report the mean loss every N iterations");

  auto* ev = app.add_subcommand("eval", "mAP report over a dataset split");
  add_common(ev);
  ev->add_option("-d,--data", eval.data, "dataset manifest")->required()->check(CLI::ExistingFile);
  ev->add_option("-m,--model", eval.model, "checkpoint");
  ev->add_option("--variant", eval.variant, "unified | step2-only | untrained");
  ev->add_option("--split", eval.split, "dataset split");
  ev->add_option("--detections", eval.detections_in, "score these detections instead of running a model")
      ->check(CLI::ExistingFile);
  ev->add_option("--save-detections", eval.detections_out, "write the detections (JSON lines)");
  ev->add_option("--report", eval.report, "also write the text report here");
  ev->add_option("--csv", eval.csv, "write the report as CSV");
  ev->add_flag("--scale-sweep", eval.scale_sweep, "evaluate at every configured sweep scale");

  auto* det = app.add_subcommand("detect", "detections for PNG images as JSON lines");
  add_common(det);
  det->add_option("-m,--model", model, "checkpoint");
  det->add_option("--variant", variant, "unified | step2-only | untrained");
  det->add_option("-o,--out", out, "output file, '-' for stdout");
  det->add_option("images", images, "PNG images")->required()->check(CLI::ExistingFile);

  auto* ren = app.add_subcommand("render", "draw detections onto copies of the images");
  ren->add_option("--detections", detections, "detections (JSON lines)")->required()->check(CLI::ExistingFile);
  ren->add_option("-o,--out-dir", out_dir, "output directory")->required();
  ren->add_option("--min-score", min_score, "hide weaker detections");
  ren->add_option("images", images, "PNG images")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(common, out);
    if (*train) return cmd_train(common, data, out, resume, log_every);
    if (*ev) return cmd_eval(common, eval);
    if (*det) return cmd_detect(common, model, variant, images, out);
    if (*ren) return cmd_render(detections, images, out_dir, min_score);
  } catch (const TrainingDiverged& e) {
    std::fprintf(stderr, "error: %s (after %zu logged iterations)\n", e.what(), e.trace().size());
    return kExitNumeric;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
