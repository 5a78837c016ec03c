// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#include "uavdet/config.hpp"

#include <fstream>

#include "uavdet/error.hpp"

namespace uavdet {

using nlohmann::json;

namespace {

json sgd_json(const SgdConfig& s) {
  return {{"base_lr", s.base_lr},           {"lr_drop_factor", s.lr_drop_factor},
          {"drop_after_iters", s.drop_after_iters}, {"momentum", s.momentum},
          {"weight_decay", s.weight_decay}, {"total_iters", s.total_iters}};
}

SgdConfig sgd_from(const json& j) {
  SgdConfig s;
  s.base_lr = j.at("base_lr").get<double>();
  s.lr_drop_factor = j.at("lr_drop_factor").get<double>();
  s.drop_after_iters = j.at("drop_after_iters").get<std::int64_t>();
  s.momentum = j.at("momentum").get<double>();
  s.weight_decay = j.at("weight_decay").get<double>();
  s.total_iters = j.at("total_iters").get<std::int64_t>();
  return s;
}

json proposals_json(const ProposalConfig& p) {
  return {{"pre_nms_top_n", p.pre_nms_top_n}, {"post_nms_top_n", p.post_nms_top_n}, {"nms_iou", p.nms_iou}};
}

ProposalConfig proposals_from(const json& j) {
  return ProposalConfig{j.at("pre_nms_top_n").get<std::size_t>(), j.at("post_nms_top_n").get<std::size_t>(),
                        j.at("nms_iou").get<double>()};
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) {
    // Integers may not silently take fractional values.
    return !(a.is_number_integer() && b.is_number_float());
  }
  return a.type() == b.type();
}

// Overlays `user` onto `base`, which holds every valid key.
void overlay(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("config: '" + path + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + here + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      overlay(slot, value, here);
    } else {
      if (!same_kind(slot, value)) throw ConfigError("config: '" + here + "' has the wrong type");
      slot = value;
    }
  }
}

RegNormalization norm_from(const std::string& s) {
  if (s == "sampled") return RegNormalization::kSampledCount;
  if (s == "foreground") return RegNormalization::kForegroundCount;
  throw ConfigError("config: loss.det_reg_norm must be 'sampled' or 'foreground'");
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  synthetic.validate();
  if (scales.train_short_side < 1 || scales.test_short_side < 1) throw ConfigError("short sides must be positive");
  if (scales.max_side < scales.train_short_side || scales.max_side < scales.test_short_side) {
    throw ConfigError("max_side must be at least the short side");
  }
  if (scales.train_crop < 0) throw ConfigError("train_crop must be non-negative");
  for (int s : scales.sweep) {
    if (s < 1) throw ConfigError("sweep scales must be positive");
  }
  if (!(match_iou > 0.0 && match_iou <= 1.0)) throw ConfigError("match_iou must lie in (0, 1]");
  if (!(inference.score_threshold >= 0.0 && inference.score_threshold <= 1.0)) {
    throw ConfigError("score_threshold must lie in [0, 1]");
  }
  if (inference.max_detections < 1) throw ConfigError("max_detections must be positive");
  if (synthetic.width <= 0) throw ConfigError("synthetic width must be positive");
}

json to_json(const RunConfig& cfg) {
  const auto& t = cfg.train;
  const auto& d = t.detector;
  const auto& s = cfg.synthetic;
  return {
      {"seed", t.seed},
      {"backbone_name", cfg.backbone_name},
      {"detector",
       {{"channels", d.backbone.channels},
        {"anchor_scales", d.anchors.scales},
        {"anchor_ratios", d.anchors.ratios},
        {"rpn_hidden", d.rpn_hidden},
        {"fc_width", d.fc_width},
        {"num_classes", d.num_classes},
        {"head_init_std", d.head_init_std}}},
      {"loss",
       {{"lambda_rpn", t.loss.lambda_rpn},
        {"lambda_det", t.loss.lambda_det},
        {"n_cls", t.loss.n_cls},
        {"det_reg_norm", t.loss.det_reg_norm == RegNormalization::kSampledCount ? "sampled" : "foreground"}}},
      {"rpn_labels",
       {{"positive_iou", t.rpn_labels.positive_iou},
        {"negative_iou", t.rpn_labels.negative_iou},
        {"force_best_anchor_positive", t.rpn_labels.force_best_anchor_positive}}},
      {"roi_labels", {{"foreground_iou", t.roi_labels.foreground_iou}}},
      {"train_proposals", proposals_json(t.train_proposals)},
      {"sampling",
       {{"rpn_batch", t.rpn_batch},
        {"roi_batch", t.roi_batch},
        {"fg_fraction", t.fg_fraction},
        {"images_per_iteration", t.images_per_iteration},
        {"append_gt_rois", t.append_gt_rois},
        {"hflip", t.hflip}}},
      {"schedule",
       {{"rpn", sgd_json(t.rpn_sgd)},
        {"det", sgd_json(t.det_sgd)},
        {"rpn_refine", sgd_json(t.rpn_refine_sgd)},
        {"det_refine", sgd_json(t.det_refine_sgd)}}},
      {"inference",
       {{"proposals", proposals_json(cfg.inference.proposals)},
        {"score_threshold", cfg.inference.score_threshold},
        {"class_nms", cfg.inference.class_nms},
        {"class_nms_iou", cfg.inference.class_nms_iou},
        {"max_detections", cfg.inference.max_detections}}},
      {"scales",
       {{"train_short_side", cfg.scales.train_short_side},
        {"test_short_side", cfg.scales.test_short_side},
        {"max_side", cfg.scales.max_side},
        {"train_crop", cfg.scales.train_crop},
        {"sweep", cfg.scales.sweep}}},
      {"evaluation", {{"match_iou", cfg.match_iou}}},
      {"synthetic",
       {{"width", s.width},
        {"height", s.height},
        {"train_counts", s.train_counts},
        {"test_counts", s.test_counts},
        {"max_objects", s.max_objects},
        {"min_object", s.min_object},
        {"max_object", s.max_object},
        {"small_fraction", s.small_fraction},
        {"small_min", s.small_min},
        {"small_max", s.small_max},
        {"contrast", s.contrast},
        {"clutter", s.clutter}}},
  };
}

RunConfig run_config_from_json(const json& user) {
  json j = to_json(RunConfig{});
  overlay(j, user, "");
  RunConfig cfg;
  try {
    auto& t = cfg.train;
    auto& d = t.detector;
    t.seed = j.at("seed").get<std::uint64_t>();
    cfg.synthetic.seed = t.seed;
    cfg.backbone_name = j.at("backbone_name").get<std::string>();
    const json& dj = j.at("detector");
    d.backbone.channels = dj.at("channels").get<std::vector<int>>();
    d.anchors.scales = dj.at("anchor_scales").get<std::vector<double>>();
    d.anchors.ratios = dj.at("anchor_ratios").get<std::vector<double>>();
    d.rpn_hidden = dj.at("rpn_hidden").get<int>();
    d.fc_width = dj.at("fc_width").get<int>();
    d.num_classes = dj.at("num_classes").get<int>();
    d.head_init_std = dj.at("head_init_std").get<double>();
    const json& lj = j.at("loss");
    t.loss.lambda_rpn = lj.at("lambda_rpn").get<double>();
    t.loss.lambda_det = lj.at("lambda_det").get<double>();
    t.loss.n_cls = lj.at("n_cls").get<double>();
    t.loss.det_reg_norm = norm_from(lj.at("det_reg_norm").get<std::string>());
    const json& rl = j.at("rpn_labels");
    t.rpn_labels.positive_iou = rl.at("positive_iou").get<double>();
    t.rpn_labels.negative_iou = rl.at("negative_iou").get<double>();
    t.rpn_labels.force_best_anchor_positive = rl.at("force_best_anchor_positive").get<bool>();
    t.roi_labels.foreground_iou = j.at("roi_labels").at("foreground_iou").get<double>();
    t.train_proposals = proposals_from(j.at("train_proposals"));
    const json& sj = j.at("sampling");
    t.rpn_batch = sj.at("rpn_batch").get<std::size_t>();
    t.roi_batch = sj.at("roi_batch").get<std::size_t>();
    t.fg_fraction = sj.at("fg_fraction").get<double>();
    t.images_per_iteration = sj.at("images_per_iteration").get<int>();
    t.append_gt_rois = sj.at("append_gt_rois").get<bool>();
    t.hflip = sj.at("hflip").get<bool>();
    const json& sc = j.at("schedule");
    t.rpn_sgd = sgd_from(sc.at("rpn"));
    t.det_sgd = sgd_from(sc.at("det"));
    t.rpn_refine_sgd = sgd_from(sc.at("rpn_refine"));
    t.det_refine_sgd = sgd_from(sc.at("det_refine"));
    const json& ij = j.at("inference");
    cfg.inference.proposals = proposals_from(ij.at("proposals"));
    cfg.inference.score_threshold = ij.at("score_threshold").get<double>();
    cfg.inference.class_nms = ij.at("class_nms").get<bool>();
    cfg.inference.class_nms_iou = ij.at("class_nms_iou").get<double>();
    cfg.inference.max_detections = ij.at("max_detections").get<std::size_t>();
    const json& scj = j.at("scales");
    cfg.scales.train_short_side = scj.at("train_short_side").get<int>();
    cfg.scales.test_short_side = scj.at("test_short_side").get<int>();
    cfg.scales.max_side = scj.at("max_side").get<int>();
    cfg.scales.train_crop = scj.at("train_crop").get<int>();
    cfg.scales.sweep = scj.at("sweep").get<std::vector<int>>();
    cfg.match_iou = j.at("evaluation").at("match_iou").get<double>();
    const json& yj = j.at("synthetic");
    auto& s = cfg.synthetic;
    s.width = yj.at("width").get<int>();
    s.height = yj.at("height").get<int>();
    s.train_counts = yj.at("train_counts").get<std::array<int, 4>>();
    s.test_counts = yj.at("test_counts").get<std::array<int, 4>>();
    s.max_objects = yj.at("max_objects").get<int>();
    s.min_object = yj.at("min_object").get<double>();
    s.max_object = yj.at("max_object").get<double>();
    s.small_fraction = yj.at("small_fraction").get<double>();
    s.small_min = yj.at("small_min").get<double>();
    s.small_max = yj.at("small_max").get<double>();
    s.contrast = yj.at("contrast").get<double>();
    s.clutter = yj.at("clutter").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

std::uint64_t config_hash(const RunConfig& cfg) {
  json j = to_json(cfg);
  j.erase("seed");
  return fnv1a64(j.dump());
}

void set_seed(RunConfig& cfg, std::uint64_t seed) {
  cfg.train.seed = seed;
  cfg.synthetic.seed = seed;
}

TrainingSet training_images(const Dataset& ds, const RunConfig& cfg) {
  TrainingSet set = prepare_images(ds, "train", cfg.scales.train_short_side, cfg.scales.max_side);
  return cfg.scales.train_crop > 0 ? five_crop_set(set, cfg.scales.train_crop) : set;
}

}  // namespace uavdet
