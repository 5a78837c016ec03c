// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#include "uavdet/training.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "uavdet/inference.hpp"

namespace uavdet {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void SgdConfig::validate() const {
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
  if (!(lr_drop_factor > 0.0)) throw ConfigError("lr_drop_factor must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (total_iters < 1) throw ConfigError("total_iters must be positive");
  if (drop_after_iters < 1 || drop_after_iters > total_iters) {
    throw ConfigError("drop_after_iters must lie in [1, total_iters]");
  }
}

double SgdConfig::lr_at(std::int64_t iter) const {
  return iter < drop_after_iters ? base_lr : base_lr * lr_drop_factor;
}

void sgd_step(ModelParams& params, const ModelParams& grads, ModelParams& velocity, const SgdConfig& cfg,
              std::int64_t iter) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("gradient for unknown parameter '" + name + "'");
    if (it->second.shape() != g.shape()) throw DimensionError("gradient shape mismatch for '" + name + "'");
    if (!g.all_finite()) throw NumericError("non-finite gradient for '" + name + "'");
  }
  const double lr = cfg.lr_at(iter);
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    auto [vit, inserted] = velocity.try_emplace(name, Tensor(p.shape()));
    Tensor& v = vit->second;
    const double wd = name.ends_with(".weight") ? cfg.weight_decay : 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = cfg.momentum * v[i] + g[i] + wd * p[i];
      p[i] -= lr * v[i];
    }
  }
}

void TrainConfig::validate() const {
  detector.validate();
  loss.validate();
  rpn_sgd.validate();
  det_sgd.validate();
  rpn_refine_sgd.validate();
  det_refine_sgd.validate();
  if (rpn_batch < 2 || rpn_batch % 2 != 0) throw ConfigError("rpn_batch must be even and at least 2");
  if (roi_batch < 4) throw ConfigError("roi_batch must be at least 4");
  if (!(fg_fraction > 0.0 && fg_fraction <= 1.0)) throw ConfigError("fg_fraction must lie in (0, 1]");
  if (images_per_iteration != 1) throw ConfigError("only one image per iteration is supported");
  if (!(rpn_labels.negative_iou <= rpn_labels.positive_iou)) {
    throw ConfigError("negative_iou must not exceed positive_iou");
  }
  if (!(roi_labels.foreground_iou > 0.0 && roi_labels.foreground_iou <= 1.0)) {
    throw ConfigError("foreground_iou must lie in (0, 1]");
  }
  if (train_proposals.post_nms_top_n < 1 || train_proposals.pre_nms_top_n < 1) {
    throw ConfigError("proposal counts must be positive");
  }
}

TrainingSet prepare_images(const Dataset& ds, const std::string& split, int short_side, int max_side) {
  TrainingSet out;
  for (const auto& r : ds.split(split)) {
    AnnotatedImage loaded = r;
    loaded.raster = ds.load_raster(r);
    out.push_back(resize_with_boxes(loaded, short_side, max_side).image);
  }
  return out;
}

TrainingSet five_crop_set(const TrainingSet& images, int crop_size) {
  TrainingSet out;
  for (const auto& img : images) {
    FiveCropResult r = five_crop_augment(img, crop_size);
    if (r.undersized) {
      out.push_back(img);
      continue;
    }
    for (auto& c : r.crops) out.push_back(std::move(c));
  }
  return out;
}

std::size_t image_at(std::uint64_t seed, std::uint32_t phase, std::size_t num_images, std::int64_t pos) {
  if (num_images == 0) throw ContractError("empty training set");
  if (pos < 0) throw ContractError("negative sample position");
  const auto n = static_cast<std::uint64_t>(num_images);
  const std::uint64_t epoch = static_cast<std::uint64_t>(pos) / n;
  std::vector<std::size_t> order(num_images);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::derive(seed, (static_cast<std::uint64_t>(phase) << 40) | epoch);
  rng.shuffle(order);
  return order[static_cast<std::uint64_t>(pos) % n];
}

namespace {

const AnnotatedImage& view(const TrainingSet& data, std::size_t idx, bool mirrored, AnnotatedImage& scratch) {
  if (!data[idx].raster) throw ContractError("training image without raster: " + data[idx].image_ref);
  if (!mirrored) return data[idx];
  scratch = hflip_augment(data[idx]);
  return scratch;
}

Rng phase_rng(const TrainState& state, const TrainConfig& cfg) {
  Rng rng = Rng::derive(cfg.seed, 100 + state.phase);
  if (!state.rng_state.empty()) rng.restore(state.rng_state);
  return rng;
}

ModelParams trainable_grads(const Graph& g, const BoundParams& bp) {
  ModelParams grads;
  for (const auto& [name, v] : bp.vars()) {
    if (g.requires_grad(v)) grads.emplace(name, g.grad(v));
  }
  return grads;
}

ModelParams merge(const ModelParams& a, const ModelParams& b) {
  ModelParams out = a;
  for (const auto& [k, v] : b) out.insert_or_assign(k, v);
  return out;
}

}  // namespace

ProposalSource::ProposalSource(const TrainingSet& data, ModelParams rpn_net, const TrainConfig& cfg)
    : data_(&data), net_(merge(select_group(rpn_net, ParamGroup::kShared), select_group(rpn_net, ParamGroup::kRpn))),
      cfg_(&cfg) {}

const std::vector<Box>& ProposalSource::proposals(std::size_t image, bool mirrored) {
  const auto key = std::make_pair(image, mirrored);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  AnnotatedImage scratch;
  const AnnotatedImage& img = view(*data_, image, mirrored, scratch);
  const ProposalResult r = propose(*img.raster, net_, cfg_->detector, cfg_->train_proposals, false);
  std::vector<Box> boxes;
  boxes.reserve(r.proposals.size());
  for (const auto& p : r.proposals) boxes.push_back(p.box);
  return cache_.emplace(key, std::move(boxes)).first->second;
}

LossTrace train_rpn(const TrainingSet& data, TrainState& state, const TrainConfig& cfg, const SgdConfig& sgd,
                    bool freeze_shared, std::int64_t until, const StepObserver& observer) {
  if (data.empty()) throw ContractError("train_rpn: empty training set");
  Rng rng = phase_rng(state, cfg);
  const auto k = static_cast<int>(cfg.detector.anchors.per_location());
  const auto trainable = [freeze_shared](const std::string& name) {
    const ParamGroup grp = group_of(name);
    return grp == ParamGroup::kRpn || (grp == ParamGroup::kShared && !freeze_shared);
  };
  LossTrace trace;
  for (std::int64_t it = state.iteration; it < until; ++it) {
    const std::size_t idx = image_at(cfg.seed, state.phase, data.size(), it);
    const bool mirrored = cfg.hflip && rng.bernoulli(0.5);
    AnnotatedImage scratch;
    const AnnotatedImage& img = view(data, idx, mirrored, scratch);
    const std::vector<Box> gt = img.boxes();

    TracePoint point{it, 0.0, 0.0, 0.0, false};
    try {
      Graph g;
      const ModelParams net = merge(select_group(state.params, ParamGroup::kShared),
                                    select_group(state.params, ParamGroup::kRpn));
      const BoundParams bp(g, net, trainable);
      const Var x = g.constant(image_to_tensor(*img.raster));
      const Var feat = backbone_forward(g, x, bp, cfg.detector);
      const RpnOutput out = rpn_head_forward(g, feat, bp, k);
      const auto anchors = generate_anchors(cfg.detector.anchor_grid(), out.feat_h, out.feat_w);
      const AnchorLabelSet labels = assign_rpn_labels(anchors, gt, img.width, img.height, true, cfg.rpn_labels);
      const Sample sample = sample_rpn_minibatch(labels, cfg.rpn_batch, rng);
      if (sample.indices.empty()) {
        point.skipped = true;
      } else {
        LossConfig lcfg = cfg.loss;
        lcfg.n_reg = static_cast<double>(out.feat_h) * out.feat_w;
        const LossBreakdown loss = rpn_loss(g, out.probs, out.deltas, labels, sample.indices, lcfg);
        point.total = loss.total_value;
        point.cls = loss.cls_value;
        point.reg = loss.reg_value;
        if (!std::isfinite(point.total)) throw NumericError("RPN loss is not finite");
        g.backward(loss.total);
        sgd_step(state.params, trainable_grads(g, bp), state.velocity, sgd, it);
      }
    } catch (const NumericError& e) {
      trace.push_back(point);
      throw TrainingDiverged("RPN training diverged at iteration " + std::to_string(it) + ": " + e.what(), trace);
    }
    trace.push_back(point);
    state.iteration = it + 1;
    state.rng_state = rng.state();
    if (observer) observer(point);
  }
  return trace;
}

LossTrace train_fast_rcnn(const TrainingSet& data, ProposalSource& proposals, TrainState& state,
                          const TrainConfig& cfg, const SgdConfig& sgd, bool freeze_shared, std::int64_t until,
                          const StepObserver& observer) {
  if (data.empty()) throw ContractError("train_fast_rcnn: empty training set");
  Rng rng = phase_rng(state, cfg);
  const auto trainable = [freeze_shared](const std::string& name) {
    const ParamGroup grp = group_of(name);
    return grp == ParamGroup::kDet || (grp == ParamGroup::kShared && !freeze_shared);
  };
  LossTrace trace;
  for (std::int64_t it = state.iteration; it < until; ++it) {
    const std::size_t idx = image_at(cfg.seed, state.phase, data.size(), it);
    const bool mirrored = cfg.hflip && rng.bernoulli(0.5);
    AnnotatedImage scratch;
    const AnnotatedImage& img = view(data, idx, mirrored, scratch);
    const std::vector<Box> gt = img.boxes();
    const std::vector<int> classes = img.class_ids();

    std::vector<Box> candidates = proposals.proposals(idx, mirrored);
    if (cfg.append_gt_rois) candidates.insert(candidates.end(), gt.begin(), gt.end());
    const std::vector<RoiLabel> labels = assign_roi_labels(candidates, gt, classes, cfg.roi_labels);
    const RoiSample sample = sample_roi_minibatch(labels, cfg.roi_batch, cfg.fg_fraction, rng);

    TracePoint point{it, 0.0, 0.0, 0.0, false};
    if (sample.indices.empty()) {
      point.skipped = true;
    } else {
      try {
        std::vector<Box> rois;
        std::vector<RoiLabel> roi_labels;
        for (std::size_t i : sample.indices) {
          rois.push_back(candidates[i]);
          roi_labels.push_back(labels[i]);
        }
        Graph g;
        const ModelParams net = merge(select_group(state.params, ParamGroup::kShared),
                                      select_group(state.params, ParamGroup::kDet));
        const BoundParams bp(g, net, trainable);
        const Var x = g.constant(image_to_tensor(*img.raster));
        const Var feat = backbone_forward(g, x, bp, cfg.detector);
        const Var pooled = ad::roi_features(g, feat, rois, cfg.detector.backbone.feat_stride());
        const DetOutput out = det_head_forward(g, pooled, bp, cfg.detector.num_classes);
        const LossBreakdown loss = detection_loss(g, out.probs, out.deltas, roi_labels, cfg.loss);
        point.total = loss.total_value;
        point.cls = loss.cls_value;
        point.reg = loss.reg_value;
        if (!std::isfinite(point.total)) throw NumericError("detection loss is not finite");
        g.backward(loss.total);
        sgd_step(state.params, trainable_grads(g, bp), state.velocity, sgd, it);
      } catch (const NumericError& e) {
        trace.push_back(point);
        throw TrainingDiverged("detection training diverged at iteration " + std::to_string(it) + ": " + e.what(),
                               trace);
      }
    }
    trace.push_back(point);
    state.iteration = it + 1;
    state.rng_state = rng.state();
    if (observer) observer(point);
  }
  return trace;
}

namespace {

ModelParams with_prefix(const ModelParams& p, const std::string& prefix) {
  ModelParams out;
  for (const auto& [k, v] : p) out.emplace(prefix + k, v);
  return out;
}

ModelParams strip_prefix(const ModelParams& p, const std::string& prefix) {
  ModelParams out;
  for (const auto& [k, v] : p) {
    if (k.starts_with(prefix)) out.emplace(k.substr(prefix.size()), v);
  }
  return out;
}

double mean_loss(const LossTrace& trace) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& t : trace) {
    if (t.skipped) continue;
    s += t.total;
    ++n;
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

}  // namespace

FourStepResult alternate_train_4step(const TrainingSet& data, const TrainConfig& cfg, const FourStepOptions& opts) {
  cfg.validate();
  if (data.empty()) throw ContractError("alternate_train_4step: empty training set");
  const auto log = [&](const std::string& msg) {
    if (opts.log) opts.log(msg);
  };
  const std::array<const SgdConfig*, 4> schedules{&cfg.rpn_sgd, &cfg.det_sgd, &cfg.rpn_refine_sgd,
                                                  &cfg.det_refine_sgd};
  const auto initial = [&] {
    Rng rng = Rng::derive(cfg.seed, 1);
    return init_params(rng, cfg.detector);
  };

  TrainState state;
  state.config_hash = opts.config_hash;
  bool resumed = false;
  if (opts.resume) {
    state = *opts.resume;
    if (opts.config_hash != 0 && state.config_hash != opts.config_hash) {
      throw ConfigError("checkpoint was written for a different configuration");
    }
    if (state.phase < 1 || state.phase > 4) throw DataError("checkpoint phase out of range");
    resumed = true;
  } else {
    state.phase = 1;
    state.params = initial();
  }

  FourStepResult result;
  const auto begin_phase = [&](std::uint32_t phase, ModelParams params) {
    state.phase = phase;
    state.iteration = 0;
    state.params = std::move(params);
    state.velocity.clear();
    state.rng_state.clear();
  };
  const auto finish_phase = [&](std::uint32_t phase) {
    log("step " + std::to_string(phase) + " done, mean loss " + std::to_string(mean_loss(result.traces[phase - 1])));
    if (opts.checkpoint_dir) {
      std::filesystem::create_directories(*opts.checkpoint_dir);
      save_checkpoint(state, *opts.checkpoint_dir / ("step" + std::to_string(phase) + ".ckpt"));
    }
  };

  for (std::uint32_t phase = resumed ? state.phase : 1; phase <= 4; ++phase) {
    if (!resumed || phase != state.phase) {
      switch (phase) {
        case 1:
          begin_phase(1, initial());
          break;
        case 2:
          state.aux = with_prefix(state.params, "step1/");
          begin_phase(2, initial());
          break;
        case 3: {
          ModelParams next = select_group(state.params, ParamGroup::kShared);
          next = merge(next, select_group(state.params, ParamGroup::kDet));
          next = merge(next, select_group(strip_prefix(state.aux, "step1/"), ParamGroup::kRpn));
          state.aux = merge(state.aux, with_prefix(state.params, "step2/"));
          begin_phase(3, std::move(next));
          break;
        }
        case 4:
          begin_phase(4, state.params);
          break;
      }
    }
    resumed = false;
    const SgdConfig& sgd = *schedules[phase - 1];
    double window_sum = 0.0;
    std::int64_t window_n = 0;
    const StepObserver observer = [&](const TracePoint& p) {
      if (opts.log_every <= 0) return;
      if (!p.skipped) {
        window_sum += p.total;
        ++window_n;
      }
      if ((p.iteration + 1) % opts.log_every == 0) {
        log("step " + std::to_string(phase) + " iter " + std::to_string(p.iteration + 1) + " loss " +
            std::to_string(window_n ? window_sum / static_cast<double>(window_n) : 0.0));
        window_sum = 0.0;
        window_n = 0;
      }
    };
    if (state.iteration < sgd.total_iters) {
      log("step " + std::to_string(phase) + " from iteration " + std::to_string(state.iteration));
    }
    LossTrace& trace = result.traces[phase - 1];
    if (phase == 1 || phase == 3) {
      trace = train_rpn(data, state, cfg, sgd, phase == 3, sgd.total_iters, observer);
    } else {
      // Phase 4 takes proposals from the phase-3 network, whose backbone and
      // RPN stay fixed during the phase.
      ProposalSource source(data, phase == 2 ? strip_prefix(state.aux, "step1/") : state.params, cfg);
      trace = train_fast_rcnn(data, source, state, cfg, sgd, phase == 4, sgd.total_iters, observer);
    }
    finish_phase(phase);
  }

  result.step1 = strip_prefix(state.aux, "step1/");
  result.step2 = strip_prefix(state.aux, "step2/");
  result.unified = state.params;
  result.step3 = merge(select_group(state.params, ParamGroup::kShared), select_group(state.params, ParamGroup::kRpn));
  result.step3 = merge(result.step3, select_group(result.step2, ParamGroup::kDet));
  return result;
}

// Checkpoint I/O.

namespace {

constexpr char kMagic[4] = {'D', 'K', 'P', 'T'};
constexpr char kEndMagic[4] = {'D', 'K', 'P', 'E'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw DataError(std::string("checkpoint truncated while reading ") + what);
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const TrainState& state) {
  std::vector<std::pair<std::string, const Tensor*>> entries;
  for (const auto& [k, v] : state.params) entries.emplace_back("param/" + k, &v);
  for (const auto& [k, v] : state.velocity) entries.emplace_back("velocity/" + k, &v);
  for (const auto& [k, v] : state.aux) entries.emplace_back("aux/" + k, &v);

  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, state.config_hash);
  put<std::uint32_t>(out, state.phase);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, kDtypeF64);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t->rank()));
    for (auto d : t->shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
  }
  for (const auto& [name, t] : entries) {
    for (double v : t->data()) put<double>(out, v);
  }
  put<std::uint64_t>(out, static_cast<std::uint64_t>(state.iteration));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(state.rng_state.size()));
  out += state.rng_state;
  out.append(kEndMagic, 4);
  return out;
}

TrainState deserialize_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(4, "magic") != std::string(kMagic, 4)) throw DataError("not a checkpoint (bad magic)");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  TrainState state;
  state.config_hash = in.get<std::uint64_t>("config hash");
  state.phase = in.get<std::uint32_t>("phase");
  const auto count = in.get<std::uint32_t>("entry count");

  struct Entry {
    std::string name;
    Shape shape;
  };
  std::vector<Entry> entries;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = in.get<std::uint32_t>("name length");
    if (len > in.remaining()) throw DataError("checkpoint truncated while reading entry name");
    Entry entry{in.take(len, "entry name"), {}};
    if (in.get<std::uint8_t>("dtype") != kDtypeF64) throw DataError("unsupported dtype for '" + entry.name + "'");
    const auto rank = in.get<std::uint32_t>("rank");
    if (rank > 8) throw DataError("implausible rank for '" + entry.name + "'");
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto d = in.get<std::uint64_t>("extent");
      if (d > (std::uint64_t{1} << 40)) throw DataError("implausible extent for '" + entry.name + "'");
      entry.shape.push_back(static_cast<std::int64_t>(d));
    }
    entries.push_back(std::move(entry));
  }
  for (const auto& entry : entries) {
    const auto n = static_cast<std::size_t>(shape_numel(entry.shape));
    if (n > in.remaining() / sizeof(double)) throw DataError("checkpoint truncated in payload of '" + entry.name + "'");
    std::vector<double> data(n);
    for (double& v : data) v = in.get<double>("payload");
    Tensor t(entry.shape, std::move(data));
    const auto slash = entry.name.find('/');
    const std::string kind = entry.name.substr(0, slash);
    const std::string key = slash == std::string::npos ? "" : entry.name.substr(slash + 1);
    ModelParams* target = kind == "param" ? &state.params
                          : kind == "velocity" ? &state.velocity
                          : kind == "aux" ? &state.aux
                                          : nullptr;
    if (!target || key.empty()) throw DataError("unknown checkpoint entry '" + entry.name + "'");
    if (!target->emplace(key, std::move(t)).second) throw DataError("duplicate checkpoint entry '" + entry.name + "'");
  }
  state.iteration = static_cast<std::int64_t>(in.get<std::uint64_t>("iteration"));
  const auto rng_len = in.get<std::uint32_t>("rng state length");
  if (rng_len > in.remaining()) throw DataError("checkpoint truncated while reading rng state");
  state.rng_state = in.take(rng_len, "rng state");
  if (in.take(4, "footer") != std::string(kEndMagic, 4)) throw DataError("checkpoint footer is corrupt");
  if (!in.done()) throw DataError("trailing bytes after checkpoint footer");
  for (const auto& [k, v] : state.velocity) {
    auto it = state.params.find(k);
    if (it == state.params.end() || it->second.shape() != v.shape()) {
      throw DataError("velocity '" + k + "' does not match any parameter");
    }
  }
  return state;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(state);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace uavdet
