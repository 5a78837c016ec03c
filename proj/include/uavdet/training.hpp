// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// SGD with momentum and weight decay, RPN / detection-head trainers and the
// four-step alternating schedule that yields one network with a shared
// backbone.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uavdet/anchors.hpp"
#include "uavdet/dataset.hpp"
#include "uavdet/detector.hpp"
#include "uavdet/error.hpp"
#include "uavdet/losses.hpp"
#include "uavdet/proposals.hpp"

namespace uavdet {

struct SgdConfig {
  double base_lr = 0.001;
  double lr_drop_factor = 0.1;
  std::int64_t drop_after_iters = 1200;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::int64_t total_iters = 2000;

  void validate() const;
  double lr_at(std::int64_t iter) const;
};

// v ← momentum·v + g + wd·p (wd on ".weight" tensors only); p ← p − lr(iter)·v.
// Only tensors present in `grads` are touched. Throws NumericError before
// changing anything if a gradient is not finite.
void sgd_step(ModelParams& params, const ModelParams& grads, ModelParams& velocity, const SgdConfig& cfg,
              std::int64_t iter);

struct TrainConfig {
  DetectorConfig detector;
  LossConfig loss;
  RpnLabelConfig rpn_labels;
  RoiLabelConfig roi_labels;
  ProposalConfig train_proposals{6000, 300, 0.7};
  std::size_t rpn_batch = 256;
  std::size_t roi_batch = 128;  // R
  double fg_fraction = 0.25;
  int images_per_iteration = 1;  // N, only 1 is supported
  bool append_gt_rois = true;
  bool hflip = true;
  // Per-phase schedules of the four alternating steps.
  SgdConfig rpn_sgd;
  SgdConfig det_sgd;
  SgdConfig rpn_refine_sgd;
  SgdConfig det_refine_sgd;
  std::uint64_t seed = 1;

  void validate() const;
};

// Training images already resized to the training scale, rasters attached.
using TrainingSet = std::vector<AnnotatedImage>;

TrainingSet prepare_images(const Dataset& ds, const std::string& split, int short_side, int max_side);

// Every image replaced by its five crop_size × crop_size crops; images
// smaller than the crop stay whole.
TrainingSet five_crop_set(const TrainingSet& images, int crop_size);

struct TracePoint {
  std::int64_t iteration = 0;
  double total = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  bool skipped = false;  // no trainable sample in this image

  friend bool operator==(const TracePoint&, const TracePoint&) = default;
};
using LossTrace = std::vector<TracePoint>;

class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, LossTrace trace) : NumericError(what), trace_(std::move(trace)) {}
  const LossTrace& trace() const { return trace_; }

 private:
  LossTrace trace_;
};

// Everything needed to continue a phase bit-exactly.
struct TrainState {
  std::uint32_t phase = 1;       // 1..4
  std::int64_t iteration = 0;    // within the phase
  ModelParams params;            // network trained in this phase
  ModelParams velocity;
  ModelParams aux;               // step-1 network, kept from phase 2 on
  std::string rng_state;
  std::uint64_t config_hash = 0;
};

// Image visited at sample position `pos` (seeded shuffle per epoch).
std::size_t image_at(std::uint64_t seed, std::uint32_t phase, std::size_t num_images, std::int64_t pos);

// Proposals per (training image, mirrored) from a frozen RPN network.
class ProposalSource {
 public:
  ProposalSource(const TrainingSet& data, ModelParams rpn_net, const TrainConfig& cfg);
  const std::vector<Box>& proposals(std::size_t image, bool mirrored);

 private:
  const TrainingSet* data_;
  ModelParams net_;
  const TrainConfig* cfg_;
  std::map<std::pair<std::size_t, bool>, std::vector<Box>> cache_;
};

// Runs RPN updates from state.iteration up to `until` (exclusive).
// With freeze_shared the backbone receives no update.
using StepObserver = std::function<void(const TracePoint&)>;

LossTrace train_rpn(const TrainingSet& data, TrainState& state, const TrainConfig& cfg, const SgdConfig& sgd,
                    bool freeze_shared, std::int64_t until, const StepObserver& observer = {});

LossTrace train_fast_rcnn(const TrainingSet& data, ProposalSource& proposals, TrainState& state,
                          const TrainConfig& cfg, const SgdConfig& sgd, bool freeze_shared, std::int64_t until,
                          const StepObserver& observer = {});

struct FourStepOptions {
  std::optional<std::filesystem::path> checkpoint_dir;  // step<N>.ckpt after every phase
  std::optional<TrainState> resume;
  std::uint64_t config_hash = 0;  // stamped into checkpoints, checked on resume
  std::function<void(const std::string&)> log;
  std::int64_t log_every = 0;  // mean loss over each window of this many iterations
};

struct FourStepResult {
  ModelParams step1;  // RPN network
  ModelParams step2;  // separate detection network
  ModelParams step3;  // step-2 backbone with refined RPN head
  ModelParams unified;
  std::array<LossTrace, 4> traces;
};

FourStepResult alternate_train_4step(const TrainingSet& data, const TrainConfig& cfg, const FourStepOptions& opts = {});

// Binary checkpoint: "DKPT", u32 version, u64 config hash, u32 phase, u32
// entry count, per entry (u32 name length, name, u8 dtype = 1 for f64, u32
// rank, u64 extents), then the f64 payloads in manifest order, then a footer
// with u64 iteration, u32 length + random-stream state and "DKPE".
// All integers and floats little-endian.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);
std::string serialize_checkpoint(const TrainState& state);
TrainState deserialize_checkpoint(const std::string& bytes);

}  // namespace uavdet
