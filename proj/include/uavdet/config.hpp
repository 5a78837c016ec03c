// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: every tunable of a training / evaluation run in one JSON
// document. Keys that are not part of the schema are rejected.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uavdet/inference.hpp"
#include "uavdet/synthetic.hpp"
#include "uavdet/training.hpp"

namespace uavdet {

struct ScaleConfig {
  int train_short_side = 600;
  int test_short_side = 600;
  int max_side = 1000;
  int train_crop = 0;  // > 0: train on five crops of this size
  std::vector<int> sweep{600, 800, 1000};
};

struct RunConfig {
  TrainConfig train;
  InferenceConfig inference;
  ScaleConfig scales;
  SyntheticConfig synthetic;
  double match_iou = 0.5;
  std::string backbone_name = "toy-conv4";

  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);

// Missing keys keep their defaults; unknown keys or wrongly typed values
// raise ConfigError naming the offending key path.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// Hash of the resolved configuration, excluding the seeds.
std::uint64_t config_hash(const RunConfig& cfg);

// Sets the training and synthetic-data seeds together.
void set_seed(RunConfig& cfg, std::uint64_t seed);

// The "train" split at train_short_side, five-cropped when train_crop > 0.
TrainingSet training_images(const Dataset& ds, const RunConfig& cfg);

}  // namespace uavdet
