// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Detection matching, average precision and mAP reports.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uavdet/box.hpp"
#include "uavdet/dataset.hpp"

namespace uavdet {

struct DetectionRecord {
  std::string image_id;
  int class_id = 0;
  Box box;
  double score = 0.0;

  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

struct GroundTruth {
  int class_id = 0;
  Box box;
};

// Greedy matching for one class: detections are visited in descending score
// order (ties by input order) and each takes the highest-IoU unmatched GT of
// its class in its image when that IoU is at least `iou_threshold`.
// Returns one TP flag per input detection, in input order.
std::vector<bool> match_detections(const std::vector<DetectionRecord>& detections,
                                   const std::map<std::string, std::vector<GroundTruth>>& ground_truth,
                                   double iou_threshold = 0.5);

// Area under the monotone precision envelope. std::nullopt when num_gt == 0.
std::optional<double> average_precision(const std::vector<bool>& tp, const std::vector<double>& scores,
                                        std::size_t num_gt);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct ApResult {
  std::map<int, double> per_class_ap;  // classes with at least one GT
  double map = 0.0;
  std::map<int, std::vector<PrPoint>> pr_curves;
  std::vector<int> skipped_classes;  // no GT, excluded from the mean
};

std::map<std::string, std::vector<GroundTruth>> ground_truth_of(const std::vector<AnnotatedImage>& records);

ApResult mean_ap(const std::vector<DetectionRecord>& detections,
                 const std::map<std::string, std::vector<GroundTruth>>& ground_truth, int num_classes,
                 double iou_threshold = 0.5);

// JSON-lines: {"image","class","bbox":[x1,y1,x2,y2],"score"}.
std::string detections_to_jsonl(const std::vector<DetectionRecord>& detections);
void write_detections(const std::vector<DetectionRecord>& detections, const std::filesystem::path& path);
std::vector<DetectionRecord> read_detections(const std::filesystem::path& path);

struct ReportRow {
  std::string backbone;
  int scale = 0;
  ApResult result;
};

struct ReportMeta {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
};

// Table layout: backbone, scale, mAP, then one AP column per class, in percent.
std::string format_report_text(const std::vector<ReportRow>& rows, const std::vector<ClassEntry>& classes,
                               const ReportMeta& meta);
std::string format_report_csv(const std::vector<ReportRow>& rows, const std::vector<ClassEntry>& classes,
                              const ReportMeta& meta);

}  // namespace uavdet
