// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#include "uavdet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "uavdet/error.hpp"

namespace uavdet {

using nlohmann::json;

namespace {

std::vector<std::size_t> by_descending_score(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

// One point per distinct score threshold; tied detections enter together.
std::vector<PrPoint> pr_points(const std::vector<bool>& tp, const std::vector<double>& scores, std::size_t num_gt) {
  std::vector<PrPoint> pts;
  const auto order = by_descending_score(scores);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    hits += tp[order[i]] ? 1 : 0;
    if (i + 1 < order.size() && scores[order[i + 1]] == scores[order[i]]) continue;
    pts.push_back({static_cast<double>(hits) / static_cast<double>(num_gt),
                   static_cast<double>(hits) / static_cast<double>(i + 1)});
  }
  return pts;
}

}  // namespace

std::vector<bool> match_detections(const std::vector<DetectionRecord>& detections,
                                   const std::map<std::string, std::vector<GroundTruth>>& ground_truth,
                                   double iou_threshold) {
  std::vector<double> scores;
  for (const auto& d : detections) scores.push_back(d.score);
  std::map<std::string, std::vector<char>> used;
  std::vector<bool> tp(detections.size(), false);
  for (std::size_t i : by_descending_score(scores)) {
    const auto& d = detections[i];
    auto it = ground_truth.find(d.image_id);
    if (it == ground_truth.end()) continue;
    auto& taken = used[d.image_id];
    taken.resize(it->second.size(), 0);
    double best = -1.0;
    std::size_t best_gt = 0;
    for (std::size_t g = 0; g < it->second.size(); ++g) {
      const auto& gt = it->second[g];
      if (gt.class_id != d.class_id || taken[g]) continue;
      const double v = iou(d.box, gt.box);
      if (v > best) {
        best = v;
        best_gt = g;
      }
    }
    if (best >= iou_threshold) {
      taken[best_gt] = 1;
      tp[i] = true;
    }
  }
  return tp;
}

std::optional<double> average_precision(const std::vector<bool>& tp, const std::vector<double>& scores,
                                        std::size_t num_gt) {
  if (tp.size() != scores.size()) throw ContractError("average_precision: one score per flag");
  if (num_gt == 0) return std::nullopt;
  auto pts = pr_points(tp, scores, num_gt);
  // Monotone envelope from the right, then integrate over recall steps.
  for (std::size_t i = pts.size(); i-- > 1;) pts[i - 1].precision = std::max(pts[i - 1].precision, pts[i].precision);
  double ap = 0.0, prev_recall = 0.0;
  for (const auto& p : pts) {
    ap += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
  }
  return ap;
}

std::map<std::string, std::vector<GroundTruth>> ground_truth_of(const std::vector<AnnotatedImage>& records) {
  std::map<std::string, std::vector<GroundTruth>> out;
  for (const auto& r : records) {
    auto& list = out[r.image_ref];
    for (const auto& o : r.objects) list.push_back({o.class_id, o.box});
  }
  return out;
}

ApResult mean_ap(const std::vector<DetectionRecord>& detections,
                 const std::map<std::string, std::vector<GroundTruth>>& ground_truth, int num_classes,
                 double iou_threshold) {
  ApResult result;
  double total = 0.0;
  for (int c = 1; c <= num_classes; ++c) {
    std::size_t num_gt = 0;
    for (const auto& [id, gts] : ground_truth) {
      num_gt += static_cast<std::size_t>(std::count_if(gts.begin(), gts.end(), [&](const GroundTruth& g) { return g.class_id == c; }));
    }
    std::vector<DetectionRecord> dets;
    std::vector<double> scores;
    for (const auto& d : detections) {
      if (d.class_id != c) continue;
      if (!(d.score >= 0.0 && d.score <= 1.0)) throw ContractError("detection score outside [0, 1]");
      dets.push_back(d);
      scores.push_back(d.score);
    }
    const auto tp = match_detections(dets, ground_truth, iou_threshold);
    const auto ap = average_precision(tp, scores, num_gt);
    if (!ap) {
      result.skipped_classes.push_back(c);
      continue;
    }
    result.pr_curves[c] = pr_points(tp, scores, num_gt);
    result.per_class_ap[c] = *ap;
    total += *ap;
  }
  if (result.per_class_ap.empty()) throw ContractError("mean_ap: no class has ground truth");
  result.map = total / static_cast<double>(result.per_class_ap.size());
  return result;
}

std::string detections_to_jsonl(const std::vector<DetectionRecord>& detections) {
  std::string body;
  for (const auto& d : detections) {
    json j = {{"image", d.image_id}, {"class", d.class_id}, {"bbox", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}}, {"score", d.score}};
    body += j.dump() + "\n";
  }
  return body;
}

void write_detections(const std::vector<DetectionRecord>& detections, const std::filesystem::path& path) {
  const std::string body = detections_to_jsonl(detections);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot create " + tmp.string());
    out << body;
    if (!out.flush()) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<DetectionRecord> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open detections " + path.string());
  std::vector<DetectionRecord> out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const auto& bb = j.at("bbox");
      out.push_back({j.at("image").get<std::string>(), j.at("class").get<int>(),
                     Box{bb.at(0).get<double>(), bb.at(1).get<double>(), bb.at(2).get<double>(), bb.at(3).get<double>()},
                     j.at("score").get<double>()});
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

namespace {

std::string percent(const ApResult& r, int class_id) {
  auto it = r.per_class_ap.find(class_id);
  if (it == r.per_class_ap.end()) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * it->second);
  return buf;
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string format_report_text(const std::vector<ReportRow>& rows, const std::vector<ClassEntry>& classes,
                               const ReportMeta& meta) {
  std::vector<std::string> header{"backbone", "scale", "mAP"};
  for (const auto& c : classes) header.push_back(c.name);
  std::vector<std::vector<std::string>> cells{header};
  for (const auto& r : rows) {
    std::vector<std::string> line{r.backbone, std::to_string(r.scale), percent(r.result.map)};
    for (const auto& c : classes) line.push_back(percent(r.result, c.id));
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::ostringstream os;
  os << "# config " << hex(meta.config_hash) << " seed " << meta.seed << "\n";
  for (std::size_t l = 0; l < cells.size(); ++l) {
    for (std::size_t i = 0; i < cells[l].size(); ++i) {
      if (i) os << "  ";
      os << std::string(width[i] - cells[l][i].size(), ' ') << cells[l][i];
    }
    os << "\n";
    if (l == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      os << std::string(total - 2, '-') << "\n";
    }
  }
  return os.str();
}

std::string format_report_csv(const std::vector<ReportRow>& rows, const std::vector<ClassEntry>& classes,
                              const ReportMeta& meta) {
  std::ostringstream os;
  os << "# config " << hex(meta.config_hash) << " seed " << meta.seed << "\n";
  os << "backbone,scale,mAP";
  for (const auto& c : classes) os << "," << c.name;
  os << "\n";
  for (const auto& r : rows) {
    os << r.backbone << "," << r.scale << "," << percent(r.result.map);
    for (const auto& c : classes) os << "," << percent(r.result, c.id);
    os << "\n";
  }
  return os.str();
}

}  // namespace uavdet
