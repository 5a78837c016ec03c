// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Annotated images, dataset manifests, resizing and augmentation.
//
// On disk a dataset is a directory holding
//   manifest.json   {"version":1,"classes":[{"id":1,"name":"insulator"},...],
//                    "splits":{"train":["train.jsonl"],"test":["test.jsonl"]}}
//   *.jsonl         one {"image","width","height","objects":[{"class","bbox"}]}
//                   object per line
//   images          PNG rasters
// with every path relative to the manifest directory.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uavdet/box.hpp"
#include "uavdet/image.hpp"

namespace uavdet {

struct ObjectAnnotation {
  int class_id = 0;  // 1..K
  Box box;

  friend bool operator==(const ObjectAnnotation&, const ObjectAnnotation&) = default;
};

struct AnnotatedImage {
  std::string image_ref;  // relative to the dataset root
  int width = 0;
  int height = 0;
  std::vector<ObjectAnnotation> objects;
  std::optional<Image> raster;  // loaded on demand

  std::vector<Box> boxes() const;
  std::vector<int> class_ids() const;
};

struct ClassEntry {
  int id = 0;
  std::string name;

  friend bool operator==(const ClassEntry&, const ClassEntry&) = default;
};

// Default class table: 1 insulator, 2 pole-and-tower, 3 fitting, 4 wire.
std::vector<ClassEntry> default_class_table();

struct DatasetManifest {
  std::vector<ClassEntry> classes;
  std::map<std::string, std::vector<std::string>> splits;  // split → annotation files

  int num_classes() const { return static_cast<int>(classes.size()); }
  std::string class_name(int id) const;
  void validate() const;
};

struct Dataset {
  std::filesystem::path root;
  DatasetManifest manifest;
  std::map<std::string, std::vector<AnnotatedImage>> records;  // split → images

  const std::vector<AnnotatedImage>& split(const std::string& name) const;
  // Raster of a record, read from disk unless already attached.
  Image load_raster(const AnnotatedImage& record) const;
};

// Parses and validates; throws DataError listing every offending line.
Dataset load_dataset(const std::filesystem::path& manifest_path);

std::string annotation_to_json_line(const AnnotatedImage& record);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
void write_annotations(const std::vector<AnnotatedImage>& records, const std::filesystem::path& path);

struct ResizeResult {
  AnnotatedImage image;
  double scale = 1.0;
};

// Scale s = short_side / min(W, H), lowered so that max(W, H)·s ≤ max_side.
double resize_scale(int width, int height, int short_side, int max_side);

// Requires an attached raster.
ResizeResult resize_with_boxes(const AnnotatedImage& img, int short_side, int max_side);

AnnotatedImage hflip_augment(const AnnotatedImage& img);

struct FiveCropResult {
  std::vector<AnnotatedImage> crops;
  bool undersized = false;
};

// Crops anchored at the four corners and the center. A box is kept in a crop
// when at least `retain_fraction` of its area lies inside, then clipped.
// Coinciding windows are emitted once and crops without boxes are dropped.
FiveCropResult five_crop_augment(const AnnotatedImage& img, int crop_size = 600,
                                 double retain_fraction = 0.5);

}  // namespace uavdet
