// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#include "uavdet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "uavdet/error.hpp"

namespace uavdet {

using nlohmann::json;

std::vector<Box> AnnotatedImage::boxes() const {
  std::vector<Box> out;
  for (const auto& o : objects) out.push_back(o.box);
  return out;
}

std::vector<int> AnnotatedImage::class_ids() const {
  std::vector<int> out;
  for (const auto& o : objects) out.push_back(o.class_id);
  return out;
}

std::vector<ClassEntry> default_class_table() {
  return {{1, "insulator"}, {2, "pole-and-tower"}, {3, "fitting"}, {4, "wire"}};
}

std::string DatasetManifest::class_name(int id) const {
  for (const auto& c : classes) {
    if (c.id == id) return c.name;
  }
  throw ContractError("unknown class id " + std::to_string(id));
}

void DatasetManifest::validate() const {
  if (classes.empty()) throw DataError("manifest has an empty class table");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].id != static_cast<int>(i) + 1) {
      throw DataError("class ids must be dense from 1 in table order (0 is background)");
    }
  }
}

const std::vector<AnnotatedImage>& Dataset::split(const std::string& name) const {
  auto it = records.find(name);
  if (it == records.end()) throw DataError("dataset has no split '" + name + "'");
  return it->second;
}

Image Dataset::load_raster(const AnnotatedImage& record) const {
  if (record.raster) return *record.raster;
  Image img = read_png(root / record.image_ref);
  if (img.width != record.width || img.height != record.height) {
    throw DataError("image " + record.image_ref + " is " + std::to_string(img.width) + "x" +
                    std::to_string(img.height) + " but annotated as " + std::to_string(record.width) +
                    "x" + std::to_string(record.height));
  }
  return img;
}

namespace {

AnnotatedImage parse_record(const json& j) {
  AnnotatedImage r;
  r.image_ref = j.at("image").get<std::string>();
  r.width = j.at("width").get<int>();
  r.height = j.at("height").get<int>();
  for (const auto& o : j.at("objects")) {
    const auto& bb = o.at("bbox");
    if (!bb.is_array() || bb.size() != 4) throw DataError("bbox must hold four numbers");
    r.objects.push_back(ObjectAnnotation{
        o.at("class").get<int>(),
        Box{bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(), bb[3].get<double>()}});
  }
  return r;
}

std::string check_record(const AnnotatedImage& r, int num_classes, const std::filesystem::path& root) {
  std::ostringstream problems;
  if (r.width <= 0 || r.height <= 0) problems << " non-positive image extent;";
  if (!std::filesystem::exists(root / r.image_ref)) problems << " missing image file " << r.image_ref << ";";
  for (std::size_t i = 0; i < r.objects.size(); ++i) {
    const auto& o = r.objects[i];
    if (o.class_id < 1 || o.class_id > num_classes) problems << " object " << i << " has unknown class " << o.class_id << ";";
    if (!o.box.valid()) {
      problems << " object " << i << " box " << to_string(o.box) << " is degenerate;";
    } else if (o.box.x1 < 0 || o.box.y1 < 0 || o.box.x2 > r.width || o.box.y2 > r.height) {
      problems << " object " << i << " box " << to_string(o.box) << " is out of bounds;";
    }
  }
  return problems.str();
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest " + manifest_path.string());
  Dataset ds;
  ds.root = manifest_path.parent_path();
  try {
    const json m = json::parse(in);
    if (m.value("version", 1) != 1) throw DataError("unsupported manifest version");
    for (const auto& c : m.at("classes")) {
      ds.manifest.classes.push_back({c.at("id").get<int>(), c.at("name").get<std::string>()});
    }
    for (const auto& [split, files] : m.at("splits").items()) {
      ds.manifest.splits[split] = files.get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  ds.manifest.validate();

  std::vector<std::string> offenders;
  for (const auto& [split, files] : ds.manifest.splits) {
    auto& out = ds.records[split];
    for (const auto& file : files) {
      std::ifstream ann(ds.root / file);
      if (!ann) {
        offenders.push_back(file + ": cannot open annotation file");
        continue;
      }
      std::string line;
      for (int line_no = 1; std::getline(ann, line); ++line_no) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = file + ":" + std::to_string(line_no) + ":";
        try {
          AnnotatedImage r = parse_record(json::parse(line));
          const std::string problems = check_record(r, ds.manifest.num_classes(), ds.root);
          if (!problems.empty()) {
            offenders.push_back(where + problems);
          } else {
            out.push_back(std::move(r));
          }
        } catch (const std::exception& e) {
          offenders.push_back(where + " " + e.what());
        }
      }
    }
  }
  if (!offenders.empty()) {
    std::ostringstream msg;
    msg << offenders.size() << " invalid annotation record(s):";
    for (const auto& o : offenders) msg << "\n  " << o;
    throw DataError(msg.str());
  }
  return ds;
}

std::string annotation_to_json_line(const AnnotatedImage& record) {
  json objects = json::array();
  for (const auto& o : record.objects) {
    objects.push_back({{"class", o.class_id}, {"bbox", {o.box.x1, o.box.y1, o.box.x2, o.box.y2}}});
  }
  json j = {{"image", record.image_ref}, {"width", record.width}, {"height", record.height}, {"objects", objects}};
  return j.dump();
}

namespace {

void write_atomically(const std::filesystem::path& path, const std::string& contents) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot create " + tmp.string());
    out << contents;
    if (!out.flush()) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  json classes = json::array();
  for (const auto& c : manifest.classes) classes.push_back({{"id", c.id}, {"name", c.name}});
  json splits = json::object();
  for (const auto& [name, files] : manifest.splits) splits[name] = files;
  json m = {{"version", 1}, {"classes", classes}, {"splits", splits}};
  write_atomically(path, m.dump(2) + "\n");
}

void write_annotations(const std::vector<AnnotatedImage>& records, const std::filesystem::path& path) {
  std::string body;
  for (const auto& r : records) body += annotation_to_json_line(r) + "\n";
  write_atomically(path, body);
}

double resize_scale(int width, int height, int short_side, int max_side) {
  if (short_side < 1 || max_side < short_side) throw ConfigError("need 1 <= short_side <= max_side");
  if (width < 1 || height < 1) throw ContractError("resize of an empty image");
  double s = static_cast<double>(short_side) / std::min(width, height);
  if (s * std::max(width, height) > max_side) s = static_cast<double>(max_side) / std::max(width, height);
  return s;
}

ResizeResult resize_with_boxes(const AnnotatedImage& img, int short_side, int max_side) {
  if (!img.raster) throw ContractError("resize_with_boxes needs a loaded raster");
  const double s = resize_scale(img.width, img.height, short_side, max_side);
  const int w = std::max(1, static_cast<int>(std::lround(img.width * s)));
  const int h = std::max(1, static_cast<int>(std::lround(img.height * s)));
  ResizeResult out{AnnotatedImage{img.image_ref, w, h, {}, resize_bilinear(*img.raster, w, h)}, s};
  for (const auto& o : img.objects) {
    const Box scaled{o.box.x1 * s, o.box.y1 * s, o.box.x2 * s, o.box.y2 * s};
    out.image.objects.push_back({o.class_id, clip_to_image(scaled, w, h).box});
  }
  return out;
}

AnnotatedImage hflip_augment(const AnnotatedImage& img) {
  AnnotatedImage out{img.image_ref, img.width, img.height, {}, std::nullopt};
  if (img.raster) out.raster = mirror_horizontal(*img.raster);
  for (const auto& o : img.objects) out.objects.push_back({o.class_id, flip_horizontal(o.box, img.width)});
  return out;
}

FiveCropResult five_crop_augment(const AnnotatedImage& img, int crop_size, double retain_fraction) {
  FiveCropResult result;
  if (crop_size < 1) throw ConfigError("crop size must be positive");
  if (img.width < crop_size || img.height < crop_size) {
    result.undersized = true;
    return result;
  }
  const int dx = img.width - crop_size, dy = img.height - crop_size;
  const std::vector<std::pair<int, int>> origins{{0, 0}, {dx, 0}, {0, dy}, {dx, dy}, {dx / 2, dy / 2}};
  std::set<std::pair<int, int>> seen;
  for (const auto& [ox, oy] : origins) {
    if (!seen.insert({ox, oy}).second) continue;
    const Box window{static_cast<double>(ox), static_cast<double>(oy), static_cast<double>(ox + crop_size),
                     static_cast<double>(oy + crop_size)};
    AnnotatedImage c{img.image_ref, crop_size, crop_size, {}, std::nullopt};
    for (const auto& o : img.objects) {
      const double iw = std::min(o.box.x2, window.x2) - std::max(o.box.x1, window.x1);
      const double ih = std::min(o.box.y2, window.y2) - std::max(o.box.y1, window.y1);
      if (iw <= 0 || ih <= 0 || iw * ih < retain_fraction * o.box.area()) continue;
      const Box shifted{o.box.x1 - ox, o.box.y1 - oy, o.box.x2 - ox, o.box.y2 - oy};
      c.objects.push_back({o.class_id, clip_to_image(shifted, crop_size, crop_size).box});
    }
    if (c.objects.empty()) continue;
    if (img.raster) c.raster = crop(*img.raster, ox, oy, crop_size, crop_size);
    result.crops.push_back(std::move(c));
  }
  return result;
}

}  // namespace uavdet
