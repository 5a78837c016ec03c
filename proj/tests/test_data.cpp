// Copyright (C) 2026 The uavdet Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "support.hpp"
#include "toy.hpp"
#include "uavdet/dataset.hpp"
#include "uavdet/error.hpp"
#include "uavdet/image.hpp"
#include "uavdet/synthetic.hpp"
#include "uavdet/training.hpp"

using namespace uavdet;
using namespace uavdet::testing;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

Image gradient_image(int w, int h) {
  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::uint8_t* p = img.pixel(x, y);
      p[0] = static_cast<std::uint8_t>(x * 7 + y);
      p[1] = static_cast<std::uint8_t>(y * 3);
      p[2] = static_cast<std::uint8_t>(x ^ y);
    }
  return img;
}

// Writes a one-split dataset with a single annotation line.
std::filesystem::path write_one(const std::filesystem::path& dir, const std::string& objects_json, int w = 40,
                                int h = 30) {
  write_png(gradient_image(w, h), dir / "a.png");
  DatasetManifest m;
  m.classes = default_class_table();
  m.splits["train"] = {"train.jsonl"};
  write_manifest(m, dir / "manifest.json");
  std::ofstream(dir / "train.jsonl") << R"({"image":"a.png","width":)" << w << R"(,"height":)" << h
                                     << R"(,"objects":)" << objects_json << "}\n";
  return dir / "manifest.json";
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("dataset loading validates records") {
  TempDir t("uavdet_test_load");
  const Dataset empty = load_dataset(write_one(t.path, "[]"));
  CHECK(empty.split("train").size() == 1);
  CHECK(empty.split("train")[0].objects.empty());
  CHECK(empty.manifest.class_name(4) == "wire");

  const Dataset one = load_dataset(write_one(t.path, R"([{"class":2,"bbox":[1,2,30,25]}])"));
  CHECK(one.split("train")[0].objects[0] == ObjectAnnotation{2, Box{1, 2, 30, 25}});
  CHECK(one.load_raster(one.split("train")[0]) == gradient_image(40, 30));
  CHECK_THROWS_AS(one.split("test"), DataError);

  CHECK_THROWS_AS(load_dataset(write_one(t.path, R"([{"class":1,"bbox":[10,2,5,25]}])")), DataError);
  CHECK_THROWS_AS(load_dataset(write_one(t.path, R"([{"class":1,"bbox":[10,2,50,25]}])")), DataError);
  CHECK_THROWS_AS(load_dataset(write_one(t.path, R"([{"class":7,"bbox":[1,2,5,25]}])")), DataError);
  write_one(t.path, "[]");
  std::filesystem::remove(t.path / "a.png");
  CHECK_THROWS_AS(load_dataset(t.path / "manifest.json"), DataError);
  std::string msg;
  try {
    load_dataset(write_one(t.path, R"([{"class":1,"bbox":[10,2,5,25]},{"class":9,"bbox":[1,1,2,2]}])"));
  } catch (const DataError& e) {
    msg = e.what();
  }
  CHECK(msg.find("train.jsonl:1") != std::string::npos);
  CHECK(msg.find("object 1") != std::string::npos);
}

TEST_CASE("annotations round trip through disk") {
  TempDir t("uavdet_test_roundtrip");
  std::vector<AnnotatedImage> records;
  for (int i = 0; i < 3; ++i) {
    AnnotatedImage r;
    r.image_ref = "img" + std::to_string(i) + ".png";
    r.width = 40;
    r.height = 30;
    if (i > 0) r.objects.push_back({i, Box{1.25, 2.5, 20.75, 10.0 + i}});
    write_png(gradient_image(40, 30), t.path / r.image_ref);
    records.push_back(r);
  }
  DatasetManifest m;
  m.classes = default_class_table();
  m.splits["test"] = {"test.jsonl"};
  write_manifest(m, t.path / "manifest.json");
  write_annotations(records, t.path / "test.jsonl");
  const Dataset ds = load_dataset(t.path / "manifest.json");
  REQUIRE(ds.split("test").size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(ds.split("test")[static_cast<std::size_t>(i)].image_ref == records[static_cast<std::size_t>(i)].image_ref);
    CHECK(ds.split("test")[static_cast<std::size_t>(i)].objects == records[static_cast<std::size_t>(i)].objects);
  }
  CHECK(ds.manifest.classes == m.classes);
}

TEST_CASE("resize policy") {
  CHECK(resize_scale(2000, 1000, 600, 1000) == 0.5);
  CHECK(resize_scale(500, 500, 600, 1000) == doctest::Approx(1.2));
  CHECK(resize_scale(800, 600, 600, 1000) == 1.0);
  for (int s : {600, 800, 1000}) CHECK(resize_scale(1000, 750, s, 1333) > 0.0);

  AnnotatedImage img{"x", 200, 100, {{1, Box{20, 10, 60, 50}}}, gradient_image(200, 100)};
  const ResizeResult r = resize_with_boxes(img, 60, 100);
  CHECK(r.scale == 0.5);
  CHECK(r.image.width == 100);
  CHECK(r.image.height == 50);
  CHECK(r.image.raster->width == 100);
  CHECK(r.image.objects[0].box == Box{10, 5, 30, 25});

  AnnotatedImage sq{"y", 50, 50, {}, gradient_image(50, 50)};
  const ResizeResult rs = resize_with_boxes(sq, 60, 100);
  CHECK(rs.image.width == 60);
  CHECK(rs.image.height == 60);

  Rng rng(71);
  for (int t = 0; t < 50; ++t) {
    const int w = 50 + static_cast<int>(rng.uniform_index(2000)), h = 50 + static_cast<int>(rng.uniform_index(2000));
    const int shorter = 100 + static_cast<int>(rng.uniform_index(900));
    const int cap = shorter + static_cast<int>(rng.uniform_index(1000));
    const double s = resize_scale(w, h, shorter, cap);
    const double nw = w * s, nh = h * s;
    CHECK((std::abs(std::min(nw, nh) - shorter) < 1e-9 || std::abs(std::max(nw, nh) - cap) < 1e-9));
    CHECK(std::max(nw, nh) <= cap + 1e-9);
  }
}

TEST_CASE("horizontal flip") {
  AnnotatedImage img{"x", 40, 30, {{1, Box{0, 5, 8, 20}}, {3, Box{10, 1, 35, 29}}}, gradient_image(40, 30)};
  const AnnotatedImage f = hflip_augment(img);
  CHECK(f.objects.size() == 2);
  CHECK(f.objects[0].box == Box{32, 5, 40, 20});
  CHECK(f.raster->pixel(39, 3)[0] == img.raster->pixel(0, 3)[0]);
  const AnnotatedImage ff = hflip_augment(f);
  CHECK(*ff.raster == *img.raster);
  CHECK(ff.objects == img.objects);
}

TEST_CASE("five-crop retention rule") {
  AnnotatedImage img{"x", 1000, 800, {}, std::nullopt};
  img.objects.push_back({1, Box{450, 350, 550, 450}});   // center
  img.objects.push_back({2, Box{580, 0, 680, 100}});     // 20 of 100 px inside the top-left crop
  const FiveCropResult r = five_crop_augment(img, 600);
  CHECK_FALSE(r.undersized);
  REQUIRE(r.crops.size() == 5);
  const AnnotatedImage& tl = r.crops[0];
  CHECK(tl.objects.size() == 1);
  CHECK(tl.objects[0].class_id == 1);
  const AnnotatedImage& center = r.crops[4];
  CHECK(center.objects[0].box == Box{250, 250, 350, 350});
  for (const auto& c : r.crops)
    for (const auto& o : c.objects) {
      CHECK(o.box.valid());
      CHECK(o.box.x2 <= 600);
      CHECK(o.box.y2 <= 600);
    }

  AnnotatedImage ten{"z", 1000, 800, {{1, Box{590, 0, 690, 50}}}, std::nullopt};  // 10% inside top-left
  for (const auto& c : five_crop_augment(ten, 600).crops) {
    for (const auto& o : c.objects) CHECK(o.box.width() > 10.0);
  }

  AnnotatedImage exact{"s", 600, 600, {{1, Box{10, 10, 50, 50}}}, gradient_image(600, 600)};
  const FiveCropResult one = five_crop_augment(exact, 600);
  CHECK(one.crops.size() == 1);
  CHECK(*one.crops[0].raster == *exact.raster);
  CHECK(five_crop_augment(AnnotatedImage{"u", 500, 700, {}, std::nullopt}, 600).undersized);
}

TEST_CASE("five-crop training sets") {
  const AnnotatedImage big{"b", 1000, 800, {{1, Box{450, 350, 550, 450}}}, std::nullopt};
  const AnnotatedImage small{"s", 300, 200, {{2, Box{10, 10, 50, 50}}}, std::nullopt};
  const TrainingSet set = five_crop_set({big, small}, 600);
  REQUIRE(set.size() == 6);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(set[i].width == 600);
    CHECK(set[i].height == 600);
  }
  CHECK(set[5].image_ref == "s");
  CHECK(set[5].width == 300);
  CHECK(set[5].objects == small.objects);
  CHECK(five_crop_set({}, 600).empty());
}

TEST_CASE("synthetic boxes tightly bound the rendered pixels") {
  SyntheticConfig cfg = toy_scene_config();
  cfg.width = 160;
  cfg.height = 120;
  cfg.max_objects = 3;
  cfg.small_fraction = 0.3;
  cfg.min_object = 20;
  cfg.max_object = 60;
  Rng rng(72);
  double widest_wire = 0.0;
  for (int t = 0; t < 40; ++t) {
    const int cls = 1 + t % 4;
    const RenderedScene s = render_scene(cfg, cls, rng);
    REQUIRE_FALSE(s.objects.empty());
    for (const auto& o : s.objects) {
      CHECK(o.class_id == cls);
      int x1 = cfg.width, y1 = cfg.height, x2 = -1, y2 = -1;
      const int bx1 = std::max(0, static_cast<int>(o.box.x1) - 3), by1 = std::max(0, static_cast<int>(o.box.y1) - 3);
      const int bx2 = std::min(cfg.width, static_cast<int>(o.box.x2) + 3);
      const int by2 = std::min(cfg.height, static_cast<int>(o.box.y2) + 3);
      for (int y = by1; y < by2; ++y)
        for (int x = bx1; x < bx2; ++x) {
          if (std::equal(s.image.pixel(x, y), s.image.pixel(x, y) + 3, s.background.pixel(x, y))) continue;
          x1 = std::min(x1, x);
          y1 = std::min(y1, y);
          x2 = std::max(x2, x + 1);
          y2 = std::max(y2, y + 1);
        }
      const Box mask{static_cast<double>(x1), static_cast<double>(y1), static_cast<double>(x2),
                     static_cast<double>(y2)};
      CHECK(oracle_iou(mask, o.box) == 1.0);
      if (cls == 4) {
        widest_wire = std::max(widest_wire, std::max(o.box.width(), o.box.height()) /
                                                std::min(o.box.width(), o.box.height()));
      }
    }
  }
  CHECK(widest_wire >= 8.0);
}

TEST_CASE("synthetic dataset generation is deterministic and counts match") {
  TempDir a("uavdet_test_syn_a"), b("uavdet_test_syn_b");
  SyntheticConfig cfg = toy_scene_config();
  cfg.train_counts = {3, 5, 4, 2};
  cfg.test_counts = {1, 2, 1, 1};
  cfg.seed = 9;
  const Dataset da = generate_synthetic_dataset(cfg, a.path);
  generate_synthetic_dataset(cfg, b.path);
  CHECK(da.split("train").size() == 14);
  CHECK(da.split("test").size() == 5);
  std::array<int, 4> per_class{};
  for (const auto& r : da.split("train")) per_class[static_cast<std::size_t>(r.objects.at(0).class_id - 1)]++;
  CHECK(per_class == cfg.train_counts);
  CHECK(read_file(a.path / "train.jsonl") == read_file(b.path / "train.jsonl"));
  for (const auto& r : da.split("test")) CHECK(read_file(a.path / r.image_ref) == read_file(b.path / r.image_ref));
  const Dataset reloaded = load_dataset(a.path / "manifest.json");
  CHECK(reloaded.split("train").size() == 14);

  CHECK(proportional_counts({1200, 2000, 1800, 600}, 56) == std::array<int, 4>{12, 20, 18, 6});
  CHECK(proportional_counts({1, 1, 1, 0}, 2) == std::array<int, 4>{1, 1, 0, 0});
  SyntheticConfig bad = cfg;
  bad.test_counts[2] = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
