#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "maf/dataset.hpp"
#include "maf/rng.hpp"

using namespace maf;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("maf_dataset_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// re-rasterize an object's geometry and count how many of its pixels still
// carry its color in the final image
double visible_fraction(const Scene& scene, size_t idx) {
  const auto& o = scene.objects[idx];
  const int n = scene.image.shape[1];
  const double half = 0.5 * o.size;
  int total = 0, visible = 0;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      bool inside = false;
      if (o.cls == 0) {
        inside = (px - o.cx) * (px - o.cx) + (py - o.cy) * (py - o.cy) <= half * half;
      } else if (o.cls == 1) {
        inside = std::abs(px - o.cx) <= half && std::abs(py - o.cy) <= half;
      } else {
        const double top = o.cy - half, bot = o.cy + half;
        inside = py >= top && py <= bot && std::abs(px - o.cx) <= half * (py - top) / (bot - top);
      }
      if (!inside) continue;
      ++total;
      if (scene.image.at(0, y, x) == o.r && scene.image.at(1, y, x) == o.g &&
          scene.image.at(2, y, x) == o.b) {
        ++visible;
      }
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(visible) / total;
}

}  // namespace

TEST_CASE("scene generation is bit-deterministic") {
  SceneSpec spec;
  spec.seed = 77;
  Scene a = generate_scene(spec, 5, 12);
  Scene b = generate_scene(spec, 5, 12);
  CHECK(a.image.values == b.image.values);
  CHECK(a.ann.boxes == b.ann.boxes);
  CHECK(a.ann.labels == b.ann.labels);

  Scene c = generate_scene(spec, 5, 13);
  CHECK(a.image.values != c.image.values);
}

TEST_CASE("scene pixels stay in range and objects stay visible") {
  SceneSpec spec;
  spec.seed = 3;
  for (int idx = 0; idx < 20; ++idx) {
    Scene sc = generate_scene(spec, 9, idx);
    for (double v : sc.image.values) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    REQUIRE(!sc.ann.boxes.empty());
    CHECK(sc.ann.boxes.size() == sc.ann.labels.size());
    CHECK(sc.ann.boxes.size() <= 4);
    for (size_t i = 0; i < sc.objects.size(); ++i) {
      // boxes are tight over the raster, so every visible pixel is inside;
      // at least 60% of the geometry must remain unoccluded
      CHECK(visible_fraction(sc, i) >= 0.6);
      const auto& b = sc.ann.boxes[i];
      CHECK(b.x1 >= 0.0);
      CHECK(b.y1 >= 0.0);
      CHECK(b.x2 <= spec.image_size);
      CHECK(b.y2 <= spec.image_size);
      CHECK(b.area() > 0.0);
    }
    // pairwise box IoU below the placement bound
    for (size_t i = 0; i < sc.ann.boxes.size(); ++i) {
      for (size_t j = i + 1; j < sc.ann.boxes.size(); ++j) {
        CHECK(iou(sc.ann.boxes[i], sc.ann.boxes[j]) < 0.3);
      }
    }
  }
}

TEST_CASE("domain shift identity and saturation cases") {
  SceneSpec spec;
  spec.seed = 21;
  Scene sc = generate_scene(spec, 1, 0);

  ShiftSpec none{0.0, 0, 0.0};
  Tensor same = apply_domain_shift(sc.image, none, 9);
  CHECK(same.values == sc.image.values);

  ShiftSpec white{1.0, 0, 0.0};
  Tensor blank = apply_domain_shift(sc.image, white, 9);
  for (double v : blank.values) CHECK(v == 1.0);
}

TEST_CASE("fog strictly raises the mean of any non-white image") {
  SceneSpec spec;
  spec.seed = 33;
  for (int idx = 0; idx < 5; ++idx) {
    Scene sc = generate_scene(spec, 2, idx);
    for (double alpha : {0.3, 0.45, 0.6}) {
      ShiftSpec shift{alpha, 0, 0.0};
      Tensor out = apply_domain_shift(sc.image, shift, 1);
      double m_in = 0.0, m_out = 0.0;
      for (double v : sc.image.values) m_in += v;
      for (double v : out.values) m_out += v;
      CHECK(m_out > m_in);
    }
  }
}

TEST_CASE("shift spec validation bounds") {
  ShiftSpec ok{0.45, 1, 0.1};
  ok.validate();
  CHECK_THROWS_AS((ShiftSpec{0.2, 1, 0.1}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((ShiftSpec{0.7, 1, 0.1}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((ShiftSpec{0.4, 3, 0.1}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((ShiftSpec{0.4, 1, 0.5}).validate(), std::invalid_argument);
}

TEST_CASE("ppm round trip is exact after 8-bit quantization") {
  SceneSpec spec;
  spec.seed = 55;
  Scene sc = generate_scene(spec, 4, 2);
  const auto dir = temp_dir("ppm");
  write_ppm(dir / "img.ppm", sc.image);
  Tensor back = read_ppm(dir / "img.ppm");
  CHECK(back.shape == sc.image.shape);
  // quantize the original the same way and compare exactly
  for (size_t i = 0; i < back.values.size(); ++i) {
    const double q = std::lround(sc.image.values[i] * 255.0) / 255.0;
    CHECK(back.values[i] == q);
  }
  // and a second write of the read-back image is byte-identical
  write_ppm(dir / "img2.ppm", back);
  std::ifstream f1(dir / "img.ppm", std::ios::binary), f2(dir / "img2.ppm", std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
}

TEST_CASE("benchmark tree layout, counts and schema") {
  const auto dir = temp_dir("bench");
  GenSpec spec;
  spec.scene.seed = 7;
  spec.n_source = 6;
  spec.n_target = 5;
  spec.n_val = 4;
  generate_benchmark(dir, spec);

  Dataset train = read_dataset(dir / "train");
  CHECK(train.samples.size() == 11);
  CHECK(train.source_indices.size() == 6);
  CHECK(train.target_indices.size() == 5);
  int ppm_count = 0;
  for (const auto& e : fs::directory_iterator(dir / "train")) {
    if (e.path().extension() == ".ppm") ++ppm_count;
  }
  CHECK(ppm_count == 11);

  for (int i : train.source_indices) {
    CHECK(!train.samples[static_cast<size_t>(i)].ann.boxes.empty());
  }
  // unlabeled target records carry no boxes and no labels
  for (int i : train.target_indices) {
    CHECK(train.samples[static_cast<size_t>(i)].ann.boxes.empty());
    CHECK(train.samples[static_cast<size_t>(i)].ann.labels.empty());
  }

  // val: labeled target-style samples for evaluation
  Dataset val = read_dataset(dir / "val");
  CHECK(val.samples.size() == 4);
  for (const auto& s : val.samples) {
    CHECK(s.domain == kDomainTarget);
    CHECK(!s.ann.boxes.empty());
  }

  // source must be non-empty
  GenSpec bad = spec;
  bad.n_source = 0;
  CHECK_THROWS_AS(generate_benchmark(temp_dir("bad"), bad), std::invalid_argument);
}

TEST_CASE("dataset write/read round trip preserves pixels and annotations") {
  const auto dir = temp_dir("roundtrip");
  GenSpec spec;
  spec.scene.seed = 13;
  spec.n_source = 3;
  spec.n_target = 3;
  spec.n_val = 2;
  generate_benchmark(dir, spec);

  Dataset a = read_dataset(dir / "train");
  Dataset b = read_dataset(dir / "train");
  REQUIRE(a.samples.size() == b.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].image.values == b.samples[i].image.values);
    CHECK(a.samples[i].ann.boxes == b.samples[i].ann.boxes);
  }
}

TEST_CASE("source and target streams are disjoint") {
  SceneSpec spec;
  spec.seed = 99;
  // same index, different stream tags: different scenes
  Scene src = generate_scene(spec, 0x501, 0);
  Scene tgt = generate_scene(spec, 0x702, 0);
  CHECK(src.image.values != tgt.image.values);
}

TEST_CASE("read errors name the offending file") {
  const auto dir = temp_dir("errors");
  CHECK_THROWS_WITH_AS(read_dataset(dir), doctest::Contains("annotations.jsonl"),
                       std::runtime_error);

  // corrupt jsonl line
  {
    std::ofstream f(dir / "annotations.jsonl");
    f << "{not json}\n";
  }
  CHECK_THROWS_WITH_AS(read_dataset(dir), doctest::Contains("annotations.jsonl"),
                       std::runtime_error);

  // record referring to a missing image
  {
    std::ofstream f(dir / "annotations.jsonl");
    f << R"({"file":"missing.ppm","domain":"source","boxes":[],"labels":[]})" << "\n";
  }
  CHECK_THROWS_WITH_AS(read_dataset(dir), doctest::Contains("missing.ppm"), std::runtime_error);
}
