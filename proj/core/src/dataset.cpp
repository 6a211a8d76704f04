#include "maf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "maf/rng.hpp"

namespace maf {

using nlohmann::json;

const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names = {"disc", "square", "triangle"};
  return names;
}

void ShiftSpec::validate() const {
  if (fog_alpha < 0.3 || fog_alpha > 0.6) {
    throw std::invalid_argument("shift: fog_alpha " + std::to_string(fog_alpha) +
                                " outside [0.3, 0.6]");
  }
  if (blur_radius < 1 || blur_radius > 2) {
    throw std::invalid_argument("shift: blur_radius must be 1 or 2");
  }
  if (brightness_jitter < 0.0 || brightness_jitter > 0.1) {
    throw std::invalid_argument("shift: brightness_jitter outside [0, 0.1]");
  }
}

namespace {

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double rr = 0, gg = 0, bb = 0;
  if (hp < 1)      { rr = c; gg = x; }
  else if (hp < 2) { rr = x; gg = c; }
  else if (hp < 3) { gg = c; bb = x; }
  else if (hp < 4) { gg = x; bb = c; }
  else if (hp < 5) { rr = x; bb = c; }
  else             { rr = c; bb = x; }
  const double m = v - c;
  r = rr + m;
  g = gg + m;
  b = bb + m;
}

// pixel-center coverage test per shape class
bool covers(const SceneObject& o, int px, int py) {
  const double x = px + 0.5, y = py + 0.5;
  const double half = 0.5 * o.size;
  switch (o.cls) {
    case 0: {  // disc
      const double dx = x - o.cx, dy = y - o.cy;
      return dx * dx + dy * dy <= half * half;
    }
    case 1:  // square
      return std::abs(x - o.cx) <= half && std::abs(y - o.cy) <= half;
    case 2: {  // upward triangle
      const double top_y = o.cy - half;
      const double bot_y = o.cy + half;
      if (y < top_y || y > bot_y) return false;
      // width grows linearly from apex to base
      const double frac = (y - top_y) / (bot_y - top_y);
      return std::abs(x - o.cx) <= half * frac;
    }
    default: return false;
  }
}

BBox geometry_box(const SceneObject& o) {
  const double half = 0.5 * o.size;
  return {o.cx - half, o.cy - half, o.cx + half, o.cy + half};
}

}  // namespace

Scene generate_scene(const SceneSpec& spec, uint64_t stream_tag, int index) {
  const int n = spec.image_size;
  Rng rng(mix64(spec.seed, stream_tag, static_cast<uint64_t>(index)));

  Scene scene;
  scene.image = Tensor::zeros({3, n, n});

  // background: bilinear blend of four dim corner colors plus pixel noise
  double corner[4][3];
  for (auto& c : corner)
    for (double& v : c) v = rng.uniform(0.10, 0.45);
  for (int y = 0; y < n; ++y) {
    const double fy = static_cast<double>(y) / (n - 1);
    for (int x = 0; x < n; ++x) {
      const double fx = static_cast<double>(x) / (n - 1);
      for (int ch = 0; ch < 3; ++ch) {
        const double top = corner[0][ch] * (1 - fx) + corner[1][ch] * fx;
        const double bot = corner[2][ch] * (1 - fx) + corner[3][ch] * fx;
        double v = top * (1 - fy) + bot * fy + rng.uniform(-0.02, 0.02);
        scene.image.at(ch, y, x) = std::clamp(v, 0.0, 1.0);
      }
    }
  }

  // place objects: boxes inside the image, box IoU < 0.3 and pixel-disjoint
  // masks so no annotation ends up mostly hidden
  const int want = rng.uniform_int(spec.objects_min, spec.objects_max);
  std::vector<std::vector<char>> masks;
  for (int obj_i = 0; obj_i < want; ++obj_i) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      SceneObject o;
      o.cls = rng.uniform_int(0, SceneSpec::kNumClasses - 1);
      o.size = rng.uniform(16.0, 40.0);
      const double half = 0.5 * o.size;
      o.cx = rng.uniform(half + 1.0, n - half - 1.0);
      o.cy = rng.uniform(half + 1.0, n - half - 1.0);
      const double hue = rng.uniform();
      const double sat = rng.uniform(0.65, 1.0);
      const double val = rng.uniform(0.65, 1.0);
      hsv_to_rgb(hue, sat, val, o.r, o.g, o.b);

      const BBox gb = geometry_box(o);
      bool ok = true;
      for (const auto& other : scene.objects) {
        if (iou(gb, geometry_box(other)) >= 0.3) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;

      std::vector<char> mask(static_cast<size_t>(n) * n, 0);
      for (int y = std::max(0, static_cast<int>(gb.y1)); y < std::min<double>(n, gb.y2 + 1); ++y) {
        for (int x = std::max(0, static_cast<int>(gb.x1)); x < std::min<double>(n, gb.x2 + 1); ++x) {
          if (covers(o, x, y)) mask[static_cast<size_t>(y) * n + x] = 1;
        }
      }
      for (const auto& m : masks) {
        for (size_t i = 0; i < mask.size() && ok; ++i) {
          if (mask[i] && m[i]) ok = false;
        }
        if (!ok) break;
      }
      if (!ok) continue;

      // tight box from the rasterized mask
      int x1 = n, y1 = n, x2 = -1, y2 = -1;
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          if (!mask[static_cast<size_t>(y) * n + x]) continue;
          x1 = std::min(x1, x);
          y1 = std::min(y1, y);
          x2 = std::max(x2, x);
          y2 = std::max(y2, y);
        }
      }
      if (x2 < 0) continue;  // degenerate raster (size too small)

      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          if (!mask[static_cast<size_t>(y) * n + x]) continue;
          scene.image.at(0, y, x) = o.r;
          scene.image.at(1, y, x) = o.g;
          scene.image.at(2, y, x) = o.b;
        }
      }
      masks.push_back(std::move(mask));
      scene.objects.push_back(o);
      scene.ann.boxes.push_back({static_cast<double>(x1), static_cast<double>(y1),
                                 static_cast<double>(x2 + 1), static_cast<double>(y2 + 1)});
      scene.ann.labels.push_back(o.cls);
      placed = true;
    }
    // placement failure just yields fewer objects; the first one always fits
  }
  return scene;
}

namespace {

Tensor box_blur(const Tensor& image, int radius) {
  if (radius <= 0) return image;
  const int h = image.shape[1], w = image.shape[2];
  Tensor out = Tensor::zeros(image.shape);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int dy = -radius; dy <= radius; ++dy) {
          const int yy = std::clamp(y + dy, 0, h - 1);
          for (int dx = -radius; dx <= radius; ++dx) {
            const int xx = std::clamp(x + dx, 0, w - 1);
            acc += image.at(c, yy, xx);
          }
        }
        const int k = 2 * radius + 1;
        out.at(c, y, x) = acc / (k * k);
      }
    }
  }
  return out;
}

}  // namespace

Tensor apply_domain_shift(const Tensor& image, const ShiftSpec& shift, uint64_t seed) {
  Rng rng(mix64(seed, 0x5D1F7ULL));
  Tensor out = box_blur(image, shift.blur_radius);
  const double a = shift.fog_alpha;
  const double jitter = shift.brightness_jitter > 0.0
                            ? rng.uniform(-shift.brightness_jitter, shift.brightness_jitter)
                            : 0.0;
  for (auto& v : out.values) {
    v = std::clamp((v * (1.0 - a) + a) * (1.0 + jitter), 0.0, 1.0);
  }
  return out;
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.shape[0] != 3) {
    throw std::invalid_argument("write_ppm: expected [3,H,W] image");
  }
  const int h = image.shape[1], w = image.shape[2];
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path.string());
  f << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const long q = std::lround(image.at(c, y, x) * 255.0);
        row[static_cast<size_t>(x) * 3 + c] = static_cast<unsigned char>(std::clamp(q, 0L, 255L));
      }
    }
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw std::runtime_error("write_ppm: write failed for " + path.string());
}

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_ppm: cannot open " + path.string());
  std::string magic;
  f >> magic;
  if (magic != "P6") throw std::runtime_error("read_ppm: " + path.string() + " is not binary PPM");
  int w = 0, h = 0, maxval = 0;
  f >> w >> h >> maxval;
  if (!f || w <= 0 || h <= 0 || maxval != 255) {
    throw std::runtime_error("read_ppm: bad header in " + path.string());
  }
  f.get();  // single whitespace after header
  std::vector<unsigned char> buf(static_cast<size_t>(w) * h * 3);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("read_ppm: truncated pixel data in " + path.string());
  Tensor img = Tensor::zeros({3, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(c, y, x) = buf[(static_cast<size_t>(y) * w + x) * 3 + c] / 255.0;
      }
    }
  }
  return img;
}

Dataset Dataset::from(std::vector<DomainSample> samples) {
  Dataset d;
  d.samples = std::move(samples);
  for (size_t i = 0; i < d.samples.size(); ++i) {
    (d.samples[i].domain == kDomainSource ? d.source_indices : d.target_indices)
        .push_back(static_cast<int>(i));
  }
  return d;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<DomainSample>& samples,
                   const std::string& manifest_json) {
  std::filesystem::create_directories(dir);
  std::ofstream ann_file(dir / "annotations.jsonl");
  if (!ann_file) throw std::runtime_error("write_dataset: cannot open " + (dir / "annotations.jsonl").string());
  for (const auto& s : samples) {
    write_ppm(dir / s.file, s.image);
    json rec;
    rec["file"] = s.file;
    rec["domain"] = s.domain == kDomainSource ? "source" : "target";
    json boxes = json::array();
    json labels = json::array();
    for (size_t i = 0; i < s.ann.boxes.size(); ++i) {
      const auto& b = s.ann.boxes[i];
      boxes.push_back({b.x1, b.y1, b.x2, b.y2});
      labels.push_back(s.ann.labels[i]);
    }
    rec["boxes"] = boxes;
    rec["labels"] = labels;
    ann_file << rec.dump() << "\n";
  }
  std::ofstream mf(dir / "manifest.json");
  if (!mf) throw std::runtime_error("write_dataset: cannot open " + (dir / "manifest.json").string());
  mf << manifest_json << "\n";
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto ann_path = dir / "annotations.jsonl";
  std::ifstream f(ann_path);
  if (!f) throw std::runtime_error("read_dataset: missing " + ann_path.string());
  std::vector<DomainSample> samples;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("read_dataset: corrupt record at " + ann_path.string() + ":" +
                               std::to_string(line_no) + ": " + e.what());
    }
    DomainSample s;
    s.file = rec.at("file").get<std::string>();
    const std::string dom = rec.at("domain").get<std::string>();
    if (dom != "source" && dom != "target") {
      throw std::runtime_error("read_dataset: unknown domain '" + dom + "' in " + ann_path.string());
    }
    s.domain = dom == "source" ? kDomainSource : kDomainTarget;
    for (const auto& b : rec.at("boxes")) {
      s.ann.boxes.push_back({b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                             b.at(3).get<double>()});
    }
    for (const auto& l : rec.at("labels")) s.ann.labels.push_back(l.get<int>());
    if (s.ann.boxes.size() != s.ann.labels.size()) {
      throw std::runtime_error("read_dataset: box/label count mismatch for " + s.file);
    }
    s.image = read_ppm(dir / s.file);
    samples.push_back(std::move(s));
  }
  return Dataset::from(std::move(samples));
}

namespace {

constexpr uint64_t kSourceStream = 0x501;
constexpr uint64_t kTargetStream = 0x702;
constexpr uint64_t kValStream = 0x903;

json shift_json(const ShiftSpec& s) {
  return {{"fog_alpha", s.fog_alpha}, {"blur_radius", s.blur_radius},
          {"brightness_jitter", s.brightness_jitter}};
}

json scene_json(const SceneSpec& s) {
  return {{"image_size", s.image_size}, {"objects_min", s.objects_min},
          {"objects_max", s.objects_max}, {"seed", s.seed}, {"classes", class_names()}};
}

std::string digits5(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05d", v);
  return buf;
}

}  // namespace

void generate_benchmark(const std::filesystem::path& dir, const GenSpec& spec) {
  spec.shift.validate();
  if (spec.n_source <= 0) {
    throw std::invalid_argument("generate_benchmark: source split must be non-empty");
  }

  std::vector<DomainSample> train;
  train.reserve(static_cast<size_t>(spec.n_source + spec.n_target));
  for (int i = 0; i < spec.n_source; ++i) {
    Scene sc = generate_scene(spec.scene, kSourceStream, i);
    train.push_back({"source_" + digits5(i) + ".ppm", kDomainSource, std::move(sc.image),
                     std::move(sc.ann)});
  }
  for (int i = 0; i < spec.n_target; ++i) {
    Scene sc = generate_scene(spec.scene, kTargetStream, i);
    Tensor shifted = apply_domain_shift(sc.image, spec.shift,
                                        mix64(spec.scene.seed, kTargetStream, static_cast<uint64_t>(i)));
    // unlabeled: annotations withheld
    train.push_back({"target_" + digits5(i) + ".ppm", kDomainTarget, std::move(shifted), {}});
  }

  std::vector<DomainSample> val;
  val.reserve(static_cast<size_t>(spec.n_val));
  for (int i = 0; i < spec.n_val; ++i) {
    Scene sc = generate_scene(spec.scene, kValStream, i);
    Tensor shifted = apply_domain_shift(sc.image, spec.shift,
                                        mix64(spec.scene.seed, kValStream, static_cast<uint64_t>(i)));
    // labeled target-style split, used for evaluation only
    val.push_back({"val_" + digits5(i) + ".ppm", kDomainTarget, std::move(shifted),
                   std::move(sc.ann)});
  }

  json manifest;
  manifest["scene"] = scene_json(spec.scene);
  manifest["shift"] = shift_json(spec.shift);
  manifest["n_source"] = spec.n_source;
  manifest["n_target"] = spec.n_target;
  manifest["n_val"] = spec.n_val;

  json train_manifest = manifest;
  train_manifest["split"] = "train";
  write_dataset(dir / "train", train, train_manifest.dump(2));
  json val_manifest = manifest;
  val_manifest["split"] = "val";
  write_dataset(dir / "val", val, val_manifest.dump(2));
}

}  // namespace maf
