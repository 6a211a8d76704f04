#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "maf/detector.hpp"
#include "maf/tensor.hpp"

namespace maf {

// procedural scene generator: shapes on a smooth noisy gradient background
struct SceneSpec {
  int image_size = 96;
  int objects_min = 1;
  int objects_max = 4;
  uint64_t seed = 1;

  static constexpr int kNumClasses = 3;  // disc, square, triangle
};

const std::vector<std::string>& class_names();

// fog-style corruption: box blur, blend toward white, brightness jitter
struct ShiftSpec {
  double fog_alpha = 0.5;        // in [0.3, 0.6] for generated datasets
  int blur_radius = 1;           // 1-2 px box blur
  double brightness_jitter = 0.1;  // +/- fraction, sampled per image

  void validate() const;
};

struct SceneObject {
  int cls = 0;
  double cx = 0.0, cy = 0.0, size = 0.0;
  double r = 0.0, g = 0.0, b = 0.0;
};

struct Scene {
  Tensor image;  // [3,H,W] in [0,1]
  Annotation ann;
  std::vector<SceneObject> objects;
};

// deterministic in (spec.seed, stream_tag, index); object masks never overlap
// and box pairs keep IoU < 0.3
Scene generate_scene(const SceneSpec& spec, uint64_t stream_tag, int index);

// out = clamp((blur(img)*(1-alpha) + alpha) * (1 + jitter)); geometry is
// unchanged so withheld source-style labels would remain valid
Tensor apply_domain_shift(const Tensor& image, const ShiftSpec& shift, uint64_t seed);

// binary PPM (P6, 8-bit); the only lossy step in the pipeline
void write_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor read_ppm(const std::filesystem::path& path);

constexpr int kDomainTarget = 0;
constexpr int kDomainSource = 1;

struct DomainSample {
  std::string file;
  int domain = kDomainSource;
  Tensor image;
  Annotation ann;  // empty for unlabeled target samples
};

struct Dataset {
  std::vector<DomainSample> samples;
  std::vector<int> source_indices;
  std::vector<int> target_indices;

  static Dataset from(std::vector<DomainSample> samples);
};

// layout: dir/*.ppm + dir/annotations.jsonl + dir/manifest.json
void write_dataset(const std::filesystem::path& dir, const std::vector<DomainSample>& samples,
                   const std::string& manifest_json);
Dataset read_dataset(const std::filesystem::path& dir);

struct GenSpec {
  SceneSpec scene;
  ShiftSpec shift;
  int n_source = 200;
  int n_target = 200;
  int n_val = 100;
};

// writes dir/train (labeled source + unlabeled shifted target) and dir/val
// (labeled shifted target, evaluation only)
void generate_benchmark(const std::filesystem::path& dir, const GenSpec& spec);

}  // namespace maf
