#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "maf/checkpoint.hpp"
#include "maf/eval.hpp"
#include "maf/rng.hpp"
#include "maf/train.hpp"
#include "support/ap_oracle.hpp"

using namespace maf;
using maf_test::ap_oracle;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("maf_train_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Dataset tiny_dataset(uint64_t seed, int n_src = 4, int n_tgt = 4) {
  SceneSpec spec;
  spec.seed = seed;
  ShiftSpec shift;
  std::vector<DomainSample> samples;
  for (int i = 0; i < n_src; ++i) {
    Scene sc = generate_scene(spec, 0x501, i);
    samples.push_back({"s" + std::to_string(i), kDomainSource, sc.image, sc.ann});
  }
  for (int i = 0; i < n_tgt; ++i) {
    Scene sc = generate_scene(spec, 0x702, i);
    samples.push_back({"t" + std::to_string(i), kDomainTarget,
                       apply_domain_shift(sc.image, shift, mix64(seed, 2, i)), {}});
  }
  return Dataset::from(std::move(samples));
}

std::string file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f);
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

std::string detector_param_bytes(MafModel& m) {
  std::ostringstream os;
  m.for_each_detector_param([&](const std::string& name, Tensor& p) {
    os << name << ":";
    os.write(reinterpret_cast<const char*>(p.values.data()),
             static_cast<std::streamsize>(p.values.size() * sizeof(double)));
  });
  return os.str();
}

BBox jiggle(const BBox& b, Rng& rng, double amt) {
  return {b.x1 + rng.uniform(-amt, amt), b.y1 + rng.uniform(-amt, amt),
          b.x2 + rng.uniform(-amt, amt), b.y2 + rng.uniform(-amt, amt)};
}

}  // namespace

TEST_CASE("sgd momentum hand arithmetic") {
  Tensor w({1}, {1.0});
  Tensor v = Tensor::zeros({1});
  Tensor g({1}, {1.0});

  sgd_momentum_step(w, g, v, 0.001, 0.9);
  CHECK(v.values[0] == doctest::Approx(-0.001).epsilon(1e-15));
  CHECK(w.values[0] == doctest::Approx(0.999).epsilon(1e-15));

  // second step with g=1: v = 0.9*(-0.001) - 0.001 = -0.0019; total -0.0029
  sgd_momentum_step(w, g, v, 0.001, 0.9);
  CHECK(v.values[0] == doctest::Approx(-0.0019).epsilon(1e-15));
  CHECK(w.values[0] == doctest::Approx(1.0 - 0.0029).epsilon(1e-12));

  // zero gradients decay the velocity geometrically
  Tensor z = Tensor::zeros({1});
  const double v0 = v.values[0];
  sgd_momentum_step(w, z, v, 0.001, 0.9);
  CHECK(v.values[0] == doctest::Approx(0.9 * v0).epsilon(1e-15));

  Tensor wrong({2}, {0, 0});
  CHECK_THROWS_AS(sgd_momentum_step(w, wrong, v, 0.001, 0.9), std::invalid_argument);
}

TEST_CASE("loss breakdown identities hold every iteration") {
  Dataset data = tiny_dataset(5);
  RunConfig cfg;
  cfg.phase1_iters = 8;
  cfg.phase2_iters = 2;
  cfg.seed = 3;
  const auto out_dir = temp_dir("identities");
  TrainOutput out = train(cfg, data, out_dir);
  REQUIRE(out.log.size() == 10);
  for (const auto& b : out.log) {
    CHECK(std::abs(b.l_t - (((b.l_p + b.l_3) + b.l_4) + b.l_5)) <= 1e-12);
    CHECK(std::abs(b.l_maf - (b.l_det + cfg.alpha * b.l_t)) <= 1e-12);
    CHECK(b.l_3 >= 0.0);
    CHECK(b.l_p >= 0.0);
  }
}

TEST_CASE("losses.csv schema") {
  Dataset data = tiny_dataset(6);
  RunConfig cfg;
  cfg.phase1_iters = 3;
  cfg.phase2_iters = 1;
  const auto out_dir = temp_dir("csv");
  TrainOutput out = train(cfg, data, out_dir);

  std::ifstream f(out.losses_path);
  REQUIRE(f);
  std::string header;
  std::getline(f, header);
  CHECK(header == "iter,l_det,l_3,l_4,l_5,l_p,l_t,l_maf,lr");
  int rows = 0;
  std::string line;
  std::vector<std::string> last;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    ++rows;
    std::stringstream ss(line);
    std::string cell;
    last.clear();
    while (std::getline(ss, cell, ',')) last.push_back(cell);
    CHECK(last.size() == 9);
  }
  CHECK(rows == 4);
  CHECK(last[0] == "4");
  CHECK(std::stod(last[8]) == cfg.lr2);  // phase-2 learning rate on the last row
}

TEST_CASE("alpha=0 full graph reduces bitwise to the source-only path") {
  Dataset data = tiny_dataset(7);
  RunConfig cfg;
  cfg.alpha = 0.0;
  cfg.seed = 11;

  MafModel full_model = MafModel::make({}, cfg.align, cfg.seed);
  SgdState full_sgd = SgdState::for_model(full_model);
  MafModel src_model = MafModel::make({}, cfg.align, cfg.seed);
  SgdState src_sgd = SgdState::for_model(src_model);

  for (int iter = 0; iter < 6; ++iter) {
    const auto& src = data.samples[static_cast<size_t>(
        data.source_indices[static_cast<size_t>(iter % 4)])];
    const auto& tgt = data.samples[static_cast<size_t>(
        data.target_indices[static_cast<size_t>(iter % 4)])];
    // full minimax graph with alpha = 0 versus the dedicated fast path
    train_step(full_model, full_sgd, src, tgt, cfg, 1e-3, StepMode::FullGraph);
    train_step(src_model, src_sgd, src, tgt, cfg, 1e-3, StepMode::SourceOnly);
  }

  const auto dir = temp_dir("alpha0");
  save_model_checkpoint(dir / "full.maf", full_model, &full_sgd);
  save_model_checkpoint(dir / "src.maf", src_model, &src_sgd);
  CHECK(file_bytes(dir / "full.maf") == file_bytes(dir / "src.maf"));
}

TEST_CASE("lambda=0 reduces detector parameters bitwise to source-only") {
  Dataset data = tiny_dataset(8);
  RunConfig cfg;
  cfg.seed = 13;
  cfg.align.lambda = 0.0;  // classifiers still learn; the detector must not see them

  MafModel lam_model = MafModel::make({}, cfg.align, cfg.seed);
  SgdState lam_sgd = SgdState::for_model(lam_model);
  MafModel src_model = MafModel::make({}, cfg.align, cfg.seed);
  SgdState src_sgd = SgdState::for_model(src_model);

  for (int iter = 0; iter < 6; ++iter) {
    const auto& src = data.samples[static_cast<size_t>(
        data.source_indices[static_cast<size_t>(iter % 4)])];
    const auto& tgt = data.samples[static_cast<size_t>(
        data.target_indices[static_cast<size_t>(iter % 4)])];
    train_step(lam_model, lam_sgd, src, tgt, cfg, 1e-3, StepMode::FullGraph);
    train_step(src_model, src_sgd, src, tgt, cfg, 1e-3, StepMode::SourceOnly);
  }
  CHECK(detector_param_bytes(lam_model) == detector_param_bytes(src_model));

  // sanity: the domain classifiers did move under lambda = 0
  double diff = 0.0;
  MafModel fresh = MafModel::make({}, cfg.align, cfg.seed);
  for (size_t i = 0; i < fresh.prop_clf.fc1_w.values.size(); ++i) {
    diff += std::abs(fresh.prop_clf.fc1_w.values[i] - lam_model.prop_clf.fc1_w.values[i]);
  }
  CHECK(diff > 0.0);
}

TEST_CASE("training twice with one config is byte-identical") {
  Dataset data = tiny_dataset(9);
  RunConfig cfg;
  cfg.phase1_iters = 5;
  cfg.phase2_iters = 2;
  cfg.seed = 17;
  const auto d1 = temp_dir("det1"), d2 = temp_dir("det2");
  train(cfg, data, d1);
  train(cfg, data, d2);
  CHECK(file_bytes(d1 / "losses.csv") == file_bytes(d2 / "losses.csv"));
  CHECK(file_bytes(d1 / "checkpoint.maf") == file_bytes(d2 / "checkpoint.maf"));
}

TEST_CASE("checkpoint resume reproduces the next step bitwise") {
  Dataset data = tiny_dataset(10);
  RunConfig cfg;
  cfg.seed = 19;

  MafModel model = MafModel::make({}, cfg.align, cfg.seed);
  SgdState sgd = SgdState::for_model(model);
  auto step = [&](MafModel& m, SgdState& s, int iter) {
    const auto& src = data.samples[static_cast<size_t>(data.source_indices[static_cast<size_t>(
        sample_index(cfg.seed, 0xA1, iter, 4))])];
    const auto& tgt = data.samples[static_cast<size_t>(data.target_indices[static_cast<size_t>(
        sample_index(cfg.seed, 0xB2, iter, 4))])];
    train_step(m, s, src, tgt, cfg, cfg.lr_at(iter));
  };
  for (int i = 0; i < 3; ++i) step(model, sgd, i);

  const auto dir = temp_dir("resume");
  save_model_checkpoint(dir / "ckpt.maf", model, &sgd);

  MafModel resumed = MafModel::make({}, cfg.align, cfg.seed + 1234);  // different init
  SgdState resumed_sgd = SgdState::for_model(resumed);
  load_model_checkpoint(dir / "ckpt.maf", resumed, &resumed_sgd);

  step(model, sgd, 3);
  step(resumed, resumed_sgd, 3);
  save_model_checkpoint(dir / "a.maf", model, &sgd);
  save_model_checkpoint(dir / "b.maf", resumed, &resumed_sgd);
  CHECK(file_bytes(dir / "a.maf") == file_bytes(dir / "b.maf"));
}

TEST_CASE("evaluate_map trivial cases") {
  std::vector<Annotation> gts(1);
  gts[0].boxes = {{10, 10, 30, 30}};
  gts[0].labels = {0};

  // single detection overlapping at 0.7: AP 1
  {
    std::vector<Detection> dets = {{0, {12, 12, 30, 30}, 0, 0.9}};
    REQUIRE(iou(dets[0].box, gts[0].boxes[0]) >= 0.5);
    EvalResult r = evaluate_detections(dets, gts, 3, 0.5);
    CHECK(r.ap[0] == 1.0);
    CHECK(r.map == 1.0);  // only class 0 has gt
  }
  // higher-scored false positive then a true positive: AP 0.5
  {
    std::vector<Detection> dets = {{0, {60, 60, 80, 80}, 0, 0.9}, {0, {12, 12, 30, 30}, 0, 0.5}};
    EvalResult r = evaluate_detections(dets, gts, 3, 0.5);
    CHECK(r.ap[0] == doctest::Approx(0.5).epsilon(1e-15));
  }
  // no detections at all: AP 0
  {
    EvalResult r = evaluate_detections({}, gts, 3, 0.5);
    CHECK(r.ap[0] == 0.0);
    CHECK(r.map == 0.0);
  }
}

TEST_CASE("evaluate_map matches the brute-force oracle on random micro-instances") {
  Rng rng(1234);
  for (int trial = 0; trial < 100; ++trial) {
    const int n_images = rng.uniform_int(1, 3);
    std::vector<Annotation> gts(static_cast<size_t>(n_images));
    const int total_gt = rng.uniform_int(1, 5);
    for (int g = 0; g < total_gt; ++g) {
      const int img = rng.uniform_int(0, n_images - 1);
      const double x1 = rng.uniform(0, 60), y1 = rng.uniform(0, 60);
      gts[static_cast<size_t>(img)].boxes.push_back({x1, y1, x1 + rng.uniform(8, 30), y1 + rng.uniform(8, 30)});
      gts[static_cast<size_t>(img)].labels.push_back(rng.uniform_int(0, 1));
    }
    std::vector<Detection> dets;
    const int n_det = rng.uniform_int(0, 8);
    for (int d = 0; d < n_det; ++d) {
      const int img = rng.uniform_int(0, n_images - 1);
      BBox box;
      if (!gts[static_cast<size_t>(img)].boxes.empty() && rng.uniform() < 0.7) {
        const auto& src = gts[static_cast<size_t>(img)].boxes[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int>(gts[static_cast<size_t>(img)].boxes.size()) - 1))];
        box = jiggle(src, rng, rng.uniform(0.0, 12.0));
        if (!box.valid()) continue;
      } else {
        const double x1 = rng.uniform(0, 60), y1 = rng.uniform(0, 60);
        box = {x1, y1, x1 + rng.uniform(5, 30), y1 + rng.uniform(5, 30)};
      }
      dets.push_back({img, box, rng.uniform_int(0, 1), rng.uniform()});
    }

    EvalResult r = evaluate_detections(dets, gts, 2, 0.5);
    for (int c = 0; c < 2; ++c) {
      int has_gt = 0;
      for (const auto& g : gts)
        for (int l : g.labels) has_gt += l == c;
      if (has_gt == 0) continue;
      const double oracle = ap_oracle(dets, gts, c, 0.5);
      CHECK(r.ap[static_cast<size_t>(c)] == oracle);  // exact agreement
    }
  }
}

TEST_CASE("iou sweep is monotone and perfect detections score 1 everywhere") {
  // perfect detector: detections exactly equal to gt
  std::vector<Annotation> gts(2);
  gts[0].boxes = {{5, 5, 25, 25}, {40, 40, 70, 70}};
  gts[0].labels = {0, 1};
  gts[1].boxes = {{10, 10, 50, 50}};
  gts[1].labels = {2};
  std::vector<Detection> dets;
  for (size_t i = 0; i < gts.size(); ++i) {
    for (size_t g = 0; g < gts[i].boxes.size(); ++g) {
      dets.push_back({static_cast<int>(i), gts[i].boxes[g], gts[i].labels[g], 0.9});
    }
  }
  for (double thr : default_sweep_thresholds()) {
    CHECK(evaluate_detections(dets, gts, 3, thr).map == 1.0);
  }

  // random detections: mAP over thresholds never increases
  Rng rng(77);
  std::vector<Detection> noisy;
  for (int i = 0; i < 30; ++i) {
    const int img = rng.uniform_int(0, 1);
    BBox box = jiggle(gts[static_cast<size_t>(img)].boxes[0], rng, rng.uniform(0.0, 15.0));
    if (!box.valid()) continue;
    noisy.push_back({img, box, rng.uniform_int(0, 2), rng.uniform()});
  }
  double prev = 2.0;
  for (double thr : default_sweep_thresholds()) {
    const double m = evaluate_detections(noisy, gts, 3, thr).map;
    CHECK(m <= prev + 1e-15);
    prev = m;
  }
}

TEST_CASE("variant presets map to the right config switches") {
  RunConfig base;
  CHECK(apply_variant(base, "source-only").alpha == 0.0);

  RunConfig df = apply_variant(base, "df");
  CHECK(df.align.proposal == false);
  CHECK(df.align.blocks == std::set<int>{3, 4, 5});

  RunConfig pf = apply_variant(base, "pf");
  CHECK(pf.align.blocks.empty());
  CHECK(pf.align.proposal == true);

  RunConfig star = apply_variant(base, "maf-star");
  CHECK(star.align.blocks == std::set<int>{5});
  CHECK(star.align.proposal == true);

  CHECK(apply_variant(base, "no-wgrl").align.wgrl == false);
  CHECK(apply_variant(base, "no-aggregate").align.aggregate == false);
  CHECK(apply_variant(base, "full").align.blocks == std::set<int>{3, 4, 5});
  CHECK_THROWS_AS(apply_variant(base, "bogus"), std::invalid_argument);
}

TEST_CASE("untrained model scores near zero mAP") {
  const auto dir = temp_dir("randmap");
  GenSpec spec;
  spec.scene.seed = 21;
  spec.n_source = 2;
  spec.n_target = 2;
  spec.n_val = 8;
  generate_benchmark(dir, spec);
  Dataset val = read_dataset(dir / "val");

  MafModel model = MafModel::make({}, {}, 555);
  EvalResult r = evaluate_map(model, val, 0.5, 0.05);
  CHECK(r.map < 0.05);
}
