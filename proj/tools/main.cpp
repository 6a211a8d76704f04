// maf: synthetic domain-shift benchmark generation, adversarial detector
// training, evaluation and reporting. Exit codes: 0 success, 1 usage error,
// 2 I/O error, 3 verification failure (gradcheck).
#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "maf/ablation.hpp"
#include "maf/config.hpp"
#include "maf/eval.hpp"
#include "maf/grad_check.hpp"
#include "maf/ops.hpp"
#include "maf/svg.hpp"
#include "maf/train.hpp"
#include "maf/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct VerificationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json config_json(const maf::RunConfig& cfg) {
  json j = json::object();
  for (const auto& [k, v] : maf::resolved_config(cfg)) j[k] = v;
  return j;
}

void write_run_json(const fs::path& path, const std::string& command, const json& config,
                    const json& extra = json::object()) {
  json run;
  run["tool_version"] = maf::kVersion;
  run["command"] = command;
  run["config"] = config;
  for (auto it = extra.begin(); it != extra.end(); ++it) run[it.key()] = it.value();
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  f << run.dump(2) << "\n";
}

fs::path pick_split(const fs::path& data, const char* split) {
  const fs::path sub = data / split;
  return fs::exists(sub / "annotations.jsonl") ? sub : data;
}

maf::RunConfig load_run_config_near(const fs::path& checkpoint) {
  const fs::path run_json = checkpoint.parent_path() / "run.json";
  maf::RunConfig cfg;
  if (!fs::exists(run_json)) return cfg;
  std::ifstream f(run_json);
  json j;
  f >> j;
  for (auto it = j.at("config").begin(); it != j.at("config").end(); ++it) {
    maf::apply_config_line(cfg, it.key(), it.value().get<std::string>());
  }
  return cfg;
}

maf::MafModel load_model(const fs::path& checkpoint) {
  const maf::RunConfig cfg = load_run_config_near(checkpoint);
  maf::MafModel model = maf::MafModel::make({}, cfg.align, cfg.seed);
  maf::load_model_checkpoint(checkpoint, model, nullptr);
  return model;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int run(int argc, char** argv) {
  CLI::App app{"domain-adversarial miniature detector workbench"};
  app.require_subcommand(1);
  app.set_version_flag("--version", maf::kVersion);

  // gen-data ---------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic source/target benchmark");
  std::string gen_out;
  maf::GenSpec gen_spec;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--n-source", gen_spec.n_source, "labeled source images");
  gen->add_option("--n-target", gen_spec.n_target, "unlabeled target images");
  gen->add_option("--n-val", gen_spec.n_val, "labeled target validation images");
  gen->add_option("--seed", gen_spec.scene.seed, "master seed");
  gen->add_option("--fog-alpha", gen_spec.shift.fog_alpha, "fog blend factor [0.3,0.6]");
  gen->add_option("--blur", gen_spec.shift.blur_radius, "box blur radius (1-2)");
  gen->add_option("--jitter", gen_spec.shift.brightness_jitter, "brightness jitter fraction");
  gen->callback([&] {
    if (gen_spec.n_source <= 0) {
      throw CLI::ValidationError("--n-source", "source split must be non-empty (labels live there)");
    }
    maf::generate_benchmark(gen_out, gen_spec);
    json cfg;
    cfg["n_source"] = gen_spec.n_source;
    cfg["n_target"] = gen_spec.n_target;
    cfg["n_val"] = gen_spec.n_val;
    cfg["seed"] = gen_spec.scene.seed;
    cfg["image_size"] = gen_spec.scene.image_size;
    cfg["fog_alpha"] = gen_spec.shift.fog_alpha;
    cfg["blur_radius"] = gen_spec.shift.blur_radius;
    cfg["brightness_jitter"] = gen_spec.shift.brightness_jitter;
    write_run_json(fs::path(gen_out) / "run.json", "gen-data", cfg, {{"out", gen_out}});
    std::cout << "wrote " << gen_spec.n_source << "+" << gen_spec.n_target << " train and "
              << gen_spec.n_val << " val images to " << gen_out << "\n";
  });

  // train -------------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "train a detector variant");
  std::string tr_data, tr_out, tr_config, tr_variant;
  tr->add_option("--data", tr_data, "dataset directory (uses <dir>/train when present)")->required();
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_option("--config", tr_config, "key = value config file");
  tr->add_option("--variant", tr_variant, "ablation preset (source-only|df|pf|maf-star|full|no-wgrl|no-aggregate)");
  tr->callback([&] {
    maf::RunConfig cfg;
    if (!tr_config.empty()) cfg = maf::parse_config_file(tr_config);
    if (!tr_variant.empty()) cfg = maf::apply_variant(cfg, tr_variant);
    cfg.validate();
    maf::Dataset data = maf::read_dataset(pick_split(tr_data, "train"));
    maf::TrainOutput out = maf::train(cfg, data, tr_out);
    write_run_json(fs::path(tr_out) / "run.json", "train", config_json(cfg),
                   {{"variant", tr_variant.empty() ? json() : json(tr_variant)},
                    {"data", tr_data},
                    {"out", tr_out}});
    std::cout << "trained " << cfg.total_iters() << " iterations in " << out.wall_seconds
              << "s; checkpoint " << out.checkpoint_path.string() << "\n";
  });

  // eval ---------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "AP/mAP on a labeled split");
  std::string ev_data, ev_ckpt, ev_out;
  double ev_iou = 0.5, ev_score = 0.05;
  ev->add_option("--data", ev_data, "dataset directory (uses <dir>/val when present)")->required();
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--out", ev_out, "output directory (defaults to the checkpoint's)");
  ev->add_option("--iou-thr", ev_iou, "matching IoU threshold");
  ev->add_option("--score-thr", ev_score, "detection score threshold");
  ev->callback([&] {
    maf::MafModel model = load_model(ev_ckpt);
    maf::Dataset data = maf::read_dataset(pick_split(ev_data, "val"));
    maf::EvalResult r = maf::evaluate_map(model, data, ev_iou, ev_score);

    const fs::path out_dir = ev_out.empty() ? fs::path(ev_ckpt).parent_path() : fs::path(ev_out);
    fs::create_directories(out_dir);
    json per_class = json::object();
    for (int c = 0; c < model.det.num_classes; ++c) {
      per_class[maf::class_names()[static_cast<size_t>(c)]] = r.ap[static_cast<size_t>(c)];
      std::cout << "AP[" << maf::class_names()[static_cast<size_t>(c)]
                << "] = " << r.ap[static_cast<size_t>(c)] << "\n";
    }
    std::cout << "mAP@" << ev_iou << " = " << r.map << "\n";
    json out;
    out["map"] = r.map;
    out["iou_thr"] = ev_iou;
    out["score_thr"] = ev_score;
    out["per_class"] = per_class;
    out["n_gt"] = r.n_gt;
    out["n_detections"] = r.n_det;
    std::ofstream f(out_dir / "eval.json");
    if (!f) throw std::runtime_error("cannot open " + (out_dir / "eval.json").string());
    f << out.dump(2) << "\n";
    write_run_json(out_dir / "run.json", "eval", config_json(load_run_config_near(ev_ckpt)),
                   {{"checkpoint", ev_ckpt}, {"data", ev_data},
                    {"iou_thr", ev_iou}, {"score_thr", ev_score}});
  });

  // sweep-iou ------------------------------------------------------------------
  auto* sw = app.add_subcommand("sweep-iou", "mAP across IoU thresholds 0.5..0.95");
  std::string sw_data, sw_ckpt, sw_out;
  double sw_score = 0.05;
  sw->add_option("--data", sw_data, "dataset directory (uses <dir>/val when present)")->required();
  sw->add_option("--checkpoint", sw_ckpt, "checkpoint file")->required();
  sw->add_option("--out", sw_out, "output directory (defaults to the checkpoint's)");
  sw->add_option("--score-thr", sw_score, "detection score threshold");
  sw->callback([&] {
    maf::MafModel model = load_model(sw_ckpt);
    maf::Dataset data = maf::read_dataset(pick_split(sw_data, "val"));
    auto sweep = maf::iou_sweep(model, data, maf::default_sweep_thresholds(), sw_score);
    const fs::path out_dir = sw_out.empty() ? fs::path(sw_ckpt).parent_path() : fs::path(sw_out);
    fs::create_directories(out_dir);
    std::ofstream f(out_dir / "sweep.csv");
    if (!f) throw std::runtime_error("cannot open " + (out_dir / "sweep.csv").string());
    f << "threshold,map\n";
    for (auto [thr, map] : sweep) {
      f << fmt17(thr) << "," << fmt17(map) << "\n";
      std::cout << "mAP@" << thr << " = " << map << "\n";
    }
    write_run_json(out_dir / "run.json", "sweep-iou", config_json(load_run_config_near(sw_ckpt)),
                   {{"checkpoint", sw_ckpt}, {"data", sw_data}});
  });

  // ablate -----------------------------------------------------------------------
  auto* ab = app.add_subcommand("ablate", "train and score every ablation variant");
  std::string ab_data, ab_out, ab_config;
  std::vector<uint64_t> ab_seeds;
  ab->add_option("--data", ab_data, "benchmark root (train/ and val/)")->required();
  ab->add_option("--out", ab_out, "output directory")->required();
  ab->add_option("--config", ab_config, "key = value config file");
  ab->add_option("--seeds", ab_seeds, "seeds (default: the config seed)");
  ab->callback([&] {
    maf::RunConfig cfg;
    if (!ab_config.empty()) cfg = maf::parse_config_file(ab_config);
    cfg.validate();
    maf::Dataset train_set = maf::read_dataset(pick_split(ab_data, "train"));
    maf::Dataset val_set = maf::read_dataset(pick_split(ab_data, "val"));
    if (ab_seeds.empty()) ab_seeds.push_back(cfg.seed);
    auto entries = maf::ablation_grid(cfg, train_set, val_set, ab_seeds, ab_out);
    for (const auto& e : entries) {
      std::cout << e.variant << ": mAP@0.5 = " << e.mean_map50 << "\n";
    }
    json seeds = json::array();
    for (auto s : ab_seeds) seeds.push_back(s);
    write_run_json(fs::path(ab_out) / "run.json", "ablate", config_json(cfg),
                   {{"data", ab_data}, {"out", ab_out}, {"seeds", seeds}});
  });

  // gradcheck -----------------------------------------------------------------------
  auto* gc = app.add_subcommand("gradcheck", "finite-difference suite over every operator");
  std::string gc_out;
  gc->add_option("--out", gc_out, "optional directory for gradcheck.json");
  gc->callback([&] {
    auto checks = maf::run_gradient_suite();
    bool ok = true;
    json report = json::object();
    for (const auto& c : checks) {
      const bool pass = c.passed();
      ok = ok && pass;
      std::cout << (pass ? "PASS" : "FAIL") << " " << c.name << " max rel err " << c.max_rel_err
                << " (tolerance " << c.tolerance << ")\n";
      report[c.name] = {{"max_rel_err", c.max_rel_err}, {"tolerance", c.tolerance}, {"pass", pass}};
    }
    if (!gc_out.empty()) {
      fs::create_directories(gc_out);
      std::ofstream f(fs::path(gc_out) / "gradcheck.json");
      f << report.dump(2) << "\n";
      write_run_json(fs::path(gc_out) / "run.json", "gradcheck", config_json({}), {});
    }
    if (!ok) throw VerificationFailure("gradient suite failed");
    std::cout << "gradient suite: all " << checks.size() << " checks passed\n";
  });

  // plot -----------------------------------------------------------------------------
  auto* pl = app.add_subcommand("plot", "render a CSV (losses.csv / sweep.csv) to an SVG chart");
  std::string pl_in, pl_out, pl_title = "maf run";
  pl->add_option("--in", pl_in, "input CSV")->required();
  pl->add_option("--out", pl_out, "output SVG")->required();
  pl->add_option("--title", pl_title, "chart title");
  pl->callback([&] {
    maf::csv_to_svg(pl_in, pl_out, pl_title);
    write_run_json(fs::path(pl_out).string() + ".run.json", "plot", config_json({}),
                   {{"in", pl_in}, {"out", pl_out}, {"title", pl_title}});
    std::cout << "wrote " << pl_out << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage error
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  maf::pin_blas_single_thread();
  try {
    return run(argc, argv);
  } catch (const VerificationFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
