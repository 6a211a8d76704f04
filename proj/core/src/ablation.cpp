#include "maf/ablation.hpp"

#include <fstream>
#include <json.hpp>

#include "maf/eval.hpp"
#include "maf/log.hpp"
#include "maf/train.hpp"

namespace maf {

using nlohmann::json;

std::vector<AblationEntry> ablation_grid(const RunConfig& base, const Dataset& train_set,
                                         const Dataset& val_set, const std::vector<uint64_t>& seeds,
                                         const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<AblationEntry> entries;
  for (const auto& variant : variant_names()) {
    RunConfig cfg = apply_variant(base, variant);
    AblationEntry e;
    e.variant = variant;
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(config_hash(cfg)));
    e.config_hash = hex;
    for (uint64_t seed : seeds) {
      cfg.seed = seed;
      const auto run_dir = out_dir / (variant + "-seed" + std::to_string(seed));
      TrainOutput run = train(cfg, train_set, run_dir);
      EvalResult ev = evaluate_map(run.model, val_set, 0.5, 0.05);
      e.seeds.push_back(seed);
      e.map50.push_back(ev.map);
      info("ablation " + variant + " seed " + std::to_string(seed) + ": mAP@0.5 = " +
           std::to_string(ev.map));
    }
    double sum = 0.0;
    for (double m : e.map50) sum += m;
    e.mean_map50 = e.map50.empty() ? 0.0 : sum / static_cast<double>(e.map50.size());
    entries.push_back(std::move(e));
  }
  write_ablation_json(out_dir / "ablation.json", entries);
  return entries;
}

void write_ablation_json(const std::filesystem::path& path,
                         const std::vector<AblationEntry>& entries) {
  json out = json::object();
  for (const auto& e : entries) {
    json seeds = json::array();
    for (uint64_t s : e.seeds) seeds.push_back(s);
    json maps = json::array();
    for (double m : e.map50) maps.push_back(m);
    out[e.variant] = {{"map50", e.mean_map50},
                      {"map50_per_seed", maps},
                      {"seeds", seeds},
                      {"config_hash", e.config_hash}};
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("ablation: cannot open " + path.string());
  f << out.dump(2) << "\n";
}

}  // namespace maf
