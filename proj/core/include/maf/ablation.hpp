#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "maf/config.hpp"
#include "maf/dataset.hpp"

namespace maf {

struct AblationEntry {
  std::string variant;
  std::vector<uint64_t> seeds;
  std::vector<double> map50;  // one per seed
  double mean_map50 = 0.0;
  std::string config_hash;
};

// trains every variant with the given seeds and identical schedule, evaluates
// target-val mAP@0.5, writes out_dir/ablation.json
std::vector<AblationEntry> ablation_grid(const RunConfig& base, const Dataset& train_set,
                                         const Dataset& val_set, const std::vector<uint64_t>& seeds,
                                         const std::filesystem::path& out_dir);

void write_ablation_json(const std::filesystem::path& path,
                         const std::vector<AblationEntry>& entries);

}  // namespace maf
