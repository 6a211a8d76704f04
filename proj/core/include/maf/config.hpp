#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "maf/alignment.hpp"

namespace maf {

// every training tunable in one record; serialized flat (dotted keys) so a
// run.json replay is a straight echo of the resolved values
struct RunConfig {
  uint64_t seed = 1;
  double alpha = 0.1;  // weight of the alignment loss in the total loss
  double momentum = 0.9;
  double lr1 = 0.001;
  double lr2 = 0.0001;
  int phase1_iters = 3000;
  int phase2_iters = 1000;
  AlignmentConfig align;

  int total_iters() const { return phase1_iters + phase2_iters; }
  double lr_at(int iter) const { return iter < phase1_iters ? lr1 : lr2; }

  void validate() const;
};

// flat `key = value` file with dotted keys; '#' comments; unknown keys and
// malformed values are rejected with the offending key named
RunConfig parse_config_file(const std::filesystem::path& path, RunConfig base = {});
void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value);

// canonical resolved form (stable key order)
std::map<std::string, std::string> resolved_config(const RunConfig& cfg);
std::string config_text(const RunConfig& cfg);
uint64_t config_hash(const RunConfig& cfg);

// ablation presets: source-only, df, pf, maf-star, full, no-wgrl, no-aggregate
const std::vector<std::string>& variant_names();
RunConfig apply_variant(RunConfig cfg, const std::string& variant);

}  // namespace maf
