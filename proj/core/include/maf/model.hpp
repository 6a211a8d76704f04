#pragma once

#include <functional>
#include <map>
#include <string>

#include "maf/alignment.hpp"
#include "maf/detector.hpp"

namespace maf {

// The full parameter set: miniature two-stage detector plus the domain
// classifiers. Every variant constructs all submodules (disabled branches
// simply receive no gradient), which keeps parameter trajectories comparable
// across ablation variants under a fixed seed.
struct MafModel {
  DetectorConfig det;
  AlignmentConfig align;

  BackboneParams backbone;
  RpnParams rpn;
  HeadParams head;
  std::map<int, BlockDomainClassifier> block_clf;  // keys 3,4,5
  ProposalDomainClassifier prop_clf;

  static MafModel make(const DetectorConfig& det, const AlignmentConfig& align, uint64_t seed);

  // canonical order; checkpoints, SGD state and init all follow it
  void for_each_param(const std::function<void(const std::string&, Tensor&)>& fn);

  // detector-side parameters only (backbone + rpn + heads), the subset that
  // must match a source-only run bitwise when lambda = 0
  void for_each_detector_param(const std::function<void(const std::string&, Tensor&)>& fn);

  int proposal_feature_width() const { return 64; }
  int aggregated_width() const { return 64 + (det.num_classes + 1) + 4; }
};

}  // namespace maf
