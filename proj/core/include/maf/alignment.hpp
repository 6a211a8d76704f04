#pragma once

#include <map>
#include <set>

#include "maf/adversarial.hpp"
#include "maf/detector.hpp"
#include "maf/tape.hpp"

namespace maf {

// pixel-wise two-way domain head behind GRL + SRM (one per aligned block)
struct BlockDomainClassifier {
  SrmSpec srm;
  Tensor srm_w, srm_b;  // 1x1, block channels -> srm.out_channels
  Tensor h1_w, h1_b;    // 1x1, srm.out_channels*s^2 -> 16
  Tensor h2_w, h2_b;    // 1x1, 16 -> 2
};

// mlp over the aggregated proposal vector (or the bare feature when
// aggregation is disabled)
struct ProposalDomainClassifier {
  int input_width = 0;
  Tensor fc1_w, fc1_b;  // input_width -> 32
  Tensor fc2_w, fc2_b;  // 32 -> 2
};

enum class Reduction { Mean, Sum };

struct AlignmentConfig {
  std::set<int> blocks = {3, 4, 5};
  bool proposal = true;
  double lambda = 1.0;
  int srm_s = 2;
  int srm_channels = 32;
  Reduction reduction = Reduction::Mean;
  bool wgrl = true;       // false substitutes a plain GRL on the proposal branch
  bool aggregate = true;  // false feeds the bare proposal feature to the classifier

  // reversal wiring: plain GRL on the block branches, GRL or WGRL on the
  // proposal branch depending on the wgrl switch
  ReversalSpec block_reversal() const { return {lambda, ReversalSpec::Mode::Plain}; }
  ReversalSpec proposal_reversal() const {
    return {lambda, wgrl ? ReversalSpec::Mode::Weighted : ReversalSpec::Mode::Plain};
  }
};

// domain label: 1 = source, 0 = target; domain logit channel 1 = source
struct DomainLabel {
  int d = 1;
};

struct BlockLosses {
  Tensor l3, l4, l5;  // zero scalars for disabled blocks
};

// per enabled block m: feature -> grl -> srm -> 1x1 head -> per-location
// cross entropy against d
BlockLosses hierarchical_alignment_loss(Tape& t, const BackboneFeatures& features, DomainLabel d,
                                        std::map<int, BlockDomainClassifier>& classifiers,
                                        const AlignmentConfig& cfg);

// F^k (64) ++ c^k (K+1) ++ b^k (4), in that order
Tensor aggregate_proposal_features(Tape& t, const ProposalRecord& record);

// aggregated rows -> wgrl -> mlp -> cross entropy against d; the wgrl weight
// for each row is that row's softmax probability of its true domain, taken
// from this same forward pass and detached
Tensor proposal_alignment_loss(Tape& t, const std::vector<ProposalRecord>& records, DomainLabel d,
                               ProposalDomainClassifier& clf, const AlignmentConfig& cfg);

// L_t = L_p + L_3 + L_4 + L_5
Tensor total_alignment_loss(Tape& t, const Tensor& l3, const Tensor& l4, const Tensor& l5,
                            const Tensor& lp);

}  // namespace maf
