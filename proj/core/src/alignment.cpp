#include "maf/alignment.hpp"

#include <cmath>
#include <stdexcept>

#include "maf/log.hpp"
#include "maf/ops.hpp"

namespace maf {

namespace {

Tensor location_domain_loss(Tape& t, const Tensor& logits_map, int d, Reduction reduction) {
  // [2,h,w] -> [h*w, 2] -> cross entropy against the image's domain label
  Tensor rows = pixels_as_rows(t, logits_map);
  const int n = rows.shape[0];
  Tensor ce = softmax_cross_entropy(t, rows, std::vector<int>(static_cast<size_t>(n), d));
  if (reduction == Reduction::Sum) ce = scale(t, ce, static_cast<double>(n));
  return ce;
}

Tensor block_loss(Tape& t, const Tensor& feature, int d, BlockDomainClassifier& clf,
                  const AlignmentConfig& cfg) {
  Tensor reversed = grl(t, feature, cfg.block_reversal().lambda);
  Tensor reduced = srm_forward(t, reversed, clf.srm, clf.srm_w, clf.srm_b);
  Tensor h = relu(t, conv2d(t, reduced, t.ensure_watched(clf.h1_w), t.ensure_watched(clf.h1_b), 1, 0));
  Tensor logits = conv2d(t, h, t.ensure_watched(clf.h2_w), t.ensure_watched(clf.h2_b), 1, 0);
  return location_domain_loss(t, logits, d, cfg.reduction);
}

}  // namespace

BlockLosses hierarchical_alignment_loss(Tape& t, const BackboneFeatures& features, DomainLabel d,
                                        std::map<int, BlockDomainClassifier>& classifiers,
                                        const AlignmentConfig& cfg) {
  BlockLosses out{Tensor::scalar(0.0), Tensor::scalar(0.0), Tensor::scalar(0.0)};
  for (int m : cfg.blocks) {
    auto it = classifiers.find(m);
    if (it == classifiers.end()) {
      throw std::invalid_argument("alignment: no domain classifier for block " + std::to_string(m));
    }
    const Tensor& feat = m == 3 ? features.b3 : m == 4 ? features.b4 : features.b5;
    Tensor l = block_loss(t, feat, d.d, it->second, cfg);
    (m == 3 ? out.l3 : m == 4 ? out.l4 : out.l5) = l;
  }
  return out;
}

Tensor aggregate_proposal_features(Tape& t, const ProposalRecord& record) {
  if (record.feature.numel() == 0 || record.cls_scores.numel() == 0 || record.bbox_reg.numel() == 0) {
    throw std::invalid_argument("aggregate_proposal_features: record not fully populated");
  }
  return concat(t, {record.feature, record.cls_scores, record.bbox_reg}, 0);
}

Tensor proposal_alignment_loss(Tape& t, const std::vector<ProposalRecord>& records, DomainLabel d,
                               ProposalDomainClassifier& clf, const AlignmentConfig& cfg) {
  if (records.empty()) {
    warn("proposal alignment: empty proposal list contributes zero loss");
    return Tensor::scalar(0.0);
  }

  std::vector<Tensor> rows;
  rows.reserve(records.size());
  for (const auto& r : records) {
    Tensor v = cfg.aggregate ? aggregate_proposal_features(t, r) : r.feature;
    if (v.shape[0] != clf.input_width) {
      throw std::invalid_argument("proposal alignment: vector width " + std::to_string(v.shape[0]) +
                                  " does not match classifier input " +
                                  std::to_string(clf.input_width));
    }
    rows.push_back(reshape(t, v, {1, clf.input_width}));
  }
  Tensor stacked = concat(t, rows, 0);
  const int n = stacked.shape[0];

  const ReversalSpec rev = cfg.proposal_reversal();
  std::shared_ptr<WgrlWeights> weights;
  Tensor reversed;
  if (rev.mode == ReversalSpec::Mode::Weighted) {
    weights = std::make_shared<WgrlWeights>();
    reversed = wgrl_deferred(t, stacked, rev.lambda, weights);
  } else {
    reversed = grl(t, stacked, rev.lambda);
  }

  Tensor h = relu(t, affine(t, reversed, t.ensure_watched(clf.fc1_w), t.ensure_watched(clf.fc1_b)));
  Tensor logits = affine(t, h, t.ensure_watched(clf.fc2_w), t.ensure_watched(clf.fc2_b));

  if (cfg.wgrl) {
    // Eq-weight each row by the classifier's current confidence in the row's
    // true domain: d*p + (1-d)*(1-p), p = softmax(logits)[source]
    weights->w.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const double l0 = logits.at(i, 0), l1 = logits.at(i, 1);
      const double m = std::max(l0, l1);
      const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
      const double p = e1 / (e0 + e1);
      weights->w[static_cast<size_t>(i)] = d.d == 1 ? p : 1.0 - p;
    }
    weights->ready = true;
  }

  Tensor ce = softmax_cross_entropy(t, logits, std::vector<int>(static_cast<size_t>(n), d.d));
  if (cfg.reduction == Reduction::Sum) ce = scale(t, ce, static_cast<double>(n));
  return ce;
}

Tensor total_alignment_loss(Tape& t, const Tensor& l3, const Tensor& l4, const Tensor& l5,
                            const Tensor& lp) {
  return add(t, add(t, add(t, lp, l3), l4), l5);
}

}  // namespace maf
