#pragma once

#include <optional>
#include <string>
#include <vector>

#include "maf/boxes.hpp"
#include "maf/ops.hpp"
#include "maf/tape.hpp"
#include "maf/tensor.hpp"

namespace maf {

struct Annotation {
  std::vector<BBox> boxes;
  std::vector<int> labels;

  bool empty() const { return boxes.empty(); }
};

struct ConvParam {
  Tensor w, b;
};

// five conv blocks, two 3x3 convs each, widths 8,16,32,32,32, maxpool after
// blocks 1-4; blocks 3/4/5 expose their pre-pool maps at strides 4/8/16
struct BackboneParams {
  ConvParam conv[5][2];
  static constexpr int kWidths[5] = {8, 16, 32, 32, 32};
};

struct BackboneFeatures {
  Tensor b3, b4, b5;
};

struct RpnParams {
  ConvParam trunk;  // 3x3, width 32
  ConvParam obj;    // 1x1 -> 2A
  ConvParam reg;    // 1x1 -> 4A
};

struct HeadParams {
  Tensor fc1_w, fc1_b;  // flatten -> 64
  Tensor fc2_w, fc2_b;  // 64 -> 64, the post-relu output is the proposal feature
  Tensor cls_w, cls_b;  // 64 -> K+1
  Tensor reg_w, reg_b;  // 64 -> 4 (class-agnostic)
};

// one region proposal with its pooled+FC feature, scores and regression
struct ProposalRecord {
  BBox box;
  Tensor feature;     // [64]
  Tensor cls_logits;  // [K+1] (pre-softmax, used by the losses)
  Tensor cls_scores;  // [K+1] softmax
  Tensor bbox_reg;    // [4]
  double objectness = 0.0;
};

struct DetectorConfig {
  int num_classes = 3;  // foreground classes; background index == num_classes
  int image_size = 96;
  int stride = 16;  // block-5 stride
  std::vector<double> anchor_sizes = {16.0, 32.0, 48.0};
  int top_n = 32;
  double proposal_nms_iou = 0.7;
  double pos_iou = 0.5;
  double neg_iou = 0.3;
  int roi_grid = 3;
  double detect_nms_iou = 0.3;  // test-time per-class NMS

  int anchors_per_cell() const { return static_cast<int>(anchor_sizes.size()); }
};

BackboneFeatures backbone_forward(Tape& t, const Tensor& image, BackboneParams& params);

// returns (objectness logits [2A,h,w], box deltas [4A,h,w])
std::pair<Tensor, Tensor> rpn_forward(Tape& t, const Tensor& block5, RpnParams& params);

// decode all anchors, rank by objectness, greedy NMS, keep top_n;
// works identically with or without annotations
std::vector<BBox> select_proposals(const std::vector<BBox>& anchors, const Tensor& objectness,
                                   const Tensor& deltas, const DetectorConfig& cfg,
                                   std::vector<double>* scores_out = nullptr);

// max-pool the projected box into a grid x grid feature; empty bins clamp to
// the nearest valid row/column
Tensor roi_pool(Tape& t, const Tensor& feature, const BBox& box, int stride, int grid);

struct HeadOut {
  Tensor feature;     // [64]
  Tensor cls_logits;  // [K+1]
  Tensor cls_scores;  // [K+1]
  Tensor bbox_reg;    // [4]
};

HeadOut detection_head(Tape& t, const Tensor& pooled, HeadParams& params, int num_classes);

// anchor/proposal assignment: 1 positive (matched gt in `match`), 0 negative,
// -1 ignored band
struct Assignment {
  std::vector<int> label;
  std::vector<int> match;
};

Assignment assign_boxes(const std::vector<BBox>& boxes, const Annotation& ann, double pos_iou,
                        double neg_iou, bool force_best_match);

// Faster-RCNN style source-domain loss: proposal classification +
// regression plus the RPN objectness/regression terms
Tensor detection_loss(Tape& t, const Tensor& rpn_obj, const Tensor& rpn_reg,
                      const std::vector<BBox>& anchors, const std::vector<ProposalRecord>& proposals,
                      const Annotation& ann, const DetectorConfig& cfg);

}  // namespace maf
