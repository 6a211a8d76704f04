#include "maf/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace maf {

namespace {

Tensor conv_relu(Tape& t, const Tensor& x, ConvParam& p, int pad) {
  Tensor w = t.ensure_watched(p.w);
  Tensor b = t.ensure_watched(p.b);
  return relu(t, conv2d(t, x, w, b, 1, pad));
}

}  // namespace

BackboneFeatures backbone_forward(Tape& t, const Tensor& image, BackboneParams& params) {
  if (image.rank() != 3 || image.shape[0] != 3) {
    throw std::invalid_argument("backbone: expected [3,H,W] image, got " + shape_str(image.shape));
  }
  if (image.shape[1] % 16 != 0 || image.shape[2] % 16 != 0) {
    throw std::invalid_argument("backbone: spatial dims of " + shape_str(image.shape) +
                                " must be divisible by 16");
  }
  BackboneFeatures out;
  Tensor x = image;
  for (int blk = 0; blk < 5; ++blk) {
    x = conv_relu(t, x, params.conv[blk][0], 1);
    x = conv_relu(t, x, params.conv[blk][1], 1);
    if (blk == 2) out.b3 = x;
    if (blk == 3) out.b4 = x;
    if (blk == 4) out.b5 = x;
    if (blk < 4) x = maxpool2d(t, x, 2, 2);
  }
  return out;
}

std::pair<Tensor, Tensor> rpn_forward(Tape& t, const Tensor& block5, RpnParams& params) {
  Tensor trunk = conv_relu(t, block5, params.trunk, 1);
  Tensor obj = conv2d(t, trunk, t.ensure_watched(params.obj.w), t.ensure_watched(params.obj.b), 1, 0);
  Tensor reg = conv2d(t, trunk, t.ensure_watched(params.reg.w), t.ensure_watched(params.reg.b), 1, 0);
  return {obj, reg};
}

namespace {

// anchor index -> flat offsets into the [2A,h,w] / [4A,h,w] rpn maps
struct AnchorLayout {
  int h, w, per_cell;

  int count() const { return h * w * per_cell; }
  int cell_y(int idx) const { return idx / (w * per_cell); }
  int cell_x(int idx) const { return (idx / per_cell) % w; }
  int slot(int idx) const { return idx % per_cell; }

  int64_t obj_index(int idx, int channel) const {
    const int c = slot(idx) * 2 + channel;
    return (static_cast<int64_t>(c) * h + cell_y(idx)) * w + cell_x(idx);
  }
  int64_t reg_index(int idx, int coord) const {
    const int c = slot(idx) * 4 + coord;
    return (static_cast<int64_t>(c) * h + cell_y(idx)) * w + cell_x(idx);
  }
};

AnchorLayout layout_for(const Tensor& obj, const DetectorConfig& cfg) {
  return {obj.shape[1], obj.shape[2], cfg.anchors_per_cell()};
}

double anchor_objectness(const Tensor& obj, const AnchorLayout& lay, int idx) {
  const double l0 = obj.values[static_cast<size_t>(lay.obj_index(idx, 0))];
  const double l1 = obj.values[static_cast<size_t>(lay.obj_index(idx, 1))];
  // softmax coordinate 1 = "object"
  const double m = std::max(l0, l1);
  const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
  return e1 / (e0 + e1);
}

std::array<double, 4> anchor_deltas(const Tensor& reg, const AnchorLayout& lay, int idx) {
  return {reg.values[static_cast<size_t>(lay.reg_index(idx, 0))],
          reg.values[static_cast<size_t>(lay.reg_index(idx, 1))],
          reg.values[static_cast<size_t>(lay.reg_index(idx, 2))],
          reg.values[static_cast<size_t>(lay.reg_index(idx, 3))]};
}

}  // namespace

std::vector<BBox> select_proposals(const std::vector<BBox>& anchors, const Tensor& objectness,
                                   const Tensor& deltas, const DetectorConfig& cfg,
                                   std::vector<double>* scores_out) {
  const AnchorLayout lay = layout_for(objectness, cfg);
  if (static_cast<int>(anchors.size()) != lay.count()) {
    throw std::invalid_argument("select_proposals: anchor count does not match rpn map");
  }
  const double img_w = cfg.image_size, img_h = cfg.image_size;

  std::vector<BBox> decoded;
  std::vector<double> scores;
  decoded.reserve(anchors.size());
  scores.reserve(anchors.size());
  for (int i = 0; i < lay.count(); ++i) {
    BBox b = clip_box(decode_box(anchors[static_cast<size_t>(i)], anchor_deltas(deltas, lay, i)),
                      img_w, img_h);
    if (!b.valid()) continue;
    decoded.push_back(b);
    scores.push_back(anchor_objectness(objectness, lay, i));
  }

  std::vector<int> kept = nms(decoded, scores, cfg.proposal_nms_iou);
  if (static_cast<int>(kept.size()) > cfg.top_n) kept.resize(static_cast<size_t>(cfg.top_n));

  std::vector<BBox> out;
  out.reserve(kept.size());
  if (scores_out) scores_out->clear();
  for (int i : kept) {
    out.push_back(decoded[static_cast<size_t>(i)]);
    if (scores_out) scores_out->push_back(scores[static_cast<size_t>(i)]);
  }
  return out;
}

Tensor roi_pool(Tape& t, const Tensor& feature, const BBox& box, int stride, int grid) {
  if (feature.rank() != 3) {
    throw std::invalid_argument("roi_pool: feature must be [C,h,w], got " + shape_str(feature.shape));
  }
  if (grid < 1) throw std::invalid_argument("roi_pool: grid must be >= 1");
  const int c = feature.shape[0], fh = feature.shape[1], fw = feature.shape[2];

  const double fx1 = box.x1 / stride, fx2 = box.x2 / stride;
  const double fy1 = box.y1 / stride, fy2 = box.y2 / stride;

  auto bin_range = [grid](double lo, double hi, int i, int limit) {
    int a = static_cast<int>(std::floor(lo + (hi - lo) * i / grid));
    int b = static_cast<int>(std::ceil(lo + (hi - lo) * (i + 1) / grid));
    a = std::clamp(a, 0, limit - 1);
    b = std::clamp(b, a + 1, limit);
    return std::pair<int, int>{a, b};
  };

  Tensor out = Tensor::zeros({c, grid, grid});
  std::vector<int64_t> argmax(out.values.size());
  for (int ch = 0; ch < c; ++ch) {
    for (int gy = 0; gy < grid; ++gy) {
      auto [y0, y1] = bin_range(fy1, fy2, gy, fh);
      for (int gx = 0; gx < grid; ++gx) {
        auto [x0, x1] = bin_range(fx1, fx2, gx, fw);
        double best = -std::numeric_limits<double>::infinity();
        int64_t best_idx = -1;
        for (int y = y0; y < y1; ++y) {
          for (int x = x0; x < x1; ++x) {
            const int64_t idx = (static_cast<int64_t>(ch) * fh + y) * fw + x;
            if (feature.values[static_cast<size_t>(idx)] > best) {
              best = feature.values[static_cast<size_t>(idx)];
              best_idx = idx;
            }
          }
        }
        const size_t o = (static_cast<size_t>(ch) * grid + gy) * grid + gx;
        out.values[o] = best;
        argmax[o] = best_idx;
      }
    }
  }

  if (!Tape::tracked(feature)) return out;
  const int nf = feature.node;
  const size_t in_size = feature.values.size();
  out.node = t.emit(out, {nf},
                    [nf, in_size, argmax = std::move(argmax)](Tape& tp, const std::vector<double>& up) {
    std::vector<double> g(in_size, 0.0);
    for (size_t i = 0; i < up.size(); ++i) g[static_cast<size_t>(argmax[i])] += up[i];
    tp.accumulate(nf, g);
  });
  out.requires_grad = true;
  return out;
}

HeadOut detection_head(Tape& t, const Tensor& pooled, HeadParams& params, int num_classes) {
  Tensor flat = reshape(t, pooled, {1, static_cast<int>(pooled.numel())});
  Tensor h1 = relu(t, affine(t, flat, t.ensure_watched(params.fc1_w), t.ensure_watched(params.fc1_b)));
  Tensor h2 = relu(t, affine(t, h1, t.ensure_watched(params.fc2_w), t.ensure_watched(params.fc2_b)));
  Tensor logits = affine(t, h2, t.ensure_watched(params.cls_w), t.ensure_watched(params.cls_b));
  Tensor reg = affine(t, h2, t.ensure_watched(params.reg_w), t.ensure_watched(params.reg_b));

  HeadOut out;
  out.feature = reshape(t, h2, {h2.shape[1]});
  out.cls_logits = reshape(t, logits, {num_classes + 1});
  out.cls_scores = softmax(t, out.cls_logits);
  out.bbox_reg = reshape(t, reg, {4});
  return out;
}

Assignment assign_boxes(const std::vector<BBox>& boxes, const Annotation& ann, double pos_iou,
                        double neg_iou, bool force_best_match) {
  Assignment as;
  as.label.assign(boxes.size(), 0);
  as.match.assign(boxes.size(), -1);

  std::vector<double> best_iou(boxes.size(), 0.0);
  for (size_t i = 0; i < boxes.size(); ++i) {
    for (size_t g = 0; g < ann.boxes.size(); ++g) {
      const double v = iou(boxes[i], ann.boxes[g]);
      if (v > best_iou[i]) {
        best_iou[i] = v;
        as.match[i] = static_cast<int>(g);
      }
    }
    if (best_iou[i] >= pos_iou) {
      as.label[i] = 1;
    } else if (best_iou[i] < neg_iou) {
      as.label[i] = 0;
      as.match[i] = -1;
    } else {
      as.label[i] = -1;  // ignored band
      as.match[i] = -1;
    }
  }

  if (force_best_match) {
    // every gt claims its highest-IoU box (ties to the lowest index)
    for (size_t g = 0; g < ann.boxes.size(); ++g) {
      double best = 0.0;
      int best_i = -1;
      for (size_t i = 0; i < boxes.size(); ++i) {
        const double v = iou(boxes[i], ann.boxes[g]);
        if (v > best) {
          best = v;
          best_i = static_cast<int>(i);
        }
      }
      if (best_i >= 0) {
        as.label[static_cast<size_t>(best_i)] = 1;
        as.match[static_cast<size_t>(best_i)] = static_cast<int>(g);
      }
    }
  }
  return as;
}

namespace {

// class-balanced two-term cross entropy over gathered rpn logits
Tensor rpn_class_loss(Tape& t, const Tensor& rpn_obj, const AnchorLayout& lay,
                      const Assignment& as) {
  std::vector<int64_t> pos_idx, neg_idx;
  for (size_t i = 0; i < as.label.size(); ++i) {
    const int lbl = as.label[i];
    if (lbl < 0) continue;
    auto& dst = lbl == 1 ? pos_idx : neg_idx;
    dst.push_back(lay.obj_index(static_cast<int>(i), 0));
    dst.push_back(lay.obj_index(static_cast<int>(i), 1));
  }
  auto ce_over = [&](const std::vector<int64_t>& idx, int label) {
    const int rows = static_cast<int>(idx.size() / 2);
    Tensor logits = reshape(t, gather(t, rpn_obj, idx), {rows, 2});
    return softmax_cross_entropy(t, logits, std::vector<int>(static_cast<size_t>(rows), label));
  };
  const bool has_pos = !pos_idx.empty();
  const bool has_neg = !neg_idx.empty();
  if (has_pos && has_neg) {
    return scale(t, add(t, ce_over(pos_idx, 1), ce_over(neg_idx, 0)), 0.5);
  }
  if (has_pos) return ce_over(pos_idx, 1);
  if (has_neg) return ce_over(neg_idx, 0);
  return Tensor::scalar(0.0);
}

Tensor rpn_reg_loss(Tape& t, const Tensor& rpn_reg, const AnchorLayout& lay,
                    const std::vector<BBox>& anchors, const Assignment& as, const Annotation& ann) {
  std::vector<int64_t> idx;
  std::vector<double> targets;
  for (size_t i = 0; i < as.label.size(); ++i) {
    if (as.label[i] != 1) continue;
    const auto d = encode_box(ann.boxes[static_cast<size_t>(as.match[i])], anchors[i]);
    for (int k = 0; k < 4; ++k) {
      idx.push_back(lay.reg_index(static_cast<int>(i), k));
      targets.push_back(d[static_cast<size_t>(k)]);
    }
  }
  if (idx.empty()) return Tensor::scalar(0.0);
  const int rows = static_cast<int>(idx.size() / 4);
  Tensor pred = reshape(t, gather(t, rpn_reg, idx), {rows, 4});
  Tensor tgt({rows, 4}, std::move(targets));
  return smooth_l1(t, pred, tgt);
}

}  // namespace

Tensor detection_loss(Tape& t, const Tensor& rpn_obj, const Tensor& rpn_reg,
                      const std::vector<BBox>& anchors, const std::vector<ProposalRecord>& proposals,
                      const Annotation& ann, const DetectorConfig& cfg) {
  const AnchorLayout lay = layout_for(rpn_obj, cfg);

  // rpn terms; the argmax clause guarantees positives for every gt even when
  // no anchor clears the iou bar
  Assignment anchor_as = assign_boxes(anchors, ann, cfg.pos_iou, cfg.neg_iou, true);
  Tensor loss = add(t, rpn_class_loss(t, rpn_obj, lay, anchor_as),
                    rpn_reg_loss(t, rpn_reg, lay, anchors, anchor_as, ann));

  if (proposals.empty()) return loss;

  std::vector<BBox> boxes;
  boxes.reserve(proposals.size());
  for (const auto& p : proposals) boxes.push_back(p.box);
  Assignment prop_as = assign_boxes(boxes, ann, cfg.pos_iou, cfg.neg_iou, false);

  // proposal classification over the non-ignored set
  std::vector<Tensor> logits_rows;
  std::vector<int> labels;
  for (size_t i = 0; i < proposals.size(); ++i) {
    if (prop_as.label[i] < 0) continue;
    logits_rows.push_back(reshape(t, proposals[i].cls_logits, {1, cfg.num_classes + 1}));
    labels.push_back(prop_as.label[i] == 1 ? ann.labels[static_cast<size_t>(prop_as.match[i])]
                                           : cfg.num_classes);
  }
  if (!logits_rows.empty()) {
    Tensor logits = concat(t, logits_rows, 0);
    loss = add(t, loss, softmax_cross_entropy(t, logits, labels));
  }

  // regression over positives only
  std::vector<Tensor> reg_rows;
  std::vector<double> targets;
  for (size_t i = 0; i < proposals.size(); ++i) {
    if (prop_as.label[i] != 1) continue;
    reg_rows.push_back(reshape(t, proposals[i].bbox_reg, {1, 4}));
    const auto d = encode_box(ann.boxes[static_cast<size_t>(prop_as.match[i])], proposals[i].box);
    targets.insert(targets.end(), d.begin(), d.end());
  }
  if (!reg_rows.empty()) {
    Tensor pred = concat(t, reg_rows, 0);
    Tensor tgt({static_cast<int>(reg_rows.size()), 4}, std::move(targets));
    loss = add(t, loss, smooth_l1(t, pred, tgt));
  }
  return loss;
}

}  // namespace maf
