#pragma once

#include <array>
#include <vector>

namespace maf {

// axis-aligned box, image coordinate frame (origin top-left, pixels)
struct BBox {
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

  double w() const { return x2 - x1; }
  double h() const { return y2 - y1; }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  double area() const { return w() * h(); }
  bool valid() const { return x2 > x1 && y2 > y1; }

  bool operator==(const BBox&) const = default;
};

// intersection over union; 0 for disjoint boxes
double iou(const BBox& a, const BBox& b);

// standard center-size deltas (dx, dy, dw, dh) of gt relative to anchor
std::array<double, 4> encode_box(const BBox& gt, const BBox& anchor);
BBox decode_box(const BBox& anchor, const std::array<double, 4>& delta);

BBox clip_box(const BBox& b, double img_w, double img_h);

// one square anchor per size, centered on each feature cell, clipped to the
// image
std::vector<BBox> generate_anchors(int feat_h, int feat_w, int stride,
                                   const std::vector<double>& sizes, double img_w, double img_h);

// greedy NMS; returns kept indices ordered by descending score
// (index ascending on exact ties, which makes the result order-independent
// for distinct scores)
std::vector<int> nms(const std::vector<BBox>& boxes, const std::vector<double>& scores,
                     double iou_thr);

}  // namespace maf
