#include "maf/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace maf {

double iou(const BBox& a, const BBox& b) {
  const double ix1 = std::max(a.x1, b.x1);
  const double iy1 = std::max(a.y1, b.y1);
  const double ix2 = std::min(a.x2, b.x2);
  const double iy2 = std::min(a.y2, b.y2);
  const double iw = ix2 - ix1;
  const double ih = iy2 - iy1;
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return inter / uni;
}

std::array<double, 4> encode_box(const BBox& gt, const BBox& anchor) {
  if (!gt.valid() || !anchor.valid()) {
    throw std::invalid_argument("encode_box: degenerate box");
  }
  return {(gt.cx() - anchor.cx()) / anchor.w(), (gt.cy() - anchor.cy()) / anchor.h(),
          std::log(gt.w() / anchor.w()), std::log(gt.h() / anchor.h())};
}

BBox decode_box(const BBox& anchor, const std::array<double, 4>& delta) {
  // exp clamp keeps garbage regressions from overflowing early in training
  const double kMaxLogScale = 4.0;
  const double cx = anchor.cx() + delta[0] * anchor.w();
  const double cy = anchor.cy() + delta[1] * anchor.h();
  const double w = anchor.w() * std::exp(std::min(delta[2], kMaxLogScale));
  const double h = anchor.h() * std::exp(std::min(delta[3], kMaxLogScale));
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

BBox clip_box(const BBox& b, double img_w, double img_h) {
  return {std::clamp(b.x1, 0.0, img_w), std::clamp(b.y1, 0.0, img_h),
          std::clamp(b.x2, 0.0, img_w), std::clamp(b.y2, 0.0, img_h)};
}

std::vector<BBox> generate_anchors(int feat_h, int feat_w, int stride,
                                   const std::vector<double>& sizes, double img_w, double img_h) {
  std::vector<BBox> anchors;
  anchors.reserve(static_cast<size_t>(feat_h) * feat_w * sizes.size());
  for (int y = 0; y < feat_h; ++y) {
    for (int x = 0; x < feat_w; ++x) {
      const double cx = (x + 0.5) * stride;
      const double cy = (y + 0.5) * stride;
      for (double s : sizes) {
        BBox a{cx - 0.5 * s, cy - 0.5 * s, cx + 0.5 * s, cy + 0.5 * s};
        anchors.push_back(clip_box(a, img_w, img_h));
      }
    }
  }
  return anchors;
}

std::vector<int> nms(const std::vector<BBox>& boxes, const std::vector<double>& scores,
                     double iou_thr) {
  if (boxes.size() != scores.size()) {
    throw std::invalid_argument("nms: box/score count mismatch");
  }
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
      return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
    return a < b;
  });
  std::vector<int> kept;
  std::vector<char> suppressed(boxes.size(), 0);
  for (int i : order) {
    if (suppressed[static_cast<size_t>(i)]) continue;
    kept.push_back(i);
    for (int j : order) {
      if (j == i || suppressed[static_cast<size_t>(j)]) continue;
      if (iou(boxes[static_cast<size_t>(i)], boxes[static_cast<size_t>(j)]) >= iou_thr) {
        suppressed[static_cast<size_t>(j)] = 1;
      }
    }
  }
  return kept;
}

}  // namespace maf
