#pragma once

#include <vector>

#include "maf/dataset.hpp"
#include "maf/model.hpp"

namespace maf {

struct Detection {
  int image = -1;
  BBox box;
  int label = 0;
  double score = 0.0;
};

// proposals -> heads -> class-agnostic refinement -> per-class NMS
std::vector<Detection> detect_image(MafModel& model, const Tensor& image, double score_thr);

struct EvalResult {
  std::vector<double> ap;      // per class
  std::vector<int> gt_count;   // per class
  double map = 0.0;            // mean over classes with >= 1 gt
  int n_det = 0;
  int n_gt = 0;
};

// greedy score-ordered matching at the given IoU threshold, all-points
// interpolated AP; detections carry dataset-wide image indices
EvalResult evaluate_detections(const std::vector<Detection>& dets,
                               const std::vector<Annotation>& gts, int num_classes, double iou_thr);

EvalResult evaluate_map(MafModel& model, const Dataset& dataset, double iou_thr = 0.5,
                        double score_thr = 0.05);

// mAP per threshold; detections are computed once and rescored
std::vector<std::pair<double, double>> iou_sweep(MafModel& model, const Dataset& dataset,
                                                 const std::vector<double>& thresholds,
                                                 double score_thr = 0.05);

std::vector<double> default_sweep_thresholds();  // 0.5, 0.55, ..., 0.95

}  // namespace maf
