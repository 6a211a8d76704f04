#include "maf/eval.hpp"

#include <algorithm>
#include <stdexcept>

#include "maf/train.hpp"

namespace maf {

std::vector<Detection> detect_image(MafModel& model, const Tensor& image, double score_thr) {
  Tape tape;
  ImageForward fwd = forward_image(tape, model, image);

  const int k = model.det.num_classes;
  const double img = model.det.image_size;
  std::vector<Detection> all;
  for (const auto& rec : fwd.records) {
    const std::array<double, 4> delta = {rec.bbox_reg.values[0], rec.bbox_reg.values[1],
                                         rec.bbox_reg.values[2], rec.bbox_reg.values[3]};
    const BBox refined = clip_box(decode_box(rec.box, delta), img, img);
    if (!refined.valid()) continue;
    for (int c = 0; c < k; ++c) {
      const double score = rec.cls_scores.values[static_cast<size_t>(c)];
      if (score >= score_thr) all.push_back({-1, refined, c, score});
    }
  }

  // per-class NMS
  std::vector<Detection> out;
  for (int c = 0; c < k; ++c) {
    std::vector<BBox> boxes;
    std::vector<double> scores;
    std::vector<const Detection*> src;
    for (const auto& d : all) {
      if (d.label != c) continue;
      boxes.push_back(d.box);
      scores.push_back(d.score);
      src.push_back(&d);
    }
    for (int idx : nms(boxes, scores, model.det.detect_nms_iou)) {
      out.push_back(*src[static_cast<size_t>(idx)]);
    }
  }
  return out;
}

EvalResult evaluate_detections(const std::vector<Detection>& dets,
                               const std::vector<Annotation>& gts, int num_classes,
                               double iou_thr) {
  EvalResult res;
  res.ap.assign(static_cast<size_t>(num_classes), 0.0);
  res.gt_count.assign(static_cast<size_t>(num_classes), 0);
  res.n_det = static_cast<int>(dets.size());
  for (const auto& g : gts) {
    for (int lbl : g.labels) {
      if (lbl < 0 || lbl >= num_classes) {
        throw std::invalid_argument("evaluate: gt label " + std::to_string(lbl) + " out of range");
      }
      res.gt_count[static_cast<size_t>(lbl)]++;
      res.n_gt++;
    }
  }

  int classes_with_gt = 0;
  double ap_sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    const int n_gt = res.gt_count[static_cast<size_t>(c)];
    if (n_gt == 0) continue;
    ++classes_with_gt;

    // rank detections of this class across the whole set
    std::vector<int> order;
    for (size_t i = 0; i < dets.size(); ++i) {
      if (dets[i].label == c) order.push_back(static_cast<int>(i));
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (dets[static_cast<size_t>(a)].score != dets[static_cast<size_t>(b)].score)
        return dets[static_cast<size_t>(a)].score > dets[static_cast<size_t>(b)].score;
      if (dets[static_cast<size_t>(a)].image != dets[static_cast<size_t>(b)].image)
        return dets[static_cast<size_t>(a)].image < dets[static_cast<size_t>(b)].image;
      return a < b;
    });

    // greedy match to the highest-IoU unmatched gt of the same class
    std::vector<std::vector<char>> used(gts.size());
    for (size_t i = 0; i < gts.size(); ++i) used[i].assign(gts[i].boxes.size(), 0);

    std::vector<double> recall, precision;
    int tp = 0, fp = 0;
    for (int di : order) {
      const auto& d = dets[static_cast<size_t>(di)];
      int best_g = -1;
      double best_iou = 0.0;
      if (d.image >= 0 && d.image < static_cast<int>(gts.size())) {
        const auto& ann = gts[static_cast<size_t>(d.image)];
        for (size_t g = 0; g < ann.boxes.size(); ++g) {
          if (ann.labels[g] != c || used[static_cast<size_t>(d.image)][g]) continue;
          const double v = iou(d.box, ann.boxes[g]);
          if (v >= iou_thr && v > best_iou) {
            best_iou = v;
            best_g = static_cast<int>(g);
          }
        }
      }
      if (best_g >= 0) {
        used[static_cast<size_t>(d.image)][static_cast<size_t>(best_g)] = 1;
        ++tp;
      } else {
        ++fp;
      }
      recall.push_back(static_cast<double>(tp) / n_gt);
      precision.push_back(static_cast<double>(tp) / (tp + fp));
    }

    // all-points interpolation: area under the precision envelope
    std::vector<double> mrec{0.0};
    mrec.insert(mrec.end(), recall.begin(), recall.end());
    mrec.push_back(1.0);
    std::vector<double> mpre{0.0};
    mpre.insert(mpre.end(), precision.begin(), precision.end());
    mpre.push_back(0.0);
    for (int i = static_cast<int>(mpre.size()) - 2; i >= 0; --i) {
      mpre[static_cast<size_t>(i)] = std::max(mpre[static_cast<size_t>(i)], mpre[static_cast<size_t>(i) + 1]);
    }
    double ap = 0.0;
    for (size_t i = 1; i < mrec.size(); ++i) {
      ap += (mrec[i] - mrec[i - 1]) * mpre[i];
    }
    res.ap[static_cast<size_t>(c)] = ap;
    ap_sum += ap;
  }
  res.map = classes_with_gt > 0 ? ap_sum / classes_with_gt : 0.0;
  return res;
}

namespace {

std::pair<std::vector<Detection>, std::vector<Annotation>> collect_detections(
    MafModel& model, const Dataset& dataset, double score_thr) {
  std::vector<Detection> dets;
  std::vector<Annotation> gts;
  gts.reserve(dataset.samples.size());
  for (size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    gts.push_back(s.ann);
    for (Detection d : detect_image(model, s.image, score_thr)) {
      d.image = static_cast<int>(i);
      dets.push_back(d);
    }
  }
  return {std::move(dets), std::move(gts)};
}

}  // namespace

EvalResult evaluate_map(MafModel& model, const Dataset& dataset, double iou_thr, double score_thr) {
  if (dataset.samples.empty()) throw std::invalid_argument("evaluate_map: empty dataset");
  auto [dets, gts] = collect_detections(model, dataset, score_thr);
  return evaluate_detections(dets, gts, model.det.num_classes, iou_thr);
}

std::vector<std::pair<double, double>> iou_sweep(MafModel& model, const Dataset& dataset,
                                                 const std::vector<double>& thresholds,
                                                 double score_thr) {
  if (dataset.samples.empty()) throw std::invalid_argument("iou_sweep: empty dataset");
  auto [dets, gts] = collect_detections(model, dataset, score_thr);
  std::vector<std::pair<double, double>> out;
  out.reserve(thresholds.size());
  for (double thr : thresholds) {
    out.emplace_back(thr, evaluate_detections(dets, gts, model.det.num_classes, thr).map);
  }
  return out;
}

std::vector<double> default_sweep_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 9; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

}  // namespace maf
