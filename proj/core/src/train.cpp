#include "maf/train.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "maf/checkpoint.hpp"
#include "maf/rng.hpp"

namespace maf {

SgdState SgdState::for_model(MafModel& model) {
  SgdState s;
  model.for_each_param([&](const std::string& name, Tensor& p) {
    s.velocity.emplace(name, Tensor::zeros(p.shape));
  });
  return s;
}

void sgd_momentum_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr,
                       double momentum) {
  if (param.shape != grad.shape || param.shape != velocity.shape) {
    throw std::invalid_argument("sgd: shape mismatch, param " + shape_str(param.shape) + ", grad " +
                                shape_str(grad.shape) + ", velocity " + shape_str(velocity.shape));
  }
  for (size_t i = 0; i < param.values.size(); ++i) {
    velocity.values[i] = momentum * velocity.values[i] - lr * grad.values[i];
    param.values[i] += velocity.values[i];
  }
}

ImageForward forward_image(Tape& t, MafModel& model, const Tensor& image) {
  ImageForward out;
  out.feats = backbone_forward(t, image, model.backbone);
  auto [obj, reg] = rpn_forward(t, out.feats.b5, model.rpn);
  out.rpn_obj = obj;
  out.rpn_reg = reg;
  out.anchors = generate_anchors(obj.shape[1], obj.shape[2], model.det.stride,
                                 model.det.anchor_sizes, model.det.image_size, model.det.image_size);
  out.proposals = select_proposals(out.anchors, obj, reg, model.det, &out.proposal_scores);

  out.records.reserve(out.proposals.size());
  for (size_t i = 0; i < out.proposals.size(); ++i) {
    Tensor pooled = roi_pool(t, out.feats.b5, out.proposals[i], model.det.stride, model.det.roi_grid);
    HeadOut h = detection_head(t, pooled, model.head, model.det.num_classes);
    out.records.push_back({out.proposals[i], h.feature, h.cls_logits, h.cls_scores, h.bbox_reg,
                           out.proposal_scores[i]});
  }
  return out;
}

namespace {

// training-time detection additionally scores the ground-truth boxes
// themselves, which guarantees clean positives for the heads from step one
std::vector<ProposalRecord> with_gt_records(Tape& t, MafModel& model, const ImageForward& fwd,
                                            const Annotation& ann) {
  std::vector<ProposalRecord> records = fwd.records;
  for (const auto& gt : ann.boxes) {
    Tensor pooled = roi_pool(t, fwd.feats.b5, gt, model.det.stride, model.det.roi_grid);
    HeadOut h = detection_head(t, pooled, model.head, model.det.num_classes);
    records.push_back({gt, h.feature, h.cls_logits, h.cls_scores, h.bbox_reg, 1.0});
  }
  return records;
}

Tensor average_pair(Tape& t, const Tensor& a, const Tensor& b) {
  return scale(t, add(t, a, b), 0.5);
}

}  // namespace

LossBreakdown train_step(MafModel& model, SgdState& sgd, const DomainSample& src,
                         const DomainSample& tgt, const RunConfig& cfg, double lr, StepMode mode) {
  if (src.domain != kDomainSource) {
    throw std::invalid_argument("train_step: detection loss requires a source-domain sample");
  }
  if (tgt.domain != kDomainTarget) {
    throw std::invalid_argument("train_step: second sample must be target-domain");
  }
  if (!tgt.ann.boxes.empty()) {
    throw std::invalid_argument("train_step: target sample must be unlabeled");
  }

  const bool source_only = mode == StepMode::SourceOnly ||
                           (mode == StepMode::Auto && cfg.alpha == 0.0);

  Tape tape;
  LossBreakdown out;

  ImageForward src_fwd = forward_image(tape, model, src.image);
  std::vector<ProposalRecord> det_records = with_gt_records(tape, model, src_fwd, src.ann);
  Tensor l_det = detection_loss(tape, src_fwd.rpn_obj, src_fwd.rpn_reg, src_fwd.anchors,
                                det_records, src.ann, model.det);

  Tensor l_total = l_det;
  Tensor l3 = Tensor::scalar(0.0), l4 = Tensor::scalar(0.0), l5 = Tensor::scalar(0.0);
  Tensor lp = Tensor::scalar(0.0);
  Tensor lt = Tensor::scalar(0.0);

  if (!source_only) {
    ImageForward tgt_fwd = forward_image(tape, model, tgt.image);

    const DomainLabel src_label{1}, tgt_label{0};
    BlockLosses bl_s = hierarchical_alignment_loss(tape, src_fwd.feats, src_label, model.block_clf,
                                                   model.align);
    BlockLosses bl_t = hierarchical_alignment_loss(tape, tgt_fwd.feats, tgt_label, model.block_clf,
                                                   model.align);
    if (model.align.blocks.count(3)) l3 = average_pair(tape, bl_s.l3, bl_t.l3);
    if (model.align.blocks.count(4)) l4 = average_pair(tape, bl_s.l4, bl_t.l4);
    if (model.align.blocks.count(5)) l5 = average_pair(tape, bl_s.l5, bl_t.l5);

    if (model.align.proposal) {
      Tensor lp_s = proposal_alignment_loss(tape, src_fwd.records, src_label, model.prop_clf,
                                            model.align);
      Tensor lp_t = proposal_alignment_loss(tape, tgt_fwd.records, tgt_label, model.prop_clf,
                                            model.align);
      lp = average_pair(tape, lp_s, lp_t);
    }

    lt = total_alignment_loss(tape, l3, l4, l5, lp);
    l_total = add(tape, l_det, scale(tape, lt, cfg.alpha));
  }

  tape.backward(l_total);

  model.for_each_param([&](const std::string& name, Tensor& p) {
    Tensor g = tape.is_watched(p) ? tape.grad_of(p) : Tensor::zeros(p.shape);
    sgd_momentum_step(p, g, sgd.velocity.at(name), lr, cfg.momentum);
  });

  out.l_det = l_det.item();
  out.l_3 = l3.item();
  out.l_4 = l4.item();
  out.l_5 = l5.item();
  out.l_p = lp.item();
  out.l_t = lt.item();
  out.l_maf = l_total.item();
  return out;
}

int sample_index(uint64_t seed, uint64_t stream, int iter, int n) {
  if (n <= 0) throw std::invalid_argument("sample_index: empty split");
  const int epoch = iter / n;
  const int slot = iter % n;
  // Fisher-Yates permutation of this epoch, derived statelessly
  std::vector<int> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(mix64(seed, stream, static_cast<uint64_t>(epoch)));
  for (int i = n - 1; i > 0; --i) {
    const int j = rng.uniform_int(0, i);
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  return perm[static_cast<size_t>(slot)];
}

namespace {

constexpr uint64_t kSrcSampleStream = 0xA1;
constexpr uint64_t kTgtSampleStream = 0xB2;

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_losses_csv(const std::filesystem::path& path, const std::vector<LossBreakdown>& log,
                      const RunConfig& cfg) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("train: cannot open " + path.string());
  f << "iter,l_det,l_3,l_4,l_5,l_p,l_t,l_maf,lr\n";
  for (size_t i = 0; i < log.size(); ++i) {
    const auto& b = log[i];
    f << (i + 1) << "," << fmt17(b.l_det) << "," << fmt17(b.l_3) << "," << fmt17(b.l_4) << ","
      << fmt17(b.l_5) << "," << fmt17(b.l_p) << "," << fmt17(b.l_t) << "," << fmt17(b.l_maf) << ","
      << fmt17(cfg.lr_at(static_cast<int>(i))) << "\n";
  }
  if (!f) throw std::runtime_error("train: write failed for " + path.string());
}

TrainOutput train(const RunConfig& cfg, const Dataset& trainset,
                  const std::filesystem::path& out_dir) {
  cfg.validate();
  if (trainset.source_indices.empty()) throw std::runtime_error("train: dataset has no source images");
  if (trainset.target_indices.empty()) throw std::runtime_error("train: dataset has no target images");
  std::filesystem::create_directories(out_dir);

  const auto t0 = std::chrono::steady_clock::now();

  TrainOutput out{MafModel::make(DetectorConfig{}, cfg.align, cfg.seed), {}, {}, {}, {}, 0.0};
  out.sgd = SgdState::for_model(out.model);

  const int n_src = static_cast<int>(trainset.source_indices.size());
  const int n_tgt = static_cast<int>(trainset.target_indices.size());
  const int total = cfg.total_iters();
  out.log.reserve(static_cast<size_t>(total));
  for (int iter = 0; iter < total; ++iter) {
    const int si = trainset.source_indices[static_cast<size_t>(
        sample_index(cfg.seed, kSrcSampleStream, iter, n_src))];
    const int ti = trainset.target_indices[static_cast<size_t>(
        sample_index(cfg.seed, kTgtSampleStream, iter, n_tgt))];
    out.log.push_back(train_step(out.model, out.sgd, trainset.samples[static_cast<size_t>(si)],
                                 trainset.samples[static_cast<size_t>(ti)], cfg, cfg.lr_at(iter)));
  }

  out.losses_path = out_dir / "losses.csv";
  write_losses_csv(out.losses_path, out.log, cfg);
  out.checkpoint_path = out_dir / "checkpoint.maf";
  save_model_checkpoint(out.checkpoint_path, out.model, &out.sgd);
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

void save_model_checkpoint(const std::filesystem::path& path, MafModel& model, SgdState* sgd) {
  std::map<std::string, Tensor> tensors;
  model.for_each_param([&](const std::string& name, Tensor& p) {
    Tensor clean = p;
    clean.node = -1;
    clean.requires_grad = false;
    tensors.emplace(name, std::move(clean));
  });
  if (sgd) {
    for (const auto& [name, v] : sgd->velocity) tensors.emplace(kVelocityPrefix + name, v);
  }
  write_checkpoint(path, tensors);
}

void load_model_checkpoint(const std::filesystem::path& path, MafModel& model, SgdState* sgd) {
  auto tensors = read_checkpoint(path);
  model.for_each_param([&](const std::string& name, Tensor& p) {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
      throw std::runtime_error("checkpoint: " + path.string() + " is missing parameter '" + name + "'");
    }
    if (it->second.shape != p.shape) {
      throw std::runtime_error("checkpoint: parameter '" + name + "' has shape " +
                               shape_str(it->second.shape) + ", model expects " + shape_str(p.shape));
    }
    p.values = it->second.values;
    p.node = -1;
    p.requires_grad = false;
    tensors.erase(it);
  });
  if (sgd) {
    for (auto& [name, v] : sgd->velocity) {
      auto it = tensors.find(kVelocityPrefix + name);
      if (it != tensors.end()) {
        if (it->second.shape != v.shape) {
          throw std::runtime_error("checkpoint: velocity '" + name + "' shape mismatch");
        }
        v.values = it->second.values;
        tensors.erase(it);
      } else {
        v = Tensor::zeros(v.shape);
      }
    }
  } else {
    for (auto it = tensors.begin(); it != tensors.end();) {
      if (it->first.rfind(kVelocityPrefix, 0) == 0) it = tensors.erase(it);
      else ++it;
    }
  }
  for (const auto& [name, t] : tensors) {
    if (name.rfind(kVelocityPrefix, 0) != 0) {
      throw std::runtime_error("checkpoint: unexpected record '" + name + "' in " + path.string());
    }
  }
}

}  // namespace maf
