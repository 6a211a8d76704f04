#include "maf/model.hpp"

#include "maf/rng.hpp"

namespace maf {

namespace {

// each parameter draws from its own stream so init is independent of model
// layout and identical across variants for shared parameters
Tensor he_init(const Shape& shape, int fan_in, uint64_t seed, const std::string& name) {
  Rng rng(mix64(seed, fnv1a64(name.c_str())));
  Tensor t = Tensor::zeros(shape);
  const double std = std::sqrt(2.0 / fan_in);
  for (auto& v : t.values) v = std * rng.normal();
  return t;
}

struct Init {
  uint64_t seed;

  ConvParam conv(const std::string& name, int co, int ci, int k) const {
    return {he_init({co, ci, k, k}, ci * k * k, seed, name + ".w"), Tensor::zeros({co})};
  }
  void fc(const std::string& name, Tensor& w, Tensor& b, int in, int out) const {
    w = he_init({in, out}, in, seed, name + ".w");
    b = Tensor::zeros({out});
  }
};

}  // namespace

MafModel MafModel::make(const DetectorConfig& det, const AlignmentConfig& align, uint64_t seed) {
  MafModel m;
  m.det = det;
  m.align = align;
  Init init{seed};

  int in_ch = 3;
  for (int blk = 0; blk < 5; ++blk) {
    const int width = BackboneParams::kWidths[blk];
    const std::string base = "backbone.block" + std::to_string(blk + 1);
    m.backbone.conv[blk][0] = init.conv(base + ".conv1", width, in_ch, 3);
    m.backbone.conv[blk][1] = init.conv(base + ".conv2", width, width, 3);
    in_ch = width;
  }

  const int a = det.anchors_per_cell();
  m.rpn.trunk = init.conv("rpn.trunk", 32, 32, 3);
  m.rpn.obj = init.conv("rpn.obj", 2 * a, 32, 1);
  m.rpn.reg = init.conv("rpn.reg", 4 * a, 32, 1);

  const int pooled = 32 * det.roi_grid * det.roi_grid;
  init.fc("head.fc1", m.head.fc1_w, m.head.fc1_b, pooled, 64);
  init.fc("head.fc2", m.head.fc2_w, m.head.fc2_b, 64, 64);
  init.fc("head.cls", m.head.cls_w, m.head.cls_b, 64, det.num_classes + 1);
  init.fc("head.reg", m.head.reg_w, m.head.reg_b, 64, 4);

  for (int blk : {3, 4, 5}) {
    BlockDomainClassifier clf;
    clf.srm = SrmSpec{align.srm_s, align.srm_channels};
    const std::string base = "align.block" + std::to_string(blk);
    ConvParam srm = init.conv(base + ".srm", align.srm_channels, 32, 1);
    clf.srm_w = std::move(srm.w);
    clf.srm_b = std::move(srm.b);
    const int expanded = align.srm_channels * align.srm_s * align.srm_s;
    ConvParam h1 = init.conv(base + ".head1", 16, expanded, 1);
    clf.h1_w = std::move(h1.w);
    clf.h1_b = std::move(h1.b);
    ConvParam h2 = init.conv(base + ".head2", 2, 16, 1);
    clf.h2_w = std::move(h2.w);
    clf.h2_b = std::move(h2.b);
    m.block_clf.emplace(blk, std::move(clf));
  }

  m.prop_clf.input_width = align.aggregate ? m.aggregated_width() : m.proposal_feature_width();
  init.fc("align.proposal.fc1", m.prop_clf.fc1_w, m.prop_clf.fc1_b, m.prop_clf.input_width, 32);
  init.fc("align.proposal.fc2", m.prop_clf.fc2_w, m.prop_clf.fc2_b, 32, 2);

  return m;
}

void MafModel::for_each_detector_param(const std::function<void(const std::string&, Tensor&)>& fn) {
  for (int blk = 0; blk < 5; ++blk) {
    const std::string base = "backbone.block" + std::to_string(blk + 1);
    fn(base + ".conv1.w", backbone.conv[blk][0].w);
    fn(base + ".conv1.b", backbone.conv[blk][0].b);
    fn(base + ".conv2.w", backbone.conv[blk][1].w);
    fn(base + ".conv2.b", backbone.conv[blk][1].b);
  }
  fn("rpn.trunk.w", rpn.trunk.w);
  fn("rpn.trunk.b", rpn.trunk.b);
  fn("rpn.obj.w", rpn.obj.w);
  fn("rpn.obj.b", rpn.obj.b);
  fn("rpn.reg.w", rpn.reg.w);
  fn("rpn.reg.b", rpn.reg.b);
  fn("head.fc1.w", head.fc1_w);
  fn("head.fc1.b", head.fc1_b);
  fn("head.fc2.w", head.fc2_w);
  fn("head.fc2.b", head.fc2_b);
  fn("head.cls.w", head.cls_w);
  fn("head.cls.b", head.cls_b);
  fn("head.reg.w", head.reg_w);
  fn("head.reg.b", head.reg_b);
}

void MafModel::for_each_param(const std::function<void(const std::string&, Tensor&)>& fn) {
  for_each_detector_param(fn);
  for (auto& [blk, clf] : block_clf) {
    const std::string base = "align.block" + std::to_string(blk);
    fn(base + ".srm.w", clf.srm_w);
    fn(base + ".srm.b", clf.srm_b);
    fn(base + ".head1.w", clf.h1_w);
    fn(base + ".head1.b", clf.h1_b);
    fn(base + ".head2.w", clf.h2_w);
    fn(base + ".head2.b", clf.h2_b);
  }
  fn("align.proposal.fc1.w", prop_clf.fc1_w);
  fn("align.proposal.fc1.b", prop_clf.fc1_b);
  fn("align.proposal.fc2.w", prop_clf.fc2_w);
  fn("align.proposal.fc2.b", prop_clf.fc2_b);
}

}  // namespace maf
