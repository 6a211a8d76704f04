#include "maf/adversarial.hpp"

#include <stdexcept>

#include "maf/ops.hpp"

namespace maf {

Tensor grl(Tape& t, const Tensor& x, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("grl: lambda must be >= 0");
  Tensor out = x;
  out.node = -1;
  out.requires_grad = false;
  if (!Tape::tracked(x)) return out;
  const int nx = x.node;
  out.node = t.emit(out, {nx}, [nx, lambda](Tape& tp, const std::vector<double>& up) {
    std::vector<double> g(up.size());
    for (size_t i = 0; i < up.size(); ++i) g[i] = -lambda * up[i];
    tp.accumulate(nx, g);
  });
  out.requires_grad = true;
  return out;
}

Tensor wgrl_deferred(Tape& t, const Tensor& x, double lambda, std::shared_ptr<WgrlWeights> weights) {
  if (lambda < 0.0) throw std::invalid_argument("wgrl: lambda must be >= 0");
  if (x.rank() != 2) {
    throw std::invalid_argument("wgrl: input must be [rows, features], got " + shape_str(x.shape));
  }
  if (!weights) throw std::invalid_argument("wgrl: missing weight slot");
  Tensor out = x;
  out.node = -1;
  out.requires_grad = false;
  if (!Tape::tracked(x)) return out;
  const int nx = x.node;
  const int rows = x.shape[0];
  const int cols = x.shape[1];
  out.node = t.emit(out, {nx},
                    [nx, lambda, rows, cols, weights](Tape& tp, const std::vector<double>& up) {
    if (!weights->ready || static_cast<int>(weights->w.size()) != rows) {
      throw std::logic_error("wgrl: backward reached before per-row weights were set");
    }
    std::vector<double> g(up.size());
    for (int r = 0; r < rows; ++r) {
      const double s = -lambda * weights->w[static_cast<size_t>(r)];
      for (int c = 0; c < cols; ++c) {
        const size_t i = static_cast<size_t>(r) * cols + c;
        g[i] = s * up[i];
      }
    }
    tp.accumulate(nx, g);
  });
  out.requires_grad = true;
  return out;
}

Tensor wgrl(Tape& t, const Tensor& x, double lambda, const std::vector<double>& p, int d) {
  if (x.rank() != 2) {
    throw std::invalid_argument("wgrl: input must be [rows, features], got " + shape_str(x.shape));
  }
  if (d != 0 && d != 1) throw std::invalid_argument("wgrl: domain label must be 0 or 1");
  if (static_cast<int>(p.size()) != x.shape[0]) {
    throw std::invalid_argument("wgrl: " + std::to_string(p.size()) + " probabilities for " +
                                std::to_string(x.shape[0]) + " rows");
  }
  auto weights = std::make_shared<WgrlWeights>();
  weights->w.reserve(p.size());
  for (double pi : p) {
    if (!(pi >= 0.0 && pi <= 1.0)) {
      throw std::invalid_argument("wgrl: probability " + std::to_string(pi) + " outside [0,1]");
    }
    weights->w.push_back(d == 1 ? pi : 1.0 - pi);
  }
  weights->ready = true;
  return wgrl_deferred(t, x, lambda, std::move(weights));
}

namespace {

// flat input index feeding output element (c,u,v) of the rearrangement
inline int64_t srm_source_index(int c, int u, int v, int s, int h, int w) {
  const int q = c % (s * s);
  const int ci = c / (s * s);
  const int iu = u * s + q % s;
  const int iv = v * s + q / s;
  return (static_cast<int64_t>(ci) * h + iu) * w + iv;
}

}  // namespace

Tensor srm_rearrange(Tape& t, const Tensor& x, int s) {
  if (x.rank() != 3) {
    throw std::invalid_argument("srm_rearrange: input must be [C,H,W], got " + shape_str(x.shape));
  }
  if (s < 1) throw std::invalid_argument("srm_rearrange: sampling factor must be >= 1");
  const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
  if (h % s != 0 || w % s != 0) {
    throw std::invalid_argument("srm_rearrange: spatial dims " + shape_str(x.shape) +
                                " not divisible by s=" + std::to_string(s));
  }
  const int co = c * s * s, ho = h / s, wo = w / s;

  Tensor out = Tensor::zeros({co, ho, wo});
  std::vector<int64_t> src(out.values.size());
  for (int oc = 0; oc < co; ++oc) {
    for (int u = 0; u < ho; ++u) {
      for (int v = 0; v < wo; ++v) {
        const size_t oi = (static_cast<size_t>(oc) * ho + u) * wo + v;
        src[oi] = srm_source_index(oc, u, v, s, h, w);
        out.values[oi] = x.values[static_cast<size_t>(src[oi])];
      }
    }
  }

  if (!Tape::tracked(x)) return out;
  const int nx = x.node;
  const size_t in_size = x.values.size();
  out.node = t.emit(out, {nx},
                    [nx, in_size, src = std::move(src)](Tape& tp, const std::vector<double>& up) {
    // inverse permutation: the op is a bijection, so plain assignment suffices
    std::vector<double> g(in_size, 0.0);
    for (size_t i = 0; i < up.size(); ++i) g[static_cast<size_t>(src[i])] += up[i];
    tp.accumulate(nx, g);
  });
  out.requires_grad = true;
  return out;
}

Tensor srm_forward(Tape& t, const Tensor& x, const SrmSpec& spec, Tensor& conv_w, Tensor& conv_b) {
  Tensor w = t.ensure_watched(conv_w);
  Tensor b = t.ensure_watched(conv_b);
  Tensor reduced = conv2d(t, x, w, b, 1, 0);
  return srm_rearrange(t, reduced, spec.s);
}

}  // namespace maf
