#include "maf/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#ifdef MAF_HAVE_OPENBLAS
extern "C" void openblas_set_num_threads(int);
#endif

namespace maf {

void pin_blas_single_thread() {
#ifdef MAF_HAVE_OPENBLAS
  openblas_set_num_threads(1);
#endif
}

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// c[m,n] = op(a) * op(b), all row-major
void dgemm(bool trans_a, bool trans_b, int m, int n, int k, const double* a, const double* b,
           double* c) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, 1.0, a, trans_a ? m : k, b,
              trans_b ? k : n, 0.0, c, n);
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise

namespace {

enum class EwKind { Add, Sub, Mul };

Tensor elementwise(Tape& t, const Tensor& a, const Tensor& b, EwKind kind, const char* name) {
  const bool a_scalar = a.is_scalar();
  const bool b_scalar = b.is_scalar();
  require(a.shape == b.shape || a_scalar || b_scalar,
          std::string(name) + ": incompatible shapes " + shape_str(a.shape) + " vs " +
              shape_str(b.shape));

  const Tensor& big = (a_scalar && !b_scalar) ? b : a;
  Tensor out = Tensor::zeros(big.shape);
  const size_t n = out.values.size();
  for (size_t i = 0; i < n; ++i) {
    const double av = a_scalar ? a.values[0] : a.values[i];
    const double bv = b_scalar ? b.values[0] : b.values[i];
    switch (kind) {
      case EwKind::Add: out.values[i] = av + bv; break;
      case EwKind::Sub: out.values[i] = av - bv; break;
      case EwKind::Mul: out.values[i] = av * bv; break;
    }
  }
  debug_check_finite(out, name);

  if (!Tape::tracked(a) && !Tape::tracked(b)) return out;

  const int na = a.node, nb = b.node;
  std::vector<double> av_saved, bv_saved;
  if (kind == EwKind::Mul) {
    if (nb >= 0) av_saved = a.values;
    if (na >= 0) bv_saved = b.values;
  }
  out.node = t.emit(out, {na, nb}, [=](Tape& tp, const std::vector<double>& up) {
    auto reduce_to = [&](int node, bool scalar, std::vector<double>&& g) {
      if (node < 0) return;
      if (scalar && g.size() > 1) {
        double s = 0.0;
        for (double v : g) s += v;
        g.assign(1, s);
      }
      tp.accumulate(node, g);
    };
    switch (kind) {
      case EwKind::Add: {
        if (na >= 0) reduce_to(na, a_scalar, std::vector<double>(up));
        if (nb >= 0) reduce_to(nb, b_scalar, std::vector<double>(up));
        break;
      }
      case EwKind::Sub: {
        if (na >= 0) reduce_to(na, a_scalar, std::vector<double>(up));
        if (nb >= 0) {
          std::vector<double> g(up.size());
          for (size_t i = 0; i < up.size(); ++i) g[i] = -up[i];
          reduce_to(nb, b_scalar, std::move(g));
        }
        break;
      }
      case EwKind::Mul: {
        if (na >= 0) {
          std::vector<double> g(up.size());
          for (size_t i = 0; i < up.size(); ++i)
            g[i] = up[i] * (b_scalar ? bv_saved[0] : bv_saved[i]);
          reduce_to(na, a_scalar, std::move(g));
        }
        if (nb >= 0) {
          std::vector<double> g(up.size());
          for (size_t i = 0; i < up.size(); ++i)
            g[i] = up[i] * (a_scalar ? av_saved[0] : av_saved[i]);
          reduce_to(nb, b_scalar, std::move(g));
        }
        break;
      }
    }
  });
  out.requires_grad = true;
  return out;
}

}  // namespace

Tensor add(Tape& t, const Tensor& a, const Tensor& b) { return elementwise(t, a, b, EwKind::Add, "add"); }
Tensor sub(Tape& t, const Tensor& a, const Tensor& b) { return elementwise(t, a, b, EwKind::Sub, "sub"); }
Tensor mul(Tape& t, const Tensor& a, const Tensor& b) { return elementwise(t, a, b, EwKind::Mul, "mul"); }

Tensor scale(Tape& t, const Tensor& a, double s) {
  Tensor out = a;
  out.node = -1;
  out.requires_grad = false;
  for (auto& v : out.values) v *= s;
  debug_check_finite(out, "scale");
  if (!Tape::tracked(a)) return out;
  const int na = a.node;
  out.node = t.emit(out, {na}, [na, s](Tape& tp, const std::vector<double>& up) {
    std::vector<double> g(up.size());
    for (size_t i = 0; i < up.size(); ++i) g[i] = up[i] * s;
    tp.accumulate(na, g);
  });
  out.requires_grad = true;
  return out;
}

Tensor sum(Tape& t, const Tensor& x) {
  double s = 0.0;
  for (double v : x.values) s += v;
  Tensor out = Tensor::scalar(s);
  if (!Tape::tracked(x)) return out;
  const int nx = x.node;
  const size_t n = x.values.size();
  out.node = t.emit(out, {nx}, [nx, n](Tape& tp, const std::vector<double>& up) {
    tp.accumulate(nx, std::vector<double>(n, up[0]));
  });
  out.requires_grad = true;
  return out;
}

Tensor mean(Tape& t, const Tensor& x) {
  require(x.numel() > 0, "mean of empty tensor");
  Tensor s = sum(t, x);
  return scale(t, s, 1.0 / static_cast<double>(x.numel()));
}

// ---------------------------------------------------------------------------
// affine

Tensor affine(Tape& t, const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.rank() == 2 && w.rank() == 2, "affine: x and W must be rank 2, got " +
                                              shape_str(x.shape) + " and " + shape_str(w.shape));
  require(x.shape[1] == w.shape[0], "affine: inner dimensions disagree, x " + shape_str(x.shape) +
                                        " vs W " + shape_str(w.shape));
  require(b.rank() == 1 && b.shape[0] == w.shape[1],
          "affine: bias shape " + shape_str(b.shape) + " does not match W " + shape_str(w.shape));
  const int n = x.shape[0], in = x.shape[1], out_dim = w.shape[1];

  Tensor out = Tensor::zeros({n, out_dim});
  dgemm(false, false, n, out_dim, in, x.values.data(), w.values.data(), out.values.data());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < out_dim; ++j) out.values[static_cast<size_t>(i) * out_dim + j] += b.values[j];
  debug_check_finite(out, "affine");

  if (!Tape::tracked(x) && !Tape::tracked(w) && !Tape::tracked(b)) return out;
  const int nx = x.node, nw = w.node, nb = b.node;
  std::vector<double> xv = x.values, wv = w.values;
  out.node = t.emit(out, {nx, nw, nb},
                    [nx, nw, nb, n, in, out_dim, xv = std::move(xv), wv = std::move(wv)](
                        Tape& tp, const std::vector<double>& up) {
    if (nx >= 0) {
      std::vector<double> gx(static_cast<size_t>(n) * in);
      dgemm(false, true, n, in, out_dim, up.data(), wv.data(), gx.data());
      tp.accumulate(nx, gx);
    }
    if (nw >= 0) {
      std::vector<double> gw(static_cast<size_t>(in) * out_dim);
      dgemm(true, false, in, out_dim, n, xv.data(), up.data(), gw.data());
      tp.accumulate(nw, gw);
    }
    if (nb >= 0) {
      std::vector<double> gb(static_cast<size_t>(out_dim), 0.0);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < out_dim; ++j) gb[static_cast<size_t>(j)] += up[static_cast<size_t>(i) * out_dim + j];
      tp.accumulate(nb, gb);
    }
  });
  out.requires_grad = true;
  return out;
}

// ---------------------------------------------------------------------------
// conv2d via im2col + dgemm

namespace {

struct ConvDims {
  int ci, h, w, co, kh, kw, stride, pad, ho, wo;
};

void im2col(const std::vector<double>& x, const ConvDims& d, std::vector<double>& cols) {
  // cols[(ci*kh*kw), (ho*wo)]
  const int hw_out = d.ho * d.wo;
  for (int c = 0; c < d.ci; ++c) {
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        const int row = (c * d.kh + ki) * d.kw + kj;
        double* dst = cols.data() + static_cast<size_t>(row) * hw_out;
        for (int oy = 0; oy < d.ho; ++oy) {
          const int iy = oy * d.stride + ki - d.pad;
          if (iy < 0 || iy >= d.h) {
            std::fill(dst + static_cast<size_t>(oy) * d.wo, dst + static_cast<size_t>(oy + 1) * d.wo, 0.0);
            continue;
          }
          const double* src = x.data() + (static_cast<size_t>(c) * d.h + iy) * d.w;
          for (int ox = 0; ox < d.wo; ++ox) {
            const int ix = ox * d.stride + kj - d.pad;
            dst[static_cast<size_t>(oy) * d.wo + ox] = (ix >= 0 && ix < d.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_acc(const std::vector<double>& cols, const ConvDims& d, std::vector<double>& x) {
  const int hw_out = d.ho * d.wo;
  for (int c = 0; c < d.ci; ++c) {
    for (int ki = 0; ki < d.kh; ++ki) {
      for (int kj = 0; kj < d.kw; ++kj) {
        const int row = (c * d.kh + ki) * d.kw + kj;
        const double* src = cols.data() + static_cast<size_t>(row) * hw_out;
        for (int oy = 0; oy < d.ho; ++oy) {
          const int iy = oy * d.stride + ki - d.pad;
          if (iy < 0 || iy >= d.h) continue;
          double* dst = x.data() + (static_cast<size_t>(c) * d.h + iy) * d.w;
          for (int ox = 0; ox < d.wo; ++ox) {
            const int ix = ox * d.stride + kj - d.pad;
            if (ix >= 0 && ix < d.w) dst[ix] += src[static_cast<size_t>(oy) * d.wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(Tape& t, const Tensor& x, const Tensor& k, const Tensor& b, int stride, int pad) {
  require(x.rank() == 3, "conv2d: input must be [C,H,W], got " + shape_str(x.shape));
  require(k.rank() == 4, "conv2d: kernel must be [Co,Ci,kh,kw], got " + shape_str(k.shape));
  require(k.shape[1] == x.shape[0], "conv2d: kernel expects " + std::to_string(k.shape[1]) +
                                        " input channels, input has " + std::to_string(x.shape[0]));
  require(b.rank() == 1 && b.shape[0] == k.shape[0],
          "conv2d: bias shape " + shape_str(b.shape) + " does not match kernel " + shape_str(k.shape));
  ConvDims d{x.shape[0], x.shape[1], x.shape[2], k.shape[0], k.shape[2], k.shape[3], stride, pad, 0, 0};
  require(d.kh % 2 == 1 && d.kw % 2 == 1, "conv2d: kernel dims must be odd, got " + shape_str(k.shape));
  require(stride >= 1 && pad >= 0, "conv2d: invalid stride/pad");
  const int num = d.h + 2 * pad - d.kh;
  const int numw = d.w + 2 * pad - d.kw;
  require(num >= 0 && numw >= 0 && num % stride == 0 && numw % stride == 0,
          "conv2d: non-integral output size for input " + shape_str(x.shape) + ", kernel " +
              shape_str(k.shape) + ", stride " + std::to_string(stride) + ", pad " + std::to_string(pad));
  d.ho = num / stride + 1;
  d.wo = numw / stride + 1;

  const int kdim = d.ci * d.kh * d.kw;
  const int hw_out = d.ho * d.wo;
  std::vector<double> cols(static_cast<size_t>(kdim) * hw_out);
  im2col(x.values, d, cols);

  Tensor out = Tensor::zeros({d.co, d.ho, d.wo});
  dgemm(false, false, d.co, hw_out, kdim, k.values.data(), cols.data(), out.values.data());
  for (int c = 0; c < d.co; ++c) {
    double* o = out.values.data() + static_cast<size_t>(c) * hw_out;
    for (int i = 0; i < hw_out; ++i) o[i] += b.values[static_cast<size_t>(c)];
  }
  debug_check_finite(out, "conv2d");

  if (!Tape::tracked(x) && !Tape::tracked(k) && !Tape::tracked(b)) return out;
  const int nx = x.node, nk = k.node, nb = b.node;
  std::vector<double> kv = k.values;
  out.node = t.emit(out, {nx, nk, nb},
                    [nx, nk, nb, d, kdim, hw_out, cols = std::move(cols), kv = std::move(kv)](
                        Tape& tp, const std::vector<double>& up) {
    if (nk >= 0) {
      std::vector<double> gk(static_cast<size_t>(d.co) * kdim);
      dgemm(false, true, d.co, kdim, hw_out, up.data(), cols.data(), gk.data());
      tp.accumulate(nk, gk);
    }
    if (nx >= 0) {
      std::vector<double> gcols(static_cast<size_t>(kdim) * hw_out);
      dgemm(true, false, kdim, hw_out, d.co, kv.data(), up.data(), gcols.data());
      std::vector<double> gx(static_cast<size_t>(d.ci) * d.h * d.w, 0.0);
      col2im_acc(gcols, d, gx);
      tp.accumulate(nx, gx);
    }
    if (nb >= 0) {
      std::vector<double> gb(static_cast<size_t>(d.co), 0.0);
      for (int c = 0; c < d.co; ++c) {
        const double* u = up.data() + static_cast<size_t>(c) * hw_out;
        for (int i = 0; i < hw_out; ++i) gb[static_cast<size_t>(c)] += u[i];
      }
      tp.accumulate(nb, gb);
    }
  });
  out.requires_grad = true;
  return out;
}

// ---------------------------------------------------------------------------
// nonlinearities and pooling

Tensor relu(Tape& t, const Tensor& x) {
  Tensor out = x;
  out.node = -1;
  out.requires_grad = false;
  for (auto& v : out.values) v = v > 0.0 ? v : 0.0;
  if (!Tape::tracked(x)) return out;
  const int nx = x.node;
  std::vector<double> ov = out.values;
  out.node = t.emit(out, {nx}, [nx, ov = std::move(ov)](Tape& tp, const std::vector<double>& up) {
    std::vector<double> g(up.size());
    for (size_t i = 0; i < up.size(); ++i) g[i] = ov[i] > 0.0 ? up[i] : 0.0;
    tp.accumulate(nx, g);
  });
  out.requires_grad = true;
  return out;
}

Tensor sigmoid(Tape& t, const Tensor& x) {
  Tensor out = x;
  out.node = -1;
  out.requires_grad = false;
  for (auto& v : out.values) {
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  debug_check_finite(out, "sigmoid");
  if (!Tape::tracked(x)) return out;
  const int nx = x.node;
  std::vector<double> ov = out.values;
  out.node = t.emit(out, {nx}, [nx, ov = std::move(ov)](Tape& tp, const std::vector<double>& up) {
    std::vector<double> g(up.size());
    for (size_t i = 0; i < up.size(); ++i) g[i] = up[i] * ov[i] * (1.0 - ov[i]);
    tp.accumulate(nx, g);
  });
  out.requires_grad = true;
  return out;
}

Tensor maxpool2d(Tape& t, const Tensor& x, int window, int stride) {
  require(x.rank() == 3, "maxpool2d: input must be [C,H,W], got " + shape_str(x.shape));
  require(window >= 1 && stride >= 1, "maxpool2d: invalid window/stride");
  const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
  require(h % stride == 0 && w % stride == 0,
          "maxpool2d: spatial dims " + shape_str(x.shape) + " not divisible by stride " +
              std::to_string(stride));
  require((h - window) % stride == 0 && (w - window) % stride == 0 && window <= h && window <= w,
          "maxpool2d: window " + std::to_string(window) + " does not tile input " + shape_str(x.shape));
  const int ho = (h - window) / stride + 1;
  const int wo = (w - window) / stride + 1;

  Tensor out = Tensor::zeros({c, ho, wo});
  std::vector<int64_t> argmax(out.values.size());
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        int64_t best_idx = -1;
        for (int ky = 0; ky < window; ++ky) {
          for (int kx = 0; kx < window; ++kx) {
            const int iy = oy * stride + ky, ix = ox * stride + kx;
            const int64_t idx = (static_cast<int64_t>(ch) * h + iy) * w + ix;
            const double v = x.values[static_cast<size_t>(idx)];
            if (v > best) {  // first-encountered max wins ties
              best = v;
              best_idx = idx;
            }
          }
        }
        const size_t o = (static_cast<size_t>(ch) * ho + oy) * wo + ox;
        out.values[o] = best;
        argmax[o] = best_idx;
      }
    }
  }

  if (!Tape::tracked(x)) return out;
  const int nx = x.node;
  const size_t in_size = x.values.size();
  out.node = t.emit(out, {nx},
                    [nx, in_size, argmax = std::move(argmax)](Tape& tp, const std::vector<double>& up) {
    std::vector<double> g(in_size, 0.0);
    for (size_t i = 0; i < up.size(); ++i) g[static_cast<size_t>(argmax[i])] += up[i];
    tp.accumulate(nx, g);
  });
  out.requires_grad = true;
  return out;
}

// ---------------------------------------------------------------------------
// softmax and losses

namespace {

// rows/cols view of a rank-1 or rank-2 tensor
std::pair<int, int> as_rows(const Tensor& x, const char* op) {
  if (x.rank() == 1) return {1, x.shape[0]};
  if (x.rank() == 2) return {x.shape[0], x.shape[1]};
  throw std::invalid_argument(std::string(op) + ": expected rank 1 or 2, got " + shape_str(x.shape));
}

void softmax_row(const double* in, double* out, int k) {
  double m = in[0];
  for (int j = 1; j < k; ++j) m = std::max(m, in[j]);
  double z = 0.0;
  for (int j = 0; j < k; ++j) {
    out[j] = std::exp(in[j] - m);
    z += out[j];
  }
  for (int j = 0; j < k; ++j) out[j] /= z;
}

}  // namespace

Tensor softmax(Tape& t, const Tensor& x) {
  auto [n, k] = as_rows(x, "softmax");
  require(k >= 1, "softmax: empty rows");
  Tensor out = Tensor::zeros(x.shape);
  for (int i = 0; i < n; ++i)
    softmax_row(x.values.data() + static_cast<size_t>(i) * k, out.values.data() + static_cast<size_t>(i) * k, k);
  debug_check_finite(out, "softmax");
  if (!Tape::tracked(x)) return out;
  const int nx = x.node;
  std::vector<double> sv = out.values;
  out.node = t.emit(out, {nx}, [nx, n = n, k = k, sv = std::move(sv)](Tape& tp, const std::vector<double>& up) {
    std::vector<double> g(up.size());
    for (int i = 0; i < n; ++i) {
      const double* s = sv.data() + static_cast<size_t>(i) * k;
      const double* u = up.data() + static_cast<size_t>(i) * k;
      double dot = 0.0;
      for (int j = 0; j < k; ++j) dot += u[j] * s[j];
      for (int j = 0; j < k; ++j) g[static_cast<size_t>(i) * k + j] = s[j] * (u[j] - dot);
    }
    tp.accumulate(nx, g);
  });
  out.requires_grad = true;
  return out;
}

Tensor softmax_cross_entropy(Tape& t, const Tensor& logits, const std::vector<int>& labels) {
  auto [n, k] = as_rows(logits, "softmax_cross_entropy");
  require(static_cast<int>(labels.size()) == n,
          "softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
              std::to_string(n) + " rows");
  for (int lbl : labels)
    require(lbl >= 0 && lbl < k, "softmax_cross_entropy: label " + std::to_string(lbl) +
                                     " outside [0," + std::to_string(k) + ")");

  std::vector<double> probs(static_cast<size_t>(n) * k);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* row = logits.values.data() + static_cast<size_t>(i) * k;
    double* p = probs.data() + static_cast<size_t>(i) * k;
    double m = row[0];
    for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (int j = 0; j < k; ++j) {
      p[j] = std::exp(row[j] - m);
      z += p[j];
    }
    for (int j = 0; j < k; ++j) p[j] /= z;
    loss += (m + std::log(z)) - row[labels[static_cast<size_t>(i)]];
  }
  loss /= n;
  Tensor out = Tensor::scalar(loss);
  debug_check_finite(out, "softmax_cross_entropy");

  if (!Tape::tracked(logits)) return out;
  const int nl = logits.node;
  out.node = t.emit(out, {nl},
                    [nl, n = n, k = k, labels, probs = std::move(probs)](Tape& tp,
                                                                         const std::vector<double>& up) {
    std::vector<double> g(static_cast<size_t>(n) * k);
    const double s = up[0] / n;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < k; ++j) {
        const size_t idx = static_cast<size_t>(i) * k + j;
        g[idx] = s * (probs[idx] - (labels[static_cast<size_t>(i)] == j ? 1.0 : 0.0));
      }
    }
    tp.accumulate(nl, g);
  });
  out.requires_grad = true;
  return out;
}

Tensor smooth_l1(Tape& t, const Tensor& pred, const Tensor& tgt) {
  require(pred.shape == tgt.shape, "smooth_l1: shape mismatch " + shape_str(pred.shape) + " vs " +
                                       shape_str(tgt.shape));
  require(pred.numel() > 0, "smooth_l1: empty input");
  const size_t n = pred.values.size();
  std::vector<double> err(n);
  double loss = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double e = pred.values[i] - tgt.values[i];
    err[i] = e;
    loss += std::abs(e) < 1.0 ? 0.5 * e * e : std::abs(e) - 0.5;
  }
  loss /= static_cast<double>(n);
  Tensor out = Tensor::scalar(loss);

  if (!Tape::tracked(pred) && !Tape::tracked(tgt)) return out;
  const int np = pred.node, nt = tgt.node;
  out.node = t.emit(out, {np, nt}, [np, nt, err = std::move(err)](Tape& tp, const std::vector<double>& up) {
    const double s = up[0] / static_cast<double>(err.size());
    std::vector<double> g(err.size());
    for (size_t i = 0; i < err.size(); ++i) {
      const double e = err[i];
      g[i] = s * (std::abs(e) < 1.0 ? e : (e > 0.0 ? 1.0 : -1.0));
    }
    if (np >= 0) tp.accumulate(np, g);
    if (nt >= 0) {
      for (auto& v : g) v = -v;
      tp.accumulate(nt, g);
    }
  });
  out.requires_grad = true;
  return out;
}

// ---------------------------------------------------------------------------
// shape ops

Tensor concat(Tape& t, const std::vector<Tensor>& xs, int axis) {
  require(!xs.empty(), "concat: no inputs");
  const int rank = xs[0].rank();
  require(axis >= 0 && axis < rank, "concat: axis " + std::to_string(axis) + " out of range for rank " +
                                        std::to_string(rank));
  Shape out_shape = xs[0].shape;
  int axis_total = 0;
  for (const auto& x : xs) {
    require(x.rank() == rank, "concat: rank mismatch " + shape_str(x.shape) + " vs " +
                                  shape_str(xs[0].shape));
    for (int d = 0; d < rank; ++d) {
      if (d != axis)
        require(x.shape[d] == out_shape[d], "concat: incompatible shapes " + shape_str(x.shape) +
                                                " vs " + shape_str(xs[0].shape) + " on axis " +
                                                std::to_string(d));
    }
    axis_total += x.shape[axis];
  }
  out_shape[axis] = axis_total;

  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= out_shape[d];
  for (int d = axis + 1; d < rank; ++d) inner *= out_shape[d];

  Tensor out = Tensor::zeros(out_shape);
  std::vector<int> extents;
  extents.reserve(xs.size());
  for (const auto& x : xs) extents.push_back(x.shape[axis]);

  {
    int64_t offset = 0;
    for (size_t xi = 0; xi < xs.size(); ++xi) {
      const int64_t span = extents[xi] * inner;
      for (int64_t o = 0; o < outer; ++o) {
        const double* src = xs[xi].values.data() + o * span;
        double* dst = out.values.data() + o * axis_total * inner + offset;
        std::copy(src, src + span, dst);
      }
      offset += span;
    }
  }

  bool any = false;
  std::vector<int> nodes;
  nodes.reserve(xs.size());
  for (const auto& x : xs) {
    nodes.push_back(x.node);
    any = any || Tape::tracked(x);
  }
  if (!any) return out;

  out.node = t.emit(out, nodes,
                    [nodes, extents, outer, inner, axis_total](Tape& tp, const std::vector<double>& up) {
    int64_t offset = 0;
    for (size_t xi = 0; xi < nodes.size(); ++xi) {
      const int64_t span = extents[xi] * inner;
      if (nodes[xi] >= 0) {
        std::vector<double> g(static_cast<size_t>(outer * span));
        for (int64_t o = 0; o < outer; ++o) {
          const double* src = up.data() + o * axis_total * inner + offset;
          std::copy(src, src + span, g.data() + o * span);
        }
        tp.accumulate(nodes[xi], g);
      }
      offset += span;
    }
  });
  out.requires_grad = true;
  return out;
}

Tensor reshape(Tape& t, const Tensor& x, const Shape& new_shape) {
  require(shape_numel(new_shape) == x.numel(), "reshape: cannot view " + shape_str(x.shape) +
                                                   " as " + shape_str(new_shape));
  Tensor out = x;
  out.shape = new_shape;
  out.node = -1;
  out.requires_grad = false;
  if (!Tape::tracked(x)) return out;
  const int nx = x.node;
  out.node = t.emit(out, {nx}, [nx](Tape& tp, const std::vector<double>& up) {
    tp.accumulate(nx, up);
  });
  out.requires_grad = true;
  return out;
}

Tensor gather(Tape& t, const Tensor& x, const std::vector<int64_t>& idx) {
  Tensor out = Tensor::zeros({static_cast<int>(idx.size())});
  for (size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && idx[i] < x.numel(),
            "gather: index " + std::to_string(idx[i]) + " outside tensor of " +
                std::to_string(x.numel()) + " elements");
    out.values[i] = x.values[static_cast<size_t>(idx[i])];
  }
  if (!Tape::tracked(x)) return out;
  const int nx = x.node;
  const size_t in_size = x.values.size();
  out.node = t.emit(out, {nx}, [nx, in_size, idx](Tape& tp, const std::vector<double>& up) {
    std::vector<double> g(in_size, 0.0);
    for (size_t i = 0; i < idx.size(); ++i) g[static_cast<size_t>(idx[i])] += up[i];
    tp.accumulate(nx, g);
  });
  out.requires_grad = true;
  return out;
}

Tensor pixels_as_rows(Tape& t, const Tensor& x) {
  require(x.rank() == 3, "pixels_as_rows: input must be [C,H,W], got " + shape_str(x.shape));
  const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
  const int hw = h * w;
  Tensor out = Tensor::zeros({hw, c});
  for (int ch = 0; ch < c; ++ch)
    for (int p = 0; p < hw; ++p)
      out.values[static_cast<size_t>(p) * c + ch] = x.values[static_cast<size_t>(ch) * hw + p];
  if (!Tape::tracked(x)) return out;
  const int nx = x.node;
  out.node = t.emit(out, {nx}, [nx, c, hw](Tape& tp, const std::vector<double>& up) {
    std::vector<double> g(static_cast<size_t>(c) * hw);
    for (int ch = 0; ch < c; ++ch)
      for (int p = 0; p < hw; ++p)
        g[static_cast<size_t>(ch) * hw + p] = up[static_cast<size_t>(p) * c + ch];
    tp.accumulate(nx, g);
  });
  out.requires_grad = true;
  return out;
}

}  // namespace maf
