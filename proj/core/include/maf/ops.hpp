#pragma once

#include <cstdint>
#include <vector>

#include "maf/tape.hpp"
#include "maf/tensor.hpp"

namespace maf {

// caps the BLAS backend at one thread; training determinism and the
// single-core wall-clock contract both depend on it
void pin_blas_single_thread();

// Elementwise arithmetic. Shapes must match exactly, except that either side
// may be a one-element tensor, which broadcasts against the other.
Tensor add(Tape& t, const Tensor& a, const Tensor& b);
Tensor sub(Tape& t, const Tensor& a, const Tensor& b);
Tensor mul(Tape& t, const Tensor& a, const Tensor& b);
Tensor scale(Tape& t, const Tensor& a, double s);

Tensor sum(Tape& t, const Tensor& x);
Tensor mean(Tape& t, const Tensor& x);

// x[N,I] * W[I,O] + b[O]
Tensor affine(Tape& t, const Tensor& x, const Tensor& w, const Tensor& b);

// cross-correlation (no kernel flip): x[Ci,H,W], k[Co,Ci,kh,kw], b[Co]
Tensor conv2d(Tape& t, const Tensor& x, const Tensor& k, const Tensor& b,
              int stride = 1, int pad = 0);

Tensor relu(Tape& t, const Tensor& x);
Tensor sigmoid(Tape& t, const Tensor& x);

// non-overlapping by default; gradient routes to the first-encountered
// maximum of each window
Tensor maxpool2d(Tape& t, const Tensor& x, int window = 2, int stride = 2);

// softmax over the last axis of a rank-1 or rank-2 tensor
Tensor softmax(Tape& t, const Tensor& x);

// mean over rows of -log softmax(logits)[label]; log-sum-exp stabilized
Tensor softmax_cross_entropy(Tape& t, const Tensor& logits, const std::vector<int>& labels);

// mean over elements of 0.5 e^2 (|e|<1) else |e|-0.5, e = pred-tgt
Tensor smooth_l1(Tape& t, const Tensor& pred, const Tensor& tgt);

Tensor concat(Tape& t, const std::vector<Tensor>& xs, int axis);

Tensor reshape(Tape& t, const Tensor& x, const Shape& new_shape);

// out[i] = x.values[idx[i]]; backward scatter-adds
Tensor gather(Tape& t, const Tensor& x, const std::vector<int64_t>& idx);

// [C,H,W] -> [H*W, C]: one row of channel values per pixel
Tensor pixels_as_rows(Tape& t, const Tensor& x);

}  // namespace maf
