#pragma once

#include <memory>
#include <vector>

#include "maf/tape.hpp"
#include "maf/tensor.hpp"

namespace maf {

// gradient reversal configuration: plain GRL or the per-proposal weighted form
struct ReversalSpec {
  enum class Mode { Plain, Weighted };
  double lambda = 1.0;
  Mode mode = Mode::Plain;
};

// scale reduction: 1x1 conv to out_channels, then s x s space-to-depth
struct SrmSpec {
  int s = 2;
  int out_channels = 32;
};

// identity forward; backward multiplies the upstream gradient by -lambda
Tensor grl(Tape& t, const Tensor& x, double lambda);

// Per-row weights for the weighted reversal. The proposal classifier's own
// forward output supplies the weights, which only exist after the layers
// downstream of the reversal have run, so the weight vector is filled in
// late and read at backward time.
struct WgrlWeights {
  std::vector<double> w;
  bool ready = false;
};

Tensor wgrl_deferred(Tape& t, const Tensor& x, double lambda, std::shared_ptr<WgrlWeights> weights);

// identity forward; backward per row k: -lambda * (d*p[k] + (1-d)*(1-p[k])) * G.
// p is treated as a constant (no gradient into the weight).
Tensor wgrl(Tape& t, const Tensor& x, double lambda, const std::vector<double>& p, int d);

// space-to-depth index permutation:
//   out[c][u][v] = in[c / s^2][u*s + (c % s^2) % s][v*s + (c % s^2) / s]
// [C,H,W] -> [C*s^2, H/s, W/s]; backward applies the inverse permutation
Tensor srm_rearrange(Tape& t, const Tensor& x, int s);

// 1x1 conv (channel reduction) followed by srm_rearrange; the conv parameters
// sit after the reversal boundary, i.e. they belong to the classifier side
Tensor srm_forward(Tape& t, const Tensor& x, const SrmSpec& spec, Tensor& conv_w, Tensor& conv_b);

}  // namespace maf
