#pragma once

#include <functional>
#include <string>
#include <vector>

#include "maf/tape.hpp"
#include "maf/tensor.hpp"

namespace maf {

// f builds a scalar loss on the given tape from the (pre-watched) inputs.
// It must be deterministic and close over nothing differentiable besides
// the inputs handed to it.
using TensorFn = std::function<Tensor(Tape&, std::vector<Tensor>&)>;

// Central finite differences against the tape's analytic gradient.
// Relative error per element uses max(|analytic|, |numeric|, 1e-8).
// When max_coords_per_input > 0, only a deterministic evenly-spread subset of
// each input's coordinates is perturbed (for large composites).
double grad_check(const TensorFn& f, std::vector<Tensor> inputs, double eps = 1e-6,
                  int max_coords_per_input = -1);

struct OpCheck {
  std::string name;
  double max_rel_err;
  double tolerance;
  bool passed() const { return max_rel_err < tolerance; }
};

// finite-difference suite over every registered primitive and the composite
// paths (backbone-style stacks, ROI pool, SRM, reversal layers)
std::vector<OpCheck> run_gradient_suite();

}  // namespace maf
