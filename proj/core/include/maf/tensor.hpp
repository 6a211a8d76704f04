#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace maf {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);

// Dense row-major tensor of 64-bit floats. `node` is the handle of the tape
// node that produced it (-1 when the tensor is a plain constant).
struct Tensor {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  int node = -1;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> v);

  static Tensor zeros(const Shape& s);
  static Tensor full(const Shape& s, double v);
  static Tensor scalar(double v);  // rank-0

  int64_t numel() const { return static_cast<int64_t>(values.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  bool is_scalar() const { return values.size() == 1; }
  int dim(int i) const { return shape.at(static_cast<size_t>(i)); }

  double item() const;

  // row-major index helpers for rank 2/3 tensors
  double& at(int i, int j);
  double at(int i, int j) const;
  double& at(int c, int y, int x);
  double at(int c, int y, int x) const;
};

int64_t shape_numel(const Shape& s);

// forward results must stay finite when inputs are finite; scans in debug
// builds only
void debug_check_finite(const Tensor& t, const char* op);

}  // namespace maf
