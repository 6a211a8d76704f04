#include "maf/tensor.hpp"

#include <cmath>
#include <sstream>

namespace maf {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
    throw std::invalid_argument("tensor shape " + shape_str(shape) + " does not match " +
                                std::to_string(values.size()) + " values");
  }
}

Tensor Tensor::zeros(const Shape& s) {
  Tensor t;
  t.shape = s;
  t.values.assign(static_cast<size_t>(shape_numel(s)), 0.0);
  return t;
}

Tensor Tensor::full(const Shape& s, double v) {
  Tensor t = zeros(s);
  for (auto& x : t.values) x = v;
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.values = {v};
  return t;
}

double Tensor::item() const {
  if (values.size() != 1) {
    throw std::invalid_argument("item() requires a scalar tensor, got shape " + shape_str(shape));
  }
  return values[0];
}

double& Tensor::at(int i, int j) {
  return values[static_cast<size_t>(i) * shape[1] + j];
}
double Tensor::at(int i, int j) const {
  return values[static_cast<size_t>(i) * shape[1] + j];
}
double& Tensor::at(int c, int y, int x) {
  return values[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
}
double Tensor::at(int c, int y, int x) const {
  return values[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
}

void debug_check_finite(const Tensor& t, const char* op) {
#ifndef NDEBUG
  for (double v : t.values) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string("non-finite value produced by ") + op);
    }
  }
#else
  (void)t;
  (void)op;
#endif
}

}  // namespace maf
