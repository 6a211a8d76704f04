#include "maf/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "maf/adversarial.hpp"
#include "maf/detector.hpp"
#include "maf/ops.hpp"
#include "maf/rng.hpp"

namespace maf {

double grad_check(const TensorFn& f, std::vector<Tensor> inputs, double eps,
                  int max_coords_per_input) {
  // analytic pass
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Tensor> xs;
    xs.reserve(inputs.size());
    for (auto& in : inputs) xs.push_back(tape.watch(in));
    Tensor loss = f(tape, xs);
    tape.backward(loss);
    for (auto& in : inputs) analytic.push_back(tape.grad_of(in));
  }

  auto eval = [&](const std::vector<Tensor>& pert) {
    Tape tape;
    std::vector<Tensor> copy = pert;
    std::vector<Tensor> xs;
    xs.reserve(copy.size());
    for (auto& in : copy) xs.push_back(tape.watch(in));
    return f(tape, xs).item();
  };

  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const int64_t n = inputs[i].numel();
    std::vector<int64_t> coords;
    if (max_coords_per_input <= 0 || n <= max_coords_per_input) {
      coords.resize(static_cast<size_t>(n));
      for (int64_t j = 0; j < n; ++j) coords[static_cast<size_t>(j)] = j;
    } else {
      // evenly spread deterministic subset
      for (int k = 0; k < max_coords_per_input; ++k) {
        coords.push_back((2 * static_cast<int64_t>(k) + 1) * n / (2 * max_coords_per_input));
      }
    }
    for (int64_t j : coords) {
      std::vector<Tensor> pert = inputs;
      const double saved = pert[i].values[static_cast<size_t>(j)];
      pert[i].values[static_cast<size_t>(j)] = saved + eps;
      const double fp = eval(pert);
      pert[i].values[static_cast<size_t>(j)] = saved - eps;
      const double fm = eval(pert);
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[i].values[static_cast<size_t>(j)];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

namespace {

Tensor random_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(s);
  for (auto& v : t.values) v = rng.uniform(lo, hi);
  return t;
}

// values bounded away from zero (for relu/maxpool kink avoidance)
Tensor random_tensor_away_from_zero(const Shape& s, Rng& rng, double margin = 0.2) {
  Tensor t = Tensor::zeros(s);
  for (auto& v : t.values) {
    const double u = rng.uniform(margin, 1.0);
    v = rng.uniform() < 0.5 ? -u : u;
  }
  return t;
}

}  // namespace

std::vector<OpCheck> run_gradient_suite() {
  std::vector<OpCheck> checks;
  Rng rng(20240901);

  auto scalarize = [](Tape& t, const Tensor& x) {
    // weighted sum so gradients are not uniform
    Tensor w = Tensor::zeros(x.shape);
    for (size_t i = 0; i < w.values.size(); ++i) w.values[i] = 0.1 * static_cast<double>(i % 7) + 0.3;
    return sum(t, mul(t, x, w));
  };

  // elementwise chain: add, sub, mul, scale
  {
    auto f = [&](Tape& t, std::vector<Tensor>& xs) {
      Tensor y = add(t, mul(t, xs[0], xs[1]), scale(t, sub(t, xs[0], xs[1]), 0.7));
      return scalarize(t, y);
    };
    checks.push_back({"add_sub_mul_scale",
                      grad_check(f, {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}), 1e-5});
  }

  // affine 3x4 * 4x2
  {
    auto f = [](Tape& t, std::vector<Tensor>& xs) {
      return mean(t, affine(t, xs[0], xs[1], xs[2]));
    };
    checks.push_back({"affine", grad_check(f, {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng),
                                               random_tensor({2}, rng)}),
                      1e-5});
  }

  // conv2d random 2x5x5 input, 3x2x3x3 kernel
  {
    auto f = [](Tape& t, std::vector<Tensor>& xs) {
      return mean(t, conv2d(t, xs[0], xs[1], xs[2], 1, 1));
    };
    checks.push_back({"conv2d",
                      grad_check(f, {random_tensor({2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng),
                                     random_tensor({3}, rng)}),
                      1e-5});
  }

  // relu / sigmoid
  {
    auto f = [&](Tape& t, std::vector<Tensor>& xs) { return scalarize(t, relu(t, xs[0])); };
    checks.push_back({"relu", grad_check(f, {random_tensor_away_from_zero({4, 5}, rng)}), 1e-5});
  }
  {
    auto f = [&](Tape& t, std::vector<Tensor>& xs) { return scalarize(t, sigmoid(t, xs[0])); };
    checks.push_back({"sigmoid", grad_check(f, {random_tensor({4, 5}, rng, -3.0, 3.0)}), 1e-5});
  }

  // maxpool on well-separated values
  {
    Tensor x = Tensor::zeros({2, 4, 4});
    for (size_t i = 0; i < x.values.size(); ++i) {
      x.values[i] = static_cast<double>((i * 13) % 32) + 0.01 * static_cast<double>(i);
    }
    auto f = [&](Tape& t, std::vector<Tensor>& xs) { return scalarize(t, maxpool2d(t, xs[0], 2, 2)); };
    checks.push_back({"maxpool2d", grad_check(f, {x}), 1e-5});
  }

  // softmax + softmax cross entropy (random 4x3 logits)
  {
    auto f = [&](Tape& t, std::vector<Tensor>& xs) { return scalarize(t, softmax(t, xs[0])); };
    checks.push_back({"softmax", grad_check(f, {random_tensor({4, 3}, rng, -2.0, 2.0)}), 1e-5});
  }
  {
    std::vector<int> labels = {0, 2, 1, 0};
    auto f = [labels](Tape& t, std::vector<Tensor>& xs) {
      return softmax_cross_entropy(t, xs[0], labels);
    };
    checks.push_back({"softmax_cross_entropy", grad_check(f, {random_tensor({4, 3}, rng, -2.0, 2.0)}),
                      1e-5});
  }

  // smooth_l1 covering both branches (|e| below and above 1)
  {
    Tensor pred = random_tensor({3, 4}, rng, -2.0, 2.0);
    Tensor tgt = Tensor::zeros({3, 4});
    auto f = [](Tape& t, std::vector<Tensor>& xs) { return smooth_l1(t, xs[0], xs[1]); };
    checks.push_back({"smooth_l1", grad_check(f, {pred, tgt}), 1e-5});
  }

  // concat + reshape + gather + pixels_as_rows
  {
    auto f = [&](Tape& t, std::vector<Tensor>& xs) {
      Tensor c = concat(t, {xs[0], xs[1]}, 0);
      Tensor r = reshape(t, c, {2, 6});
      Tensor g = gather(t, r, {0, 3, 5, 7, 11});
      return scalarize(t, g);
    };
    checks.push_back({"concat_reshape_gather",
                      grad_check(f, {random_tensor({4}, rng), random_tensor({8}, rng)}), 1e-5});
  }
  {
    auto f = [&](Tape& t, std::vector<Tensor>& xs) { return scalarize(t, pixels_as_rows(t, xs[0])); };
    checks.push_back({"pixels_as_rows", grad_check(f, {random_tensor({3, 2, 4}, rng)}), 1e-8});
  }

  // ROI pooling (distinct values avoid argmax ties)
  {
    Tensor feat = Tensor::zeros({3, 6, 6});
    for (size_t i = 0; i < feat.values.size(); ++i) {
      feat.values[i] = std::sin(0.7 * static_cast<double>(i)) * 3.0;
    }
    BBox box{6.0, 10.0, 80.0, 70.0};
    auto f = [box](Tape& t, std::vector<Tensor>& xs) {
      Tensor pooled = roi_pool(t, xs[0], box, 16, 3);
      return mean(t, pooled);
    };
    checks.push_back({"roi_pool", grad_check(f, {feat}), 1e-5});
  }

  // SRM rearrangement is linear: tight tolerance
  {
    auto f = [&](Tape& t, std::vector<Tensor>& xs) { return scalarize(t, srm_rearrange(t, xs[0], 2)); };
    checks.push_back({"srm_rearrange", grad_check(f, {random_tensor({2, 4, 4}, rng)}), 1e-8});
  }

  // full SRM (1x1 conv + rearrange)
  {
    Tensor x = random_tensor({3, 4, 4}, rng);
    Tensor w = random_tensor({2, 3, 1, 1}, rng);
    Tensor b = random_tensor({2}, rng);
    auto f = [&](Tape& t, std::vector<Tensor>& xs) {
      SrmSpec spec{2, 2};
      Tensor y = srm_forward(t, xs[0], spec, xs[1], xs[2]);
      return scalarize(t, y);
    };
    // srm_forward watches its parameter arguments itself; grad_check watches
    // them too, which resolves to the same tape nodes
    checks.push_back({"srm_forward", grad_check(f, {x, w, b}), 1e-5});
  }

  // single GRL: analytic must equal -lambda * finite difference
  {
    const double lambda = 0.8;
    Tensor x = random_tensor({6}, rng);
    Tensor probe = Tensor::zeros({6});
    for (size_t i = 0; i < probe.values.size(); ++i) probe.values[i] = 0.2 + 0.1 * static_cast<double>(i);
    auto forward = [&](Tape& t, std::vector<Tensor>& xs) {
      return sum(t, mul(t, sigmoid(t, grl(t, xs[0], lambda)), probe));
    };
    // FD of the forward ignores the reversal, so compare against the
    // sign-flipped scaled analytic gradient
    Tape tape;
    std::vector<Tensor> inputs = {x};
    std::vector<Tensor> xs = {tape.watch(inputs[0])};
    Tensor loss = forward(tape, xs);
    tape.backward(loss);
    Tensor analytic = tape.grad_of(inputs[0]);
    double worst = 0.0;
    const double eps = 1e-6;
    for (size_t j = 0; j < inputs[0].values.size(); ++j) {
      auto eval = [&](double v) {
        std::vector<Tensor> pert = inputs;
        pert[0].values[j] = v;
        Tape t2;
        std::vector<Tensor> x2 = {t2.watch(pert[0])};
        return forward(t2, x2).item();
      };
      const double saved = inputs[0].values[j];
      const double fd = (eval(saved + eps) - eval(saved - eps)) / (2.0 * eps);
      const double expect = -lambda * fd;
      const double a = analytic.values[j];
      worst = std::max(worst, std::abs(a - expect) / std::max({std::abs(a), std::abs(expect), 1e-8}));
    }
    checks.push_back({"grl_reversal_vs_fd", worst, 1e-5});
  }

  // reversal pairs cancel, so the composite passes a plain FD check:
  // grl(grl(x)) and grl(wgrl(x, weights forced to 1))
  {
    auto f = [](Tape& t, std::vector<Tensor>& xs) {
      Tensor y = grl(t, grl(t, xs[0], 1.0), 1.0);
      return mean(t, sigmoid(t, y));
    };
    checks.push_back({"grl_pair_composite", grad_check(f, {random_tensor({5}, rng)}), 1e-5});
  }
  {
    auto f = [](Tape& t, std::vector<Tensor>& xs) {
      std::vector<double> p(static_cast<size_t>(xs[0].shape[0]), 1.0);
      Tensor y = grl(t, wgrl(t, xs[0], 1.0, p, 1), 1.0);
      return mean(t, sigmoid(t, y));
    };
    checks.push_back({"wgrl_grl_pair_composite", grad_check(f, {random_tensor({4, 3}, rng)}), 1e-5});
  }

  // two-layer composite end to end
  {
    auto f = [](Tape& t, std::vector<Tensor>& xs) {
      Tensor h = relu(t, affine(t, xs[0], xs[1], xs[2]));
      Tensor o = affine(t, h, xs[3], xs[4]);
      return softmax_cross_entropy(t, o, {1, 0, 2});
    };
    checks.push_back({"two_layer_net",
                      grad_check(f, {random_tensor({3, 5}, rng), random_tensor({5, 4}, rng),
                                     random_tensor_away_from_zero({4}, rng, 0.3),
                                     random_tensor({4, 3}, rng), random_tensor({3}, rng)}),
                      1e-5});
  }

  return checks;
}

}  // namespace maf
