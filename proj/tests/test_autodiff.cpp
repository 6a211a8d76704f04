#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "maf/grad_check.hpp"
#include "maf/ops.hpp"
#include "maf/rng.hpp"
#include "maf/tape.hpp"

using namespace maf;

namespace {

Tensor vec(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return Tensor({n}, std::move(v));
}

Tensor rand_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(s);
  for (auto& v : t.values) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("elementwise arithmetic") {
  Tape t;
  Tensor a = vec({1, 2});
  Tensor b = vec({3, 4});
  CHECK(add(t, a, b).values == std::vector<double>{4, 6});
  CHECK(sub(t, b, a).values == std::vector<double>{2, 2});

  Tensor one = Tensor::scalar(1.0);
  Tensor x = vec({5, -2, 0.5});
  CHECK(mul(t, x, one).values == x.values);  // x*1 == x

  CHECK_THROWS_WITH_AS(add(t, vec({1, 2}), vec({1, 2, 3})),
                       doctest::Contains("[2]"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(add(t, vec({1, 2}), vec({1, 2, 3})),
                       doctest::Contains("[3]"), std::invalid_argument);
}

TEST_CASE("d(x*x)/dx at x=3 is 6") {
  Tape t;
  Tensor x = Tensor::scalar(3.0);
  Tensor xv = t.watch(x);
  Tensor y = mul(t, xv, xv);
  t.backward(y);
  CHECK(t.grad_of(x).values[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("affine identity and hand arithmetic") {
  Tape t;
  Tensor x({1, 2}, {1, 0});
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor zero({2}, {0, 0});
  CHECK(affine(t, x, eye, zero).values == std::vector<double>{1, 0});

  Tensor x2({1, 2}, {1, 1});
  Tensor w({2, 1}, {2, 3});
  Tensor b({1}, {1});
  CHECK(affine(t, x2, w, b).values == std::vector<double>{6});

  CHECK_THROWS_AS(affine(t, x, w, zero), std::invalid_argument);  // 2x1 bias 2
}

TEST_CASE("affine gradient vs finite differences") {
  Rng rng(7);
  auto f = [](Tape& t, std::vector<Tensor>& xs) { return mean(t, affine(t, xs[0], xs[1], xs[2])); };
  const double err = grad_check(f, {rand_tensor({3, 4}, rng), rand_tensor({4, 2}, rng),
                                    rand_tensor({2}, rng)});
  CHECK(err < 1e-6);
}

TEST_CASE("conv2d identity and hand values") {
  Tape t;
  // 1x1 kernel weight 1 bias 0 is the identity
  Tensor x = Tensor::zeros({1, 3, 3});
  for (size_t i = 0; i < x.values.size(); ++i) x.values[i] = static_cast<double>(i) * 0.5 - 2.0;
  Tensor k1({1, 1, 1, 1}, {1.0});
  Tensor b0({1}, {0.0});
  CHECK(conv2d(t, x, k1, b0).values == x.values);

  // all-ones 3x3 kernel on all-ones 3x3 input, pad 1: center sums 9
  Tensor ones = Tensor::full({1, 3, 3}, 1.0);
  Tensor k({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  Tensor out = conv2d(t, ones, k, b0, 1, 1);
  CHECK(out.at(0, 1, 1) == 9.0);
  CHECK(out.at(0, 0, 0) == 4.0);

  // non-integral output
  Tensor ones6 = Tensor::full({1, 6, 6}, 1.0);
  CHECK_THROWS_WITH_AS(conv2d(t, ones6, k, b0, 2, 0), doctest::Contains("non-integral"),
                       std::invalid_argument);
  // even kernel rejected
  Tensor keven({1, 1, 2, 2}, std::vector<double>(4, 1.0));
  CHECK_THROWS_AS(conv2d(t, ones, keven, b0), std::invalid_argument);
}

TEST_CASE("conv2d gradient vs finite differences") {
  Rng rng(11);
  auto f = [](Tape& t, std::vector<Tensor>& xs) {
    return mean(t, conv2d(t, xs[0], xs[1], xs[2], 1, 1));
  };
  const double err = grad_check(f, {rand_tensor({2, 5, 5}, rng), rand_tensor({3, 2, 3, 3}, rng),
                                    rand_tensor({3}, rng)});
  CHECK(err < 1e-6);
}

TEST_CASE("relu, sigmoid, maxpool definitions") {
  Tape t;
  CHECK(relu(t, vec({-1, 2})).values == std::vector<double>{0, 2});
  CHECK(sigmoid(t, vec({0})).values[0] == doctest::Approx(0.5).epsilon(1e-15));

  Tensor x({1, 2, 2}, {1, 2, 3, 4});
  Tensor xw = t.watch(x);
  Tensor pooled = maxpool2d(t, xw, 2, 2);
  CHECK(pooled.values == std::vector<double>{4});
  t.backward(sum(t, pooled));
  CHECK(t.grad_of(x).values == std::vector<double>{0, 0, 0, 1});

  Tensor odd = Tensor::zeros({1, 3, 3});
  CHECK_THROWS_AS(maxpool2d(t, odd, 2, 2), std::invalid_argument);
}

TEST_CASE("softmax cross entropy values") {
  Tape t;
  Tensor logits({1, 2}, {0, 0});
  CHECK(softmax_cross_entropy(t, logits, {0}).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // saturated logits stay finite via log-sum-exp
  Tensor big({1, 2}, {1000, 0});
  const double loss = softmax_cross_entropy(t, big, {0}).item();
  CHECK(std::isfinite(loss));
  CHECK(loss < 1e-9);

  CHECK_THROWS_AS(softmax_cross_entropy(t, logits, {2}), std::invalid_argument);
  CHECK_THROWS_AS(softmax_cross_entropy(t, logits, {-1}), std::invalid_argument);
}

TEST_CASE("softmax cross entropy gradient vs finite differences") {
  Rng rng(13);
  std::vector<int> labels = {2, 0, 1, 1};
  auto f = [labels](Tape& t, std::vector<Tensor>& xs) {
    return softmax_cross_entropy(t, xs[0], labels);
  };
  CHECK(grad_check(f, {rand_tensor({4, 3}, rng, -2.0, 2.0)}) < 1e-6);
}

TEST_CASE("smooth l1 branches") {
  Tape t;
  Tensor tgt({1, 1}, {0.0});
  CHECK(smooth_l1(t, Tensor({1, 1}, {0.5}), tgt).item() == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(smooth_l1(t, Tensor({1, 1}, {2.0}), tgt).item() == doctest::Approx(1.5).epsilon(1e-15));

  // pred == tgt: zero loss, zero gradient
  Tensor pred({2, 4}, std::vector<double>(8, 0.25));
  Tensor same = pred;
  Tensor pw = t.watch(pred);
  Tensor loss = smooth_l1(t, pw, same);
  CHECK(loss.item() == 0.0);
  t.backward(loss);
  for (double g : t.grad_of(pred).values) CHECK(g == 0.0);

  CHECK_THROWS_AS(smooth_l1(t, Tensor({1, 2}, {0, 0}), Tensor({2, 1}, {0, 0})),
                  std::invalid_argument);
}

TEST_CASE("concat semantics and backward split") {
  Tape t;
  CHECK(concat(t, {vec({1, 2}), vec({3})}, 0).values == std::vector<double>{1, 2, 3});

  Tensor single = vec({5, 6});
  CHECK(concat(t, {single}, 0).values == single.values);

  Tensor a = vec({1, 2});
  Tensor b = vec({3, 4, 5});
  Tensor aw = t.watch(a), bw = t.watch(b);
  Tensor c = concat(t, {aw, bw}, 0);
  Tensor w = vec({10, 20, 30, 40, 50});
  t.backward(sum(t, mul(t, c, w)));
  CHECK(t.grad_of(a).shape == Shape{2});
  CHECK(t.grad_of(b).shape == Shape{3});
  CHECK(t.grad_of(a).values == std::vector<double>{10, 20});
  CHECK(t.grad_of(b).values == std::vector<double>{30, 40, 50});

  CHECK_THROWS_AS(concat(t, {Tensor({1, 2}, {0, 0}), Tensor({2, 2}, {0, 0, 0, 0})}, 1),
                  std::invalid_argument);
}

TEST_CASE("backward basics") {
  Tape t;
  Tensor x = vec({1, 2, 3});
  Tensor xw = t.watch(x);
  Tensor loss = sum(t, xw);
  t.backward(loss);
  CHECK(t.grad_of(x).values == std::vector<double>{1, 1, 1});

  // unused parameter gets a zero gradient
  Tensor unused = vec({9, 9});
  t.watch(unused);
  CHECK(t.grad_of(unused).values == std::vector<double>{0, 0});

  // non-scalar loss rejected
  Tape t2;
  Tensor y = t2.watch(x);
  CHECK_THROWS_AS(t2.backward(y), std::invalid_argument);
}

TEST_CASE("backward determinism: identical tape gives bit-identical gradients") {
  auto run = [](std::vector<double>& gx, std::vector<double>& gw) {
    Rng rng(99);
    Tensor x = rand_tensor({4, 6}, rng);
    Tensor w = rand_tensor({6, 3}, rng);
    Tensor b = rand_tensor({3}, rng);
    Tape t;
    Tensor xw = t.watch(x), ww = t.watch(w), bw = t.watch(b);
    Tensor loss = softmax_cross_entropy(t, affine(t, relu(t, xw), ww, bw), {0, 1, 2, 0});
    t.backward(loss);
    gx = t.grad_of(x).values;
    gw = t.grad_of(w).values;
  };
  std::vector<double> gx1, gw1, gx2, gw2;
  run(gx1, gw1);
  run(gx2, gw2);
  CHECK(gx1 == gx2);
  CHECK(gw1 == gw2);
}

TEST_CASE("gradient of a sum of losses is the sum of gradients") {
  Rng rng(123);
  Tensor x = rand_tensor({3, 3}, rng);
  const double a = 0.7, b = 1.3;

  auto grads = [&](int which) {
    Tensor in = x;
    Tape t;
    Tensor xw = t.watch(in);
    Tensor l1 = mean(t, sigmoid(t, xw));
    Tensor l2 = smooth_l1(t, xw, Tensor::zeros(x.shape));
    Tensor loss = which == 0 ? l1 : which == 1 ? l2 : add(t, scale(t, l1, a), scale(t, l2, b));
    t.backward(loss);
    return t.grad_of(in).values;
  };
  auto g1 = grads(0), g2 = grads(1), gsum = grads(2);
  for (size_t i = 0; i < gsum.size(); ++i) {
    CHECK(gsum[i] == doctest::Approx(a * g1[i] + b * g2[i]).epsilon(1e-12));
  }
}

TEST_CASE("two-layer composite matches finite differences") {
  Rng rng(31);
  auto f = [](Tape& t, std::vector<Tensor>& xs) {
    Tensor h = relu(t, affine(t, xs[0], xs[1], xs[2]));
    Tensor o = affine(t, h, xs[3], xs[4]);
    return softmax_cross_entropy(t, o, {1, 0});
  };
  Tensor b1 = Tensor::zeros({4});
  for (size_t i = 0; i < b1.values.size(); ++i) b1.values[i] = 0.3 + 0.1 * static_cast<double>(i);
  const double err = grad_check(f, {rand_tensor({2, 5}, rng), rand_tensor({5, 4}, rng), b1,
                                    rand_tensor({4, 3}, rng), rand_tensor({3}, rng)});
  CHECK(err < 1e-5);
}

TEST_CASE("grad_check identity and relu away from zero") {
  auto ident = [](Tape& t, std::vector<Tensor>& xs) { return sum(t, xs[0]); };
  // power-of-two eps on small integers keeps the central difference exact
  CHECK(grad_check(ident, {vec({1, 2, 3})}, 0.5) == 0.0);

  Rng rng(5);
  Tensor x = Tensor::zeros({6});
  for (auto& v : x.values) {
    const double u = rng.uniform(0.3, 1.0);
    v = rng.uniform() < 0.5 ? -u : u;
  }
  auto f = [](Tape& t, std::vector<Tensor>& xs) { return sum(t, relu(t, xs[0])); };
  CHECK(grad_check(f, {x}) < 1e-6);
}

TEST_CASE("gather, reshape and pixels_as_rows") {
  Tape t;
  Tensor x({2, 3}, {0, 1, 2, 3, 4, 5});
  CHECK(gather(t, x, {0, 5, 2}).values == std::vector<double>{0, 5, 2});
  CHECK_THROWS_AS(gather(t, x, {6}), std::invalid_argument);
  CHECK(reshape(t, x, {3, 2}).values == x.values);
  CHECK_THROWS_AS(reshape(t, x, {4, 2}), std::invalid_argument);

  Tensor img({2, 1, 2}, {10, 11, 20, 21});  // two channels, 1x2 spatial
  Tensor rows = pixels_as_rows(t, img);
  CHECK(rows.shape == Shape{2, 2});
  CHECK(rows.values == std::vector<double>{10, 20, 11, 21});
}

TEST_CASE("registered primitive suite passes") {
  for (const auto& check : run_gradient_suite()) {
    INFO(check.name, " err=", check.max_rel_err);
    CHECK(check.max_rel_err < check.tolerance);
  }
}
