#include <cmath>

#include <doctest.h>

#include "bayatt/autodiff.hpp"
#include "bayatt/error.hpp"
#include "bayatt/finite_diff.hpp"
#include "bayatt/rng.hpp"
#include "test_helpers.hpp"

using namespace bayatt;
using test_helpers::random_tensor;
using test_helpers::random_tensor_away_from_zero;

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor::from_data({2}, {1.0, std::nan("")}), Error);
  CHECK_THROWS_AS(Tensor::from_data({2}, {1.0}), Error);
  const Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.at(4) == 5.0);
  const Tensor r = t.reshaped({3, 2});
  CHECK(r.shape() == Tensor::Shape{3, 2});
  CHECK(bitwise_equal(r.reshaped({2, 3}), t));
}

TEST_CASE("backward: x*x at 3 gives 6") {
  Tape tape;
  Value x = tape.leaf(Tensor::scalar(3.0));
  Value y = tape.mul(x, x);
  auto grads = tape.backward(y);
  CHECK(grads.at(x.id).scalar_value() == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("backward: x*y at (2,5) gives (5,2)") {
  Tape tape;
  Value x = tape.leaf(Tensor::scalar(2.0));
  Value y = tape.leaf(Tensor::scalar(5.0));
  Value z = tape.mul(x, y);
  auto grads = tape.backward(z);
  CHECK(grads.at(x.id).scalar_value() == 5.0);
  CHECK(grads.at(y.id).scalar_value() == 2.0);
}

TEST_CASE("backward: softmax-CE at logits (1,0) matches finite differences") {
  const Tensor logits = Tensor::from_data({1, 2}, {1.0, 0.0});
  auto f = [](const Tensor& l) {
    Tape tape;
    Value v = tape.leaf(l);
    return tape.softmax_cross_entropy(v, {0}).scalar();
  };
  Tape tape;
  Value v = tape.leaf(logits);
  Value loss = tape.softmax_cross_entropy(v, {0});
  auto grads = tape.backward(loss);
  const Tensor fd = finite_diff_gradient(f, logits, 1e-6);
  CHECK(relative_l2_error(grads.at(v.id), fd) < 1e-6);
}

TEST_CASE("backward requires a scalar loss") {
  Tape tape;
  Value x = tape.leaf(Tensor::from_data({2}, {1.0, 2.0}));
  Value y = tape.add(x, x);
  CHECK_THROWS_AS(tape.backward(y), Error);
}

TEST_CASE("unreachable leaves get zero gradients") {
  Tape tape;
  Value x = tape.leaf(Tensor::scalar(1.0));
  Value unused = tape.leaf(Tensor::from_data({3}, {1, 2, 3}));
  Value y = tape.mul(x, x);
  auto grads = tape.backward(y);
  CHECK(grads.count(unused.id) == 1);
  for (double g : grads.at(unused.id).data()) CHECK(g == 0.0);
}

TEST_CASE("finite_diff_gradient basics") {
  auto square = [](const Tensor& t) { return t.scalar_value() * t.scalar_value(); };
  const Tensor g1 = finite_diff_gradient(square, Tensor::scalar(3.0), 1e-5);
  CHECK(g1.scalar_value() == doctest::Approx(6.0).epsilon(1e-8));

  auto sine = [](const Tensor& t) { return std::sin(t.scalar_value()); };
  const Tensor g2 = finite_diff_gradient(sine, Tensor::scalar(0.0), 1e-5);
  CHECK(g2.scalar_value() == doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS_AS(finite_diff_gradient(square, Tensor::scalar(1.0), 0.0), Error);
  auto bad = [](const Tensor&) { return std::numeric_limits<double>::infinity(); };
  CHECK_THROWS_AS(finite_diff_gradient(bad, Tensor::scalar(1.0), 1e-5), Error);
}

namespace {

/// Composite graph touching most primitives; scalar output.
double composite_loss(Tape& tape, Value a, Value b, Value row) {
  Value mm = tape.matmul(a, b);            // [3,4]x[4,2]
  Value biased = tape.add_rowvec(mm, row); // + [2]
  Value g = tape.gelu(biased);
  Value r = tape.relu(tape.scale(biased, 0.5));
  Value mixed = tape.add(tape.mul(g, g), r);
  return tape.mean_all(mixed).scalar();
}

}  // namespace

TEST_CASE("backward matches finite differences on every primitive") {
  RngStream stream(123, "gradcheck");
  for (int trial = 0; trial < 10; ++trial) {
    // Inputs bounded away from zero so the difference window never crosses
    // the relu kink.
    const Tensor a0 = random_tensor_away_from_zero(stream, {3, 4}, -2.0, 2.0, 1e-3);
    const Tensor b0 = random_tensor_away_from_zero(stream, {4, 2}, -2.0, 2.0, 1e-3);
    const Tensor r0 = random_tensor(stream, {2}, -0.5, 0.5);

    Tape tape;
    Value a = tape.leaf(a0);
    Value b = tape.leaf(b0);
    Value row = tape.leaf(r0);
    Value mm = tape.matmul(a, b);
    Value biased = tape.add_rowvec(mm, row);
    Value g = tape.gelu(biased);
    Value rl = tape.relu(tape.scale(biased, 0.5));
    Value mixed = tape.add(tape.mul(g, g), rl);
    Value loss = tape.mean_all(mixed);
    auto grads = tape.backward(loss);

    auto check_input = [&](const Tensor& base, int which) {
      auto eval = [&](const Tensor& t) {
        Tape tp;
        Value aa = tp.leaf(which == 0 ? t : a0);
        Value bb = tp.leaf(which == 1 ? t : b0);
        Value rr = tp.leaf(which == 2 ? t : r0);
        return composite_loss(tp, aa, bb, rr);
      };
      const Tensor fd = finite_diff_gradient(eval, base, 1e-5);
      const Tensor& ad = grads.at(which == 0 ? a.id : which == 1 ? b.id : row.id);
      CHECK(relative_l2_error(ad, fd) < 1e-5);
    };
    check_input(a0, 0);
    check_input(b0, 1);
    check_input(r0, 2);
  }
}

TEST_CASE("conv2d gradient matches finite differences") {
  RngStream stream(7, "convcheck");
  const Tensor x0 = random_tensor(stream, {2, 1, 6, 6}, -1.0, 1.0);
  const Tensor w0 = random_tensor(stream, {2, 1, 3, 3}, -1.0, 1.0);
  const Tensor b0 = random_tensor(stream, {2}, -0.5, 0.5);

  auto eval = [&](const Tensor& x, const Tensor& w, const Tensor& b) {
    Tape tp;
    Value vx = tp.leaf(x), vw = tp.leaf(w), vb = tp.leaf(b);
    Value c = tp.conv2d(vx, vw, vb, 2);
    return tp.mean_all(tp.mul(c, c)).scalar();
  };

  Tape tape;
  Value vx = tape.leaf(x0), vw = tape.leaf(w0), vb = tape.leaf(b0);
  Value c = tape.conv2d(vx, vw, vb, 2);
  Value loss = tape.mean_all(tape.mul(c, c));
  auto grads = tape.backward(loss);

  const Tensor fdx = finite_diff_gradient([&](const Tensor& t) { return eval(t, w0, b0); }, x0, 1e-5);
  const Tensor fdw = finite_diff_gradient([&](const Tensor& t) { return eval(x0, t, b0); }, w0, 1e-5);
  const Tensor fdb = finite_diff_gradient([&](const Tensor& t) { return eval(x0, w0, t); }, b0, 1e-5);
  CHECK(relative_l2_error(grads.at(vx.id), fdx) < 1e-5);
  CHECK(relative_l2_error(grads.at(vw.id), fdw) < 1e-5);
  CHECK(relative_l2_error(grads.at(vb.id), fdb) < 1e-5);
}

TEST_CASE("backward is linear in the loss") {
  RngStream stream(99, "linearity");
  const Tensor x0 = random_tensor(stream, {4}, -2.0, 2.0);
  const double a = 1.7, b = -0.6;

  auto grad_of = [&](double ca, double cb) {
    Tape tape;
    Value x = tape.leaf(x0);
    Value f = tape.sum_all(tape.mul(x, x));            // sum x^2
    Value g = tape.sum_all(tape.gelu(x));              // sum gelu(x)
    Value combo = tape.add(tape.scale(f, ca), tape.scale(g, cb));
    return tape.backward(combo).at(x.id);
  };

  const Tensor gf = grad_of(1.0, 0.0);
  const Tensor gg = grad_of(0.0, 1.0);
  const Tensor gc = grad_of(a, b);
  auto df = gf.data(), dg = gg.data(), dc = gc.data();
  for (std::size_t i = 0; i < dc.size(); ++i)
    CHECK(std::abs(dc[i] - (a * df[i] + b * dg[i])) < 1e-12);
}

TEST_CASE("cross-entropy values") {
  // Uniform logits over k classes -> ln k.
  for (std::size_t k : {2, 3, 10}) {
    Tape tape;
    Value l = tape.leaf(Tensor::zeros({1, k}));
    CHECK(tape.softmax_cross_entropy(l, {0}).scalar() ==
          doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-12));
  }

  // Loss strictly decreases as the true-class logit grows.
  double prev = 1e9;
  for (double margin : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    Tape tape;
    Value l = tape.leaf(Tensor::from_data({1, 3}, {margin, 0.0, 0.0}));
    const double loss = tape.softmax_cross_entropy(l, {0}).scalar();
    CHECK(loss < prev);
    prev = loss;
  }

  // logits (2,1,0), y=0: direct softmax computation.
  Tape tape;
  Value l = tape.leaf(Tensor::from_data({1, 3}, {2.0, 1.0, 0.0}));
  const double expected =
      -std::log(std::exp(2.0) / (std::exp(2.0) + std::exp(1.0) + std::exp(0.0)));
  CHECK(tape.softmax_cross_entropy(l, {0}).scalar() == doctest::Approx(expected).epsilon(1e-12));

  // Out-of-range label is a contract violation.
  Tape t2;
  Value l2 = t2.leaf(Tensor::zeros({1, 3}));
  CHECK_THROWS_AS(t2.softmax_cross_entropy(l2, {3}), Error);
}
