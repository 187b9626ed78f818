// Copyright 2026 The msgcn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "msgcn/rng.hpp"
#include "msgcn/tensor.hpp"
#include "testutil.hpp"

using msgcn::Dims;
using msgcn::Tape;
using msgcn::Tensor;

TEST_CASE("matmul identity and selector") {
  Tape tape;
  Tensor eye = Tensor::identity(2);
  Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor r = tape.matmul(eye, m);
  CHECK(r.data() == std::vector<double>{1, 2, 3, 4});

  Tensor sel = Tensor::from({2, 2}, {1, 0, 0, 0});
  Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
  Tensor r2 = tape.matmul(sel, b);
  CHECK(r2.data() == std::vector<double>{5, 6, 0, 0});
}

TEST_CASE("matmul finite-difference gradient") {
  msgcn::Rng rng(11);
  Tensor b = testutil::rand_tensor(rng, {4, 2});
  Tensor a0 = testutil::rand_tensor(rng, {3, 4});
  const double err_a = msgcn::finite_diff_check(
      [&](Tape& t, const Tensor& a) { return t.matmul(a, b); }, a0);
  CHECK(err_a < 1e-6);
  Tensor a1 = testutil::rand_tensor(rng, {3, 4});
  const double err_b = msgcn::finite_diff_check(
      [&](Tape& t, const Tensor& bb) { return t.matmul(a1, bb); },
      testutil::rand_tensor(rng, {4, 2}));
  CHECK(err_b < 1e-6);
}

TEST_CASE("matmul dimension mismatch reports both dim lists") {
  Tape tape;
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  try {
    tape.matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const msgcn::ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("softmax uniform, masked survivor, closed form") {
  Tape tape;
  Tensor s = tape.softmax_masked(Tensor::from({3}, {0, 0, 0}));
  for (double v : s.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  Tensor masked = tape.softmax_masked(Tensor::from({2}, {5, 5}), Tensor::from({2}, {1, 0}));
  CHECK(masked.at(0) == 1.0);
  CHECK(masked.at(1) == 0.0);

  Tensor x = Tensor::from({3}, {1, 2, 3});
  Tensor y = tape.softmax_masked(x);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(std::fabs(y.at(i) - std::exp(1.0 + double(i)) / z) < 1e-12);
}

TEST_CASE("softmax rows sum to one and masked entries are exactly zero") {
  msgcn::Rng rng(5);
  Tape tape;
  Tensor scores = testutil::rand_tensor(rng, {4, 6, 6}, -30.0, 30.0);
  Tensor mask = Tensor::zeros({6, 6});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      mask.mutable_data()[i * 6 + j] = (i == j || rng.uniform() < 0.5) ? 1.0 : 0.0;
  Tensor a = tape.softmax_masked(scores, mask);
  for (std::size_t f = 0; f < 4; ++f)
    for (std::size_t i = 0; i < 6; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < 6; ++j) {
        if (mask.at(i, j) == 0.0) CHECK(a.at(f, i, j) == 0.0);
        row += a.at(f, i, j);
      }
      CHECK(std::fabs(row - 1.0) <= 1e-9);
    }
}

TEST_CASE("softmax fully masked row names the row") {
  Tape tape;
  Tensor scores = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor mask = Tensor::from({2, 2}, {1, 0, 0, 0});
  try {
    tape.softmax_masked(scores, mask);
    FAIL("expected NumericError");
  } catch (const msgcn::NumericError& e) {
    CHECK(std::string(e.what()).find("row 1") != std::string::npos);
  }
}

TEST_CASE("softmax gradient") {
  msgcn::Rng rng(6);
  Tensor mask = Tensor::from({3, 3}, {1, 1, 0, 0, 1, 1, 1, 1, 1});
  // Weight the probabilities; the plain sum of a softmax row is constant 1,
  // which has no gradient to check.
  Tensor w = testutil::rand_tensor(rng, {3, 3});
  const double err = msgcn::finite_diff_check(
      [&](Tape& t, const Tensor& x) { return t.mul(t.softmax_masked(x, mask), w); },
      testutil::rand_tensor(rng, {3, 3}));
  CHECK(err < 1e-6);
}

TEST_CASE("conv2d identity kernel") {
  msgcn::Rng rng(7);
  Tape tape;
  Tensor in = testutil::rand_tensor(rng, {1, 3, 5});
  Tensor k = Tensor::from({1, 1, 1, 1}, {1.0});
  Tensor out = tape.conv2d_same(in, k);
  CHECK(out.data() == in.data());
}

TEST_CASE("conv2d hand oracle: ones 1x3 kernel on constant input") {
  Tape tape;
  Tensor in = Tensor::full({1, 3, 3}, 1.0);
  Tensor k = Tensor::from({1, 1, 1, 3}, {1, 1, 1});
  Tensor out = tape.conv2d_same(in, k);
  // Row-wise: edges see two ones, interior sees three.
  for (std::size_t y = 0; y < 3; ++y) {
    CHECK(out.at(0, y, 0) == 2.0);
    CHECK(out.at(0, y, 1) == 3.0);
    CHECK(out.at(0, y, 2) == 2.0);
  }
}

TEST_CASE("conv2d gradients vs finite differences") {
  msgcn::Rng rng(8);
  Tensor kernel = testutil::rand_tensor(rng, {3, 2, 3, 1});
  Tensor input = testutil::rand_tensor(rng, {2, 4, 4});
  const double err_in = msgcn::finite_diff_check(
      [&](Tape& t, const Tensor& x) { return t.conv2d_same(x, kernel); }, input);
  CHECK(err_in < 1e-6);
  const double err_k = msgcn::finite_diff_check(
      [&](Tape& t, const Tensor& kk) { return t.conv2d_same(input, kk); }, kernel);
  CHECK(err_k < 1e-6);
}

TEST_CASE("conv2d rejects even kernel extents") {
  Tape tape;
  Tensor in = Tensor::zeros({1, 4, 4});
  CHECK_THROWS_AS(tape.conv2d_same(in, Tensor::zeros({1, 1, 2, 1})), msgcn::ShapeError);
  CHECK_THROWS_AS(tape.conv2d_same(in, Tensor::zeros({1, 1, 1, 4})), msgcn::ShapeError);
}

TEST_CASE("pointwise closed-form values") {
  Tape tape;
  CHECK(tape.sigmoid(Tensor::scalar(0.0)).value() == 0.5);
  CHECK(tape.tanh(Tensor::scalar(0.0)).value() == 0.0);
  // ln(9) = 2.1972...: sigmoid maps it to 0.9.
  CHECK(tape.sigmoid(Tensor::scalar(2.1972)).value() == doctest::Approx(0.9).epsilon(1e-4));
}

TEST_CASE("pointwise shape mismatch") {
  Tape tape;
  CHECK_THROWS_AS(tape.add(Tensor::zeros({2, 2}), Tensor::zeros({2, 3})), msgcn::ShapeError);
  CHECK_THROWS_AS(tape.mul(Tensor::zeros({4}), Tensor::zeros({2, 2})), msgcn::ShapeError);
}

TEST_CASE("scalar broadcast on binaries") {
  Tape tape;
  Tensor x = Tensor::from({3}, {1, 2, 3});
  Tensor r = tape.mul(x, Tensor::scalar(2.0));
  CHECK(r.data() == std::vector<double>{2, 4, 6});
  Tensor r2 = tape.sub(Tensor::scalar(1.0), x);
  CHECK(r2.data() == std::vector<double>{0, -1, -2});
}

TEST_CASE("backward: sum gives all-ones, quadratic gives 2x") {
  {
    Tape tape;
    Tensor x = Tensor::from({2, 3}, {1, -2, 3, 4, -5, 6}, true);
    tape.backward(tape.sum_all(x));
    CHECK(x.grad() == std::vector<double>(6, 1.0));
  }
  {
    Tape tape;
    Tensor x = Tensor::from({3}, {1, 2, 3}, true);
    tape.backward(tape.sum_all(tape.mul(x, x)));
    CHECK(x.grad() == std::vector<double>{2, 4, 6});
  }
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape tape;
  Tensor x = Tensor::from({2}, {1, 2}, true);
  CHECK_THROWS_AS(tape.backward(tape.mul(x, x)), msgcn::ShapeError);
}

TEST_CASE("gradient accumulation law: shared tensor equals duplicated inputs") {
  msgcn::Rng rng(9);
  Tensor vals = testutil::rand_tensor(rng, {4});

  // x appears twice in the graph.
  Tape t1;
  Tensor x = Tensor::from(vals.dims(), vals.data(), true);
  t1.backward(t1.sum_all(t1.mul(x, x)));

  // Same function with the two uses split across distinct tensors.
  Tape t2;
  Tensor xa = Tensor::from(vals.dims(), vals.data(), true);
  Tensor xb = Tensor::from(vals.dims(), vals.data(), true);
  t2.backward(t2.sum_all(t2.mul(xa, xb)));

  for (std::size_t i = 0; i < 4; ++i)
    CHECK(x.grad()[i] == doctest::Approx(xa.grad()[i] + xb.grad()[i]).epsilon(1e-15));
}

TEST_CASE("finite_diff_check self-tests") {
  // Identity at dyadic points with a power-of-two step: exactly representable
  // arithmetic, so the check returns exactly zero.
  Tensor x = Tensor::from({3}, {0.25, 0.5, 0.75});
  const double id_err = msgcn::finite_diff_check(
      [](Tape&, const Tensor& v) { return v; }, x, 0x1.0p-17);
  CHECK(id_err == 0.0);

  const double sig_err = msgcn::finite_diff_check(
      [](Tape& t, const Tensor& v) { return t.sigmoid(v); }, Tensor::scalar(0.3));
  CHECK(sig_err < 1e-7);

  msgcn::Rng rng(10);
  Tensor m1 = testutil::rand_tensor(rng, {5, 5});
  Tensor m2 = testutil::rand_tensor(rng, {5, 5});
  const double chain_err = msgcn::finite_diff_check(
      [&](Tape& t, const Tensor& v) { return t.matmul(t.matmul(m1, v), m2); },
      testutil::rand_tensor(rng, {5, 5}));
  CHECK(chain_err < 1e-6);
}

TEST_CASE("every differentiable op passes finite differences at random points") {
  msgcn::Rng rng(12);
  struct Case {
    const char* name;
    msgcn::TensorFn fn;
    Dims dims;
    bool positive;       // draw from positive range (log, rownormalize)
    bool avoid_zero;     // keep away from relu/prelu kink
  };
  Tensor other = testutil::rand_tensor(rng, {3, 4});
  Tensor square = testutil::rand_tensor(rng, {4, 4});
  Tensor kernel = testutil::rand_tensor(rng, {2, 2, 1, 3});
  Tensor slope = Tensor::from({1}, {0.25});
  Tensor mask = Tensor::from({4, 4}, {1, 1, 1, 1, 0, 1, 1, 1, 1, 0, 1, 1, 1, 1, 1, 0});
  std::vector<Case> cases = {
      {"matmul", [&](Tape& t, const Tensor& v) { return t.matmul(other, v); }, {4, 3}, false, false},
      {"transpose", [](Tape& t, const Tensor& v) { return t.transpose(v); }, {3, 5}, false, false},
      {"softmax", [&](Tape& t, const Tensor& v) { return t.mul(t.softmax_masked(v, mask), square); }, {4, 4}, false, false},
      {"conv2d", [&](Tape& t, const Tensor& v) { return t.conv2d_same(v, kernel); }, {2, 3, 3}, false, false},
      {"sigmoid", [](Tape& t, const Tensor& v) { return t.sigmoid(v); }, {6}, false, false},
      {"tanh", [](Tape& t, const Tensor& v) { return t.tanh(v); }, {6}, false, false},
      {"exp", [](Tape& t, const Tensor& v) { return t.exp(v); }, {6}, false, false},
      {"log", [](Tape& t, const Tensor& v) { return t.log(v); }, {6}, true, false},
      {"relu", [](Tape& t, const Tensor& v) { return t.relu(v); }, {6}, false, true},
      {"prelu", [&](Tape& t, const Tensor& v) { return t.prelu(v, slope); }, {6}, false, true},
      {"add", [&](Tape& t, const Tensor& v) { return t.add(v, square); }, {4, 4}, false, false},
      {"sub", [&](Tape& t, const Tensor& v) { return t.sub(square, v); }, {4, 4}, false, false},
      {"mul", [&](Tape& t, const Tensor& v) { return t.mul(v, square); }, {4, 4}, false, false},
      {"div", [&](Tape& t, const Tensor& v) { return t.div(square, v); }, {4, 4}, true, false},
      {"affine", [](Tape& t, const Tensor& v) { return t.affine(v, -1.5, 0.25); }, {6}, false, false},
      {"mean_all", [](Tape& t, const Tensor& v) { return t.mean_all(v); }, {3, 4}, false, false},
      {"reshape", [](Tape& t, const Tensor& v) { return t.reshape(v, {6, 2}); }, {3, 4}, false, false},
      {"transpose01", [](Tape& t, const Tensor& v) { return t.transpose01(v); }, {2, 3, 4}, false, false},
      {"slice0", [](Tape& t, const Tensor& v) { return t.slice0(v, 1); }, {3, 2, 4}, false, false},
      {"slice_last", [](Tape& t, const Tensor& v) { return t.slice_last(v, 2); }, {3, 2, 4}, false, false},
      {"stack0", [](Tape& t, const Tensor& v) {
         Tensor a = t.slice0(v, 0), b = t.slice0(v, 1);
         return t.stack0({b, a, b});
       }, {2, 3, 2}, false, false},
      {"concat_last", [&](Tape& t, const Tensor& v) {
         return t.concat_last(v, t.affine(v, 2.0, 1.0));
       }, {2, 3, 2}, false, false},
      {"rownormalize", [&](Tape& t, const Tensor& v) { return t.mul(t.rownormalize(v), other); }, {3, 4}, true, false},
      {"prelu_slope", [&](Tape& t, const Tensor& s) {
         Tensor pts = Tensor::from({4}, {-1.5, 0.5, -0.25, 2.0});
         return t.prelu(pts, s);
       }, {1}, false, false},
  };
  for (const Case& c : cases) {
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      Tensor x = c.positive ? testutil::rand_tensor(rng, c.dims, 0.5, 2.5)
                : c.avoid_zero ? testutil::rand_tensor_away_from_zero(rng, c.dims)
                               : testutil::rand_tensor(rng, c.dims);
      worst = std::max(worst, msgcn::finite_diff_check(c.fn, x));
    }
    INFO(std::string(c.name));
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("forward evaluation is bit-deterministic") {
  msgcn::Rng rng(13);
  Tensor a = testutil::rand_tensor(rng, {4, 4});
  Tensor b = testutil::rand_tensor(rng, {4, 4});
  auto run = [&]() {
    Tape t;
    Tensor h = t.softmax_masked(t.matmul(a, b));
    return t.sigmoid(t.rownormalize(t.mul(h, h))).data();
  };
  CHECK(run() == run());
}

TEST_CASE("eager NaN/Inf detection") {
  Tape tape;
  Tensor x = Tensor::from({2}, {1.0, 2.0});
  Tensor zero = Tensor::from({2}, {0.0, 1.0});
  CHECK_THROWS_AS(tape.div(x, zero), msgcn::NumericError);
}

TEST_CASE("tensor invariants: extents positive, data length matches") {
  CHECK_THROWS_AS(Tensor::zeros({2, 0, 3}), msgcn::ShapeError);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), msgcn::ShapeError);
}
