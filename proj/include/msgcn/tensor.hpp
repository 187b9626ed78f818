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

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "msgcn/errors.hpp"

namespace msgcn {

using Dims = std::vector<std::size_t>;

std::string dims_str(const Dims& dims);

namespace detail {
struct TensorImpl {
  Dims dims;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until the first accumulation
};
}  // namespace detail

/// Dense row-major array of doubles. Value-semantic handle: copies share
/// storage. Data is treated as immutable once an op has consumed the
/// tensor; the exceptions are the grad slot and mutable_data(), which the
/// optimizer uses to update leaf parameters between tapes.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Dims dims, bool requires_grad = false);
  static Tensor full(Dims dims, double value, bool requires_grad = false);
  static Tensor from(Dims dims, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor identity(std::size_t n);

  bool defined() const { return impl_ != nullptr; }
  const Dims& dims() const { return impl_->dims; }
  std::size_t rank() const { return impl_->dims.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  bool requires_grad() const { return impl_->requires_grad; }

  const std::vector<double>& data() const { return impl_->data; }
  std::vector<double>& mutable_data() { return impl_->data; }

  double value() const;  // scalar tensors only
  double at(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const;
  double at(std::size_t i, std::size_t j, std::size_t k) const;

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient accumulated by Tape::backward. Zero-filled on demand.
  const std::vector<double>& grad() const;
  /// Mutable view for the optimizer (scaling, clipping).
  std::vector<double>& mutable_grad();
  void zero_grad();

  /// Identity comparison (same underlying storage).
  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }

  detail::TensorImpl* impl() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
  friend class Tape;
};

/// Records every op applied through it and replays analytic gradient rules
/// in reverse. Single-threaded; one tape per forward/backward pass.
/// Node order is creation order, so inputs always precede their consumers
/// and the backward sweep visits each node exactly once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // -- linear algebra ------------------------------------------------------
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& x);  // rank-2

  /// Softmax over the last axis. Masked entries (mask == 0) get probability
  /// exactly 0; the mask, when given, must match a trailing suffix of the
  /// score dims. Throws NumericError naming the row if a row is fully masked.
  Tensor softmax_masked(const Tensor& scores, const Tensor& mask = Tensor());

  /// Zero-padded same-size 2-D convolution. input [ci x h x w],
  /// kernel [co x ci x kh x kw] with odd kh, kw.
  Tensor conv2d_same(const Tensor& input, const Tensor& kernel);

  // -- pointwise -----------------------------------------------------------
  Tensor sigmoid(const Tensor& x);
  Tensor tanh(const Tensor& x);
  Tensor exp(const Tensor& x);
  Tensor log(const Tensor& x);
  Tensor relu(const Tensor& x);
  Tensor prelu(const Tensor& x, const Tensor& slope);  // slope: [1] tensor
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor div(const Tensor& a, const Tensor& b);
  Tensor affine(const Tensor& x, double mul, double shift);
  Tensor scale(const Tensor& x, double s) { return affine(x, s, 0.0); }

  // -- reductions and layout -----------------------------------------------
  Tensor sum_all(const Tensor& x);
  Tensor mean_all(const Tensor& x);
  Tensor reshape(const Tensor& x, Dims dims);
  Tensor transpose01(const Tensor& x);                   // rank-3, swap axes 0/1
  Tensor slice0(const Tensor& x, std::size_t index);     // rank-3 -> rank-2
  Tensor slice_last(const Tensor& x, std::size_t index); // rank-3 -> rank-2
  Tensor stack0(const std::vector<Tensor>& slices);      // rank-2 list -> rank-3
  Tensor concat_last(const Tensor& a, const Tensor& b);  // rank-3
  /// Divide each last-axis row by its sum.
  Tensor rownormalize(const Tensor& x);

  /// Reverse sweep from a scalar loss. Gradients accumulate (+=) into every
  /// tensor that requires grad, so calling backward for several tapes that
  /// share leaf parameters sums their gradients.
  void backward(const Tensor& loss);

  std::size_t node_count() const { return nodes_.size(); }

  /// Eager NaN/Inf detection on every op output (on by default).
  void set_check_finite(bool on) { check_finite_ = on; }

 private:
  struct Node {
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    std::shared_ptr<detail::TensorImpl> output;
    std::function<void()> backprop;
  };

  Tensor make_output(Dims dims, bool requires_grad);
  void record(const std::vector<Tensor>& inputs, const Tensor& output,
              std::function<void()> backprop, const char* op_name);

  std::vector<Node> nodes_;
  bool check_finite_ = true;
};

/// Function under gradient test: builds a tensor expression on the tape.
using TensorFn = std::function<Tensor(Tape&, const Tensor&)>;

/// Central-difference check of d(sum f(x))/dx against the tape gradient.
/// Returns max over elements of |g - g_fd| / max(|g|, |g_fd|, 1e-8).
double finite_diff_check(const TensorFn& f, const Tensor& x,
                         double eps = 1e-5);

}  // namespace msgcn
