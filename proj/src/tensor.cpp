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

#include "msgcn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

namespace msgcn {

namespace {

std::size_t product(const Dims& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

void ensure_grad(detail::TensorImpl* t) {
  if (t->grad.empty()) t->grad.assign(t->data.size(), 0.0);
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

std::string dims_str(const Dims& dims) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << "x";
    os << dims[i];
  }
  os << "]";
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Dims dims, bool requires_grad) {
  return full(std::move(dims), 0.0, requires_grad);
}

Tensor Tensor::full(Dims dims, double value, bool requires_grad) {
  for (std::size_t d : dims) {
    if (d == 0) throw ShapeError("tensor extent must be positive, got " + dims_str(dims));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(product(dims), value);
  impl->dims = std::move(dims);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Dims dims, std::vector<double> values, bool requires_grad) {
  if (product(dims) != values.size()) {
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match dims " + dims_str(dims));
  }
  Tensor t = zeros(std::move(dims), requires_grad);
  t.impl_->data = std::move(values);
  return t;
}

Tensor Tensor::scalar(double value) { return full({1}, value); }

Tensor Tensor::identity(std::size_t n) {
  Tensor t = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.impl_->data[i * n + i] = 1.0;
  return t;
}

double Tensor::value() const {
  if (numel() != 1) throw ShapeError("value() requires a scalar tensor, got " + dims_str(dims()));
  return impl_->data[0];
}

double Tensor::at(std::size_t i) const { return impl_->data.at(i); }

double Tensor::at(std::size_t i, std::size_t j) const {
  return impl_->data.at(i * impl_->dims.at(1) + j);
}

double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  const std::size_t d1 = impl_->dims.at(1), d2 = impl_->dims.at(2);
  return impl_->data.at((i * d1 + j) * d2 + k);
}

const std::vector<double>& Tensor::grad() const {
  ensure_grad(impl_.get());
  return impl_->grad;
}

std::vector<double>& Tensor::mutable_grad() {
  ensure_grad(impl_.get());
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

// ---------------------------------------------------------------------------
// Tape plumbing

Tensor Tape::make_output(Dims dims, bool requires_grad) {
  return Tensor::zeros(std::move(dims), requires_grad);
}

void Tape::record(const std::vector<Tensor>& inputs, const Tensor& output,
                  std::function<void()> backprop, const char* op_name) {
  if (check_finite_ && !all_finite(output.data())) {
    throw NumericError(std::string(op_name) + ": non-finite value in output");
  }
  Node node;
  node.inputs.reserve(inputs.size());
  for (const Tensor& t : inputs) node.inputs.push_back(t.impl_);
  node.output = output.impl_;
  node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw Error("backward: undefined loss tensor");
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + dims_str(loss.dims()));
  }
  ensure_grad(loss.impl());
  loss.impl()->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // no gradient reached this node
    it->backprop();
  }
}

namespace {

// Shared guts for elementwise binaries with scalar broadcast on either side.
struct BinaryArgs {
  const Dims* out_dims;
  std::size_t n;
  bool a_scalar, b_scalar;
};

BinaryArgs binary_check(const Tensor& a, const Tensor& b, const char* op) {
  BinaryArgs r{};
  r.a_scalar = a.numel() == 1;
  r.b_scalar = b.numel() == 1;
  if (a.dims() != b.dims() && !r.a_scalar && !r.b_scalar) {
    throw ShapeError(std::string(op) + ": shape mismatch " + dims_str(a.dims()) +
                     " vs " + dims_str(b.dims()));
  }
  r.out_dims = r.a_scalar && !r.b_scalar ? &b.dims() : &a.dims();
  r.n = std::max(a.numel(), b.numel());
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear algebra

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dims()[1] != b.dims()[0]) {
    throw ShapeError("matmul: incompatible dims " + dims_str(a.dims()) + " x " +
                     dims_str(b.dims()));
  }
  const std::size_t m = a.dims()[0], k = a.dims()[1], n = b.dims()[1];
  Tensor out = make_output({m, n}, a.requires_grad() || b.requires_grad());
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = out.mutable_data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      for (std::size_t j = 0; j < n; ++j) pc[i * n + j] += av * pb[p * n + j];
    }
  }
  auto ai = a.impl_, bi = b.impl_, ci = out.impl_;
  record({a, b}, out,
         [ai, bi, ci, m, k, n]() {
           const std::vector<double>& gc = ci->grad;
           if (ai->requires_grad) {
             ensure_grad(ai.get());
             for (std::size_t i = 0; i < m; ++i)
               for (std::size_t j = 0; j < n; ++j) {
                 const double g = gc[i * n + j];
                 for (std::size_t p = 0; p < k; ++p)
                   ai->grad[i * k + p] += g * bi->data[p * n + j];
               }
           }
           if (bi->requires_grad) {
             ensure_grad(bi.get());
             for (std::size_t i = 0; i < m; ++i)
               for (std::size_t p = 0; p < k; ++p) {
                 const double av = ai->data[i * k + p];
                 for (std::size_t j = 0; j < n; ++j)
                   bi->grad[p * n + j] += av * gc[i * n + j];
               }
           }
         },
         "matmul");
  return out;
}

Tensor Tape::transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose: rank-2 tensor required, got " + dims_str(x.dims()));
  const std::size_t m = x.dims()[0], n = x.dims()[1];
  Tensor out = make_output({n, m}, x.requires_grad());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.mutable_data()[j * m + i] = x.data()[i * n + j];
  auto xi = x.impl_, oi = out.impl_;
  record({x}, out,
         [xi, oi, m, n]() {
           if (!xi->requires_grad) return;
           ensure_grad(xi.get());
           for (std::size_t i = 0; i < m; ++i)
             for (std::size_t j = 0; j < n; ++j)
               xi->grad[i * n + j] += oi->grad[j * m + i];
         },
         "transpose");
  return out;
}

Tensor Tape::softmax_masked(const Tensor& scores, const Tensor& mask) {
  const std::size_t n = scores.dims().back();
  std::size_t mask_period = 0;
  if (mask.defined()) {
    const Dims& sd = scores.dims();
    const Dims& md = mask.dims();
    if (md.size() > sd.size() ||
        !std::equal(md.rbegin(), md.rend(), sd.rbegin())) {
      throw ShapeError("softmax_masked: mask dims " + dims_str(md) +
                       " are not a trailing suffix of " + dims_str(sd));
    }
    for (double v : mask.data()) {
      if (v != 0.0 && v != 1.0) throw Error("softmax_masked: mask must be binary");
    }
    mask_period = mask.numel();
  }
  const std::size_t rows = scores.numel() / n;
  Tensor out = make_output(scores.dims(), scores.requires_grad());
  const double* ps = scores.data().data();
  const double* pm = mask.defined() ? mask.data().data() : nullptr;
  double* po = out.mutable_data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* s = ps + r * n;
    const double* m = pm ? pm + (r * n) % mask_period : nullptr;
    double mx = -HUGE_VAL;
    for (std::size_t j = 0; j < n; ++j)
      if (!m || m[j] != 0.0) mx = std::max(mx, s[j]);
    if (mx == -HUGE_VAL) {
      throw NumericError("softmax_masked: fully masked row " + std::to_string(r));
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = (!m || m[j] != 0.0) ? std::exp(s[j] - mx) : 0.0;
      po[r * n + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < n; ++j) po[r * n + j] /= z;
  }
  std::vector<Tensor> node_inputs{scores};
  if (mask.defined()) node_inputs.push_back(mask);
  auto si = scores.impl_, oi = out.impl_;
  record(node_inputs, out,
         [si, oi, rows, n]() {
           if (!si->requires_grad) return;
           ensure_grad(si.get());
           for (std::size_t r = 0; r < rows; ++r) {
             const double* y = oi->data.data() + r * n;
             const double* gy = oi->grad.data() + r * n;
             double dot = 0.0;
             for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
             for (std::size_t j = 0; j < n; ++j)
               si->grad[r * n + j] += y[j] * (gy[j] - dot);
           }
         },
         "softmax_masked");
  return out;
}

Tensor Tape::conv2d_same(const Tensor& input, const Tensor& kernel) {
  if (input.rank() != 3 || kernel.rank() != 4) {
    throw ShapeError("conv2d_same: expected input [ci x h x w] and kernel [co x ci x kh x kw], got " +
                     dims_str(input.dims()) + " and " + dims_str(kernel.dims()));
  }
  const std::size_t ci = input.dims()[0], h = input.dims()[1], w = input.dims()[2];
  const std::size_t co = kernel.dims()[0], kci = kernel.dims()[1];
  const std::size_t kh = kernel.dims()[2], kw = kernel.dims()[3];
  if (kci != ci) {
    throw ShapeError("conv2d_same: channel mismatch, input " + dims_str(input.dims()) +
                     " vs kernel " + dims_str(kernel.dims()));
  }
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw ShapeError("conv2d_same: even kernel extent unsupported, got " + dims_str(kernel.dims()));
  }
  const std::size_t ph = kh / 2, pw = kw / 2;
  Tensor out = make_output({co, h, w}, input.requires_grad() || kernel.requires_grad());
  const double* pin = input.data().data();
  const double* pk = kernel.data().data();
  double* po = out.mutable_data().data();
  for (std::size_t oc = 0; oc < co; ++oc)
    for (std::size_t ic = 0; ic < ci; ++ic)
      for (std::size_t u = 0; u < kh; ++u)
        for (std::size_t v = 0; v < kw; ++v) {
          const double kv = pk[((oc * ci + ic) * kh + u) * kw + v];
          if (kv == 0.0) continue;
          for (std::size_t y = 0; y < h; ++y) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + u) - static_cast<std::ptrdiff_t>(ph);
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t x = 0; x < w; ++x) {
              const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + v) - static_cast<std::ptrdiff_t>(pw);
              if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
              po[(oc * h + y) * w + x] += kv * pin[(ic * h + sy) * w + sx];
            }
          }
        }
  auto ii = input.impl_, ki = kernel.impl_, oi = out.impl_;
  record({input, kernel}, out,
         [ii, ki, oi, ci, co, h, w, kh, kw, ph, pw]() {
           const std::vector<double>& go = oi->grad;
           const bool gi = ii->requires_grad, gk = ki->requires_grad;
           if (gi) ensure_grad(ii.get());
           if (gk) ensure_grad(ki.get());
           for (std::size_t oc = 0; oc < co; ++oc)
             for (std::size_t ic = 0; ic < ci; ++ic)
               for (std::size_t u = 0; u < kh; ++u)
                 for (std::size_t v = 0; v < kw; ++v) {
                   const std::size_t kidx = ((oc * ci + ic) * kh + u) * kw + v;
                   const double kv = ki->data[kidx];
                   double kacc = 0.0;
                   for (std::size_t y = 0; y < h; ++y) {
                     const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + u) - static_cast<std::ptrdiff_t>(ph);
                     if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                     for (std::size_t x = 0; x < w; ++x) {
                       const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + v) - static_cast<std::ptrdiff_t>(pw);
                       if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
                       const double g = go[(oc * h + y) * w + x];
                       const std::size_t in_idx = (ic * h + sy) * w + sx;
                       if (gi) ii->grad[in_idx] += kv * g;
                       if (gk) kacc += ii->data[in_idx] * g;
                     }
                   }
                   if (gk) ki->grad[kidx] += kacc;
                 }
         },
         "conv2d_same");
  return out;
}

// ---------------------------------------------------------------------------
// Pointwise

Tensor Tape::sigmoid(const Tensor& x) {
  Tensor out = make_output(x.dims(), x.requires_grad());
  for (std::size_t i = 0; i < x.numel(); ++i)
    out.mutable_data()[i] = 1.0 / (1.0 + std::exp(-x.data()[i]));
  auto xi = x.impl_, oi = out.impl_;
  record({x}, out,
         [xi, oi]() {
           if (!xi->requires_grad) return;
           ensure_grad(xi.get());
           for (std::size_t i = 0; i < oi->data.size(); ++i) {
             const double y = oi->data[i];
             xi->grad[i] += oi->grad[i] * y * (1.0 - y);
           }
         },
         "sigmoid");
  return out;
}

Tensor Tape::tanh(const Tensor& x) {
  Tensor out = make_output(x.dims(), x.requires_grad());
  for (std::size_t i = 0; i < x.numel(); ++i) out.mutable_data()[i] = std::tanh(x.data()[i]);
  auto xi = x.impl_, oi = out.impl_;
  record({x}, out,
         [xi, oi]() {
           if (!xi->requires_grad) return;
           ensure_grad(xi.get());
           for (std::size_t i = 0; i < oi->data.size(); ++i) {
             const double y = oi->data[i];
             xi->grad[i] += oi->grad[i] * (1.0 - y * y);
           }
         },
         "tanh");
  return out;
}

Tensor Tape::exp(const Tensor& x) {
  Tensor out = make_output(x.dims(), x.requires_grad());
  for (std::size_t i = 0; i < x.numel(); ++i) out.mutable_data()[i] = std::exp(x.data()[i]);
  auto xi = x.impl_, oi = out.impl_;
  record({x}, out,
         [xi, oi]() {
           if (!xi->requires_grad) return;
           ensure_grad(xi.get());
           for (std::size_t i = 0; i < oi->data.size(); ++i)
             xi->grad[i] += oi->grad[i] * oi->data[i];
         },
         "exp");
  return out;
}

Tensor Tape::log(const Tensor& x) {
  Tensor out = make_output(x.dims(), x.requires_grad());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double v = x.data()[i];
    if (v <= 0.0) throw NumericError("log: non-positive input " + std::to_string(v));
    out.mutable_data()[i] = std::log(v);
  }
  auto xi = x.impl_, oi = out.impl_;
  record({x}, out,
         [xi, oi]() {
           if (!xi->requires_grad) return;
           ensure_grad(xi.get());
           for (std::size_t i = 0; i < oi->data.size(); ++i)
             xi->grad[i] += oi->grad[i] / xi->data[i];
         },
         "log");
  return out;
}

Tensor Tape::relu(const Tensor& x) {
  Tensor out = make_output(x.dims(), x.requires_grad());
  for (std::size_t i = 0; i < x.numel(); ++i)
    out.mutable_data()[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  auto xi = x.impl_, oi = out.impl_;
  record({x}, out,
         [xi, oi]() {
           if (!xi->requires_grad) return;
           ensure_grad(xi.get());
           for (std::size_t i = 0; i < oi->data.size(); ++i)
             if (xi->data[i] > 0.0) xi->grad[i] += oi->grad[i];
         },
         "relu");
  return out;
}

Tensor Tape::prelu(const Tensor& x, const Tensor& slope) {
  if (slope.numel() != 1) {
    throw ShapeError("prelu: slope must be a single-element tensor, got " + dims_str(slope.dims()));
  }
  const double s = slope.data()[0];
  Tensor out = make_output(x.dims(), x.requires_grad() || slope.requires_grad());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double v = x.data()[i];
    out.mutable_data()[i] = v > 0.0 ? v : s * v;
  }
  auto xi = x.impl_, si = slope.impl_, oi = out.impl_;
  record({x, slope}, out,
         [xi, si, oi]() {
           const double sv = si->data[0];
           if (xi->requires_grad) {
             ensure_grad(xi.get());
             for (std::size_t i = 0; i < oi->data.size(); ++i)
               xi->grad[i] += oi->grad[i] * (xi->data[i] > 0.0 ? 1.0 : sv);
           }
           if (si->requires_grad) {
             ensure_grad(si.get());
             double acc = 0.0;
             for (std::size_t i = 0; i < oi->data.size(); ++i)
               if (xi->data[i] <= 0.0) acc += oi->grad[i] * xi->data[i];
             si->grad[0] += acc;
           }
         },
         "prelu");
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  const BinaryArgs ba = binary_check(a, b, "add");
  Tensor out = make_output(*ba.out_dims, a.requires_grad() || b.requires_grad());
  for (std::size_t i = 0; i < ba.n; ++i)
    out.mutable_data()[i] = a.data()[ba.a_scalar ? 0 : i] + b.data()[ba.b_scalar ? 0 : i];
  auto ai = a.impl_, bi = b.impl_, oi = out.impl_;
  record({a, b}, out,
         [ai, bi, oi, ba]() {
           if (ai->requires_grad) {
             ensure_grad(ai.get());
             for (std::size_t i = 0; i < ba.n; ++i) ai->grad[ba.a_scalar ? 0 : i] += oi->grad[i];
           }
           if (bi->requires_grad) {
             ensure_grad(bi.get());
             for (std::size_t i = 0; i < ba.n; ++i) bi->grad[ba.b_scalar ? 0 : i] += oi->grad[i];
           }
         },
         "add");
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  const BinaryArgs ba = binary_check(a, b, "sub");
  Tensor out = make_output(*ba.out_dims, a.requires_grad() || b.requires_grad());
  for (std::size_t i = 0; i < ba.n; ++i)
    out.mutable_data()[i] = a.data()[ba.a_scalar ? 0 : i] - b.data()[ba.b_scalar ? 0 : i];
  auto ai = a.impl_, bi = b.impl_, oi = out.impl_;
  record({a, b}, out,
         [ai, bi, oi, ba]() {
           if (ai->requires_grad) {
             ensure_grad(ai.get());
             for (std::size_t i = 0; i < ba.n; ++i) ai->grad[ba.a_scalar ? 0 : i] += oi->grad[i];
           }
           if (bi->requires_grad) {
             ensure_grad(bi.get());
             for (std::size_t i = 0; i < ba.n; ++i) bi->grad[ba.b_scalar ? 0 : i] -= oi->grad[i];
           }
         },
         "sub");
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  const BinaryArgs ba = binary_check(a, b, "mul");
  Tensor out = make_output(*ba.out_dims, a.requires_grad() || b.requires_grad());
  for (std::size_t i = 0; i < ba.n; ++i)
    out.mutable_data()[i] = a.data()[ba.a_scalar ? 0 : i] * b.data()[ba.b_scalar ? 0 : i];
  auto ai = a.impl_, bi = b.impl_, oi = out.impl_;
  record({a, b}, out,
         [ai, bi, oi, ba]() {
           if (ai->requires_grad) {
             ensure_grad(ai.get());
             for (std::size_t i = 0; i < ba.n; ++i)
               ai->grad[ba.a_scalar ? 0 : i] += oi->grad[i] * bi->data[ba.b_scalar ? 0 : i];
           }
           if (bi->requires_grad) {
             ensure_grad(bi.get());
             for (std::size_t i = 0; i < ba.n; ++i)
               bi->grad[ba.b_scalar ? 0 : i] += oi->grad[i] * ai->data[ba.a_scalar ? 0 : i];
           }
         },
         "mul");
  return out;
}

Tensor Tape::div(const Tensor& a, const Tensor& b) {
  const BinaryArgs ba = binary_check(a, b, "div");
  Tensor out = make_output(*ba.out_dims, a.requires_grad() || b.requires_grad());
  for (std::size_t i = 0; i < ba.n; ++i)
    out.mutable_data()[i] = a.data()[ba.a_scalar ? 0 : i] / b.data()[ba.b_scalar ? 0 : i];
  auto ai = a.impl_, bi = b.impl_, oi = out.impl_;
  record({a, b}, out,
         [ai, bi, oi, ba]() {
           if (ai->requires_grad) {
             ensure_grad(ai.get());
             for (std::size_t i = 0; i < ba.n; ++i)
               ai->grad[ba.a_scalar ? 0 : i] += oi->grad[i] / bi->data[ba.b_scalar ? 0 : i];
           }
           if (bi->requires_grad) {
             ensure_grad(bi.get());
             for (std::size_t i = 0; i < ba.n; ++i) {
               const double bv = bi->data[ba.b_scalar ? 0 : i];
               bi->grad[ba.b_scalar ? 0 : i] -=
                   oi->grad[i] * ai->data[ba.a_scalar ? 0 : i] / (bv * bv);
             }
           }
         },
         "div");
  return out;
}

Tensor Tape::affine(const Tensor& x, double mul, double shift) {
  Tensor out = make_output(x.dims(), x.requires_grad());
  for (std::size_t i = 0; i < x.numel(); ++i)
    out.mutable_data()[i] = mul * x.data()[i] + shift;
  auto xi = x.impl_, oi = out.impl_;
  record({x}, out,
         [xi, oi, mul]() {
           if (!xi->requires_grad) return;
           ensure_grad(xi.get());
           for (std::size_t i = 0; i < oi->data.size(); ++i)
             xi->grad[i] += mul * oi->grad[i];
         },
         "affine");
  return out;
}

// ---------------------------------------------------------------------------
// Reductions and layout

Tensor Tape::sum_all(const Tensor& x) {
  Tensor out = make_output({1}, x.requires_grad());
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  out.mutable_data()[0] = acc;
  auto xi = x.impl_, oi = out.impl_;
  record({x}, out,
         [xi, oi]() {
           if (!xi->requires_grad) return;
           ensure_grad(xi.get());
           const double g = oi->grad[0];
           for (double& gv : xi->grad) gv += g;
         },
         "sum_all");
  return out;
}

Tensor Tape::mean_all(const Tensor& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor Tape::reshape(const Tensor& x, Dims dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  if (n != x.numel()) {
    throw ShapeError("reshape: cannot view " + dims_str(x.dims()) + " as " + dims_str(dims));
  }
  Tensor out = Tensor::from(std::move(dims), x.data(), x.requires_grad());
  auto xi = x.impl_, oi = out.impl_;
  record({x}, out,
         [xi, oi]() {
           if (!xi->requires_grad) return;
           ensure_grad(xi.get());
           for (std::size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
         },
         "reshape");
  return out;
}

Tensor Tape::transpose01(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("transpose01: rank-3 tensor required, got " + dims_str(x.dims()));
  const std::size_t a = x.dims()[0], b = x.dims()[1], c = x.dims()[2];
  Tensor out = make_output({b, a, c}, x.requires_grad());
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t k = 0; k < c; ++k)
        out.mutable_data()[(j * a + i) * c + k] = x.data()[(i * b + j) * c + k];
  auto xi = x.impl_, oi = out.impl_;
  record({x}, out,
         [xi, oi, a, b, c]() {
           if (!xi->requires_grad) return;
           ensure_grad(xi.get());
           for (std::size_t i = 0; i < a; ++i)
             for (std::size_t j = 0; j < b; ++j)
               for (std::size_t k = 0; k < c; ++k)
                 xi->grad[(i * b + j) * c + k] += oi->grad[(j * a + i) * c + k];
         },
         "transpose01");
  return out;
}

Tensor Tape::slice0(const Tensor& x, std::size_t index) {
  if (x.rank() != 3) throw ShapeError("slice0: rank-3 tensor required, got " + dims_str(x.dims()));
  const std::size_t d0 = x.dims()[0], d1 = x.dims()[1], d2 = x.dims()[2];
  if (index >= d0) throw ShapeError("slice0: index " + std::to_string(index) + " out of range");
  Tensor out = make_output({d1, d2}, x.requires_grad());
  const std::size_t base = index * d1 * d2;
  std::copy(x.data().begin() + base, x.data().begin() + base + d1 * d2,
            out.mutable_data().begin());
  auto xi = x.impl_, oi = out.impl_;
  record({x}, out,
         [xi, oi, base]() {
           if (!xi->requires_grad) return;
           ensure_grad(xi.get());
           for (std::size_t i = 0; i < oi->grad.size(); ++i) xi->grad[base + i] += oi->grad[i];
         },
         "slice0");
  return out;
}

Tensor Tape::slice_last(const Tensor& x, std::size_t index) {
  if (x.rank() != 3) throw ShapeError("slice_last: rank-3 tensor required, got " + dims_str(x.dims()));
  const std::size_t d0 = x.dims()[0], d1 = x.dims()[1], d2 = x.dims()[2];
  if (index >= d2) throw ShapeError("slice_last: index " + std::to_string(index) + " out of range");
  Tensor out = make_output({d0, d1}, x.requires_grad());
  for (std::size_t i = 0; i < d0 * d1; ++i)
    out.mutable_data()[i] = x.data()[i * d2 + index];
  auto xi = x.impl_, oi = out.impl_;
  record({x}, out,
         [xi, oi, d2, index]() {
           if (!xi->requires_grad) return;
           ensure_grad(xi.get());
           for (std::size_t i = 0; i < oi->grad.size(); ++i)
             xi->grad[i * d2 + index] += oi->grad[i];
         },
         "slice_last");
  return out;
}

Tensor Tape::stack0(const std::vector<Tensor>& slices) {
  if (slices.empty()) throw ShapeError("stack0: empty slice list");
  const Dims& sd = slices.front().dims();
  if (sd.size() != 2) throw ShapeError("stack0: rank-2 slices required, got " + dims_str(sd));
  bool any_grad = false;
  for (const Tensor& s : slices) {
    if (s.dims() != sd) {
      throw ShapeError("stack0: slice dims differ, " + dims_str(sd) + " vs " + dims_str(s.dims()));
    }
    any_grad = any_grad || s.requires_grad();
  }
  const std::size_t k = slices.size(), step = sd[0] * sd[1];
  Tensor out = make_output({k, sd[0], sd[1]}, any_grad);
  for (std::size_t i = 0; i < k; ++i)
    std::copy(slices[i].data().begin(), slices[i].data().end(),
              out.mutable_data().begin() + i * step);
  std::vector<std::shared_ptr<detail::TensorImpl>> impls;
  impls.reserve(k);
  for (const Tensor& s : slices) impls.push_back(s.impl_);
  auto oi = out.impl_;
  record(slices, out,
         [impls, oi, step]() {
           for (std::size_t i = 0; i < impls.size(); ++i) {
             if (!impls[i]->requires_grad) continue;
             ensure_grad(impls[i].get());
             for (std::size_t j = 0; j < step; ++j)
               impls[i]->grad[j] += oi->grad[i * step + j];
           }
         },
         "stack0");
  return out;
}

Tensor Tape::concat_last(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dims()[0] != b.dims()[0] ||
      a.dims()[1] != b.dims()[1]) {
    throw ShapeError("concat_last: incompatible dims " + dims_str(a.dims()) + " vs " +
                     dims_str(b.dims()));
  }
  const std::size_t rows = a.dims()[0] * a.dims()[1];
  const std::size_t da = a.dims()[2], db = b.dims()[2];
  Tensor out = make_output({a.dims()[0], a.dims()[1], da + db},
                           a.requires_grad() || b.requires_grad());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < da; ++j)
      out.mutable_data()[r * (da + db) + j] = a.data()[r * da + j];
    for (std::size_t j = 0; j < db; ++j)
      out.mutable_data()[r * (da + db) + da + j] = b.data()[r * db + j];
  }
  auto ai = a.impl_, bi = b.impl_, oi = out.impl_;
  record({a, b}, out,
         [ai, bi, oi, rows, da, db]() {
           if (ai->requires_grad) {
             ensure_grad(ai.get());
             for (std::size_t r = 0; r < rows; ++r)
               for (std::size_t j = 0; j < da; ++j)
                 ai->grad[r * da + j] += oi->grad[r * (da + db) + j];
           }
           if (bi->requires_grad) {
             ensure_grad(bi.get());
             for (std::size_t r = 0; r < rows; ++r)
               for (std::size_t j = 0; j < db; ++j)
                 bi->grad[r * db + j] += oi->grad[r * (da + db) + da + j];
           }
         },
         "concat_last");
  return out;
}

Tensor Tape::rownormalize(const Tensor& x) {
  const std::size_t n = x.dims().back();
  const std::size_t rows = x.numel() / n;
  Tensor out = make_output(x.dims(), x.requires_grad());
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += x.data()[r * n + j];
    if (s == 0.0) throw NumericError("rownormalize: zero row sum at row " + std::to_string(r));
    for (std::size_t j = 0; j < n; ++j) out.mutable_data()[r * n + j] = x.data()[r * n + j] / s;
  }
  auto xi = x.impl_, oi = out.impl_;
  record({x}, out,
         [xi, oi, rows, n]() {
           if (!xi->requires_grad) return;
           ensure_grad(xi.get());
           for (std::size_t r = 0; r < rows; ++r) {
             double s = 0.0, dot = 0.0;
             for (std::size_t j = 0; j < n; ++j) s += xi->data[r * n + j];
             for (std::size_t j = 0; j < n; ++j)
               dot += oi->grad[r * n + j] * oi->data[r * n + j];
             for (std::size_t j = 0; j < n; ++j)
               xi->grad[r * n + j] += (oi->grad[r * n + j] - dot) / s;
           }
         },
         "rownormalize");
  return out;
}

// ---------------------------------------------------------------------------
// Finite differences

double finite_diff_check(const TensorFn& f, const Tensor& x, double eps) {
  // Tape gradient.
  Tape tape;
  Tensor xg = Tensor::from(x.dims(), x.data(), /*requires_grad=*/true);
  Tensor loss = tape.sum_all(f(tape, xg));
  if (!std::isfinite(loss.value())) throw NumericError("finite_diff_check: non-finite loss");
  tape.backward(loss);
  const std::vector<double> g = xg.grad();

  auto eval = [&f](const Tensor& point) {
    Tape t;
    const double v = t.sum_all(f(t, point)).value();
    if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite evaluation");
    return v;
  };

  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    std::vector<double> bumped = x.data();
    bumped[i] = x.data()[i] + eps;
    const double up = eval(Tensor::from(x.dims(), bumped));
    bumped[i] = x.data()[i] - eps;
    const double down = eval(Tensor::from(x.dims(), bumped));
    const double fd = (up - down) / (2.0 * eps);
    const double denom = std::max({std::fabs(g[i]), std::fabs(fd), 1e-8});
    worst = std::max(worst, std::fabs(g[i] - fd) / denom);
  }
  return worst;
}

}  // namespace msgcn
