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

#include "msgcn/model.hpp"

#include <cmath>

namespace msgcn {

void ModelConfig::validate() const {
  if (embed_dim == 0) throw ConfigError("embed_dim must be positive");
  if (num_classes != static_cast<std::size_t>(kNumClasses)) {
    throw ConfigError("num_classes must be " + std::to_string(kNumClasses) +
                      " (fixed label table)");
  }
  if (t_obs < 2) throw ConfigError("t_obs must be at least 2");
  if (t_pred < 1) throw ConfigError("t_pred must be at least 1");
  if (tcn_depth < 1 || tcn_depth > 9) throw ConfigError("tcn_depth must be in [1, 9]");
  if (!adaptive_mask && (fixed_threshold <= 0.0 || fixed_threshold >= 1.0)) {
    throw ConfigError("fixed_threshold must lie in (0, 1)");
  }
}

namespace {

std::map<std::string, Dims> param_layout(const ModelConfig& c) {
  const std::size_t d = c.embed_dim, l = c.num_classes;
  std::map<std::string, Dims> layout;
  if (!c.use_class_labels) {
    layout["emb.vel.weight"] = {2, d};
  } else if (c.separate_embedding) {
    layout["emb.vel.weight"] = {2, d};
    layout["emb.lab.weight"] = {l, d};
  } else {
    layout["emb.joint.weight"] = {2 + l, d};
  }
  for (const char* stream : {"spatial", "temporal"}) {
    layout["attn." + std::string(stream) + ".wq"] = {d, d};
    layout["attn." + std::string(stream) + ".wk"] = {d, d};
  }
  layout["enh.spatial.k1x1"] = {c.t_obs, c.t_obs, 1, 1};
  layout["enh.spatial.k1x3"] = {c.t_obs, c.t_obs, 1, 3};
  layout["enh.spatial.k3x1"] = {c.t_obs, c.t_obs, 3, 1};
  layout["enh.spatial.prelu"] = {1};
  // Agent count varies per scene, so the temporal kernels are shared across
  // agent channels; parameter shapes stay independent of N.
  layout["enh.temporal.k1x1"] = {1, 1, 1, 1};
  layout["enh.temporal.k1x3"] = {1, 1, 1, 3};
  layout["enh.temporal.k3x1"] = {1, 1, 3, 1};
  layout["enh.temporal.prelu"] = {1};
  for (const char* branch : {"b1s", "b1t", "b2t", "b2s"}) {
    layout["gcn." + std::string(branch) + ".weight"] = {d, d};
    layout["gcn." + std::string(branch) + ".prelu"] = {1};
  }
  layout["tcn.head.weight"] = {d, 5};
  for (std::size_t k = 0; k < c.tcn_depth; ++k) {
    const std::string base = "tcn.conv" + std::to_string(k);
    layout[base + ".kernel"] = {c.t_pred, k == 0 ? c.t_obs : c.t_pred, 3, 3};
    layout[base + ".prelu"] = {1};
  }
  return layout;
}

// PReLU(0.25) passes only a quarter of the signal on the negative side;
// He-style fan-in scaling with this gain keeps the GCN hops from shrinking
// their inputs, which would starve the decoder of output sensitivity.
constexpr double kPreluGain = 1.3719886811400708;  // sqrt(2 / (1 + 0.25^2))

double init_limit(const std::string& name, const Dims& dims) {
  std::size_t fan_in, fan_out;
  if (dims.size() == 2) {
    fan_in = dims[0];
    fan_out = dims[1];
  } else {  // conv kernel [co x ci x kh x kw]
    fan_in = dims[1] * dims[2] * dims[3];
    fan_out = dims[0] * dims[2] * dims[3];
  }
  if (name.rfind("emb.", 0) == 0) {
    // Input maps behave like lookup tables (one-hot labels select single
    // rows, velocities are 2-wide); scale by input fan alone so the
    // embeddings carry O(1) signal into the graph stack.
    return std::sqrt(3.0 / static_cast<double>(fan_in));
  }
  if (name.rfind("gcn.", 0) == 0) {
    return kPreluGain * std::sqrt(6.0 / static_cast<double>(fan_in));
  }
  if (name == "tcn.head.weight") {
    // Near-zero head: the decoder starts at the link functions' neutral
    // point (mu 0, sigma 1, rho 0) while its weight gradients keep the
    // full magnitude of the fused features.
    return 0.02;
  }
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

constexpr double kPreluInit = 0.25;
constexpr double kRhoClamp = 1.0 - 1e-6;

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config, Rng& rng) {
  config.validate();
  ModelParams params;
  params.config_ = config;
  // std::map iteration is name-ordered, which fixes the draw order.
  for (const auto& [name, dims] : param_layout(config)) {
    Tensor t = Tensor::zeros(dims, /*requires_grad=*/true);
    if (dims == Dims{1}) {
      t.mutable_data()[0] = kPreluInit;
    } else {
      const double limit = init_limit(name, dims);
      for (double& v : t.mutable_data()) v = rng.uniform(-limit, limit);
    }
    params.tensors_.emplace(name, t);
  }
  return params;
}

ModelParams params_with_tensors(const ModelConfig& config, std::map<std::string, Tensor> tensors) {
  config.validate();
  const auto layout = param_layout(config);
  for (const auto& [name, dims] : layout) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ConfigError("missing parameter tensor: " + name);
    if (it->second.dims() != dims) {
      throw ConfigError("parameter " + name + " has dims " + dims_str(it->second.dims()) +
                        ", expected " + dims_str(dims));
    }
  }
  for (const auto& [name, t] : tensors) {
    (void)t;
    if (!layout.count(name)) throw ConfigError("unexpected parameter tensor: " + name);
  }
  ModelParams params;
  params.config_ = config;
  params.tensors_ = std::move(tensors);
  return params;
}

Tensor ModelParams::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) {
    (void)name;
    n += t.numel();
  }
  return n;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : tensors_) {
    (void)name;
    t.zero_grad();
  }
}

// ---------------------------------------------------------------------------

VlgEmbedding vlg_embed(Tape& tape, const VlgBatch& batch, const ModelParams& params) {
  const ModelConfig& c = params.config();
  const std::size_t t_obs = batch.t_obs(), n = batch.num_agents();
  const std::size_t d = c.embed_dim, l = c.num_classes;
  if (batch.labels_onehot.dims()[2] != l) {
    throw ShapeError("vlg_embed: label width " + dims_str(batch.labels_onehot.dims()) +
                     " does not match config L=" + std::to_string(l));
  }

  Tensor flat_vel = tape.reshape(batch.velocity, {t_obs * n, 2});
  Tensor embedded;
  if (!c.use_class_labels) {
    embedded = tape.matmul(flat_vel, params.at("emb.vel.weight"));
  } else if (c.separate_embedding) {
    Tensor flat_lab = tape.reshape(batch.labels_onehot, {t_obs * n, l});
    embedded = tape.add(tape.matmul(flat_vel, params.at("emb.vel.weight")),
                        tape.matmul(flat_lab, params.at("emb.lab.weight")));
  } else {
    Tensor joint = tape.concat_last(batch.velocity, batch.labels_onehot);
    embedded = tape.matmul(tape.reshape(joint, {t_obs * n, 2 + l}),
                           params.at("emb.joint.weight"));
  }

  VlgEmbedding out;
  out.spatial = tape.reshape(embedded, {t_obs, n, d});
  out.temporal = tape.transpose01(out.spatial);
  return out;
}

Tensor self_attention(Tape& tape, const Tensor& embedded, const Tensor& w_q,
                      const Tensor& w_k, const Tensor& struct_mask) {
  if (embedded.rank() != 3) {
    throw ShapeError("self_attention: expected [S x n x D], got " + dims_str(embedded.dims()));
  }
  const std::size_t slices = embedded.dims()[0], n = embedded.dims()[1];
  const std::size_t d = embedded.dims()[2];
  if (struct_mask.dims() != Dims{n, n}) {
    throw ShapeError("self_attention: struct mask " + dims_str(struct_mask.dims()) +
                     " does not match node count " + std::to_string(n));
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<Tensor> rows;
  rows.reserve(slices);
  for (std::size_t s = 0; s < slices; ++s) {
    Tensor e = tape.slice0(embedded, s);
    Tensor q = tape.matmul(e, w_q);
    Tensor k = tape.matmul(e, w_k);
    Tensor logits = tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt_d);
    rows.push_back(tape.softmax_masked(logits, struct_mask));
  }
  return tape.stack0(rows);
}

Tensor feature_enhance(Tape& tape, const Tensor& attention_stack,
                       const EnhanceKernels& kernels, bool per_channel) {
  if (attention_stack.rank() != 3) {
    throw ShapeError("feature_enhance: expected [C x h x w], got " +
                     dims_str(attention_stack.dims()));
  }
  if (!per_channel) {
    Tensor summed = tape.add(tape.add(tape.conv2d_same(attention_stack, kernels.k1x1),
                                      tape.conv2d_same(attention_stack, kernels.k1x3)),
                             tape.conv2d_same(attention_stack, kernels.k3x1));
    return tape.prelu(summed, kernels.prelu_slope);
  }
  const std::size_t channels = attention_stack.dims()[0];
  const std::size_t h = attention_stack.dims()[1], w = attention_stack.dims()[2];
  std::vector<Tensor> outs;
  outs.reserve(channels);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    Tensor map = tape.reshape(tape.slice0(attention_stack, ch), {1, h, w});
    Tensor summed = tape.add(tape.add(tape.conv2d_same(map, kernels.k1x1),
                                      tape.conv2d_same(map, kernels.k1x3)),
                             tape.conv2d_same(map, kernels.k3x1));
    outs.push_back(tape.reshape(summed, {h, w}));
  }
  return tape.prelu(tape.stack0(outs), kernels.prelu_slope);
}

Tensor interaction_mask(const Tensor& scores, bool adaptive, double fixed_threshold,
                        bool force_self_loop) {
  if (scores.rank() < 2) {
    throw ShapeError("interaction_mask: expected trailing n x n matrices, got " +
                     dims_str(scores.dims()));
  }
  const std::size_t n = scores.dims()[scores.rank() - 2];
  const std::size_t m = scores.dims()[scores.rank() - 1];
  if (force_self_loop && n != m) {
    throw ShapeError("interaction_mask: self loops need square matrices, got " +
                     dims_str(scores.dims()));
  }
  Tensor mask = Tensor::zeros(scores.dims());
  const std::size_t slices = scores.numel() / (n * m);
  std::vector<double> sig(m);
  for (std::size_t s = 0; s < slices; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = (s * n + i) * m;
      double sum = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        sig[j] = 1.0 / (1.0 + std::exp(-scores.data()[base + j]));
        sum += sig[j];
      }
      const double threshold = adaptive ? sum / static_cast<double>(m) : fixed_threshold;
      for (std::size_t j = 0; j < m; ++j) {
        mask.mutable_data()[base + j] = sig[j] > threshold ? 1.0 : 0.0;
      }
      if (force_self_loop) mask.mutable_data()[base + i] = 1.0;
    }
  }
  return mask;
}

Tensor sparsify_adjacency(Tape& tape, const Tensor& attention, const Tensor& mask,
                          const Tensor& struct_mask) {
  if (mask.dims() != attention.dims()) {
    throw ShapeError("sparsify_adjacency: mask " + dims_str(mask.dims()) +
                     " vs attention " + dims_str(attention.dims()));
  }
  const std::size_t n = attention.dims()[attention.rank() - 2];
  const std::size_t m = attention.dims()[attention.rank() - 1];
  if (n != m || struct_mask.dims() != Dims{n, n}) {
    throw ShapeError("sparsify_adjacency: struct mask " + dims_str(struct_mask.dims()) +
                     " vs attention " + dims_str(attention.dims()));
  }
  const std::size_t slices = attention.numel() / (n * n);

  // Constants: per-slice (mask .* struct) gate and identity.
  Tensor gate = Tensor::zeros(attention.dims());
  Tensor eye = Tensor::zeros(attention.dims());
  for (std::size_t s = 0; s < slices; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t idx = (s * n + i) * n + j;
        gate.mutable_data()[idx] = mask.data()[idx] * struct_mask.data()[i * n + j];
      }
      eye.mutable_data()[(s * n + i) * n + i] = 1.0;
    }
  }
  return tape.rownormalize(tape.add(tape.mul(attention, gate), eye));
}

Tensor gcn_aggregate(Tape& tape, const Tensor& adj_stack, const Tensor& feature_stack,
                     const Tensor& weight, const Tensor& prelu_slope) {
  if (adj_stack.rank() != 3 || feature_stack.rank() != 3 ||
      adj_stack.dims()[0] != feature_stack.dims()[0] ||
      adj_stack.dims()[2] != feature_stack.dims()[1]) {
    throw ShapeError("gcn_aggregate: adjacency " + dims_str(adj_stack.dims()) +
                     " vs features " + dims_str(feature_stack.dims()));
  }
  const std::size_t slices = adj_stack.dims()[0];
  std::vector<Tensor> outs;
  outs.reserve(slices);
  for (std::size_t s = 0; s < slices; ++s) {
    Tensor mixed = tape.matmul(tape.slice0(adj_stack, s), tape.slice0(feature_stack, s));
    outs.push_back(tape.matmul(mixed, weight));
  }
  return tape.prelu(tape.stack0(outs), prelu_slope);
}

Tensor gcn_fuse(Tape& tape, const VlgEmbedding& embedding, const Tensor& adj_spatial,
                const Tensor& adj_temporal, const ModelParams& params) {
  Tensor branch1 = gcn_aggregate(tape, adj_spatial, embedding.spatial,
                                 params.at("gcn.b1s.weight"), params.at("gcn.b1s.prelu"));
  branch1 = gcn_aggregate(tape, adj_temporal, tape.transpose01(branch1),
                          params.at("gcn.b1t.weight"), params.at("gcn.b1t.prelu"));
  branch1 = tape.transpose01(branch1);  // back to frame-major [T x N x D]

  Tensor branch2 = gcn_aggregate(tape, adj_temporal, embedding.temporal,
                                 params.at("gcn.b2t.weight"), params.at("gcn.b2t.prelu"));
  branch2 = gcn_aggregate(tape, adj_spatial, tape.transpose01(branch2),
                          params.at("gcn.b2s.weight"), params.at("gcn.b2s.prelu"));
  return tape.add(branch1, branch2);
}

GaussianField tcn_decode(Tape& tape, const Tensor& fused, const ModelParams& params) {
  const ModelConfig& c = params.config();
  if (fused.rank() != 3 || fused.dims()[0] != c.t_obs || fused.dims()[2] != c.embed_dim) {
    throw ShapeError("tcn_decode: expected [t_obs x N x D], got " + dims_str(fused.dims()));
  }
  const std::size_t t_obs = fused.dims()[0], n = fused.dims()[1], d = fused.dims()[2];

  Tensor head = tape.matmul(tape.reshape(fused, {t_obs * n, d}), params.at("tcn.head.weight"));
  Tensor v = tape.reshape(head, {t_obs, n, 5});

  v = tape.prelu(tape.conv2d_same(v, params.at("tcn.conv0.kernel")),
                 params.at("tcn.conv0.prelu"));
  for (std::size_t k = 1; k < c.tcn_depth; ++k) {
    const std::string base = "tcn.conv" + std::to_string(k);
    Tensor step = tape.prelu(tape.conv2d_same(v, params.at(base + ".kernel")),
                             params.at(base + ".prelu"));
    v = tape.add(step, v);  // residual after the first layer
  }

  GaussianField field;
  field.mu_x = tape.slice_last(v, 0);
  field.mu_y = tape.slice_last(v, 1);
  field.sigma_x = tape.exp(tape.slice_last(v, 2));
  field.sigma_y = tape.exp(tape.slice_last(v, 3));
  field.rho = tape.affine(tape.tanh(tape.slice_last(v, 4)), kRhoClamp, 0.0);
  return field;
}

GaussianField model_forward(Tape& tape, const VlgBatch& batch, const ModelParams& params,
                            ForwardTrace* trace) {
  const ModelConfig& c = params.config();
  if (batch.t_obs() != c.t_obs) {
    throw ShapeError("model_forward: batch has t_obs " + std::to_string(batch.t_obs()) +
                     ", config expects " + std::to_string(c.t_obs));
  }

  VlgEmbedding embedding = vlg_embed(tape, batch, params);

  Tensor attn_spatial = self_attention(tape, embedding.spatial, params.at("attn.spatial.wq"),
                                       params.at("attn.spatial.wk"), batch.spatial_adj);
  Tensor attn_temporal = self_attention(tape, embedding.temporal, params.at("attn.temporal.wq"),
                                        params.at("attn.temporal.wk"), batch.temporal_adj);

  EnhanceKernels spatial_kernels{params.at("enh.spatial.k1x1"), params.at("enh.spatial.k1x3"),
                                 params.at("enh.spatial.k3x1"), params.at("enh.spatial.prelu")};
  EnhanceKernels temporal_kernels{params.at("enh.temporal.k1x1"), params.at("enh.temporal.k1x3"),
                                  params.at("enh.temporal.k3x1"), params.at("enh.temporal.prelu")};
  Tensor enhanced_spatial = feature_enhance(tape, attn_spatial, spatial_kernels, false);
  Tensor enhanced_temporal = feature_enhance(tape, attn_temporal, temporal_kernels, true);

  Tensor mask_spatial = interaction_mask(enhanced_spatial, c.adaptive_mask, c.fixed_threshold);
  Tensor mask_temporal = interaction_mask(enhanced_temporal, c.adaptive_mask, c.fixed_threshold);

  Tensor adj_spatial = sparsify_adjacency(tape, attn_spatial, mask_spatial, batch.spatial_adj);
  Tensor adj_temporal = sparsify_adjacency(tape, attn_temporal, mask_temporal, batch.temporal_adj);

  Tensor fused = gcn_fuse(tape, embedding, adj_spatial, adj_temporal, params);

  if (trace) {
    trace->attention_spatial = attn_spatial;
    trace->attention_temporal = attn_temporal;
    trace->enhanced_spatial = enhanced_spatial;
    trace->enhanced_temporal = enhanced_temporal;
    trace->mask_spatial = mask_spatial;
    trace->mask_temporal = mask_temporal;
    trace->adj_spatial = adj_spatial;
    trace->adj_temporal = adj_temporal;
    trace->fused = fused;
  }
  return tcn_decode(tape, fused, params);
}

}  // namespace msgcn
