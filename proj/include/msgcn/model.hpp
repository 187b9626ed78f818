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

#include <map>
#include <string>
#include <vector>

#include "msgcn/graph.hpp"
#include "msgcn/rng.hpp"
#include "msgcn/tensor.hpp"

namespace msgcn {

struct ModelConfig {
  std::size_t embed_dim = 64;   // D
  std::size_t num_classes = 6;  // L
  std::size_t t_obs = 8;
  std::size_t t_pred = 12;
  std::size_t tcn_depth = 4;

  // Ablation switches. separate_embedding=false folds velocity and label
  // into one joint linear map; use_class_labels=false drops labels entirely
  // (and makes separate_embedding irrelevant); adaptive_mask=false replaces
  // the row-mean threshold with fixed_threshold.
  bool separate_embedding = true;
  bool use_class_labels = true;
  bool adaptive_mask = true;
  double fixed_threshold = 0.5;

  void validate() const;
};

/// Named learnable tensors. The name set and every shape are a pure
/// function of the config; N never appears in a parameter shape.
class ModelParams {
 public:
  ModelParams() = default;
  static ModelParams init(const ModelConfig& config, Rng& rng);

  const ModelConfig& config() const { return config_; }
  const std::map<std::string, Tensor>& tensors() const { return tensors_; }
  std::map<std::string, Tensor>& tensors() { return tensors_; }
  Tensor at(const std::string& name) const;
  std::size_t count() const;  // total scalar parameters
  void zero_grad();

 private:
  ModelConfig config_;
  std::map<std::string, Tensor> tensors_;
  friend ModelParams params_with_tensors(const ModelConfig&, std::map<std::string, Tensor>);
};

/// Rebuild a ModelParams around deserialized tensors, validating the name
/// set and shapes against a freshly initialized layout.
ModelParams params_with_tensors(const ModelConfig& config, std::map<std::string, Tensor> tensors);

/// Per-step displacement distribution for every future frame and agent.
struct GaussianField {
  Tensor mu_x, mu_y;        // [t_pred x N]
  Tensor sigma_x, sigma_y;  // [t_pred x N], positive (exponential link)
  Tensor rho;               // [t_pred x N], |rho| <= 1 - 1e-6 (tanh link)

  std::size_t t_pred() const { return mu_x.dims()[0]; }
  std::size_t num_agents() const { return mu_x.dims()[1]; }
};

struct VlgEmbedding {
  Tensor spatial;   // [t_obs x N x D], frame-major
  Tensor temporal;  // [N x t_obs x D], agent-major view of the same nodes
};

VlgEmbedding vlg_embed(Tape& tape, const VlgBatch& batch, const ModelParams& params);

/// Scaled dot-product self-attention per leading slice of the embedding
/// stack [S x n x D]; struct_mask [n x n] gates the logits. Output [S x n x n].
Tensor self_attention(Tape& tape, const Tensor& embedded, const Tensor& w_q,
                      const Tensor& w_k, const Tensor& struct_mask);

struct EnhanceKernels {
  Tensor k1x1, k1x3, k3x1;  // [co x ci x kh x kw]
  Tensor prelu_slope;       // [1]
};

/// Three parallel asymmetric convolution paths summed, then PReLU.
/// per_channel=true applies single-channel kernels to every channel
/// independently (agent-shared path for the temporal stream).
Tensor feature_enhance(Tape& tape, const Tensor& attention_stack,
                       const EnhanceKernels& kernels, bool per_channel);

/// Binary keep/drop decision per entry of each trailing n x n matrix:
/// keep iff sigmoid(score) strictly exceeds the row mean of sigmoids
/// (adaptive) or fixed_threshold. Not differentiated through; the result
/// is a constant. force_self_loop pins the diagonal to 1 afterwards.
Tensor interaction_mask(const Tensor& scores, bool adaptive, double fixed_threshold,
                        bool force_self_loop = true);

/// Row-stochastic sparse adjacency: rownormalize(A .* M .* S + I) per
/// trailing matrix. struct_mask is [n x n] and applies to every slice.
Tensor sparsify_adjacency(Tape& tape, const Tensor& attention, const Tensor& mask,
                          const Tensor& struct_mask);

/// One neighbor-aggregation hop per slice: prelu(adj . feats . weight).
Tensor gcn_aggregate(Tape& tape, const Tensor& adj_stack, const Tensor& feature_stack,
                     const Tensor& weight, const Tensor& prelu_slope);

/// Dual-branch fusion: spatial-then-temporal plus temporal-then-spatial.
Tensor gcn_fuse(Tape& tape, const VlgEmbedding& embedding, const Tensor& adj_spatial,
                const Tensor& adj_temporal, const ModelParams& params);

/// Feature head D -> 5 per node, then a cascade of temporal convolutions
/// mapping the observed-time channel axis to the prediction horizon.
GaussianField tcn_decode(Tape& tape, const Tensor& fused, const ModelParams& params);

/// Intermediates captured during a forward pass, for inspection and tests.
struct ForwardTrace {
  Tensor attention_spatial;   // [t_obs x N x N]
  Tensor attention_temporal;  // [N x t_obs x t_obs]
  Tensor enhanced_spatial;
  Tensor enhanced_temporal;
  Tensor mask_spatial;
  Tensor mask_temporal;
  Tensor adj_spatial;
  Tensor adj_temporal;
  Tensor fused;  // [t_obs x N x D]
};

GaussianField model_forward(Tape& tape, const VlgBatch& batch, const ModelParams& params,
                            ForwardTrace* trace = nullptr);

}  // namespace msgcn
