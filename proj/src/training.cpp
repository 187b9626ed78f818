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

#include "msgcn/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include "msgcn/graph.hpp"

namespace msgcn {

namespace {

constexpr char kMagic[6] = {'M', 'S', 'G', 'C', 'N', '1'};
constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return true;
}

std::uint64_t get_u64(std::istream& in, const char* what) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw IoError(std::string("checkpoint truncated while reading ") + what);
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.dims()) put_u64(out, d);
  for (double v : t.data()) put_f64(out, v);
}

}  // namespace

Tensor target_displacements(const Scene& scene) {
  const std::size_t n = scene.num_agents(), t_obs = scene.t_obs, t_pred = scene.t_pred;
  Tensor out = Tensor::zeros({t_pred, n, 2});
  for (std::size_t k = 0; k < t_pred; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 2; ++c)
        out.mutable_data()[(k * n + i) * 2 + c] =
            scene.pos(t_obs + k, i, c) - scene.pos(t_obs + k - 1, i, c);
  return out;
}

Tensor bivariate_nll(Tape& tape, const GaussianField& field, const Tensor& targets) {
  const std::size_t t_pred = field.t_pred(), n = field.num_agents();
  if (targets.dims() != Dims{t_pred, n, 2}) {
    throw ShapeError("bivariate_nll: targets " + dims_str(targets.dims()) +
                     " do not match field [" + std::to_string(t_pred) + " x " +
                     std::to_string(n) + " x 2]");
  }
  Tensor dx = Tensor::zeros({t_pred, n});
  Tensor dy = Tensor::zeros({t_pred, n});
  for (std::size_t idx = 0; idx < t_pred * n; ++idx) {
    dx.mutable_data()[idx] = targets.data()[idx * 2];
    dy.mutable_data()[idx] = targets.data()[idx * 2 + 1];
  }

  Tensor term;
  try {
    Tensor ex = tape.sub(dx, field.mu_x);
    Tensor ey = tape.sub(dy, field.mu_y);
    Tensor zx = tape.div(ex, field.sigma_x);
    Tensor zy = tape.div(ey, field.sigma_y);
    Tensor z = tape.sub(tape.add(tape.mul(zx, zx), tape.mul(zy, zy)),
                        tape.scale(tape.mul(field.rho, tape.mul(zx, zy)), 2.0));
    Tensor omr = tape.affine(tape.mul(field.rho, field.rho), -1.0, 1.0);  // 1 - rho^2
    term = tape.add(tape.add(tape.log(field.sigma_x), tape.log(field.sigma_y)),
                    tape.scale(tape.log(omr), 0.5));
    term = tape.add(term, tape.div(z, tape.scale(omr, 2.0)));
    term = tape.affine(term, 1.0, kLogTwoPi);
  } catch (const NumericError& e) {
    // Locate the offending (t, i) from the raw distribution values.
    for (std::size_t t = 0; t < t_pred; ++t)
      for (std::size_t i = 0; i < n; ++i) {
        const bool bad = !std::isfinite(field.mu_x.at(t, i)) ||
                         !std::isfinite(field.mu_y.at(t, i)) ||
                         !std::isfinite(field.sigma_x.at(t, i)) ||
                         !std::isfinite(field.sigma_y.at(t, i)) ||
                         field.sigma_x.at(t, i) <= 0.0 || field.sigma_y.at(t, i) <= 0.0 ||
                         std::fabs(field.rho.at(t, i)) >= 1.0;
        if (bad) {
          throw NumericError("bivariate_nll: non-finite term at (t=" + std::to_string(t) +
                             ", i=" + std::to_string(i) + "): " + e.what());
        }
      }
    throw;
  }
  for (std::size_t idx = 0; idx < term.numel(); ++idx) {
    if (!std::isfinite(term.data()[idx])) {
      throw NumericError("bivariate_nll: non-finite term at (t=" + std::to_string(idx / n) +
                         ", i=" + std::to_string(idx % n) + ")");
    }
  }
  return tape.mean_all(term);
}

AdamState AdamState::init(const ModelParams& params) {
  AdamState state;
  for (const auto& [name, t] : params.tensors()) {
    state.m.emplace(name, Tensor::zeros(t.dims()));
    state.v.emplace(name, Tensor::zeros(t.dims()));
  }
  return state;
}

double clip_gradients(ModelParams& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : params.tensors()) {
    (void)name;
    for (double g : t.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    scale_gradients(params, factor);
  }
  return norm;
}

void adam_step(ModelParams& params, AdamState& state, const PipelineConfig& config,
               std::size_t step_t) {
  if (step_t < 1) throw ConfigError("adam_step: step index is 1-based");
  const double b1 = config.beta1, b2 = config.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step_t));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(step_t));
  for (auto& [name, p] : params.tensors()) {
    const std::vector<double>& g = p.grad();
    Tensor m = state.m.at(name);
    Tensor v = state.v.at(name);
    if (m.numel() != p.numel()) {
      throw ShapeError("adam_step: moment shape mismatch for " + name);
    }
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double mi = b1 * m.data()[i] + (1.0 - b1) * g[i];
      const double vi = b2 * v.data()[i] + (1.0 - b2) * g[i] * g[i];
      m.mutable_data()[i] = mi;
      v.mutable_data()[i] = vi;
      const double m_hat = mi / bias1;
      const double v_hat = vi / bias2;
      p.mutable_data()[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.adam_eps);
    }
  }
}

double accumulate_scene_gradients(ModelParams& params, const Scene& scene) {
  Tape tape;
  VlgBatch batch = build_vlg(scene);
  GaussianField field = model_forward(tape, batch, params);
  Tensor loss = bivariate_nll(tape, field, target_displacements(scene));
  tape.backward(loss);
  return loss.value();
}

void scale_gradients(ModelParams& params, double factor) {
  for (auto& [name, t] : params.tensors()) {
    (void)name;
    for (double& g : t.mutable_grad()) g *= factor;
  }
}

Checkpoint make_initial_checkpoint(const PipelineConfig& config) {
  config.validate();
  Checkpoint ckpt;
  ckpt.config = config;
  Rng rng(config.seed);
  ckpt.params = ModelParams::init(config.model, rng);
  ckpt.adam = AdamState::init(ckpt.params);
  ckpt.progress.rng_state = rng.save_state();
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::string snapshot = serialize_config(ckpt.config, ckpt.progress);
  put_u32(out, static_cast<std::uint32_t>(snapshot.size()));
  out.write(snapshot.data(), static_cast<std::streamsize>(snapshot.size()));
  for (const auto& [name, t] : ckpt.params.tensors()) write_tensor(out, name, t);
  for (const auto& [name, t] : ckpt.adam.m) write_tensor(out, "adam.m." + name, t);
  for (const auto& [name, t] : ckpt.adam.v) write_tensor(out, "adam.v." + name, t);
  if (!out) throw IoError("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[6];
  if (!in.read(magic, 6) || std::memcmp(magic, kMagic, 6) != 0) {
    throw IoError("not a checkpoint file (bad magic): " + path);
  }
  std::uint32_t snap_len = 0;
  if (!get_u32(in, snap_len)) throw IoError("checkpoint truncated (config length): " + path);
  std::string snapshot(snap_len, '\0');
  if (!in.read(snapshot.data(), snap_len)) throw IoError("checkpoint truncated (config): " + path);

  Checkpoint ckpt;
  ckpt.config = parse_config(snapshot, &ckpt.progress);

  std::map<std::string, Tensor> tensors;
  std::uint32_t name_len = 0;
  while (get_u32(in, name_len)) {
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw IoError("checkpoint truncated (name): " + path);
    std::uint32_t rank = 0;
    if (!get_u32(in, rank)) throw IoError("checkpoint truncated (rank): " + path);
    Dims dims(rank);
    std::size_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      dims[r] = static_cast<std::size_t>(get_u64(in, "dims"));
      numel *= dims[r];
    }
    std::vector<double> data(numel);
    for (std::size_t i = 0; i < numel; ++i)
      data[i] = std::bit_cast<double>(get_u64(in, "tensor data"));
    if (!tensors.emplace(name, Tensor::from(dims, std::move(data))).second) {
      throw IoError("duplicate tensor in checkpoint: " + name);
    }
  }

  std::map<std::string, Tensor> param_tensors;
  for (auto& [name, t] : tensors) {
    if (name.rfind("adam.m.", 0) == 0) {
      ckpt.adam.m.emplace(name.substr(7), t);
    } else if (name.rfind("adam.v.", 0) == 0) {
      ckpt.adam.v.emplace(name.substr(7), t);
    } else {
      Tensor p = Tensor::from(t.dims(), t.data(), /*requires_grad=*/true);
      param_tensors.emplace(name, p);
    }
  }
  ckpt.params = params_with_tensors(ckpt.config.model, std::move(param_tensors));
  for (const auto& [name, t] : ckpt.params.tensors()) {
    if (!ckpt.adam.m.count(name) || !ckpt.adam.v.count(name)) {
      throw IoError("checkpoint missing optimizer state for " + name);
    }
    if (ckpt.adam.m.at(name).dims() != t.dims() || ckpt.adam.v.at(name).dims() != t.dims()) {
      throw IoError("optimizer state shape mismatch for " + name);
    }
  }
  return ckpt;
}

namespace {

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Derived generator per epoch; resuming mid-epoch replays the same order.
  Rng rng(seed ^ (0x9e3779b97f4a7c15ull * (epoch + 1)));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.index(i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace

std::vector<StepRecord> train(Checkpoint& ckpt, const std::vector<Scene>& scenes,
                              const TrainIo& io) {
  ckpt.config.validate();
  if (scenes.empty()) throw ConfigError("train: empty dataset");
  for (const Scene& s : scenes) {
    if (s.t_obs != ckpt.config.model.t_obs || s.t_pred != ckpt.config.model.t_pred) {
      throw ConfigError("train: scene window does not match config");
    }
  }
  const PipelineConfig& cfg = ckpt.config;
  const std::size_t n = scenes.size();
  const std::size_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;

  std::ofstream trace;
  if (!io.trace_path.empty()) {
    trace.open(io.trace_path, std::ios::app);
    if (!trace) throw IoError("cannot write loss trace: " + io.trace_path);
  }

  std::vector<StepRecord> records;
  auto save = [&]() {
    if (!io.checkpoint_path.empty()) save_checkpoint(io.checkpoint_path, ckpt);
  };

  while (ckpt.progress.epoch < cfg.epochs &&
         (cfg.max_steps == 0 || ckpt.progress.global_step < cfg.max_steps)) {
    const std::size_t epoch = ckpt.progress.epoch;
    if (ckpt.progress.global_step < epoch * batches_per_epoch ||
        ckpt.progress.global_step - epoch * batches_per_epoch >= batches_per_epoch) {
      throw ConfigError("train: resume position does not match the dataset/batch size");
    }
    const std::size_t step_in_epoch = ckpt.progress.global_step - epoch * batches_per_epoch;
    const std::vector<std::size_t> order = epoch_order(cfg.seed, epoch, n);

    const std::size_t begin = step_in_epoch * cfg.batch_size;
    const std::size_t end = std::min(begin + cfg.batch_size, n);

    ckpt.params.zero_grad();
    double loss_sum = 0.0;
    for (std::size_t b = begin; b < end; ++b) {
      loss_sum += accumulate_scene_gradients(ckpt.params, scenes[order[b]]);
    }
    const double batch_count = static_cast<double>(end - begin);
    scale_gradients(ckpt.params, 1.0 / batch_count);
    if (cfg.clip_norm > 0.0) clip_gradients(ckpt.params, cfg.clip_norm);

    ckpt.progress.adam_step += 1;
    adam_step(ckpt.params, ckpt.adam, cfg, ckpt.progress.adam_step);
    ckpt.progress.global_step += 1;
    if (step_in_epoch + 1 == batches_per_epoch) ckpt.progress.epoch += 1;

    StepRecord rec{epoch, ckpt.progress.global_step, loss_sum / batch_count};
    records.push_back(rec);
    if (trace.is_open()) {
      char line[96];
      std::snprintf(line, sizeof(line), "%zu\t%zu\t%.17g\n", rec.epoch, rec.global_step, rec.loss);
      trace << line;
      trace.flush();
    }

    const bool epoch_end = step_in_epoch + 1 == batches_per_epoch;
    if (cfg.checkpoint_every > 0
            ? ckpt.progress.global_step % cfg.checkpoint_every == 0
            : epoch_end) {
      save();
    }
  }
  save();
  return records;
}

}  // namespace msgcn
