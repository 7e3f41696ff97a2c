// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "muse/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "muse/error.hpp"
#include "muse/ops.hpp"
#include "muse/retrieval.hpp"
#include "muse/rng.hpp"
#include "muse/tensor_io.hpp"

namespace muse {

namespace {

constexpr std::uint64_t kBatchStream = 0x165667B19E3779F9ULL;

Tensor gather_texts(const Tensor& texts, const std::vector<std::size_t>& rows) {
  const std::size_t C = texts.dim(1);
  Tensor out(Shape{rows.size(), C});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(texts.ptr() + rows[i] * C, C, out.ptr() + i * C);
  }
  return out;
}

std::vector<std::size_t> diagonal(std::size_t n) {
  std::vector<std::size_t> d(n);
  std::iota(d.begin(), d.end(), 0);
  return d;
}

std::string describe_failure(std::size_t step, double loss, const std::vector<std::size_t>& batch,
                             const MuseModel& model, const Gradients& grads) {
  std::ostringstream os;
  os << "step " << step << ": loss = " << loss << "\nbatch:";
  for (std::size_t i : batch) os << ' ' << i;
  os << "\ntemperature: " << model.temperature() << "\nnon-finite parameters:";
  for (ParamId id = 0; id < model.store.size(); ++id) {
    if (!model.store.value(id).all_finite()) os << ' ' << model.store.name(id) << "(value)";
  }
  for (const auto& [id, g] : grads) {
    if (!g.all_finite()) os << ' ' << model.store.name(id) << "(grad)";
  }
  os << '\n';
  return os.str();
}

void dump_batch(const std::filesystem::path& dir, const SyntheticPairSet& data,
                const std::vector<std::size_t>& batch, const std::string& diagnostic) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "diverged.txt") << diagnostic;
  for (std::size_t i : batch) {
    io::save_tensor(dir / ("video_" + std::to_string(i) + ".bin"), data.videos[i]);
  }
  io::save_tensor(dir / "texts.bin", gather_texts(data.texts, batch));
}

}  // namespace

TrainingDiverged::TrainingDiverged(std::size_t step, std::string diagnostic)
    : std::runtime_error("training diverged at step " + std::to_string(step)),
      step_(step),
      diagnostic_(std::move(diagnostic)) {}

std::vector<std::vector<std::size_t>> make_batches(const Config& cfg, const SyntheticPairSet& data) {
  const std::size_t B = cfg.batch_size;
  if (data.train.size() < B) {
    throw ConfigError("batch_size " + std::to_string(B) + " exceeds train split of " +
                      std::to_string(data.train.size()));
  }
  Rng rng(cfg.seed ^ kBatchStream);
  std::vector<std::vector<std::size_t>> batches;
  batches.reserve(cfg.steps);
  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  while (batches.size() < cfg.steps) {
    if (cursor + B > order.size()) {
      order = data.train;
      std::shuffle(order.begin(), order.end(), rng.engine());
      cursor = 0;
    }
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                         order.begin() + static_cast<std::ptrdiff_t>(cursor + B));
    cursor += B;
  }
  return batches;
}

double batch_loss(const MuseModel& model, const SyntheticPairSet& data, const std::vector<std::size_t>& batch,
                  Gradients* grads) {
  Graph g(grads ? Graph::Mode::Training : Graph::Mode::Inference);
  std::vector<Var> embeddings;
  embeddings.reserve(batch.size());
  for (std::size_t i : batch) {
    Var e = model.encode(g, g.constant(data.videos[i]));
    embeddings.push_back(ops::reshape(e, Shape{1, e.shape()[0]}));
  }
  Var videos = ops::concat_rows(embeddings);
  Var texts = g.constant(gather_texts(data.texts, batch));
  Var sim = similarity(texts, videos);
  Var loss = info_nce(sim, model.temperature(g), diagonal(batch.size()), model.config.symmetric_loss);
  const double value = loss.value().item();
  if (grads && std::isfinite(value)) *grads = g.backward(loss);
  return value;
}

TrainResult train(const Config& cfg, const SyntheticPairSet& data, const TrainOptions& options) {
  cfg.validate();
  if (data.texts.dim(1) != cfg.channels) throw ConfigError("dataset channel count does not match config");
  TrainResult result{MuseModel::create(cfg), {}, {}};
  MuseModel& model = result.model;
  const auto batches = make_batches(cfg, data);

  std::vector<Tensor> velocity;
  velocity.reserve(model.store.size());
  for (ParamId id = 0; id < model.store.size(); ++id) velocity.emplace_back(model.store.value(id).shape());

  const double log_tau_min = std::log(kTauMin);
  const double log_tau_max = std::log(kTauMax);
  result.loss_curve.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Gradients grads;
    const double loss = batch_loss(model, data, batches[step], &grads);
    const bool grads_ok = std::all_of(grads.begin(), grads.end(), [](const auto& kv) { return kv.second.all_finite(); });
    if (!std::isfinite(loss) || !grads_ok) {
      std::string diagnostic = describe_failure(step, loss, batches[step], model, grads);
      if (!options.dump_dir.empty()) dump_batch(options.dump_dir, data, batches[step], diagnostic);
      throw TrainingDiverged(step, std::move(diagnostic));
    }
    result.loss_curve.push_back(loss);
    result.temperature_curve.push_back(model.temperature());
    if (options.on_step) options.on_step(step, loss);

    if (cfg.learning_rate == 0.0) continue;
    double factor = 1.0;
    if (cfg.grad_clip > 0.0) {
      double sq = 0.0;
      for (const auto& [id, grad] : grads) {
        for (double v : grad.data()) sq += v * v;
      }
      const double norm = std::sqrt(sq);
      if (norm > cfg.grad_clip) factor = cfg.grad_clip / norm;
    }
    for (auto& [id, grad] : grads) {
      Tensor& v = velocity[id];
      Tensor& w = model.store.value(id);
      double* vp = v.ptr();
      double* wp = w.ptr();
      const double* gp = grad.ptr();
      for (std::size_t i = 0; i < w.numel(); ++i) {
        vp[i] = cfg.momentum * vp[i] + factor * gp[i];
        wp[i] -= cfg.learning_rate * vp[i];
      }
    }
    double& lt = model.store.value(model.log_tau).ptr()[0];
    lt = std::clamp(lt, log_tau_min, log_tau_max);
  }
  return result;
}

SimilarityMatrix text_to_video(const MuseModel& model, const SyntheticPairSet& data,
                               const std::vector<std::size_t>& indices) {
  std::vector<Tensor> videos;
  videos.reserve(indices.size());
  for (std::size_t i : indices) videos.push_back(data.videos[i]);
  const Tensor v = model.encode_all(videos);
  const Tensor t = gather_texts(data.texts, indices);
  return SimilarityMatrix::paired(similarity(t, v));
}

RetrievalReport evaluate(const MuseModel& model, const SyntheticPairSet& data) {
  if (data.texts.dim(1) != model.config.channels) throw ConfigError("dataset channel count does not match model");
  return make_report(text_to_video(model, data, data.test));
}

}  // namespace muse
