// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "muse/model.hpp"

#include <array>
#include <cmath>
#include <fstream>

#include "muse/error.hpp"
#include "muse/ops.hpp"
#include "muse/retrieval.hpp"
#include "muse/tensor_io.hpp"

namespace muse {

namespace {

constexpr std::array<char, 4> kCheckpointMagic = {'M', 'S', 'C', 'K'};
constexpr std::uint64_t kModelStream = 0xC2B2AE3D27D4EB4FULL;

}  // namespace

MuseModel MuseModel::create(const Config& config) {
  config.validate();
  MuseModel m;
  m.config = config;
  Rng rng(config.seed ^ kModelStream);
  const ScaleSet scales = config.scale_set();
  m.pyramid = init_pyramid_params(m.store, scales, config.channels, rng, config.conv_stages);
  m.learner = init_res_mamba(m.store, config.ssm_config(), rng);
  m.layout = make_layout(config.aggregation, scales, config.frames);
  m.log_tau = m.store.add("head.log_tau", Tensor::scalar(std::log(config.temperature_init)));
  return m;
}

Var MuseModel::encode_tokens(Graph& g, Var video) const {
  const std::vector<Var> grids = generate_pyramid(g, video, store, pyramid);
  Var seq = aggregate(grids, layout);
  return res_mamba(seq, store, learner);
}

Var MuseModel::encode(Graph& g, Var video) const {
  return pool_video(encode_tokens(g, video), layout, config.pooling);
}

Tensor MuseModel::encode_all(std::span<const Tensor> videos) const {
  const std::size_t C = config.channels;
  Tensor out(Shape{videos.size(), C});
  for (std::size_t i = 0; i < videos.size(); ++i) {
    Graph g(Graph::Mode::Inference);
    const Tensor& e = encode(g, g.constant(videos[i])).value();
    std::copy(e.data().begin(), e.data().end(), out.ptr() + i * C);
  }
  return out;
}

Var MuseModel::temperature(Graph& g) const { return ops::exp(g.param(store, log_tau)); }

double MuseModel::temperature() const { return std::exp(store.value(log_tau).item()); }

void MuseModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  const std::string cfg = config.to_text();
  const std::uint64_t cfg_len = cfg.size();
  out.write(reinterpret_cast<const char*>(&cfg_len), sizeof(cfg_len));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  const std::uint64_t count = store.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (ParamId id = 0; id < store.size(); ++id) {
    const std::string& name = store.name(id);
    const std::uint64_t len = name.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    io::write_tensor(out, store.value(id));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

MuseModel MuseModel::load(const std::filesystem::path& path, const Config& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kCheckpointMagic) throw ConfigError("not a checkpoint file: " + path.string());
  std::uint64_t cfg_len = 0;
  in.read(reinterpret_cast<char*>(&cfg_len), sizeof(cfg_len));
  std::string saved_cfg(cfg_len, '\0');
  in.read(saved_cfg.data(), static_cast<std::streamsize>(cfg_len));

  MuseModel m = create(config);
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in || count != m.store.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(count) + " parameters, config expects " +
                      std::to_string(m.store.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string name(len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(len));
    Tensor value = io::read_tensor(in);
    const auto id = m.store.find(name);
    if (!id) throw ConfigError("checkpoint parameter '" + name + "' not present in config");
    if (m.store.value(*id).shape() != value.shape()) {
      throw ConfigError("checkpoint parameter '" + name + "' has shape " + shape_str(value.shape()) +
                        ", config expects " + shape_str(m.store.value(*id).shape()));
    }
    m.store.value(*id) = std::move(value);
  }
  return m;
}

}  // namespace muse
