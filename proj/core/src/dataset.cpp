// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "muse/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "muse/error.hpp"
#include "muse/rng.hpp"
#include "muse/tensor_io.hpp"

namespace muse {

namespace {

constexpr std::uint64_t kDataStream = 0x9E3779B97F4A7C15ULL;

void normalize(std::span<double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  s = std::sqrt(s);
  for (double& x : v) x /= s;
}

std::vector<double> unit_vector(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  normalize(v);
  return v;
}

}  // namespace

SyntheticPairSet gen_data(const Config& cfg) {
  if (cfg.patch_size == 0 || cfg.patch_size > cfg.grid) {
    throw ConfigError("patch_size " + std::to_string(cfg.patch_size) + " does not fit grid " + std::to_string(cfg.grid));
  }
  cfg.validate();
  Rng rng(cfg.seed ^ kDataStream);
  const std::size_t T = cfg.frames, G = cfg.grid, C = cfg.channels, k = cfg.patch_size;
  const std::size_t cells = k * k;

  // One signal vector per pattern, norm amplitude * sqrt(C), written into
  // every cell of the patch. Its per-channel values stay below the typical
  // per-channel frame maximum of the background, so a frame-level max-pool
  // mostly misses it while a local window sees it.
  std::vector<std::vector<double>> signals;
  for (std::size_t m = 0; m < cfg.patterns; ++m) {
    auto v = unit_vector(rng, C);
    for (double& x : v) x *= cfg.amplitude * std::sqrt(static_cast<double>(C));
    signals.push_back(std::move(v));
  }

  // The text direction of a pattern is its planted signal direction, so a
  // model that locates the patch can read the answer off its features.
  std::vector<std::vector<double>> text_vectors;
  for (const auto& v : signals) {
    std::vector<double> p = v;
    normalize(p);
    text_vectors.push_back(std::move(p));
  }

  SyntheticPairSet data;
  const std::size_t pairs = cfg.train_pairs + cfg.test_pairs;
  data.texts = Tensor(Shape{pairs, C});
  const double text_sigma = cfg.text_noise / std::sqrt(static_cast<double>(C));
  for (std::size_t i = 0; i < pairs; ++i) {
    const std::size_t m = rng.index(cfg.patterns);
    data.pattern_of.push_back(m);

    Tensor video(Shape{T, G, G, C});
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t j = 0; j < G * G * C; ++j) {
        video[t * G * G * C + j] = rng.normal(0.0, cfg.background_noise);
      }
    }
    std::vector<bool> planted(T);
    for (std::size_t t = 0; t < T; ++t) planted[t] = rng.uniform() < cfg.patch_frame_prob;
    if (std::none_of(planted.begin(), planted.end(), [](bool b) { return b; })) planted[rng.index(T)] = true;
    for (std::size_t t = 0; t < T; ++t) {
      if (!planted[t]) continue;
      const std::size_t r0 = rng.index(G - k + 1), c0 = rng.index(G - k + 1);
      for (std::size_t cell = 0; cell < cells; ++cell) {
        const std::size_t r = r0 + cell / k, c = c0 + cell % k;
        double* dst = video.ptr() + ((t * G + r) * G + c) * C;
        for (std::size_t ch = 0; ch < C; ++ch) dst[ch] += signals[m][ch];
      }
    }
    // Re-centre every frame to zero mean per channel.
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t c = 0; c < C; ++c) {
        double mean = 0.0;
        for (std::size_t p = 0; p < G * G; ++p) mean += video[(t * G * G + p) * C + c];
        mean /= static_cast<double>(G * G);
        for (std::size_t p = 0; p < G * G; ++p) video[(t * G * G + p) * C + c] -= mean;
      }
    }
    data.videos.push_back(std::move(video));

    std::vector<double> text(C);
    for (std::size_t c = 0; c < C; ++c) text[c] = text_vectors[m][c] + rng.normal(0.0, text_sigma);
    normalize(text);
    std::copy(text.begin(), text.end(), data.texts.ptr() + i * C);

    (i < cfg.train_pairs ? data.train : data.test).push_back(i);
  }
  return data;
}

void save_dataset(const std::filesystem::path& dir, const SyntheticPairSet& data) {
  if (data.videos.empty()) throw ContractError("save_dataset: empty dataset");
  std::filesystem::create_directories(dir);
  Shape vshape{data.videos.size()};
  const Shape& one = data.videos.front().shape();
  vshape.insert(vshape.end(), one.begin(), one.end());
  Tensor all(vshape);
  const std::size_t stride = data.videos.front().numel();
  for (std::size_t i = 0; i < data.videos.size(); ++i) {
    std::copy(data.videos[i].data().begin(), data.videos[i].data().end(), all.ptr() + i * stride);
  }
  io::save_tensor(dir / "videos.bin", all);
  io::save_tensor(dir / "texts.bin", data.texts);
  Tensor patterns(Shape{data.size()}), split(Shape{data.size()});
  for (std::size_t i = 0; i < data.size(); ++i) patterns[i] = static_cast<double>(data.pattern_of[i]);
  for (std::size_t i : data.test) split[i] = 1.0;
  io::save_tensor(dir / "patterns.bin", patterns);
  io::save_tensor(dir / "split.bin", split);
}

SyntheticPairSet load_dataset(const std::filesystem::path& dir) {
  const Tensor all = io::load_tensor(dir / "videos.bin");
  if (all.rank() != 5) throw DimensionError("videos.bin must have rank 5, got " + shape_str(all.shape()));
  SyntheticPairSet data;
  data.texts = io::load_tensor(dir / "texts.bin");
  const Tensor patterns = io::load_tensor(dir / "patterns.bin");
  const Tensor split = io::load_tensor(dir / "split.bin");
  const std::size_t n = all.dim(0);
  if (data.texts.dim(0) != n || patterns.numel() != n || split.numel() != n) {
    throw DimensionError("dataset files disagree on pair count");
  }
  const Shape one{all.dim(1), all.dim(2), all.dim(3), all.dim(4)};
  const std::size_t stride = shape_numel(one);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(all.data().begin() + static_cast<std::ptrdiff_t>(i * stride),
                          all.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * stride));
    data.videos.emplace_back(one, std::move(v));
    data.pattern_of.push_back(static_cast<std::size_t>(patterns[i]));
    (split[i] == 0.0 ? data.train : data.test).push_back(i);
  }
  return data;
}

}  // namespace muse
