// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "muse/config.hpp"

#include <fstream>
#include <sstream>

#include "muse/error.hpp"

namespace muse {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long n = std::stoll(v, &pos);
    if (pos != v.size() || n < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "' expects true|false, got '" + v + "'");
}

std::string fmt_double(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

}  // namespace

ScaleSet Config::scale_set() const { return ScaleSet::parse(scales, grid); }

SsmConfig Config::ssm_config() const {
  SsmConfig s;
  s.channels = channels;
  s.expand = expand;
  s.d_state = d_state;
  s.conv_kernel = conv_kernel;
  s.layers = layers;
  s.variant = variant;
  s.kind = block;
  s.residual = residual;
  return s;
}

void Config::validate() const {
  if (frames == 0 || grid == 0 || channels == 0) throw ConfigError("frames, grid and channels must be positive");
  scale_set();
  try {
    ssm_config().validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  if (!(temperature_init >= kTauMin && temperature_init <= kTauMax)) {
    throw ConfigError("temperature_init must lie in [1e-3, 1]");
  }
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  if (learning_rate < 0.0 || momentum < 0.0 || momentum >= 1.0) throw ConfigError("invalid optimizer settings");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be non-negative (0 disables clipping)");
  if (patch_size == 0 || patch_size > grid) throw ConfigError("patch_size must lie in [1, grid]");
  if (patterns < 2) throw ConfigError("need at least two patterns");
  if (train_pairs < batch_size) throw ConfigError("train_pairs must be at least batch_size");
  if (test_pairs == 0) throw ConfigError("test_pairs must be positive");
  if (!(patch_frame_prob > 0.0 && patch_frame_prob <= 1.0)) throw ConfigError("patch_frame_prob must lie in (0, 1]");
  if (!(amplitude > 0.0) || !(background_noise >= 0.0) || !(text_noise >= 0.0)) {
    throw ConfigError("amplitude must be positive and noise levels non-negative");
  }
  if (conv_stages == 0) throw ConfigError("conv_stages must be positive");
}

void Config::set(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "seed") seed = to_size(key, v);
  else if (key == "frames") frames = to_size(key, v);
  else if (key == "grid") grid = to_size(key, v);
  else if (key == "channels") channels = to_size(key, v);
  else if (key == "scales") scales = v;
  else if (key == "conv_stages") conv_stages = to_size(key, v);
  else if (key == "aggregation") aggregation = parse_aggregation(v);
  else if (key == "layers") layers = to_size(key, v);
  else if (key == "variant") variant = parse_variant(v);
  else if (key == "block") block = parse_block(v);
  else if (key == "residual") residual = to_bool(key, v);
  else if (key == "d_state") d_state = to_size(key, v);
  else if (key == "expand") expand = to_size(key, v);
  else if (key == "conv_kernel") conv_kernel = to_size(key, v);
  else if (key == "pooling") pooling = parse_pooling(v);
  else if (key == "temperature_init") temperature_init = to_double(key, v);
  else if (key == "symmetric_loss") symmetric_loss = to_bool(key, v);
  else if (key == "batch_size") batch_size = to_size(key, v);
  else if (key == "steps") steps = to_size(key, v);
  else if (key == "learning_rate") learning_rate = to_double(key, v);
  else if (key == "momentum") momentum = to_double(key, v);
  else if (key == "grad_clip") grad_clip = to_double(key, v);
  else if (key == "patterns") patterns = to_size(key, v);
  else if (key == "train_pairs") train_pairs = to_size(key, v);
  else if (key == "test_pairs") test_pairs = to_size(key, v);
  else if (key == "patch_size") patch_size = to_size(key, v);
  else if (key == "amplitude") amplitude = to_double(key, v);
  else if (key == "background_noise") background_noise = to_double(key, v);
  else if (key == "text_noise") text_noise = to_double(key, v);
  else if (key == "patch_frame_prob") patch_frame_prob = to_double(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

std::string Config::to_text() const {
  std::ostringstream os;
  os << "seed = " << seed << '\n'
     << "frames = " << frames << '\n'
     << "grid = " << grid << '\n'
     << "channels = " << channels << '\n'
     << "scales = " << scales << '\n'
     << "conv_stages = " << conv_stages << '\n'
     << "aggregation = " << to_string(aggregation) << '\n'
     << "layers = " << layers << '\n'
     << "variant = " << to_string(variant) << '\n'
     << "block = " << to_string(block) << '\n'
     << "residual = " << (residual ? "true" : "false") << '\n'
     << "d_state = " << d_state << '\n'
     << "expand = " << expand << '\n'
     << "conv_kernel = " << conv_kernel << '\n'
     << "pooling = " << to_string(pooling) << '\n'
     << "temperature_init = " << fmt_double(temperature_init) << '\n'
     << "symmetric_loss = " << (symmetric_loss ? "true" : "false") << '\n'
     << "batch_size = " << batch_size << '\n'
     << "steps = " << steps << '\n'
     << "learning_rate = " << fmt_double(learning_rate) << '\n'
     << "momentum = " << fmt_double(momentum) << '\n'
     << "grad_clip = " << fmt_double(grad_clip) << '\n'
     << "patterns = " << patterns << '\n'
     << "train_pairs = " << train_pairs << '\n'
     << "test_pairs = " << test_pairs << '\n'
     << "patch_size = " << patch_size << '\n'
     << "amplitude = " << fmt_double(amplitude) << '\n'
     << "background_noise = " << fmt_double(background_noise) << '\n'
     << "text_noise = " << fmt_double(text_noise) << '\n'
     << "patch_frame_prob = " << fmt_double(patch_frame_prob) << '\n';
  return os.str();
}

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void Config::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << to_text();
}

}  // namespace muse
