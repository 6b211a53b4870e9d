#pragma once

#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "ginv/data.hpp"
#include "ginv/errors.hpp"
#include "ginv/losses.hpp"

namespace ginv {

// All knobs for one experiment, serialized as "key = value" lines. Every key
// is optional in a file; defaults below are the desk-scale recipe.
struct TrainConfig {
  std::uint64_t seed = 1;

  // geometry
  std::size_t substrate_size = 64;
  std::size_t classifier_input = 32;
  std::size_t n = 5;
  std::size_t n_total = 8;
  std::vector<std::size_t> target_indices = {0, 1, 2, 3, 4};
  std::size_t base_channels = 16;
  std::size_t channel_cap = 128;

  // losses
  LossWeights weights;
  float white_threshold = 0.9f;

  // target / tile sampling
  double p_null = 1.0 / 6.0;
  std::size_t max_mixed = 1;
  double tile_sigma = 1.4142135623730951;  // N(+-1, sigma^2) mixture components
  std::size_t crop_count = 3;

  // optimization
  std::size_t batch_size = 2;
  std::size_t steps = 2000;
  double alpha = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  // classifier pre-training
  std::size_t classifier_steps = 2000;
  std::size_t classifier_batch = 16;

  // bookkeeping
  std::size_t checkpoint_interval = 500;
  std::size_t log_interval = 10;
  bool inference_only = false;

  // augmentation
  AugmentationPolicy augmentation;

  // D's "real" pair: (substrate, independent real image) by default, or
  // (substrate, substrate) when set.
  bool real_pair_self = false;

  std::size_t tile_side() const { return substrate_size / 64; }

  void validate() const {
    if (substrate_size == 0 || substrate_size % 64 != 0)
      throw ConfigError("substrate_size must be a positive multiple of 64");
    if (classifier_input == 0 || classifier_input > substrate_size)
      throw ConfigError("classifier_input must be in [1, substrate_size]");
    if (n == 0 || n_total == 0 || n > n_total)
      throw ConfigError("need 0 < n <= n_total");
    if (target_indices.size() != n) throw ConfigError("target_indices must list n indices");
    for (std::size_t i = 0; i < target_indices.size(); ++i) {
      if (target_indices[i] >= n_total) throw ConfigError("target index out of range");
      for (std::size_t j = i + 1; j < target_indices.size(); ++j)
        if (target_indices[i] == target_indices[j])
          throw ConfigError("target_indices must be distinct");
    }
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_mixed < 1 || max_mixed > n) throw ConfigError("max_mixed must be in [1, n]");
    if (p_null < 0.0 || p_null >= 1.0) throw ConfigError("p_null must be in [0, 1)");
    if (white_threshold < -1.0f || white_threshold > 1.0f)
      throw ConfigError("white_threshold must be in [-1, 1]");
    if (crop_count < 1) throw ConfigError("crop_count must be >= 1");
    weights.validate();
    augmentation.validate();
  }
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string join_indices(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

inline std::vector<std::size_t> parse_indices(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(static_cast<std::size_t>(std::stoull(item)));
  return out;
}

}  // namespace detail

// Complete file with every key; parsing this back reproduces the config.
inline std::string emit_config(const TrainConfig& c) {
  std::ostringstream o;
  auto d = detail::fmt_double;
  o << "seed = " << c.seed << "\n";
  o << "substrate_size = " << c.substrate_size << "\n";
  o << "classifier_input = " << c.classifier_input << "\n";
  o << "n = " << c.n << "\n";
  o << "n_total = " << c.n_total << "\n";
  o << "target_indices = " << detail::join_indices(c.target_indices) << "\n";
  o << "base_channels = " << c.base_channels << "\n";
  o << "channel_cap = " << c.channel_cap << "\n";
  o << "w_cgan = " << d(c.weights.w_cgan) << "\n";
  o << "w_mask = " << d(c.weights.w_mask) << "\n";
  o << "w_vgg = " << d(c.weights.w_vgg) << "\n";
  o << "w_sub = " << d(c.weights.w_sub) << "\n";
  o << "white_threshold = " << d(c.white_threshold) << "\n";
  o << "p_null = " << d(c.p_null) << "\n";
  o << "max_mixed = " << c.max_mixed << "\n";
  o << "tile_sigma = " << d(c.tile_sigma) << "\n";
  o << "crop_count = " << c.crop_count << "\n";
  o << "batch_size = " << c.batch_size << "\n";
  o << "steps = " << c.steps << "\n";
  o << "alpha = " << d(c.alpha) << "\n";
  o << "beta1 = " << d(c.beta1) << "\n";
  o << "beta2 = " << d(c.beta2) << "\n";
  o << "epsilon = " << d(c.epsilon) << "\n";
  o << "classifier_steps = " << c.classifier_steps << "\n";
  o << "classifier_batch = " << c.classifier_batch << "\n";
  o << "checkpoint_interval = " << c.checkpoint_interval << "\n";
  o << "log_interval = " << c.log_interval << "\n";
  o << "inference_only = " << (c.inference_only ? "true" : "false") << "\n";
  o << "aug_swap = " << (c.augmentation.enable_swap ? "true" : "false") << "\n";
  o << "aug_shift = " << (c.augmentation.enable_shift ? "true" : "false") << "\n";
  o << "aug_hflip = " << (c.augmentation.enable_hflip ? "true" : "false") << "\n";
  o << "p_swap = " << d(c.augmentation.p_swap) << "\n";
  o << "p_shift = " << d(c.augmentation.p_shift) << "\n";
  o << "p_hflip = " << d(c.augmentation.p_hflip) << "\n";
  o << "real_pair_self = " << (c.real_pair_self ? "true" : "false") << "\n";
  return o.str();
}

inline TrainConfig parse_config(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  auto to_bool = [](const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("bad boolean value: " + v);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string val = trim(stripped.substr(eq + 1));
    try {
      if (key == "seed") c.seed = std::stoull(val);
      else if (key == "substrate_size") c.substrate_size = std::stoull(val);
      else if (key == "classifier_input") c.classifier_input = std::stoull(val);
      else if (key == "n") c.n = std::stoull(val);
      else if (key == "n_total") c.n_total = std::stoull(val);
      else if (key == "target_indices") c.target_indices = detail::parse_indices(val);
      else if (key == "base_channels") c.base_channels = std::stoull(val);
      else if (key == "channel_cap") c.channel_cap = std::stoull(val);
      else if (key == "w_cgan") c.weights.w_cgan = std::stof(val);
      else if (key == "w_mask") c.weights.w_mask = std::stof(val);
      else if (key == "w_vgg") c.weights.w_vgg = std::stof(val);
      else if (key == "w_sub") c.weights.w_sub = std::stof(val);
      else if (key == "white_threshold") c.white_threshold = std::stof(val);
      else if (key == "p_null") c.p_null = std::stod(val);
      else if (key == "max_mixed") c.max_mixed = std::stoull(val);
      else if (key == "tile_sigma") c.tile_sigma = std::stod(val);
      else if (key == "crop_count") c.crop_count = std::stoull(val);
      else if (key == "batch_size") c.batch_size = std::stoull(val);
      else if (key == "steps") c.steps = std::stoull(val);
      else if (key == "alpha") c.alpha = std::stod(val);
      else if (key == "beta1") c.beta1 = std::stod(val);
      else if (key == "beta2") c.beta2 = std::stod(val);
      else if (key == "epsilon") c.epsilon = std::stod(val);
      else if (key == "classifier_steps") c.classifier_steps = std::stoull(val);
      else if (key == "classifier_batch") c.classifier_batch = std::stoull(val);
      else if (key == "checkpoint_interval") c.checkpoint_interval = std::stoull(val);
      else if (key == "log_interval") c.log_interval = std::stoull(val);
      else if (key == "inference_only") c.inference_only = to_bool(val);
      else if (key == "aug_swap") c.augmentation.enable_swap = to_bool(val);
      else if (key == "aug_shift") c.augmentation.enable_shift = to_bool(val);
      else if (key == "aug_hflip") c.augmentation.enable_hflip = to_bool(val);
      else if (key == "p_swap") c.augmentation.p_swap = std::stod(val);
      else if (key == "p_shift") c.augmentation.p_shift = std::stod(val);
      else if (key == "p_hflip") c.augmentation.p_hflip = std::stod(val);
      else if (key == "real_pair_self") c.real_pair_self = to_bool(val);
      else throw ConfigError("unknown key: " + key);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("line " + std::to_string(lineno) + ": bad value for " + key);
    }
  }
  c.validate();
  return c;
}

inline TrainConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace ginv
