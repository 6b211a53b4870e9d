#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ginv/rng.hpp"
#include "ginv/tensor.hpp"

namespace ginv {

// ---------------------------------------------------------------------------
// Target vector and tiled class input
// ---------------------------------------------------------------------------

// Binary class-selection vector t; one is sampled per batch.
struct TargetVector {
  std::vector<int> t;

  std::size_t popcount() const {
    std::size_t c = 0;
    for (int b : t) c += static_cast<std::size_t>(b);
    return c;
  }
  bool is_null() const { return popcount() == 0; }
};

// Null vector with probability p_null; otherwise k one-bits at distinct
// uniform positions, k uniform in {1..max_mixed}.
inline TargetVector sample_target(std::size_t n, double p_null, std::size_t max_mixed,
                                  Rng& rng) {
  if (max_mixed < 1 || max_mixed > n)
    throw ShapeError("sample_target: max_mixed out of range");
  if (p_null < 0.0 || p_null > 1.0) throw ShapeError("sample_target: bad p_null");
  TargetVector tv;
  tv.t.assign(n, 0);
  if (rng.bernoulli(p_null)) return tv;
  const std::size_t k = 1 + rng.uniform_index(max_mixed);
  std::size_t placed = 0;
  while (placed < k) {
    const std::size_t pos = rng.uniform_index(n);
    if (tv.t[pos] == 0) {
      tv.t[pos] = 1;
      ++placed;
    }
  }
  return tv;
}

// f(t): plane i is zero when t_i = 0, otherwise each element comes from an
// equal mixture of N(+1, sigma^2) and N(-1, sigma^2). This tile is the
// GAN's only noise source.
inline Tensor sample_class_tile(const TargetVector& t, std::size_t s, Rng& rng,
                                double sigma = 1.4142135623730951) {
  if (s < 1) throw ShapeError("sample_class_tile: tile side must be >= 1");
  const std::size_t n = t.t.size();
  std::vector<float> data(n * s * s, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    if (t.t[i] == 0) continue;
    for (std::size_t j = 0; j < s * s; ++j) {
      const double mu = rng.bernoulli(0.5) ? 1.0 : -1.0;
      data[i * s * s + j] = static_cast<float>(rng.normal(mu, sigma));
    }
  }
  return Tensor::create({n, s, s}, std::move(data));
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

enum class Act { PRelu, Tanh, Sigmoid, None };

struct ConvLayer {
  Tensor v, g, b;  // weight-normalized parameters
  Tensor a;        // PReLU slope, valid only when act == PRelu
  std::size_t stride = 2;
  std::size_t padding = 1;
  bool transpose = false;
  Act act = Act::PRelu;
};

// v ~ N(0, 0.02), g = ||v|| per output channel, zero bias, PReLU slope 0.2.
inline ConvLayer make_conv_layer(std::size_t cin, std::size_t cout, std::size_t k, Rng& rng,
                                 bool transpose = false, Act act = Act::PRelu) {
  ConvLayer l;
  l.transpose = transpose;
  l.act = act;
  std::vector<float> v(cout * cin * k * k);
  for (auto& x : v) x = static_cast<float>(rng.normal(0.0, 0.02));
  l.v = Tensor::create({cout, cin, k, k}, std::move(v), true);
  std::vector<float> g(cout);
  const std::size_t per = cin * k * k;
  for (std::size_t co = 0; co < cout; ++co) {
    float s = 0.0f;
    for (std::size_t i = 0; i < per; ++i) {
      const float x = l.v.value()[co * per + i];
      s += x * x;
    }
    g[co] = std::sqrt(s);
  }
  l.g = Tensor::create({cout}, std::move(g), true);
  l.b = Tensor::zeros({cout}, true);
  l.a = Tensor::create({1}, {0.2f}, true);
  return l;
}

template <typename T = float>
inline Tensor apply_layer(const ConvLayer& l, const Tensor& x) {
  Tensor y = l.transpose ? conv_transpose2d(x, l.v, l.g, l.b, l.stride, l.padding)
                         : conv2d(x, l.v, l.g, l.b, l.stride, l.padding);
  switch (l.act) {
    case Act::PRelu:
      return prelu(y, l.a);
    case Act::Tanh:
      return tanh_(y);
    case Act::Sigmoid:
      return sigmoid_(y);
    case Act::None:
      return y;
  }
  return y;
}

inline void collect_layer(const std::string& prefix, const ConvLayer& l,
                          std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".v", l.v);
  out.emplace_back(prefix + ".g", l.g);
  out.emplace_back(prefix + ".b", l.b);
  if (l.act == Act::PRelu) out.emplace_back(prefix + ".a", l.a);
}

// ---------------------------------------------------------------------------
// Generator: six stride-2 conv layers down to the tile resolution, six
// transposed-conv layers back up, skip concatenation at matching
// resolutions, tanh output.
// ---------------------------------------------------------------------------

struct GeneratorSpec {
  std::size_t substrate_size = 64;
  std::size_t n = 5;
  std::size_t base_channels = 16;
  std::size_t channel_cap = 128;

  static constexpr std::size_t kDepth = 6;  // fixed 64x geometry: S -> S/64

  std::size_t tile_side() const { return substrate_size / 64; }
  std::size_t channels(std::size_t i) const {
    return std::min(base_channels << i, channel_cap);
  }
  void validate() const {
    if (substrate_size == 0 || substrate_size % 64 != 0)
      throw ShapeError("GeneratorSpec: substrate_size must be a positive multiple of 64");
    if (n == 0) throw ShapeError("GeneratorSpec: n must be positive");
  }
};

struct Generator {
  GeneratorSpec spec;
  std::vector<ConvLayer> enc;  // kDepth layers
  std::vector<ConvLayer> dec;  // kDepth layers

  static Generator init(const GeneratorSpec& spec, Rng& rng) {
    spec.validate();
    Generator g;
    g.spec = spec;
    std::size_t cin = 3;
    for (std::size_t i = 0; i < GeneratorSpec::kDepth; ++i) {
      const std::size_t cout = spec.channels(i);
      g.enc.push_back(make_conv_layer(cin, cout, 4, rng));
      cin = cout;
    }
    cin = spec.n;  // the tile is the sole decoder seed
    for (std::size_t i = 0; i < GeneratorSpec::kDepth; ++i) {
      const bool last = i + 1 == GeneratorSpec::kDepth;
      const std::size_t cout = last ? 3 : spec.channels(4 - i);
      g.dec.push_back(make_conv_layer(cin, cout, 4, rng, true, last ? Act::Tanh : Act::PRelu));
      cin = last ? 3 : cout + spec.channels(4 - i);  // skip concat doubles the input
    }
    return g;
  }

  // substrate [B,3,S,S], tile [B,n,s,s] -> [B,3,S,S] in (-1,1)
  Tensor forward(const Tensor& substrate, const Tensor& tile) const {
    if (substrate.rank() != 4 || substrate.dim(1) != 3 ||
        substrate.dim(2) != spec.substrate_size || substrate.dim(3) != spec.substrate_size)
      throw ShapeError("generator_forward: bad substrate shape");
    if (tile.rank() != 4 || tile.dim(1) != spec.n || tile.dim(2) != spec.tile_side() ||
        tile.dim(3) != spec.tile_side())
      throw ShapeError("generator_forward: bad tile shape");
    std::vector<Tensor> feats;
    Tensor x = substrate;
    for (const auto& l : enc) {
      x = apply_layer(l, x);
      feats.push_back(x);
    }
    Tensor y = tile;
    for (std::size_t i = 0; i < dec.size(); ++i) {
      y = apply_layer(dec[i], y);
      if (i + 1 < dec.size()) y = concat_channels(y, feats[4 - i]);
    }
    return y;
  }

  std::vector<std::pair<std::string, Tensor>> named_params(const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t i = 0; i < enc.size(); ++i)
      collect_layer(prefix + ".enc" + std::to_string(i), enc[i], out);
    for (std::size_t i = 0; i < dec.size(); ++i)
      collect_layer(prefix + ".dec" + std::to_string(i), dec[i], out);
    return out;
  }
};

// ---------------------------------------------------------------------------
// PatchGAN discriminator on the channel-stacked (substrate, image) pair.
// ---------------------------------------------------------------------------

struct DiscriminatorSpec {
  std::size_t substrate_size = 64;
  std::size_t base_channels = 16;
  std::size_t channel_cap = 128;
  std::size_t layers = 4;

  std::size_t patch_side() const { return substrate_size >> layers; }
  void validate() const {
    if (substrate_size >> layers == 0)
      throw ShapeError("DiscriminatorSpec: too many layers for the input size");
  }
};

struct Discriminator {
  DiscriminatorSpec spec;
  std::vector<ConvLayer> stack;

  static Discriminator init(const DiscriminatorSpec& spec, Rng& rng) {
    spec.validate();
    Discriminator d;
    d.spec = spec;
    std::size_t cin = 6;
    for (std::size_t i = 0; i + 1 < spec.layers; ++i) {
      const std::size_t cout = std::min(spec.base_channels << i, spec.channel_cap);
      d.stack.push_back(make_conv_layer(cin, cout, 4, rng));
      cin = cout;
    }
    d.stack.push_back(make_conv_layer(cin, 1, 4, rng, false, Act::Sigmoid));
    return d;
  }

  // Each output cell is the probability that its receptive-field patch is real.
  Tensor forward(const Tensor& substrate, const Tensor& image) const {
    if (!substrate.same_shape(image))
      throw ShapeError("discriminator_forward: input shape mismatch");
    Tensor x = concat_channels(substrate, image);
    for (const auto& l : stack) x = apply_layer(l, x);
    return x;
  }

  std::vector<std::pair<std::string, Tensor>> named_params(const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t i = 0; i < stack.size(); ++i)
      collect_layer(prefix + ".l" + std::to_string(i), stack[i], out);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Victim classifier: small conv stack plus a dense softmax head.
// ---------------------------------------------------------------------------

struct ClassifierSpec {
  std::size_t input_size = 32;
  std::size_t n_total = 8;
  std::size_t base_channels = 16;
  std::size_t channel_cap = 128;
  std::size_t conv_layers = 3;

  std::size_t feature_side() const { return input_size >> conv_layers; }
  std::size_t feature_channels() const {
    return std::min(base_channels << (conv_layers - 1), channel_cap);
  }
  void validate() const {
    if (input_size >> conv_layers == 0)
      throw ShapeError("ClassifierSpec: input too small for the conv stack");
    if (n_total == 0) throw ShapeError("ClassifierSpec: n_total must be positive");
  }
};

struct Classifier {
  ClassifierSpec spec;
  std::vector<ConvLayer> convs;
  Tensor fc_w, fc_b;

  static Classifier init(const ClassifierSpec& spec, Rng& rng) {
    spec.validate();
    Classifier c;
    c.spec = spec;
    std::size_t cin = 3;
    for (std::size_t i = 0; i < spec.conv_layers; ++i) {
      const std::size_t cout = std::min(spec.base_channels << i, spec.channel_cap);
      c.convs.push_back(make_conv_layer(cin, cout, 4, rng));
      cin = cout;
    }
    const std::size_t feat = spec.feature_channels() * spec.feature_side() * spec.feature_side();
    std::vector<float> w(spec.n_total * feat);
    for (auto& x : w) x = static_cast<float>(rng.normal(0.0, 0.02));
    c.fc_w = Tensor::create({spec.n_total, feat}, std::move(w), true);
    c.fc_b = Tensor::zeros({spec.n_total}, true);
    return c;
  }

  // image [B,3,c,c] -> probabilities [B,n_total], rows summing to 1.
  Tensor forward(const Tensor& image) const {
    if (image.rank() != 4 || image.dim(1) != 3 || image.dim(2) != spec.input_size ||
        image.dim(3) != spec.input_size)
      throw ShapeError("classifier_forward: bad input shape");
    Tensor x = image;
    for (const auto& l : convs) x = apply_layer(l, x);
    x = reshape(x, {image.dim(0), x.size() / image.dim(0)});
    x = linear(x, fc_w, fc_b);
    return softmax_rows(x);
  }

  std::vector<std::pair<std::string, Tensor>> named_params(const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t i = 0; i < convs.size(); ++i)
      collect_layer(prefix + ".conv" + std::to_string(i), convs[i], out);
    out.emplace_back(prefix + ".fc.w", fc_w);
    out.emplace_back(prefix + ".fc.b", fc_b);
    return out;
  }
};

// Flat parameter list (checkpoint order) for the optimizer.
inline std::vector<Tensor> param_list(
    const std::vector<std::pair<std::string, Tensor>>& named) {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const auto& [name, t] : named) out.push_back(t);
  return out;
}

}  // namespace ginv
