#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "ginv/image.hpp"
#include "ginv/rng.hpp"

namespace ginv {

// ---------------------------------------------------------------------------
// Augmentations (8-bit semantics where the acceptance rules demand it)
// ---------------------------------------------------------------------------

struct AugmentationPolicy {
  bool enable_swap = true;
  bool enable_shift = true;
  bool enable_hflip = true;
  double p_swap = 0.5;
  double p_shift = 0.5;
  double p_hflip = 0.5;

  void validate() const {
    for (double p : {p_swap, p_shift, p_hflip})
      if (p < 0.0 || p > 1.0) throw ConfigError("AugmentationPolicy: probability out of range");
  }
};

// Uniformly random non-identity permutation of the colour axes.
inline ImageSample colour_swap(const ImageSample& img, Rng& rng) {
  static const int kPerms[5][3] = {{0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  const int* perm = kPerms[rng.uniform_index(5)];
  const std::size_t H = img.height(), W = img.width(), HW = H * W;
  std::vector<float> out(3 * HW);
  for (std::size_t c = 0; c < 3; ++c)
    std::copy(img.pixels.value().begin() + perm[c] * HW,
              img.pixels.value().begin() + (perm[c] + 1) * HW, out.begin() + c * HW);
  ImageSample res;
  res.pixels = Tensor::create({3, H, W}, std::move(out));
  res.label = img.label;
  return res;
}

namespace detail {
inline std::size_t distinct_triples(const std::vector<std::uint8_t>& rgb) {
  std::unordered_set<std::uint32_t> seen;
  for (std::size_t i = 0; i < rgb.size(); i += 3)
    seen.insert(static_cast<std::uint32_t>(rgb[i]) << 16 |
                static_cast<std::uint32_t>(rgb[i + 1]) << 8 | rgb[i + 2]);
  return seen.size();
}
}  // namespace detail

// Try channels in random order; set one to 255 everywhere if that keeps the
// number of distinct RGB triples unchanged. Unchanged input if none qualifies.
inline ImageSample colour_shift(const ImageSample& img, Rng& rng) {
  auto rgb = image_to_bytes(img);
  const std::size_t before = detail::distinct_triples(rgb);
  std::size_t order[3] = {0, 1, 2};
  for (std::size_t i = 2; i > 0; --i) std::swap(order[i], order[rng.uniform_index(i + 1)]);
  for (std::size_t oi = 0; oi < 3; ++oi) {
    auto candidate = rgb;
    for (std::size_t p = order[oi]; p < candidate.size(); p += 3) candidate[p] = 255;
    if (detail::distinct_triples(candidate) == before) {
      auto res = image_from_bytes(candidate, img.height(), img.width(), img.label);
      return res;
    }
  }
  return img;
}

inline ImageSample hflip(const ImageSample& img) {
  const std::size_t H = img.height(), W = img.width();
  std::vector<float> out(3 * H * W);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        out[(c * H + y) * W + x] = img.pixels.value()[(c * H + y) * W + (W - 1 - x)];
  ImageSample res;
  res.pixels = Tensor::create({3, H, W}, std::move(out));
  res.label = img.label;
  return res;
}

// Fixed order swap -> shift -> flip, each applied with its probability.
inline ImageSample apply_augmentation(const ImageSample& img, const AugmentationPolicy& policy,
                                      Rng& rng) {
  policy.validate();
  ImageSample out = img;
  if (policy.enable_swap && rng.bernoulli(policy.p_swap)) out = colour_swap(out, rng);
  if (policy.enable_shift && rng.bernoulli(policy.p_shift)) out = colour_shift(out, rng);
  if (policy.enable_hflip && rng.bernoulli(policy.p_hflip)) out = hflip(out);
  return out;
}

// ---------------------------------------------------------------------------
// Procedural datasets
// ---------------------------------------------------------------------------

// Garment-like silhouette (rounded torso plus sleeve lobes) in one solid
// colour on an exactly-white background.
inline std::vector<ImageSample> synth_substrates(std::size_t count, std::size_t size,
                                                 Rng& rng) {
  if (size == 0 || size % 64 != 0)
    throw ShapeError("synth_substrates: size must be a positive multiple of 64");
  std::vector<ImageSample> out;
  out.reserve(count);
  const double S = static_cast<double>(size);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint8_t col[3];
    for (auto& c : col) c = static_cast<std::uint8_t>(rng.uniform_index(200));
    const double cx = S * (0.4 + 0.2 * rng.uniform());
    const double cy = S * (0.45 + 0.15 * rng.uniform());
    const double tw = S * (0.18 + 0.08 * rng.uniform());  // torso half-width
    const double th = S * (0.24 + 0.10 * rng.uniform());  // torso half-height
    const double sr = tw * (0.45 + 0.2 * rng.uniform());  // sleeve radius
    std::vector<std::uint8_t> rgb(size * size * 3, 255);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double dx = (x + 0.5) - cx, dy = (y + 0.5) - cy;
        const double u = dx / tw, v = dy / th;
        bool inside = u * u * u * u + v * v * v * v <= 1.0;  // rounded rectangle
        if (!inside) {
          // sleeve lobes hanging off the upper torso corners
          for (double side : {-1.0, 1.0}) {
            const double sx = dx - side * (tw + 0.35 * sr);
            const double sy = dy + th * 0.55;
            if (sx * sx + sy * sy <= sr * sr) inside = true;
          }
        }
        if (inside)
          for (std::size_t c = 0; c < 3; ++c) rgb[(y * size + x) * 3 + c] = col[c];
      }
    out.push_back(image_from_bytes(rgb, size, size));
  }
  return out;
}

inline constexpr std::size_t kShapeClassCount = 8;

inline const char* shape_class_name(std::size_t cls) {
  static const char* kNames[kShapeClassCount] = {"disc",  "square",  "triangle", "cross",
                                                 "ring",  "diamond", "hstripes", "vstripes"};
  return kNames[cls];
}

namespace detail {
inline bool shape_member(std::size_t cls, double dx, double dy, double r) {
  const double d2 = dx * dx + dy * dy;
  switch (cls) {
    case 0:  // disc
      return d2 <= r * r;
    case 1:  // square
      return std::max(std::abs(dx), std::abs(dy)) <= 0.8 * r;
    case 2:  // triangle (apex up)
      return dy >= -r && dy <= 0.75 * r && std::abs(dx) <= 0.62 * (dy + r);
    case 3:  // cross
      return (std::abs(dx) <= 0.3 * r && std::abs(dy) <= r) ||
             (std::abs(dy) <= 0.3 * r && std::abs(dx) <= r);
    case 4:  // ring
      return d2 <= r * r && d2 >= 0.3 * r * r;
    case 5:  // diamond
      return std::abs(dx) + std::abs(dy) <= r;
    case 6:  // horizontal stripes
      return std::abs(dx) <= r && std::abs(dy) <= r &&
             (static_cast<int>((dy + r) / (0.5 * r)) % 2 == 0);
    case 7:  // vertical stripes
      return std::abs(dx) <= r && std::abs(dy) <= r &&
             (static_cast<int>((dx + r) / (0.5 * r)) % 2 == 0);
    default:
      return false;
  }
}
}  // namespace detail

// One shape class per image on a white background with jittered colour,
// position (+-15%) and scale (+-25%); the desk-scale victim's dataset.
inline std::vector<ImageSample> synth_labeled_shapes(std::size_t count_per_class,
                                                     std::size_t n_total, std::size_t size,
                                                     Rng& rng) {
  if (n_total > kShapeClassCount)
    throw ShapeError("synth_labeled_shapes: at most 8 shape classes exist");
  if (size == 0) throw ShapeError("synth_labeled_shapes: zero size");
  std::vector<ImageSample> out;
  out.reserve(count_per_class * n_total);
  const double S = static_cast<double>(size);
  for (std::size_t cls = 0; cls < n_total; ++cls)
    for (std::size_t i = 0; i < count_per_class; ++i) {
      std::uint8_t col[3];
      for (auto& c : col) c = static_cast<std::uint8_t>(rng.uniform_index(181));
      const double cx = S * (0.5 + 0.15 * (2.0 * rng.uniform() - 1.0));
      const double cy = S * (0.5 + 0.15 * (2.0 * rng.uniform() - 1.0));
      const double r = S * 0.3 * (1.0 + 0.25 * (2.0 * rng.uniform() - 1.0));
      std::vector<std::uint8_t> rgb(size * size * 3, 255);
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x)
          if (detail::shape_member(cls, (x + 0.5) - cx, (y + 0.5) - cy, r))
            for (std::size_t c = 0; c < 3; ++c) rgb[(y * size + x) * 3 + c] = col[c];
      out.push_back(image_from_bytes(rgb, size, size, static_cast<int>(cls)));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset files: PNGs plus a "relative/path.png<TAB>label" manifest
// (label column omitted for unlabeled samples).
// ---------------------------------------------------------------------------

inline void write_dataset(const std::vector<ImageSample>& samples, const std::string& dir,
                          const std::string& manifest_name = "manifest.txt") {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / manifest_name);
  if (!manifest) throw IoError("cannot write manifest in " + dir);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%06zu.png", i);
    save_image(samples[i], (fs::path(dir) / name).string());
    manifest << name;
    if (samples[i].label >= 0) manifest << '\t' << samples[i].label;
    manifest << '\n';
  }
}

inline std::vector<ImageSample> load_manifest(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw FileMissingError("cannot open manifest: " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<ImageSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const std::string rel = tab == std::string::npos ? line : line.substr(0, tab);
    ImageSample img = load_image((base / rel).string());
    if (tab != std::string::npos) img.label = std::stoi(line.substr(tab + 1));
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace ginv
