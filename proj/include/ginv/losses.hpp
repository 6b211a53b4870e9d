#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ginv/models.hpp"
#include "ginv/rng.hpp"
#include "ginv/tensor.hpp"

namespace ginv {

// Every log argument in the losses is clamped here before the log.
inline constexpr float kLogClamp = 1e-6f;

inline Tensor clamped_log(const Tensor& x) { return log_(clamp_min(x, kLogClamp)); }

// ---------------------------------------------------------------------------
// Adversarial terms
// ---------------------------------------------------------------------------

// Discriminator objective: -E[log D(real)] - E[log(1 - D(fake))].
inline Tensor loss_cgan_d(const Tensor& d_real, const Tensor& d_fake) {
  Tensor real_term = mean(clamped_log(d_real));
  Tensor fake_term = mean(clamped_log(affine(d_fake, -1.0f, 1.0f)));
  return neg(add(real_term, fake_term));
}

// Non-saturating generator objective: -E[log D(fake)].
inline Tensor loss_cgan_g(const Tensor& d_fake) { return neg(mean(clamped_log(d_fake))); }

// ---------------------------------------------------------------------------
// Masking loss: push generated pixels toward white wherever the substrate
// background is white. Images live in [-1,1]; white is +1.
// ---------------------------------------------------------------------------

inline Tensor loss_mask(const Tensor& generated, const Tensor& substrate,
                        float white_threshold = 0.9f) {
  if (!generated.same_shape(substrate)) throw ShapeError("loss_mask: shape mismatch");
  if (generated.rank() != 4 || generated.dim(1) != 3)
    throw ShapeError("loss_mask: expects [B,3,H,W] images");
  const std::size_t B = substrate.dim(0), HW = substrate.dim(2) * substrate.dim(3);
  std::vector<float> mask(substrate.size(), 0.0f);
  std::size_t count = 0;
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t p = 0; p < HW; ++p) {
      bool white = true;
      for (std::size_t c = 0; c < 3 && white; ++c)
        white = substrate.value()[(n * 3 + c) * HW + p] >= white_threshold;
      if (white) {
        for (std::size_t c = 0; c < 3; ++c) mask[(n * 3 + c) * HW + p] = 1.0f;
        count += 3;
      }
    }
  if (count == 0) return Tensor::scalar(0.0f);
  // (1 - g)/2 on the masked pixel-channels, averaged over the mask.
  Tensor dev = affine(generated, -0.5f, 0.5f);
  Tensor masked = mul(dev, Tensor::create(substrate.shape(), std::move(mask)));
  return scale(sum(masked), 1.0f / static_cast<float>(count));
}

// ---------------------------------------------------------------------------
// Classifier-driven terms
// ---------------------------------------------------------------------------

namespace detail {
inline Tensor target_constant(const TargetVector& t, const std::vector<std::size_t>& shape) {
  const std::size_t n = t.t.size();
  std::size_t total = 1;
  for (auto d : shape) total *= d;
  if (total % n != 0) throw ShapeError("target vector length mismatch");
  std::vector<float> data(total);
  for (std::size_t i = 0; i < total; ++i) data[i] = static_cast<float>(t.t[i % n]);
  return Tensor::create(shape, std::move(data));
}
}  // namespace detail

// P(v) = |t - v| ⊙ t  (rows of v share the batch's target vector)
inline Tensor positive_diff(const Tensor& v, const TargetVector& t) {
  if (v.shape().back() != t.t.size()) throw ShapeError("positive_diff: length mismatch");
  Tensor tc = detail::target_constant(t, v.shape());
  return mul(abs_(sub(tc, v)), tc);
}

// N(v) = |t - v| ⊙ (1 - t)
inline Tensor negative_diff(const Tensor& v, const TargetVector& t) {
  if (v.shape().back() != t.t.size()) throw ShapeError("negative_diff: length mismatch");
  Tensor tc = detail::target_constant(t, v.shape());
  return mul(abs_(sub(tc, v)), affine(tc, -1.0f, 1.0f));
}

// L(x) = mean_i (x_i - log(1 - x_i))
inline Tensor linear_log_penalty(const Tensor& x) {
  return mean(sub(x, clamped_log(affine(x, -1.0f, 1.0f))));
}

struct VggLoss {
  Tensor l_p;
  Tensor l_n;
  Tensor l_vgg;
};

// L_p on the resized whole image, L_n as the worst crop; gradient of the max
// routes to that crop only.
inline VggLoss loss_vgg(const Tensor& c_r, const std::vector<Tensor>& crops,
                        const TargetVector& t) {
  if (crops.empty()) throw ShapeError("loss_vgg: empty crop list");
  VggLoss out;
  out.l_p = linear_log_penalty(positive_diff(c_r, t));
  out.l_n = linear_log_penalty(negative_diff(crops[0], t));
  for (std::size_t i = 1; i < crops.size(); ++i)
    out.l_n = maximum(out.l_n, linear_log_penalty(negative_diff(crops[i], t)));
  out.l_vgg = add(out.l_p, out.l_n);
  return out;
}

// Random square crops at distinct top-left offsets, without replacement.
inline std::vector<Tensor> sample_crops(const Tensor& image, std::size_t crop_size,
                                        std::size_t count, Rng& rng) {
  if (image.rank() != 4) throw ShapeError("sample_crops: expects rank-4 tensor");
  const std::size_t H = image.dim(2), W = image.dim(3);
  if (H < crop_size || W < crop_size) throw ShapeError("sample_crops: image smaller than crop");
  const std::size_t oy_n = H - crop_size + 1, ox_n = W - crop_size + 1;
  if (oy_n * ox_n < count)
    throw ShapeError("sample_crops: fewer distinct offsets than requested crops");
  std::vector<std::size_t> chosen;
  while (chosen.size() < count) {
    const std::size_t off = rng.uniform_index(oy_n * ox_n);
    bool fresh = true;
    for (auto o : chosen) fresh = fresh && o != off;
    if (fresh) chosen.push_back(off);
  }
  std::vector<Tensor> out;
  out.reserve(count);
  for (auto off : chosen)
    out.push_back(crop(image, off / ox_n, off % ox_n, crop_size, crop_size));
  return out;
}

// L_s = mean(|T - G| - log(1 - ((T - G)/2)^2)), the linear-plus-log barrier
// tying the output to the substrate.
inline Tensor loss_substrate(const Tensor& substrate, const Tensor& generated) {
  if (!substrate.same_shape(generated)) throw ShapeError("loss_substrate: shape mismatch");
  Tensor d = sub(substrate, generated);
  Tensor lin = abs_(d);
  Tensor logterm = clamped_log(affine(square(scale(d, 0.5f)), -1.0f, 1.0f));
  return mean(sub(lin, logterm));
}

// ---------------------------------------------------------------------------
// Weighted combination
// ---------------------------------------------------------------------------

struct LossWeights {
  float w_cgan = 3.0f;
  float w_mask = 10.0f;
  float w_vgg = 50.0f;
  float w_sub = 150.0f;

  void validate() const {
    if (w_cgan < 0 || w_mask < 0 || w_vgg < 0 || w_sub < 0)
      throw ConfigError("LossWeights: negative weight");
  }
};

struct LossReport {
  float l_cgan_d = 0, l_cgan_g = 0, l_mask = 0, l_p = 0, l_n = 0, l_vgg = 0, l_sub = 0,
        total = 0;

  static std::string csv_header() {
    return "step,l_cgan_d,l_cgan_g,l_mask,l_p,l_n,l_vgg,l_sub,total";
  }
  std::string csv_line(std::size_t step) const {
    auto f = [](float v) { return std::to_string(v); };
    return std::to_string(step) + "," + f(l_cgan_d) + "," + f(l_cgan_g) + "," + f(l_mask) +
           "," + f(l_p) + "," + f(l_n) + "," + f(l_vgg) + "," + f(l_sub) + "," + f(total);
  }
  bool finite() const {
    for (float v : {l_cgan_d, l_cgan_g, l_mask, l_p, l_n, l_vgg, l_sub, total})
      if (!std::isfinite(v)) return false;
    return true;
  }
};

struct TotalLoss {
  Tensor generator_objective;  // the weighted sum; D trains on loss_cgan_d alone
  LossReport report;
};

inline TotalLoss loss_total(const Tensor& l_cgan_d_t, const Tensor& l_cgan_g_t,
                            const Tensor& l_mask_t, const VggLoss& vgg, const Tensor& l_sub_t,
                            const LossWeights& w) {
  w.validate();
  TotalLoss out;
  Tensor total = scale(l_cgan_g_t, w.w_cgan);
  total = add(total, scale(l_mask_t, w.w_mask));
  total = add(total, scale(vgg.l_vgg, w.w_vgg));
  total = add(total, scale(l_sub_t, w.w_sub));
  out.generator_objective = total;
  out.report.l_cgan_d = l_cgan_d_t.item();
  out.report.l_cgan_g = l_cgan_g_t.item();
  out.report.l_mask = l_mask_t.item();
  out.report.l_p = vgg.l_p.item();
  out.report.l_n = vgg.l_n.item();
  out.report.l_vgg = vgg.l_vgg.item();
  out.report.l_sub = l_sub_t.item();
  out.report.total = total.item();
  return out;
}

}  // namespace ginv
