#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "ginv/errors.hpp"

namespace ginv {

// Dense row-major tensor participating in a linear reverse-mode tape.
// Scalar type is a template parameter: training runs on float, the
// finite-difference oracle instantiates the same code on double.

template <typename T>
struct TensorStore {
  std::vector<std::size_t> shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty when the tensor is not tracked
  bool requires_grad = false;
};

template <typename T>
class TensorT {
 public:
  TensorT() = default;

  static TensorT create(std::vector<std::size_t> shape, std::vector<T> values,
                        bool requires_grad = false) {
    std::size_t n = 1;
    for (auto d : shape) {
      if (d == 0) throw ShapeError("tensor_create: zero dimension");
      n *= d;
    }
    if (n != values.size())
      throw ShapeError("tensor_create: shape/length mismatch (" + std::to_string(n) +
                       " vs " + std::to_string(values.size()) + ")");
    TensorT t;
    t.p_ = std::make_shared<TensorStore<T>>();
    t.p_->shape = std::move(shape);
    t.p_->value = std::move(values);
    t.p_->requires_grad = requires_grad;
    if (requires_grad) t.p_->grad.assign(n, T(0));
    return t;
  }

  static TensorT zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return create(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static TensorT scalar(T v) { return create({1}, {v}); }

  bool valid() const { return p_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return p_->shape; }
  std::size_t size() const { return p_->value.size(); }
  std::size_t dim(std::size_t i) const { return p_->shape[i]; }
  std::size_t rank() const { return p_->shape.size(); }

  // The handle has pointer semantics: a const handle still exposes mutable
  // storage, which backward closures rely on after capturing by value.
  std::vector<T>& value() const { return p_->value; }
  std::vector<T>& grad() const { return p_->grad; }

  bool tracked() const { return p_ && !p_->grad.empty(); }
  bool requires_grad() const { return p_ && p_->requires_grad; }

  // Allocates (or re-zeroes) the gradient buffer.
  void ensure_grad() const { p_->grad.assign(p_->value.size(), T(0)); }
  void zero_grad() const {
    if (tracked()) std::fill(p_->grad.begin(), p_->grad.end(), T(0));
  }

  T item() const {
    if (size() != 1) throw ShapeError("item: tensor is not scalar");
    return p_->value[0];
  }

  bool same_shape(const TensorT& o) const { return p_->shape == o.p_->shape; }

  // Value copy detached from any tape history.
  TensorT detach() const { return create(p_->shape, p_->value, false); }

  std::shared_ptr<TensorStore<T>> store() const { return p_; }

 private:
  std::shared_ptr<TensorStore<T>> p_;
};

// Linear tape of recorded backward closures. One logical training thread
// owns the tape; closures replay in reverse order on backward().
template <typename T>
class TapeT {
 public:
  void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }
  bool enabled() const { return pause_depth_ == 0; }
  void clear() { ops_.clear(); }
  std::size_t size() const { return ops_.size(); }

  void backward(TensorT<T> loss) {
    if (loss.size() != 1) throw ShapeError("backward: loss must be scalar");
    if (!loss.tracked()) throw ShapeError("backward: loss is not on the tape");
    loss.grad()[0] += T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  struct PauseGuard {
    explicit PauseGuard(TapeT& t) : t_(t) { ++t_.pause_depth_; }
    ~PauseGuard() { --t_.pause_depth_; }
    PauseGuard(const PauseGuard&) = delete;
    PauseGuard& operator=(const PauseGuard&) = delete;

   private:
    TapeT& t_;
  };

 private:
  std::vector<std::function<void()>> ops_;
  int pause_depth_ = 0;
};

template <typename T>
inline TapeT<T>& tape() {
  thread_local TapeT<T> t;
  return t;
}

namespace detail {

template <typename T>
inline bool track_result(std::initializer_list<const TensorT<T>*> inputs) {
  if (!tape<T>().enabled()) return false;
  for (auto* in : inputs)
    if (in->tracked()) return true;
  return false;
}

template <typename T>
inline TensorT<T> result_like(std::vector<std::size_t> shape, bool track) {
  auto out = TensorT<T>::zeros(std::move(shape));
  if (track) out.ensure_grad();
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename T, typename Fwd, typename Bwd>
TensorT<T> unary_op(const TensorT<T>& x, Fwd fwd, Bwd bwd, const char* /*name*/ = "") {
  const bool track = detail::track_result<T>({&x});
  auto out = detail::result_like<T>(x.shape(), track);
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) out.value()[i] = fwd(x.value()[i]);
  if (track && x.tracked()) {
    tape<T>().record([x, out, bwd, n]() mutable {
      for (std::size_t i = 0; i < n; ++i)
        x.grad()[i] += out.grad()[i] * bwd(x.value()[i], out.value()[i]);
    });
  }
  return out;
}

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_shape(b)) throw ShapeError("add: shape mismatch");
  const bool track = detail::track_result<T>({&a, &b});
  auto out = detail::result_like<T>(a.shape(), track);
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] + b.value()[i];
  if (track) {
    tape<T>().record([a, b, out, n]() mutable {
      if (a.tracked())
        for (std::size_t i = 0; i < n; ++i) a.grad()[i] += out.grad()[i];
      if (b.tracked())
        for (std::size_t i = 0; i < n; ++i) b.grad()[i] += out.grad()[i];
    });
  }
  return out;
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_shape(b)) throw ShapeError("sub: shape mismatch");
  const bool track = detail::track_result<T>({&a, &b});
  auto out = detail::result_like<T>(a.shape(), track);
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] - b.value()[i];
  if (track) {
    tape<T>().record([a, b, out, n]() mutable {
      if (a.tracked())
        for (std::size_t i = 0; i < n; ++i) a.grad()[i] += out.grad()[i];
      if (b.tracked())
        for (std::size_t i = 0; i < n; ++i) b.grad()[i] -= out.grad()[i];
    });
  }
  return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_shape(b)) throw ShapeError("mul: shape mismatch");
  const bool track = detail::track_result<T>({&a, &b});
  auto out = detail::result_like<T>(a.shape(), track);
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.value()[i] = a.value()[i] * b.value()[i];
  if (track) {
    tape<T>().record([a, b, out, n]() mutable {
      if (a.tracked())
        for (std::size_t i = 0; i < n; ++i) a.grad()[i] += out.grad()[i] * b.value()[i];
      if (b.tracked())
        for (std::size_t i = 0; i < n; ++i) b.grad()[i] += out.grad()[i] * a.value()[i];
    });
  }
  return out;
}

// Elementwise max of two tensors; ties route the gradient to the first operand.
template <typename T>
TensorT<T> maximum(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_shape(b)) throw ShapeError("maximum: shape mismatch");
  const bool track = detail::track_result<T>({&a, &b});
  auto out = detail::result_like<T>(a.shape(), track);
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i)
    out.value()[i] = a.value()[i] >= b.value()[i] ? a.value()[i] : b.value()[i];
  if (track) {
    tape<T>().record([a, b, out, n]() mutable {
      for (std::size_t i = 0; i < n; ++i) {
        if (a.value()[i] >= b.value()[i]) {
          if (a.tracked()) a.grad()[i] += out.grad()[i];
        } else if (b.tracked()) {
          b.grad()[i] += out.grad()[i];
        }
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> abs_(const TensorT<T>& x) {
  return unary_op(
      x, [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

// log with a hard domain check; losses clamp before calling this.
template <typename T>
TensorT<T> log_(const TensorT<T>& x) {
  for (T v : x.value())
    if (!(v > T(0))) throw NumericError("log: non-positive argument");
  return unary_op(
      x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
TensorT<T> square(const TensorT<T>& x) {
  return unary_op(
      x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
TensorT<T> neg(const TensorT<T>& x) {
  return unary_op(
      x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}

// a*x + b on every element.
template <typename T>
TensorT<T> affine(const TensorT<T>& x, T a, T b) {
  return unary_op(
      x, [a, b](T v) { return a * v + b; }, [a](T, T) { return a; });
}

template <typename T>
TensorT<T> scale(const TensorT<T>& x, T c) {
  return affine(x, c, T(0));
}

// Clamp from below; gradient is blocked on the clamped side.
template <typename T>
TensorT<T> clamp_min(const TensorT<T>& x, T lo) {
  return unary_op(
      x, [lo](T v) { return v < lo ? lo : v; },
      [lo](T v, T) { return v > lo ? T(1) : T(0); });
}

template <typename T>
TensorT<T> tanh_(const TensorT<T>& x) {
  return unary_op(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
TensorT<T> sigmoid_(const TensorT<T>& x) {
  return unary_op(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

// PReLU with one learnable slope shared by every element.
template <typename T>
TensorT<T> prelu(const TensorT<T>& x, const TensorT<T>& a) {
  if (a.size() != 1) throw ShapeError("prelu: slope must be a scalar tensor");
  const bool track = detail::track_result<T>({&x, &a});
  auto out = detail::result_like<T>(x.shape(), track);
  const T slope = a.value()[0];
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    const T v = x.value()[i];
    out.value()[i] = v >= T(0) ? v : slope * v;
  }
  if (track) {
    tape<T>().record([x, a, out, slope, n]() mutable {
      T slope_grad = T(0);
      for (std::size_t i = 0; i < n; ++i) {
        const T v = x.value()[i];
        const T g = out.grad()[i];
        if (x.tracked()) x.grad()[i] += g * (v >= T(0) ? T(1) : slope);
        if (v < T(0)) slope_grad += g * v;
      }
      if (a.tracked()) a.grad()[0] += slope_grad;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions (fixed left-to-right accumulation)
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> sum(const TensorT<T>& x) {
  if (x.size() == 0) throw ShapeError("sum: empty tensor");
  const bool track = detail::track_result<T>({&x});
  auto out = detail::result_like<T>({1}, track);
  T acc = T(0);
  for (T v : x.value()) acc += v;
  out.value()[0] = acc;
  if (track && x.tracked()) {
    tape<T>().record([x, out]() mutable {
      const T g = out.grad()[0];
      for (auto& gx : x.grad()) gx += g;
    });
  }
  return out;
}

template <typename T>
TensorT<T> mean(const TensorT<T>& x) {
  if (x.size() == 0) throw ShapeError("mean: empty tensor");
  const std::size_t n = x.size();
  const bool track = detail::track_result<T>({&x});
  auto out = detail::result_like<T>({1}, track);
  T acc = T(0);
  for (T v : x.value()) acc += v;
  out.value()[0] = acc / static_cast<T>(n);
  if (track && x.tracked()) {
    tape<T>().record([x, out, n]() mutable {
      const T g = out.grad()[0] / static_cast<T>(n);
      for (auto& gx : x.grad()) gx += g;
    });
  }
  return out;
}

// Max over all elements; gradient goes to the lowest flat index attaining it.
template <typename T>
TensorT<T> max_(const TensorT<T>& x) {
  if (x.size() == 0) throw ShapeError("max: empty tensor");
  const bool track = detail::track_result<T>({&x});
  auto out = detail::result_like<T>({1}, track);
  std::size_t argmax = 0;
  T best = x.value()[0];
  for (std::size_t i = 1; i < x.size(); ++i)
    if (x.value()[i] > best) {
      best = x.value()[i];
      argmax = i;
    }
  out.value()[0] = best;
  if (track && x.tracked()) {
    tape<T>().record([x, out, argmax]() mutable { x.grad()[argmax] += out.grad()[0]; });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> reshape(const TensorT<T>& x, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  if (n != x.size()) throw ShapeError("reshape: element count mismatch");
  const bool track = detail::track_result<T>({&x});
  auto out = TensorT<T>::create(std::move(shape), x.value());
  if (track) {
    out.ensure_grad();
    if (x.tracked()) {
      tape<T>().record([x, out]() mutable {
        for (std::size_t i = 0; i < x.size(); ++i) x.grad()[i] += out.grad()[i];
      });
    }
  }
  return out;
}

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 4 || b.rank() != 4)
    throw ShapeError("concat_channels: expects rank-4 tensors");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw ShapeError("concat_channels: batch/spatial mismatch");
  const std::size_t B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
  const std::size_t HW = a.dim(2) * a.dim(3);
  const bool track = detail::track_result<T>({&a, &b});
  auto out = detail::result_like<T>({B, Ca + Cb, a.dim(2), a.dim(3)}, track);
  for (std::size_t n = 0; n < B; ++n) {
    std::copy(a.value().begin() + n * Ca * HW, a.value().begin() + (n + 1) * Ca * HW,
              out.value().begin() + n * (Ca + Cb) * HW);
    std::copy(b.value().begin() + n * Cb * HW, b.value().begin() + (n + 1) * Cb * HW,
              out.value().begin() + n * (Ca + Cb) * HW + Ca * HW);
  }
  if (track) {
    tape<T>().record([a, b, out, B, Ca, Cb, HW]() mutable {
      for (std::size_t n = 0; n < B; ++n) {
        if (a.tracked())
          for (std::size_t i = 0; i < Ca * HW; ++i)
            a.grad()[n * Ca * HW + i] += out.grad()[n * (Ca + Cb) * HW + i];
        if (b.tracked())
          for (std::size_t i = 0; i < Cb * HW; ++i)
            b.grad()[n * Cb * HW + i] += out.grad()[n * (Ca + Cb) * HW + Ca * HW + i];
      }
    });
  }
  return out;
}

template <typename T>
TensorT<T> slice_channels(const TensorT<T>& x, std::size_t c0, std::size_t c1) {
  if (x.rank() != 4) throw ShapeError("slice_channels: expects rank-4 tensor");
  if (c1 <= c0 || c1 > x.dim(1)) throw ShapeError("slice_channels: bad range");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const std::size_t Cs = c1 - c0;
  const bool track = detail::track_result<T>({&x});
  auto out = detail::result_like<T>({B, Cs, x.dim(2), x.dim(3)}, track);
  for (std::size_t n = 0; n < B; ++n)
    std::copy(x.value().begin() + (n * C + c0) * HW, x.value().begin() + (n * C + c1) * HW,
              out.value().begin() + n * Cs * HW);
  if (track && x.tracked()) {
    tape<T>().record([x, out, B, C, c0, Cs, HW]() mutable {
      for (std::size_t n = 0; n < B; ++n)
        for (std::size_t i = 0; i < Cs * HW; ++i)
          x.grad()[(n * C + c0) * HW + i] += out.grad()[n * Cs * HW + i];
    });
  }
  return out;
}

// Spatial crop at a fixed offset; differentiable (scatter-add backward).
template <typename T>
TensorT<T> crop(const TensorT<T>& x, std::size_t y0, std::size_t x0, std::size_t h,
                std::size_t w) {
  if (x.rank() != 4) throw ShapeError("crop: expects rank-4 tensor");
  if (y0 + h > x.dim(2) || x0 + w > x.dim(3)) throw ShapeError("crop: out of bounds");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const bool track = detail::track_result<T>({&x});
  auto out = detail::result_like<T>({B, C, h, w}, track);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < h; ++y)
        std::copy(x.value().begin() + ((n * C + c) * H + y0 + y) * W + x0,
                  x.value().begin() + ((n * C + c) * H + y0 + y) * W + x0 + w,
                  out.value().begin() + ((n * C + c) * h + y) * w);
  if (track && x.tracked()) {
    tape<T>().record([x, out, B, C, H, W, y0, x0, h, w]() mutable {
      for (std::size_t n = 0; n < B; ++n)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
              x.grad()[((n * C + c) * H + y0 + y) * W + x0 + xx] +=
                  out.grad()[((n * C + c) * h + y) * w + xx];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bilinear resize, half-pixel-center alignment, edge-clamped.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> resize_bilinear(const TensorT<T>& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 4) throw ShapeError("resize_bilinear: expects rank-4 tensor");
  if (out_h == 0 || out_w == 0) throw ShapeError("resize_bilinear: zero output dims");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);

  struct Axis {
    std::size_t i0, i1;
    T w1;  // weight of i1; i0 gets 1-w1
  };
  auto build = [](std::size_t in, std::size_t out) {
    std::vector<Axis> ax(out);
    const double s = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * s - 0.5;
      if (src < 0.0) src = 0.0;
      const double hi = static_cast<double>(in - 1);
      if (src > hi) src = hi;
      const std::size_t i0 = static_cast<std::size_t>(src);
      ax[o].i0 = i0;
      ax[o].i1 = std::min(i0 + 1, in - 1);
      ax[o].w1 = static_cast<T>(src - static_cast<double>(i0));
    }
    return ax;
  };
  const auto ay = build(H, out_h);
  const auto axs = build(W, out_w);

  const bool track = detail::track_result<T>({&x});
  auto out = detail::result_like<T>({B, C, out_h, out_w}, track);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const T* src = x.value().data() + (n * C + c) * H * W;
      T* dst = out.value().data() + (n * C + c) * out_h * out_w;
      for (std::size_t oy = 0; oy < out_h; ++oy)
        for (std::size_t ox = 0; ox < out_w; ++ox) {
          const auto& ry = ay[oy];
          const auto& rx = axs[ox];
          const T top = src[ry.i0 * W + rx.i0] * (T(1) - rx.w1) + src[ry.i0 * W + rx.i1] * rx.w1;
          const T bot = src[ry.i1 * W + rx.i0] * (T(1) - rx.w1) + src[ry.i1 * W + rx.i1] * rx.w1;
          dst[oy * out_w + ox] = top * (T(1) - ry.w1) + bot * ry.w1;
        }
    }
  if (track && x.tracked()) {
    tape<T>().record([x, out, ay, axs, B, C, H, W, out_h, out_w]() mutable {
      for (std::size_t n = 0; n < B; ++n)
        for (std::size_t c = 0; c < C; ++c) {
          T* gsrc = x.grad().data() + (n * C + c) * H * W;
          const T* gdst = out.grad().data() + (n * C + c) * out_h * out_w;
          for (std::size_t oy = 0; oy < out_h; ++oy)
            for (std::size_t ox = 0; ox < out_w; ++ox) {
              const auto& ry = ay[oy];
              const auto& rx = axs[ox];
              const T g = gdst[oy * out_w + ox];
              gsrc[ry.i0 * W + rx.i0] += g * (T(1) - ry.w1) * (T(1) - rx.w1);
              gsrc[ry.i0 * W + rx.i1] += g * (T(1) - ry.w1) * rx.w1;
              gsrc[ry.i1 * W + rx.i0] += g * ry.w1 * (T(1) - rx.w1);
              gsrc[ry.i1 * W + rx.i1] += g * ry.w1 * rx.w1;
            }
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolutions with weight normalization: w = g * v / ||v|| per out-channel.
// Cross-correlation semantics, no kernel flip.
// ---------------------------------------------------------------------------

namespace detail {

// Effective weight and per-channel norms for weight normalization.
template <typename T>
void effective_weight(const std::vector<T>& v, const std::vector<T>& g, std::size_t cout,
                      std::vector<T>& w, std::vector<T>& norms) {
  const std::size_t per = v.size() / cout;
  w.resize(v.size());
  norms.resize(cout);
  for (std::size_t co = 0; co < cout; ++co) {
    T s = T(0);
    for (std::size_t i = 0; i < per; ++i) {
      const T vi = v[co * per + i];
      s += vi * vi;
    }
    const T nrm = std::sqrt(s);
    if (!(nrm > T(0))) throw NumericError("weight norm: zero-norm direction vector");
    norms[co] = nrm;
    const T f = g[co] / nrm;
    for (std::size_t i = 0; i < per; ++i) w[co * per + i] = f * v[co * per + i];
  }
}

// Chain dL/dw back to the weight-norm parameters v and g.
template <typename T>
void weight_norm_backward(const std::vector<T>& v, const std::vector<T>& g,
                          const std::vector<T>& norms, const std::vector<T>& gw,
                          std::size_t cout, std::vector<T>* gv, std::vector<T>* gg) {
  const std::size_t per = v.size() / cout;
  for (std::size_t co = 0; co < cout; ++co) {
    const T nrm = norms[co];
    T dot = T(0);  // gw . v
    for (std::size_t i = 0; i < per; ++i) dot += gw[co * per + i] * v[co * per + i];
    if (gg) (*gg)[co] += dot / nrm;
    if (gv) {
      const T f = g[co] / nrm;
      const T proj = dot / (nrm * nrm);
      for (std::size_t i = 0; i < per; ++i)
        (*gv)[co * per + i] += f * (gw[co * per + i] - proj * v[co * per + i]);
    }
  }
}

}  // namespace detail

template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weight_v,
                  const TensorT<T>& weight_g, const TensorT<T>& bias, std::size_t stride,
                  std::size_t padding) {
  if (input.rank() != 4 || weight_v.rank() != 4)
    throw ShapeError("conv2d: expects rank-4 input and weight");
  const std::size_t B = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t Cout = weight_v.dim(0), k = weight_v.dim(2);
  if (weight_v.dim(1) != Cin) throw ShapeError("conv2d: channel mismatch");
  if (weight_v.dim(3) != k) throw ShapeError("conv2d: non-square kernel");
  if (weight_g.size() != Cout || bias.size() != Cout)
    throw ShapeError("conv2d: gain/bias size mismatch");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (H + 2 * padding < k || W + 2 * padding < k)
    throw ShapeError("conv2d: kernel larger than padded input");
  const std::size_t Ho = (H + 2 * padding - k) / stride + 1;
  const std::size_t Wo = (W + 2 * padding - k) / stride + 1;

  std::vector<T> w, norms;
  detail::effective_weight(weight_v.value(), weight_g.value(), Cout, w, norms);

  const bool track = detail::track_result<T>({&input, &weight_v, &weight_g, &bias});
  auto out = detail::result_like<T>({B, Cout, Ho, Wo}, track);

  const std::size_t in_hw = H * W, out_hw = Ho * Wo, ker = Cin * k * k;
  const T* in = input.value().data();
  T* ov = out.value().data();
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t co = 0; co < Cout; ++co) {
      const T b = bias.value()[co];
      const T* wc = w.data() + co * ker;
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox) {
          T acc = b;
          const std::ptrdiff_t iy0 = static_cast<std::ptrdiff_t>(oy * stride) -
                                     static_cast<std::ptrdiff_t>(padding);
          const std::ptrdiff_t ix0 = static_cast<std::ptrdiff_t>(ox * stride) -
                                     static_cast<std::ptrdiff_t>(padding);
          for (std::size_t ci = 0; ci < Cin; ++ci) {
            const T* ic = in + (n * Cin + ci) * in_hw;
            const T* wk = wc + ci * k * k;
            for (std::size_t ky = 0; ky < k; ++ky) {
              const std::ptrdiff_t iy = iy0 + static_cast<std::ptrdiff_t>(ky);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const std::ptrdiff_t ix = ix0 + static_cast<std::ptrdiff_t>(kx);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                acc += wk[ky * k + kx] * ic[iy * W + ix];
              }
            }
          }
          ov[(n * Cout + co) * out_hw + oy * Wo + ox] = acc;
        }
    }

  if (track) {
    tape<T>().record([input, weight_v, weight_g, bias, out, w, norms, B, Cin, Cout, H, W, Ho,
                      Wo, k, stride, padding]() mutable {
      const std::size_t in_hw = H * W, out_hw = Ho * Wo, ker = Cin * k * k;
      const T* go = out.grad().data();
      const T* in = input.value().data();
      // input gradient
      if (input.tracked()) {
        T* gi = input.grad().data();
        for (std::size_t n = 0; n < B; ++n)
          for (std::size_t co = 0; co < Cout; ++co) {
            const T* wc = w.data() + co * ker;
            const T* goc = go + (n * Cout + co) * out_hw;
            for (std::size_t oy = 0; oy < Ho; ++oy)
              for (std::size_t ox = 0; ox < Wo; ++ox) {
                const T g = goc[oy * Wo + ox];
                if (g == T(0)) continue;
                const std::ptrdiff_t iy0 = static_cast<std::ptrdiff_t>(oy * stride) -
                                           static_cast<std::ptrdiff_t>(padding);
                const std::ptrdiff_t ix0 = static_cast<std::ptrdiff_t>(ox * stride) -
                                           static_cast<std::ptrdiff_t>(padding);
                for (std::size_t ci = 0; ci < Cin; ++ci) {
                  T* gic = gi + (n * Cin + ci) * in_hw;
                  const T* wk = wc + ci * k * k;
                  for (std::size_t ky = 0; ky < k; ++ky) {
                    const std::ptrdiff_t iy = iy0 + static_cast<std::ptrdiff_t>(ky);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                    for (std::size_t kx = 0; kx < k; ++kx) {
                      const std::ptrdiff_t ix = ix0 + static_cast<std::ptrdiff_t>(kx);
                      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                      gic[iy * W + ix] += g * wk[ky * k + kx];
                    }
                  }
                }
              }
          }
      }
      // weight and bias gradients
      const bool need_w = weight_v.tracked() || weight_g.tracked();
      std::vector<T> gw;
      if (need_w) gw.assign(w.size(), T(0));
      for (std::size_t n = 0; n < B; ++n)
        for (std::size_t co = 0; co < Cout; ++co) {
          const T* goc = go + (n * Cout + co) * out_hw;
          T bias_acc = T(0);
          T* gwc = need_w ? gw.data() + co * ker : nullptr;
          for (std::size_t oy = 0; oy < Ho; ++oy)
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const T g = goc[oy * Wo + ox];
              bias_acc += g;
              if (!need_w || g == T(0)) continue;
              const std::ptrdiff_t iy0 = static_cast<std::ptrdiff_t>(oy * stride) -
                                         static_cast<std::ptrdiff_t>(padding);
              const std::ptrdiff_t ix0 = static_cast<std::ptrdiff_t>(ox * stride) -
                                         static_cast<std::ptrdiff_t>(padding);
              for (std::size_t ci = 0; ci < Cin; ++ci) {
                const T* ic = in + (n * Cin + ci) * in_hw;
                T* gwk = gwc + ci * k * k;
                for (std::size_t ky = 0; ky < k; ++ky) {
                  const std::ptrdiff_t iy = iy0 + static_cast<std::ptrdiff_t>(ky);
                  if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                  for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::ptrdiff_t ix = ix0 + static_cast<std::ptrdiff_t>(kx);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                    gwk[ky * k + kx] += g * ic[iy * W + ix];
                  }
                }
              }
            }
          if (bias.tracked()) bias.grad()[co] += bias_acc;
        }
      if (need_w)
        detail::weight_norm_backward(weight_v.value(), weight_g.value(), norms, gw, Cout,
                                     weight_v.tracked() ? &weight_v.grad() : nullptr,
                                     weight_g.tracked() ? &weight_g.grad() : nullptr);
    });
  }
  return out;
}

// Transposed convolution; weight layout [Cout, Cin, k, k], weight-normalized
// per output channel exactly like conv2d. out[oy] gathers in[iy] where
// oy = iy*stride - padding + ky.
template <typename T>
TensorT<T> conv_transpose2d(const TensorT<T>& input, const TensorT<T>& weight_v,
                            const TensorT<T>& weight_g, const TensorT<T>& bias,
                            std::size_t stride, std::size_t padding) {
  if (input.rank() != 4 || weight_v.rank() != 4)
    throw ShapeError("conv_transpose2d: expects rank-4 input and weight");
  const std::size_t B = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t Cout = weight_v.dim(0), k = weight_v.dim(2);
  if (weight_v.dim(1) != Cin) throw ShapeError("conv_transpose2d: channel mismatch");
  if (weight_g.size() != Cout || bias.size() != Cout)
    throw ShapeError("conv_transpose2d: gain/bias size mismatch");
  if (stride == 0) throw ShapeError("conv_transpose2d: stride must be positive");
  const std::ptrdiff_t ho = static_cast<std::ptrdiff_t>((H - 1) * stride + k) -
                            2 * static_cast<std::ptrdiff_t>(padding);
  const std::ptrdiff_t wo = static_cast<std::ptrdiff_t>((W - 1) * stride + k) -
                            2 * static_cast<std::ptrdiff_t>(padding);
  if (ho <= 0 || wo <= 0) throw ShapeError("conv_transpose2d: non-positive output size");
  const std::size_t Ho = static_cast<std::size_t>(ho), Wo = static_cast<std::size_t>(wo);

  std::vector<T> w, norms;
  detail::effective_weight(weight_v.value(), weight_g.value(), Cout, w, norms);

  const bool track = detail::track_result<T>({&input, &weight_v, &weight_g, &bias});
  auto out = detail::result_like<T>({B, Cout, Ho, Wo}, track);

  const std::size_t in_hw = H * W, out_hw = Ho * Wo, ker = Cin * k * k;
  const T* in = input.value().data();
  T* ov = out.value().data();
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t co = 0; co < Cout; ++co) {
      T* oc = ov + (n * Cout + co) * out_hw;
      const T b = bias.value()[co];
      for (std::size_t i = 0; i < out_hw; ++i) oc[i] = b;
      const T* wc = w.data() + co * ker;
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        const T* ic = in + (n * Cin + ci) * in_hw;
        const T* wk = wc + ci * k * k;
        for (std::size_t iy = 0; iy < H; ++iy)
          for (std::size_t ix = 0; ix < W; ++ix) {
            const T v = ic[iy * W + ix];
            if (v == T(0)) continue;
            for (std::size_t ky = 0; ky < k; ++ky) {
              const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(iy * stride + ky) -
                                        static_cast<std::ptrdiff_t>(padding);
              if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(Ho)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const std::ptrdiff_t oxp = static_cast<std::ptrdiff_t>(ix * stride + kx) -
                                           static_cast<std::ptrdiff_t>(padding);
                if (oxp < 0 || oxp >= static_cast<std::ptrdiff_t>(Wo)) continue;
                oc[oy * Wo + oxp] += v * wk[ky * k + kx];
              }
            }
          }
      }
    }

  if (track) {
    tape<T>().record([input, weight_v, weight_g, bias, out, w, norms, B, Cin, Cout, H, W, Ho,
                      Wo, k, stride, padding]() mutable {
      const std::size_t in_hw = H * W, out_hw = Ho * Wo, ker = Cin * k * k;
      const T* go = out.grad().data();
      const T* in = input.value().data();
      const bool need_w = weight_v.tracked() || weight_g.tracked();
      std::vector<T> gw;
      if (need_w) gw.assign(w.size(), T(0));
      for (std::size_t n = 0; n < B; ++n)
        for (std::size_t co = 0; co < Cout; ++co) {
          const T* goc = go + (n * Cout + co) * out_hw;
          if (bias.tracked()) {
            T acc = T(0);
            for (std::size_t i = 0; i < out_hw; ++i) acc += goc[i];
            bias.grad()[co] += acc;
          }
          const T* wc = w.data() + co * ker;
          for (std::size_t ci = 0; ci < Cin; ++ci) {
            const T* ic = in + (n * Cin + ci) * in_hw;
            T* gic = input.tracked() ? input.grad().data() + (n * Cin + ci) * in_hw : nullptr;
            const T* wk = wc + ci * k * k;
            T* gwk = need_w ? gw.data() + co * ker + ci * k * k : nullptr;
            for (std::size_t iy = 0; iy < H; ++iy)
              for (std::size_t ix = 0; ix < W; ++ix) {
                const T v = ic[iy * W + ix];
                T gacc = T(0);
                for (std::size_t ky = 0; ky < k; ++ky) {
                  const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(iy * stride + ky) -
                                            static_cast<std::ptrdiff_t>(padding);
                  if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(Ho)) continue;
                  for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::ptrdiff_t oxp = static_cast<std::ptrdiff_t>(ix * stride + kx) -
                                               static_cast<std::ptrdiff_t>(padding);
                    if (oxp < 0 || oxp >= static_cast<std::ptrdiff_t>(Wo)) continue;
                    const T g = goc[oy * Wo + oxp];
                    gacc += g * wk[ky * k + kx];
                    if (gwk) gwk[ky * k + kx] += g * v;
                  }
                }
                if (gic) gic[iy * W + ix] += gacc;
              }
          }
        }
      if (need_w)
        detail::weight_norm_backward(weight_v.value(), weight_g.value(), norms, gw, Cout,
                                     weight_v.tracked() ? &weight_v.grad() : nullptr,
                                     weight_g.tracked() ? &weight_g.grad() : nullptr);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dense head ops (classifier plumbing)
// ---------------------------------------------------------------------------

// x [B,F] * w [O,F]^T + b [O] -> [B,O]
template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  if (x.rank() != 2 || w.rank() != 2) throw ShapeError("linear: expects rank-2 tensors");
  const std::size_t B = x.dim(0), F = x.dim(1), O = w.dim(0);
  if (w.dim(1) != F || b.size() != O) throw ShapeError("linear: dimension mismatch");
  const bool track = detail::track_result<T>({&x, &w, &b});
  auto out = detail::result_like<T>({B, O}, track);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < O; ++o) {
      T acc = b.value()[o];
      for (std::size_t f = 0; f < F; ++f) acc += x.value()[n * F + f] * w.value()[o * F + f];
      out.value()[n * O + o] = acc;
    }
  if (track) {
    tape<T>().record([x, w, b, out, B, F, O]() mutable {
      for (std::size_t n = 0; n < B; ++n)
        for (std::size_t o = 0; o < O; ++o) {
          const T g = out.grad()[n * O + o];
          if (g == T(0)) continue;
          if (b.tracked()) b.grad()[o] += g;
          for (std::size_t f = 0; f < F; ++f) {
            if (x.tracked()) x.grad()[n * F + f] += g * w.value()[o * F + f];
            if (w.tracked()) w.grad()[o * F + f] += g * x.value()[n * F + f];
          }
        }
    });
  }
  return out;
}

// Row-wise softmax on [B,K].
template <typename T>
TensorT<T> softmax_rows(const TensorT<T>& x) {
  if (x.rank() != 2) throw ShapeError("softmax_rows: expects rank-2 tensor");
  const std::size_t B = x.dim(0), K = x.dim(1);
  const bool track = detail::track_result<T>({&x});
  auto out = detail::result_like<T>({B, K}, track);
  for (std::size_t n = 0; n < B; ++n) {
    T mx = x.value()[n * K];
    for (std::size_t j = 1; j < K; ++j) mx = std::max(mx, x.value()[n * K + j]);
    T denom = T(0);
    for (std::size_t j = 0; j < K; ++j) {
      const T e = std::exp(x.value()[n * K + j] - mx);
      out.value()[n * K + j] = e;
      denom += e;
    }
    for (std::size_t j = 0; j < K; ++j) out.value()[n * K + j] /= denom;
  }
  if (track && x.tracked()) {
    tape<T>().record([x, out, B, K]() mutable {
      for (std::size_t n = 0; n < B; ++n) {
        T dot = T(0);
        for (std::size_t j = 0; j < K; ++j)
          dot += out.grad()[n * K + j] * out.value()[n * K + j];
        for (std::size_t j = 0; j < K; ++j)
          x.grad()[n * K + j] += out.value()[n * K + j] * (out.grad()[n * K + j] - dot);
      }
    });
  }
  return out;
}

// Column subset of [B,K] -> [B,|idx|]; restricts logits to the target classes.
template <typename T>
TensorT<T> select_columns(const TensorT<T>& x, const std::vector<std::size_t>& idx) {
  if (x.rank() != 2) throw ShapeError("select_columns: expects rank-2 tensor");
  const std::size_t B = x.dim(0), K = x.dim(1), M = idx.size();
  for (auto j : idx)
    if (j >= K) throw ShapeError("select_columns: index out of range");
  const bool track = detail::track_result<T>({&x});
  auto out = detail::result_like<T>({B, M}, track);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t m = 0; m < M; ++m) out.value()[n * M + m] = x.value()[n * K + idx[m]];
  if (track && x.tracked()) {
    tape<T>().record([x, out, idx, B, K, M]() mutable {
      for (std::size_t n = 0; n < B; ++n)
        for (std::size_t m = 0; m < M; ++m)
          x.grad()[n * K + idx[m]] += out.grad()[n * M + m];
    });
  }
  return out;
}

// Mean negative log-likelihood over a batch of probability rows.
template <typename T>
TensorT<T> cross_entropy(const TensorT<T>& probs, const std::vector<std::size_t>& labels) {
  if (probs.rank() != 2) throw ShapeError("cross_entropy: expects rank-2 tensor");
  const std::size_t B = probs.dim(0), K = probs.dim(1);
  if (labels.size() != B) throw ShapeError("cross_entropy: label count mismatch");
  const T floor = T(1e-12);
  const bool track = detail::track_result<T>({&probs});
  auto out = detail::result_like<T>({1}, track);
  T acc = T(0);
  for (std::size_t n = 0; n < B; ++n) {
    if (labels[n] >= K) throw ShapeError("cross_entropy: label out of range");
    acc -= std::log(std::max(probs.value()[n * K + labels[n]], floor));
  }
  out.value()[0] = acc / static_cast<T>(B);
  if (track && probs.tracked()) {
    tape<T>().record([probs, out, labels, B, K, floor]() mutable {
      const T g = out.grad()[0] / static_cast<T>(B);
      for (std::size_t n = 0; n < B; ++n) {
        const T p = probs.value()[n * K + labels[n]];
        if (p > floor) probs.grad()[n * K + labels[n]] -= g / p;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
void backward(TensorT<T> loss) {
  tape<T>().backward(std::move(loss));
}

using Tensor = TensorT<float>;

}  // namespace ginv
