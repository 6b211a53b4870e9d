#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "ginv/tensor.hpp"

namespace ginv {

// Central-difference gradient verification, run in double precision.
// `f` must be a deterministic scalar-valued function of x that records
// its computation on the double tape.
//
// Returns max_i |analytic_i - numeric_i| / max(|analytic_i|, |numeric_i|, 1e-8).
inline double grad_check(const std::function<TensorT<double>(TensorT<double>&)>& f,
                         TensorT<double>& x, double epsilon) {
  if (!(epsilon > 0.0)) throw ShapeError("grad_check: epsilon must be positive");
  auto& tp = tape<double>();

  tp.clear();
  x.ensure_grad();
  auto loss = f(x);
  if (loss.size() != 1) throw ShapeError("grad_check: function must be scalar-valued");
  tp.backward(loss);
  std::vector<double> analytic = x.grad();
  tp.clear();

  double worst = 0.0;
  {
    typename TapeT<double>::PauseGuard guard(tp);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double orig = x.value()[i];
      x.value()[i] = orig + epsilon;
      const double fp = f(x).item();
      x.value()[i] = orig - epsilon;
      const double fm = f(x).item();
      x.value()[i] = orig;
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace ginv
