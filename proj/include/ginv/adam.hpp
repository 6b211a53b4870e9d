#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ginv/tensor.hpp"

namespace ginv {

// Hyperparameters: the learning rate and beta1 follow the training recipe
// (0.0002 / 0.5); beta2 and epsilon are the optimizer's reference defaults.
template <typename T>
struct AdamHyperT {
  T alpha = T(2e-4);
  T beta1 = T(0.5);
  T beta2 = T(0.999);
  T epsilon = T(1e-8);
};

template <typename T>
struct AdamStateT {
  std::vector<T> m;
  std::vector<T> v;
  std::uint64_t step_count = 0;

  explicit AdamStateT(std::size_t n = 0) : m(n, T(0)), v(n, T(0)) {}
};

// Standard bias-corrected Adam update; gradients are zeroed afterwards.
template <typename T>
void adam_step(std::vector<TensorT<T>>& params, std::vector<AdamStateT<T>>& states,
               const AdamHyperT<T>& hyper) {
  if (params.size() != states.size()) throw ShapeError("adam_step: state count mismatch");
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& par = params[p];
    auto& st = states[p];
    if (!par.tracked()) throw ShapeError("adam_step: parameter has no gradient");
    if (st.m.size() != par.size()) throw ShapeError("adam_step: moment size mismatch");
    st.step_count += 1;
    const T bc1 = T(1) - std::pow(hyper.beta1, static_cast<T>(st.step_count));
    const T bc2 = T(1) - std::pow(hyper.beta2, static_cast<T>(st.step_count));
    for (std::size_t i = 0; i < par.size(); ++i) {
      const T g = par.grad()[i];
      st.m[i] = hyper.beta1 * st.m[i] + (T(1) - hyper.beta1) * g;
      st.v[i] = hyper.beta2 * st.v[i] + (T(1) - hyper.beta2) * g * g;
      const T mhat = st.m[i] / bc1;
      const T vhat = st.v[i] / bc2;
      par.value()[i] -= hyper.alpha * mhat / (std::sqrt(vhat) + hyper.epsilon);
    }
    par.zero_grad();
  }
}

using AdamHyper = AdamHyperT<float>;
using AdamState = AdamStateT<float>;

}  // namespace ginv
