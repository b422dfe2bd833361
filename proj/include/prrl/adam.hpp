#pragma once

#include <cmath>
#include <vector>

#include "prrl/params.hpp"

namespace prrl {

// Adam with bias correction. Moment buffers mirror the parameter shapes
// and are created lazily on the first step.
template <class S>
struct AdamStateT {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step = 0;
  std::vector<TensorT<S>> m, v;
};

using AdamState = AdamStateT<float>;

template <class S>
void adam_step(ParamSetT<S>& params, AdamStateT<S>& st) {
  if (st.m.empty()) {
    for (size_t i = 0; i < params.count(); ++i) {
      st.m.push_back(TensorT<S>::zeros(params.at(i).value.shape));
      st.v.push_back(TensorT<S>::zeros(params.at(i).value.shape));
    }
  }
  if (st.m.size() != params.count())
    throw data_error("adam_step: state tracks " + std::to_string(st.m.size()) +
                     " parameters, model has " + std::to_string(params.count()));
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, (double)st.step);
  const double bc2 = 1.0 - std::pow(st.beta2, (double)st.step);
  for (size_t i = 0; i < params.count(); ++i) {
    ParamT<S>& p = params.at(i);
    if (!p.value.same_shape(st.m[i]))
      throw data_error("adam_step: state shape mismatch on '" + p.name + "'");
    TensorT<S>& m = st.m[i];
    TensorT<S>& v = st.v[i];
    for (int64_t j = 0; j < p.value.numel(); ++j) {
      const double gr = (double)p.grad.data[j];
      if (!std::isfinite(gr))
        throw numeric_error("adam_step: non-finite gradient on parameter '" + p.name + "'");
      const double mj = st.beta1 * (double)m.data[j] + (1.0 - st.beta1) * gr;
      const double vj = st.beta2 * (double)v.data[j] + (1.0 - st.beta2) * gr * gr;
      m.data[j] = (S)mj;
      v.data[j] = (S)vj;
      p.value.data[j] =
          (S)((double)p.value.data[j] - st.lr * (mj / bc1) / (std::sqrt(vj / bc2) + st.eps));
    }
  }
}

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
template <class S>
double clip_global_norm(ParamSetT<S>& params, double max_norm) {
  double sq = 0.0;
  for (size_t i = 0; i < params.count(); ++i)
    for (S gv : params.at(i).grad.data) {
      if (!std::isfinite((double)gv))
        throw numeric_error("clip_global_norm: non-finite gradient on parameter '" +
                            params.at(i).name + "'");
      sq += (double)gv * (double)gv;
    }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double sc = max_norm / norm;
    for (size_t i = 0; i < params.count(); ++i)
      for (auto& gv : params.at(i).grad.data) gv = (S)((double)gv * sc);
  }
  return norm;
}

}  // namespace prrl
