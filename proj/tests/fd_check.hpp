#pragma once

// Central finite-difference oracle for gradient checks. The reference path
// evaluates forward passes on the double instantiation of the engine, so
// the comparison isolates backward() correctness; it never touches the
// backward code it is checking.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "prrl/graph.hpp"

namespace fd {

using prrl::GraphT;
using prrl::TensorT;
using prrl::Val;

using BuildFn =
    std::function<Val<double>(GraphT<double>&, std::vector<Val<double>>&)>;

inline double eval_loss(const std::vector<TensorT<double>>& inputs, const BuildFn& build) {
  GraphT<double> g;
  std::vector<Val<double>> vals;
  vals.reserve(inputs.size());
  for (const auto& t : inputs) vals.push_back(g.leaf(t));
  return build(g, vals).scalar();
}

// Max relative error between analytic gradients (from backward) and central
// finite differences with step h. Relative error uses a small floor so that
// near-zero components are held to an absolute tolerance instead.
inline double max_rel_err(std::vector<TensorT<double>> inputs, const BuildFn& build,
                          double h = 1e-3) {
  // analytic pass
  GraphT<double> g;
  std::vector<Val<double>> vals;
  for (const auto& t : inputs) vals.push_back(g.leaf(t));
  Val<double> loss = build(g, vals);
  g.backward(loss);
  std::vector<TensorT<double>> analytic;
  for (auto& v : vals) analytic.push_back(g.grad(v.id));

  double linf = 0.0;
  std::vector<TensorT<double>> numeric;
  for (size_t t = 0; t < inputs.size(); ++t) {
    TensorT<double> fd(inputs[t].shape);
    for (int64_t i = 0; i < inputs[t].numel(); ++i) {
      const double orig = inputs[t].data[i];
      inputs[t].data[i] = orig + h;
      const double fp = eval_loss(inputs, build);
      inputs[t].data[i] = orig - h;
      const double fm = eval_loss(inputs, build);
      inputs[t].data[i] = orig;
      fd.data[i] = (fp - fm) / (2.0 * h);
      linf = std::max(linf, std::abs(fd.data[i]));
    }
    numeric.push_back(std::move(fd));
  }

  const double floor_ = 1e-2 * std::max(1.0, linf);
  double worst = 0.0;
  for (size_t t = 0; t < inputs.size(); ++t)
    for (int64_t i = 0; i < inputs[t].numel(); ++i) {
      const double a = analytic[t].data[i];
      const double b = numeric[t].data[i];
      worst = std::max(worst, std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor_}));
    }
  return worst;
}

inline TensorT<double> randu(prrl::Shape sh, std::mt19937& rng, double lo = -1.0,
                             double hi = 1.0) {
  TensorT<double> t(std::move(sh));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& x : t.data) x = d(rng);
  return t;
}

// Uniform values bounded away from zero; for kinked ops like relu where a
// finite-difference step across the kink would be invalid.
inline TensorT<double> randu_away_from(prrl::Shape sh, std::mt19937& rng, double gap) {
  TensorT<double> t(std::move(sh));
  std::uniform_real_distribution<double> d(gap, 1.0);
  std::bernoulli_distribution s(0.5);
  for (auto& x : t.data) x = s(rng) ? d(rng) : -d(rng);
  return t;
}

}  // namespace fd
