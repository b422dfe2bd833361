#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "prrl/tensor.hpp"

namespace prrl {

template <class S>
struct ParamT {
  std::string name;
  TensorT<S> value;
  TensorT<S> grad;
  bool grad_valid = false;  // set by backward(), cleared by zero_grad()
};

// Flattened gradient in canonical order: parameters in registration order,
// each row-major. layout_id identifies the ordering it was flattened under.
template <class S>
struct GradientVectorT {
  std::vector<S> values;
  uint64_t layout_id = 0;
};

using GradientVector = GradientVectorT<float>;

// Owns a model's parameters in registration order. That order, together
// with each parameter's shape, defines the flatten layout.
template <class S>
class ParamSetT {
 public:
  ParamT<S>& add(const std::string& name, TensorT<S> init) {
    auto p = std::make_unique<ParamT<S>>();
    p->name = name;
    p->grad = TensorT<S>::zeros(init.shape);
    p->value = std::move(init);
    hash_mix(name, p->value.shape);
    total_ += p->value.numel();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  size_t count() const { return params_.size(); }
  int64_t total_size() const { return total_; }
  uint64_t layout_id() const { return hash_; }

  ParamT<S>& at(size_t i) { return *params_[i]; }
  const ParamT<S>& at(size_t i) const { return *params_[i]; }

  void zero_grad() {
    for (auto& p : params_) {
      for (auto& g : p->grad.data) g = S(0);
      p->grad_valid = false;
    }
  }

  GradientVectorT<S> flatten_gradients() const {
    GradientVectorT<S> out;
    out.layout_id = hash_;
    out.values.reserve(total_);
    for (const auto& p : params_) {
      if (!p->grad_valid)
        throw data_error("flatten_gradients: parameter '" + p->name +
                         "' has no populated gradient (run backward first)");
      out.values.insert(out.values.end(), p->grad.data.begin(), p->grad.data.end());
    }
    return out;
  }

  std::vector<TensorT<S>> unflatten(const GradientVectorT<S>& gv) const {
    if (gv.layout_id != hash_)
      throw data_error("unflatten: gradient layout mismatch");
    if ((int64_t)gv.values.size() != total_)
      throw data_error("unflatten: length " + std::to_string(gv.values.size()) +
                       " != parameter count " + std::to_string(total_));
    std::vector<TensorT<S>> out;
    out.reserve(params_.size());
    size_t off = 0;
    for (const auto& p : params_) {
      TensorT<S> t(p->value.shape);
      std::copy(gv.values.begin() + off, gv.values.begin() + off + t.numel(),
                t.data.begin());
      off += t.numel();
      out.push_back(std::move(t));
    }
    return out;
  }

  // Serialization order for checkpoints follows the same canonical layout.
  std::vector<S> flatten_values() const {
    std::vector<S> out;
    out.reserve(total_);
    for (const auto& p : params_)
      out.insert(out.end(), p->value.data.begin(), p->value.data.end());
    return out;
  }

  void load_values(const std::vector<S>& flat) {
    if ((int64_t)flat.size() != total_)
      throw data_error("load_values: length " + std::to_string(flat.size()) +
                       " != parameter count " + std::to_string(total_));
    size_t off = 0;
    for (auto& p : params_) {
      std::copy(flat.begin() + off, flat.begin() + off + p->value.numel(),
                p->value.data.begin());
      off += p->value.numel();
    }
  }

 private:
  void hash_mix(const std::string& name, const Shape& shape) {
    for (unsigned char c : name) {
      hash_ ^= c;
      hash_ *= 0x100000001b3ull;
    }
    for (int d : shape) {
      hash_ ^= (uint64_t)(uint32_t)d;
      hash_ *= 0x100000001b3ull;
    }
  }

  std::vector<std::unique_ptr<ParamT<S>>> params_;
  int64_t total_ = 0;
  uint64_t hash_ = 0xcbf29ce484222325ull;  // FNV-1a
};

}  // namespace prrl
