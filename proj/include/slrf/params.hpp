#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "slrf/rng.hpp"
#include "slrf/tensor.hpp"

namespace slrf {

// Named trainable tensors with their gradient accumulators and Adam moments.
// Insertion order is the canonical order for checkpoints and reductions.
template <class Real>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<Real> value;
    Tensor<Real> grad;
    Tensor<Real> m1, m2;  // Adam moments, allocated lazily
  };

  Tensor<Real>& add(const std::string& name, Tensor<Real> value) {
    if (index_.count(name)) throw std::logic_error("param store: duplicate name " + name);
    index_[name] = static_cast<int>(entries_.size());
    entries_.push_back(Entry{name, std::move(value), Tensor<Real>{}, Tensor<Real>{}, Tensor<Real>{}});
    Entry& e = entries_.back();
    e.grad = Tensor<Real>(e.value.shape);
    return e.value;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  int position(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("param store: unknown name " + name);
    return it->second;
  }

  Entry& entry(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("param store: unknown name " + name);
    return entries_[static_cast<size_t>(it->second)];
  }
  const Entry& entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("param store: unknown name " + name);
    return entries_[static_cast<size_t>(it->second)];
  }

  Tensor<Real>& param(const std::string& name) { return entry(name).value; }
  const Tensor<Real>& param(const std::string& name) const { return entry(name).value; }
  Tensor<Real>& grad(const std::string& name) { return entry(name).grad; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grads() {
    for (auto& e : entries_) e.grad.fill(Real(0));
  }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
  }

  template <class Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<Other>());
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)). Deterministic per seed.
template <class Real>
Tensor<Real> xavier_init(const std::vector<int64_t>& shape, uint64_t seed) {
  if (shape.empty()) throw std::invalid_argument("xavier_init: rank must be >= 1");
  for (int64_t d : shape)
    if (d <= 0) throw std::invalid_argument("xavier_init: zero or negative dim");
  int64_t fan_out = shape[0];
  int64_t fan_in = 1;
  if (shape.size() == 1) {
    fan_in = fan_out;
  } else {
    for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  }
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Rng rng(seed);
  Tensor<Real> t(shape);
  for (auto& e : t.v) e = static_cast<Real>(rng.uniform(-bound, bound));
  return t;
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

// Bias-corrected Adam update over every entry. t is the 1-based step count.
template <class Real>
void adam_step(ParamStore<Real>& store, const AdamConfig& cfg, int64_t t) {
  if (t < 1) throw std::invalid_argument("adam_step: step index must be >= 1");
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& e : store.entries()) {
    if (e.m1.shape != e.value.shape) {
      e.m1 = Tensor<Real>(e.value.shape);
      e.m2 = Tensor<Real>(e.value.shape);
    }
    Real* w = e.value.data();
    const Real* g = e.grad.data();
    Real* m1 = e.m1.data();
    Real* m2 = e.m2.data();
    int64_t n = e.value.numel();
    for (int64_t i = 0; i < n; ++i) {
      double gi = static_cast<double>(g[i]);
      double a = cfg.beta1 * static_cast<double>(m1[i]) + (1.0 - cfg.beta1) * gi;
      double b = cfg.beta2 * static_cast<double>(m2[i]) + (1.0 - cfg.beta2) * gi * gi;
      m1[i] = static_cast<Real>(a);
      m2[i] = static_cast<Real>(b);
      double step = cfg.lr * (a / bc1) / (std::sqrt(b / bc2) + cfg.eps);
      w[i] = static_cast<Real>(static_cast<double>(w[i]) - step);
    }
  }
}

}  // namespace slrf
