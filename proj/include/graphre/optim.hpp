#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "graphre/errors.hpp"
#include "graphre/rng.hpp"
#include "graphre/tensor.hpp"

namespace graphre {

// A named trainable tensor plus its AdamW state.
struct Parameter {
  std::string name;
  Tensor tensor;
  std::vector<double> m1;  // first moment
  std::vector<double> m2;  // second moment
  std::int64_t step = 0;
};

// Owns every parameter of a model, in registration order. Registration order
// is part of the determinism contract: it fixes both initialization and the
// optimizer's update sequence.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}

  Tensor add(const std::string& name, Shape shape,
             std::vector<double> values) {
    if (index_.count(name))
      throw usage_error("parameter registered twice: " + name);
    auto p = std::make_shared<Parameter>();
    p->name = name;
    p->tensor = Tensor::from(std::move(shape), std::move(values), true);
    index_[name] = params_.size();
    params_.push_back(p);
    return p->tensor;
  }

  Tensor add_zeros(const std::string& name, Shape shape) {
    auto n = shape_numel(shape);
    return add(name, std::move(shape), std::vector<double>(n, 0.0));
  }

  Tensor add_constant(const std::string& name, Shape shape, double v) {
    auto n = shape_numel(shape);
    return add(name, std::move(shape), std::vector<double>(n, v));
  }

  // uniform Xavier/Glorot for weight matrices
  Tensor add_xavier(const std::string& name, int fan_in, int fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<double> v(static_cast<size_t>(fan_in) * fan_out);
    for (auto& x : v) x = rng_.uniform(-limit, limit);
    return add(name, {fan_in, fan_out}, std::move(v));
  }

  Tensor add_xavier_vec(const std::string& name, int n, int fan_in,
                        int fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng_.uniform(-limit, limit);
    return add(name, {n}, std::move(v));
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Parameter& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw usage_error("unknown parameter: " + name);
    return *params_[it->second];
  }

  std::vector<std::shared_ptr<Parameter>>& all() { return params_; }
  const std::vector<std::shared_ptr<Parameter>>& all() const { return params_; }

  void zero_grads() {
    for (auto& p : params_) p->tensor.zero_grad();
  }

  std::int64_t total_size() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p->tensor.size();
    return n;
  }

 private:
  std::vector<std::shared_ptr<Parameter>> params_;
  std::map<std::string, size_t> index_;
  SplitMix64 rng_;
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Decoupled AdamW: weight decay is applied directly to the weights, not
// through the gradient. Parameters whose gradient was never populated this
// round are left untouched (they were not part of the graph).
inline void adamw_step(ParameterStore& store, const AdamWConfig& cfg) {
  if (!(cfg.lr > 0) || !(cfg.beta1 > 0) || !(cfg.beta2 > 0) || !(cfg.eps > 0) ||
      cfg.weight_decay < 0)
    throw usage_error("adamw_step: hyperparameters must be positive");
  bool any = false;
  for (auto& p : store.all())
    if (p->tensor.has_grad()) any = true;
  if (!any)
    throw usage_error("adamw_step: no gradients present; call backward first");
  for (auto& p : store.all()) {
    if (!p->tensor.has_grad()) continue;
    auto& w = p->tensor.data();
    const auto& g = p->tensor.grad();
    if (p->m1.empty()) {
      p->m1.assign(w.size(), 0.0);
      p->m2.assign(w.size(), 0.0);
    }
    p->step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->step));
    for (size_t i = 0; i < w.size(); ++i) {
      p->m1[i] = cfg.beta1 * p->m1[i] + (1.0 - cfg.beta1) * g[i];
      p->m2[i] = cfg.beta2 * p->m2[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = p->m1[i] / bc1;
      const double vhat = p->m2[i] / bc2;
      w[i] *= (1.0 - cfg.lr * cfg.weight_decay);
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    p->tensor.zero_grad();
  }
}

// global grad norm over populated gradients; used by the optional clip
inline double grad_norm(const ParameterStore& store) {
  double sq = 0.0;
  for (const auto& p : store.all()) {
    if (!p->tensor.has_grad()) continue;
    for (double g : p->tensor.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

inline void clip_grad_norm(ParameterStore& store, double max_norm) {
  const double norm = grad_norm(store);
  if (norm <= max_norm || norm == 0.0) return;
  const double s = max_norm / norm;
  for (auto& p : store.all()) {
    if (!p->tensor.has_grad()) continue;
    for (auto& g : p->tensor.grad()) g *= s;
  }
}

}  // namespace graphre
