#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "codemix/common.hpp"

namespace codemix::nn {

// Dense row-major double tensor. All training math runs in double so the
// finite-difference gradient harness has headroom below its tolerance.
struct Tensor {
  std::vector<size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<size_t> dims) : shape(std::move(dims)) {
    data.assign(numel_of(shape), 0.0);
  }

  static size_t numel_of(const std::vector<size_t>& dims) {
    size_t n = 1;
    for (size_t d : dims) n *= d;
    return n;
  }

  size_t numel() const { return data.size(); }
  void zero() { std::fill(data.begin(), data.end(), 0.0); }

  double& operator[](size_t i) { return data[i]; }
  double operator[](size_t i) const { return data[i]; }

  double& at2(size_t i, size_t j) { return data[i * shape[1] + j]; }
  double at2(size_t i, size_t j) const { return data[i * shape[1] + j]; }
};

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  // Biases and LayerNorm scales are exempt from weight decay.
  bool decay_exempt = false;

  Param() = default;
  Param(std::string param_name, std::vector<size_t> dims, bool exempt = false)
      : name(std::move(param_name)), value(dims), grad(std::move(dims)), decay_exempt(exempt) {}
};

// Non-owning list of trainable parameters. Optimizers, checkpoints, and the
// gradient-check harness all iterate this in registration order, which keeps
// every consumer deterministic.
class ParamRegistry {
 public:
  void add(Param* param) {
    if (!param) throw ConfigError("null param registered");
    for (const Param* existing : params_) {
      if (existing->name == param->name) {
        throw ConfigError("duplicate param name: " + param->name);
      }
    }
    params_.push_back(param);
  }

  void add_all(const ParamRegistry& other) {
    for (Param* p : other.params_) add(p);
  }

  const std::vector<Param*>& items() const { return params_; }
  size_t size() const { return params_.size(); }

  Param* find(const std::string& name) const {
    for (Param* p : params_) {
      if (p->name == name) return p;
    }
    return nullptr;
  }

  void zero_grads() {
    for (Param* p : params_) p->grad.zero();
  }

  size_t total_scalars() const {
    size_t n = 0;
    for (const Param* p : params_) n += p->value.numel();
    return n;
  }

  double grad_norm() const;

  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& snapshot);

 private:
  std::vector<Param*> params_;
};

}  // namespace codemix::nn
