#pragma once

#include <memory>
#include <string>
#include <unordered_map>

#include "codemix/nn/tensor.hpp"

namespace codemix::nn {

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(ParamRegistry& params) = 0;
  virtual std::string describe() const = 0;
};

// Standard Adam with bias correction; the policy for models without an
// encoder component.
class Adam : public Optimizer {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(ParamRegistry& params) override;
  std::string describe() const override;

 private:
  struct State {
    std::vector<double> m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::unordered_map<const Param*, State> state_;
};

// Adam variant for encoder-bearing models: decoupled weight decay (biases
// and norm scales exempt), global-norm gradient clipping, and a
// warmup-then-linear-decay learning-rate schedule over a fixed step budget.
class WarmupAdam : public Optimizer {
 public:
  WarmupAdam(double lr, long total_steps, double warmup_fraction = 0.1, double weight_decay = 0.01,
             double clip_norm = 1.0, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(ParamRegistry& params) override;
  std::string describe() const override;

  double schedule(long step) const;  // multiplicative lr factor for 1-based step

 private:
  struct State {
    std::vector<double> m, v;
  };
  double lr_, warmup_fraction_, weight_decay_, clip_norm_, beta1_, beta2_, eps_;
  long total_steps_;
  long t_ = 0;
  std::unordered_map<const Param*, State> state_;
};

}  // namespace codemix::nn
