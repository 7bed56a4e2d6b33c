#include "codemix/nn/optim.hpp"

#include <cmath>

namespace codemix::nn {

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParamRegistry& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Param* p : params.items()) {
    State& s = state_[p];
    if (s.m.empty()) {
      s.m.assign(p->value.numel(), 0.0);
      s.v.assign(p->value.numel(), 0.0);
    }
    for (size_t i = 0; i < p->value.numel(); ++i) {
      const double g = p->grad.data[i];
      s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
      s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
      const double mhat = s.m[i] / bc1;
      const double vhat = s.v[i] / bc2;
      p->value.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

std::string Adam::describe() const { return "adam(lr=" + std::to_string(lr_) + ")"; }

WarmupAdam::WarmupAdam(double lr, long total_steps, double warmup_fraction, double weight_decay,
                       double clip_norm, double beta1, double beta2, double eps)
    : lr_(lr),
      warmup_fraction_(warmup_fraction),
      weight_decay_(weight_decay),
      clip_norm_(clip_norm),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      total_steps_(total_steps) {
  if (total_steps_ < 1) throw ConfigError("WarmupAdam total_steps must be >= 1");
  if (warmup_fraction_ < 0.0 || warmup_fraction_ >= 1.0) {
    throw ConfigError("warmup fraction must be in [0,1)");
  }
}

double WarmupAdam::schedule(long step) const {
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps_);
  if (warmup_fraction_ > 0.0 && progress <= warmup_fraction_) return progress / warmup_fraction_;
  const double decay = (1.0 - progress) / (1.0 - warmup_fraction_);
  return decay > 0.0 ? decay : 0.0;
}

void WarmupAdam::step(ParamRegistry& params) {
  ++t_;
  if (clip_norm_ > 0.0) {
    const double norm = params.grad_norm();
    if (norm > clip_norm_) {
      const double factor = clip_norm_ / norm;
      for (Param* p : params.items()) {
        for (double& g : p->grad.data) g *= factor;
      }
    }
  }
  const double lr_t = lr_ * schedule(t_);
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Param* p : params.items()) {
    State& s = state_[p];
    if (s.m.empty()) {
      s.m.assign(p->value.numel(), 0.0);
      s.v.assign(p->value.numel(), 0.0);
    }
    for (size_t i = 0; i < p->value.numel(); ++i) {
      const double g = p->grad.data[i];
      s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
      s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
      double update = (s.m[i] / bc1) / (std::sqrt(s.v[i] / bc2) + eps_);
      if (!p->decay_exempt && weight_decay_ > 0.0) update += weight_decay_ * p->value.data[i];
      p->value.data[i] -= lr_t * update;
    }
  }
}

std::string WarmupAdam::describe() const {
  return "warmup_adam(lr=" + std::to_string(lr_) + ",steps=" + std::to_string(total_steps_) + ")";
}

}  // namespace codemix::nn
