#pragma once

#include <cstdint>
#include <vector>

#include "codemix/nn/tensor.hpp"

namespace codemix::nn {

// Fully-connected layer, weights [in][out]. forward/backward operate on
// flattened row blocks so callers can batch arbitrary leading dimensions.
struct Linear {
  Param w, b;
  size_t in = 0, out = 0;

  void init(const std::string& name, size_t in_dim, size_t out_dim, Rng& rng, double init_std,
            ParamRegistry& registry);

  void forward(const double* x, size_t rows, double* y) const;
  // Accumulates into param grads and (when non-null) dx.
  void backward(const double* x, const double* dy, size_t rows, double* dx);
};

struct Embedding {
  Param table;  // [count][dim]
  size_t count = 0, dim = 0;

  void init(const std::string& name, size_t count_, size_t dim_, Rng& rng, double init_std,
            ParamRegistry& registry);

  const double* row(int id) const;
  void accumulate_grad(int id, const double* drow);
};

struct LayerNorm {
  Param gamma, beta;
  size_t dim = 0;
  double eps = 1e-5;

  void init(const std::string& name, size_t dim_, ParamRegistry& registry);

  // Caches mean and reciprocal stddev per row for the backward pass.
  void forward(const double* x, size_t rows, double* y, double* mean, double* rstd) const;
  void backward(const double* x, const double* mean, const double* rstd, const double* dy,
                size_t rows, double* dx);
};

double gelu(double x);
double gelu_grad(double x);

// In-place stable softmax over each row of length n.
void softmax_rows(double* logits, size_t rows, size_t n);

// Mean cross-entropy over rows given probabilities (already softmaxed) and
// integer targets; writes dlogits = (p - onehot) * weight / denom when asked.
// Per-row weights are optional (class-weighted loss); denom is the weight sum.
double cross_entropy_mean(const double* probs, const int* targets, size_t rows, size_t n,
                          const double* row_weights, double* dlogits);

// Inverted-dropout mask: entries are 0 with probability rate, else 1/(1-rate).
std::vector<double> dropout_mask(size_t n, double rate, Rng& rng);

}  // namespace codemix::nn
