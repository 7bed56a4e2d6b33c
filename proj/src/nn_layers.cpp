#include "codemix/nn/layers.hpp"

#include <cmath>

namespace codemix::nn {

double ParamRegistry::grad_norm() const {
  double sq = 0.0;
  for (const Param* p : params_) {
    for (double g : p->grad.data) sq += g * g;
  }
  return std::sqrt(sq);
}

std::vector<std::vector<double>> ParamRegistry::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(params_.size());
  for (const Param* p : params_) out.push_back(p->value.data);
  return out;
}

void ParamRegistry::restore(const std::vector<std::vector<double>>& snapshot) {
  if (snapshot.size() != params_.size()) throw ConfigError("snapshot/registry size mismatch");
  for (size_t i = 0; i < params_.size(); ++i) {
    if (snapshot[i].size() != params_[i]->value.data.size()) {
      throw ConfigError("snapshot shape mismatch for " + params_[i]->name);
    }
    params_[i]->value.data = snapshot[i];
  }
}

void Linear::init(const std::string& name, size_t in_dim, size_t out_dim, Rng& rng, double init_std,
                  ParamRegistry& registry) {
  in = in_dim;
  out = out_dim;
  w = Param(name + ".w", {in, out});
  b = Param(name + ".b", {out}, /*exempt=*/true);
  for (double& v : w.value.data) v = rng.gaussian(0.0, init_std);
  registry.add(&w);
  registry.add(&b);
}

void Linear::forward(const double* x, size_t rows, double* y) const {
  const double* wd = w.value.data.data();
  const double* bd = b.value.data.data();
  for (size_t r = 0; r < rows; ++r) {
    double* yr = y + r * out;
    for (size_t o = 0; o < out; ++o) yr[o] = bd[o];
    const double* xr = x + r * in;
    for (size_t i = 0; i < in; ++i) {
      const double xi = xr[i];
      if (xi == 0.0) continue;
      const double* wrow = wd + i * out;
      for (size_t o = 0; o < out; ++o) yr[o] += xi * wrow[o];
    }
  }
}

void Linear::backward(const double* x, const double* dy, size_t rows, double* dx) {
  double* dw = w.grad.data.data();
  double* db = b.grad.data.data();
  const double* wd = w.value.data.data();
  for (size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * in;
    const double* dyr = dy + r * out;
    for (size_t o = 0; o < out; ++o) db[o] += dyr[o];
    for (size_t i = 0; i < in; ++i) {
      const double xi = xr[i];
      double* dwrow = dw + i * out;
      double acc = 0.0;
      const double* wrow = wd + i * out;
      for (size_t o = 0; o < out; ++o) {
        dwrow[o] += xi * dyr[o];
        acc += wrow[o] * dyr[o];
      }
      if (dx) dx[r * in + i] += acc;
    }
  }
}

void Embedding::init(const std::string& name, size_t count_, size_t dim_, Rng& rng, double init_std,
                     ParamRegistry& registry) {
  count = count_;
  dim = dim_;
  table = Param(name, {count, dim});
  for (double& v : table.value.data) v = rng.gaussian(0.0, init_std);
  registry.add(&table);
}

const double* Embedding::row(int id) const {
  if (id < 0 || static_cast<size_t>(id) >= count) {
    throw ConfigError("embedding id out of range: " + std::to_string(id) + " in " + table.name);
  }
  return table.value.data.data() + static_cast<size_t>(id) * dim;
}

void Embedding::accumulate_grad(int id, const double* drow) {
  double* g = table.grad.data.data() + static_cast<size_t>(id) * dim;
  for (size_t i = 0; i < dim; ++i) g[i] += drow[i];
}

void LayerNorm::init(const std::string& name, size_t dim_, ParamRegistry& registry) {
  dim = dim_;
  gamma = Param(name + ".gamma", {dim}, /*exempt=*/true);
  beta = Param(name + ".beta", {dim}, /*exempt=*/true);
  std::fill(gamma.value.data.begin(), gamma.value.data.end(), 1.0);
  registry.add(&gamma);
  registry.add(&beta);
}

void LayerNorm::forward(const double* x, size_t rows, double* y, double* mean, double* rstd) const {
  const double* g = gamma.value.data.data();
  const double* be = beta.value.data.data();
  for (size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * dim;
    double mu = 0.0;
    for (size_t i = 0; i < dim; ++i) mu += xr[i];
    mu /= static_cast<double>(dim);
    double var = 0.0;
    for (size_t i = 0; i < dim; ++i) {
      const double d = xr[i] - mu;
      var += d * d;
    }
    var /= static_cast<double>(dim);
    const double rs = 1.0 / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    double* yr = y + r * dim;
    for (size_t i = 0; i < dim; ++i) yr[i] = (xr[i] - mu) * rs * g[i] + be[i];
  }
}

void LayerNorm::backward(const double* x, const double* mean, const double* rstd, const double* dy,
                         size_t rows, double* dx) {
  const double* g = gamma.value.data.data();
  double* dg = gamma.grad.data.data();
  double* db = beta.grad.data.data();
  const double inv_dim = 1.0 / static_cast<double>(dim);
  for (size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * dim;
    const double* dyr = dy + r * dim;
    const double mu = mean[r];
    const double rs = rstd[r];

    double sum_dxhat = 0.0;
    double sum_dxhat_xhat = 0.0;
    for (size_t i = 0; i < dim; ++i) {
      const double xhat = (xr[i] - mu) * rs;
      const double dxhat = dyr[i] * g[i];
      dg[i] += dyr[i] * xhat;
      db[i] += dyr[i];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat;
    }
    double* dxr = dx + r * dim;
    for (size_t i = 0; i < dim; ++i) {
      const double xhat = (xr[i] - mu) * rs;
      const double dxhat = dyr[i] * g[i];
      dxr[i] += rs * (dxhat - inv_dim * sum_dxhat - xhat * inv_dim * sum_dxhat_xhat);
    }
  }
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

void softmax_rows(double* logits, size_t rows, size_t n) {
  for (size_t r = 0; r < rows; ++r) {
    double* row = logits + r * n;
    double mx = row[0];
    for (size_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
      row[i] = std::exp(row[i] - mx);
      sum += row[i];
    }
    const double inv = 1.0 / sum;
    for (size_t i = 0; i < n; ++i) row[i] *= inv;
  }
}

double cross_entropy_mean(const double* probs, const int* targets, size_t rows, size_t n,
                          const double* row_weights, double* dlogits) {
  if (rows == 0) throw TrainError("cross entropy over zero rows");
  double denom = 0.0;
  for (size_t r = 0; r < rows; ++r) denom += row_weights ? row_weights[r] : 1.0;
  if (denom <= 0.0) throw TrainError("cross entropy with nonpositive weight sum");

  double loss = 0.0;
  for (size_t r = 0; r < rows; ++r) {
    const int t = targets[r];
    if (t < 0 || static_cast<size_t>(t) >= n) throw TrainError("cross entropy target out of range");
    const double weight = row_weights ? row_weights[r] : 1.0;
    const double p = std::max(probs[r * n + static_cast<size_t>(t)], 1e-300);
    loss -= weight * std::log(p);
    if (dlogits) {
      const double scale = weight / denom;
      for (size_t i = 0; i < n; ++i) {
        dlogits[r * n + i] = scale * (probs[r * n + i] - (static_cast<size_t>(t) == i ? 1.0 : 0.0));
      }
    }
  }
  return loss / denom;
}

std::vector<double> dropout_mask(size_t n, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0,1)");
  std::vector<double> mask(n, 1.0);
  if (rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (size_t i = 0; i < n; ++i) {
    mask[i] = rng.next_double() < rate ? 0.0 : keep_scale;
  }
  return mask;
}

}  // namespace codemix::nn
