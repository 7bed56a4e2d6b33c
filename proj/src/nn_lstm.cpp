#include "codemix/nn/lstm.hpp"

#include <cmath>

namespace codemix::nn {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void LstmParams::init(const std::string& name, size_t in_dim, size_t hidden_dim, Rng& rng,
                      double init_std, ParamRegistry& registry) {
  in = in_dim;
  hidden = hidden_dim;
  w_ih = Param(name + ".w_ih", {in, 4 * hidden});
  w_hh = Param(name + ".w_hh", {hidden, 4 * hidden});
  bias = Param(name + ".bias", {4 * hidden}, /*exempt=*/true);
  for (double& v : w_ih.value.data) v = rng.gaussian(0.0, init_std);
  for (double& v : w_hh.value.data) v = rng.gaussian(0.0, init_std);
  // Forget-gate bias starts at 1 so early training does not wash out state.
  for (size_t i = hidden; i < 2 * hidden; ++i) bias.value.data[i] = 1.0;
  registry.add(&w_ih);
  registry.add(&w_hh);
  registry.add(&bias);
}

void lstm_forward(const LstmParams& params, const double* x, size_t steps, LstmTrace& trace) {
  const size_t H = params.hidden;
  const size_t in = params.in;
  trace.steps = steps;
  trace.hidden = H;
  trace.gate_i.assign(steps * H, 0.0);
  trace.gate_f.assign(steps * H, 0.0);
  trace.gate_g.assign(steps * H, 0.0);
  trace.gate_o.assign(steps * H, 0.0);
  trace.cell.assign(steps * H, 0.0);
  trace.tanh_cell.assign(steps * H, 0.0);
  trace.h.assign(steps * H, 0.0);

  const double* wih = params.w_ih.value.data.data();
  const double* whh = params.w_hh.value.data.data();
  const double* b = params.bias.value.data.data();

  std::vector<double> z(4 * H);
  for (size_t t = 0; t < steps; ++t) {
    for (size_t j = 0; j < 4 * H; ++j) z[j] = b[j];
    const double* xt = x + t * in;
    for (size_t i = 0; i < in; ++i) {
      const double xi = xt[i];
      if (xi == 0.0) continue;
      const double* row = wih + i * 4 * H;
      for (size_t j = 0; j < 4 * H; ++j) z[j] += xi * row[j];
    }
    if (t > 0) {
      const double* hprev = trace.h.data() + (t - 1) * H;
      for (size_t i = 0; i < H; ++i) {
        const double hi = hprev[i];
        if (hi == 0.0) continue;
        const double* row = whh + i * 4 * H;
        for (size_t j = 0; j < 4 * H; ++j) z[j] += hi * row[j];
      }
    }
    const double* cprev = t > 0 ? trace.cell.data() + (t - 1) * H : nullptr;
    for (size_t j = 0; j < H; ++j) {
      const double gi = sigmoid(z[j]);
      const double gf = sigmoid(z[H + j]);
      const double gg = std::tanh(z[2 * H + j]);
      const double go = sigmoid(z[3 * H + j]);
      const double c = gf * (cprev ? cprev[j] : 0.0) + gi * gg;
      const double tc = std::tanh(c);
      trace.gate_i[t * H + j] = gi;
      trace.gate_f[t * H + j] = gf;
      trace.gate_g[t * H + j] = gg;
      trace.gate_o[t * H + j] = go;
      trace.cell[t * H + j] = c;
      trace.tanh_cell[t * H + j] = tc;
      trace.h[t * H + j] = go * tc;
    }
  }
}

void lstm_backward(LstmParams& params, const double* x, const LstmTrace& trace, const double* dh,
                   double* dx) {
  const size_t H = params.hidden;
  const size_t in = params.in;
  const size_t steps = trace.steps;
  if (steps == 0) return;

  const double* wih = params.w_ih.value.data.data();
  const double* whh = params.w_hh.value.data.data();
  double* dwih = params.w_ih.grad.data.data();
  double* dwhh = params.w_hh.grad.data.data();
  double* dbias = params.bias.grad.data.data();

  std::vector<double> dh_next(H, 0.0);  // recurrent hidden grad flowing into step t
  std::vector<double> dc_next(H, 0.0);
  std::vector<double> dz(4 * H);

  for (size_t t = steps; t-- > 0;) {
    const double* gi = trace.gate_i.data() + t * H;
    const double* gf = trace.gate_f.data() + t * H;
    const double* gg = trace.gate_g.data() + t * H;
    const double* go = trace.gate_o.data() + t * H;
    const double* tc = trace.tanh_cell.data() + t * H;
    const double* cprev = t > 0 ? trace.cell.data() + (t - 1) * H : nullptr;

    for (size_t j = 0; j < H; ++j) {
      const double dht = dh[t * H + j] + dh_next[j];
      const double dgo = dht * tc[j];
      double dc = dht * go[j] * (1.0 - tc[j] * tc[j]) + dc_next[j];
      const double dgi = dc * gg[j];
      const double dgf = dc * (cprev ? cprev[j] : 0.0);
      const double dgg = dc * gi[j];
      dc_next[j] = dc * gf[j];
      dz[j] = dgi * gi[j] * (1.0 - gi[j]);
      dz[H + j] = dgf * gf[j] * (1.0 - gf[j]);
      dz[2 * H + j] = dgg * (1.0 - gg[j] * gg[j]);
      dz[3 * H + j] = dgo * go[j] * (1.0 - go[j]);
    }

    for (size_t j = 0; j < 4 * H; ++j) dbias[j] += dz[j];

    const double* xt = x + t * in;
    for (size_t i = 0; i < in; ++i) {
      const double xi = xt[i];
      double* drow = dwih + i * 4 * H;
      const double* wrow = wih + i * 4 * H;
      double acc = 0.0;
      for (size_t j = 0; j < 4 * H; ++j) {
        drow[j] += xi * dz[j];
        acc += wrow[j] * dz[j];
      }
      if (dx) dx[t * in + i] += acc;
    }

    if (t > 0) {
      const double* hprev = trace.h.data() + (t - 1) * H;
      for (size_t i = 0; i < H; ++i) {
        const double hi = hprev[i];
        double* drow = dwhh + i * 4 * H;
        const double* wrow = whh + i * 4 * H;
        double acc = 0.0;
        for (size_t j = 0; j < 4 * H; ++j) {
          drow[j] += hi * dz[j];
          acc += wrow[j] * dz[j];
        }
        dh_next[i] = acc;
      }
    }
  }
}

void BiLstm::init(const std::string& name, size_t in_dim, size_t hidden_dim, Rng& rng,
                  double init_std, ParamRegistry& registry) {
  in = in_dim;
  hidden = hidden_dim;
  fw.init(name + ".fw", in_dim, hidden_dim, rng, init_std, registry);
  bw.init(name + ".bw", in_dim, hidden_dim, rng, init_std, registry);
}

void BiLstm::forward(const double* x, size_t steps, Trace& trace, std::vector<double>& outputs) const {
  trace.steps = steps;
  trace.x_rev.assign(steps * in, 0.0);
  for (size_t t = 0; t < steps; ++t) {
    for (size_t i = 0; i < in; ++i) trace.x_rev[t * in + i] = x[(steps - 1 - t) * in + i];
  }
  lstm_forward(fw, x, steps, trace.fw);
  lstm_forward(bw, trace.x_rev.data(), steps, trace.bw);

  outputs.assign(steps * 2 * hidden, 0.0);
  for (size_t t = 0; t < steps; ++t) {
    for (size_t j = 0; j < hidden; ++j) {
      outputs[t * 2 * hidden + j] = trace.fw.h[t * hidden + j];
      // Backward-direction step for position t is step (steps-1-t).
      outputs[t * 2 * hidden + hidden + j] = trace.bw.h[(steps - 1 - t) * hidden + j];
    }
  }
}

void BiLstm::backward(const double* x, const Trace& trace, const double* doutputs, double* dx) {
  const size_t steps = trace.steps;
  std::vector<double> dh_fw(steps * hidden, 0.0);
  std::vector<double> dh_bw(steps * hidden, 0.0);
  for (size_t t = 0; t < steps; ++t) {
    for (size_t j = 0; j < hidden; ++j) {
      dh_fw[t * hidden + j] = doutputs[t * 2 * hidden + j];
      dh_bw[(steps - 1 - t) * hidden + j] = doutputs[t * 2 * hidden + hidden + j];
    }
  }
  lstm_backward(fw, x, trace.fw, dh_fw.data(), dx);
  std::vector<double> dx_rev;
  if (dx) dx_rev.assign(steps * in, 0.0);
  lstm_backward(bw, trace.x_rev.data(), trace.bw, dh_bw.data(), dx ? dx_rev.data() : nullptr);
  if (dx) {
    for (size_t t = 0; t < steps; ++t) {
      for (size_t i = 0; i < in; ++i) dx[(steps - 1 - t) * in + i] += dx_rev[t * in + i];
    }
  }
}

void BiLstm::final_states(const Trace& trace, double* out) const {
  const size_t last = trace.steps - 1;
  for (size_t j = 0; j < hidden; ++j) {
    out[j] = trace.fw.h[last * hidden + j];
    out[hidden + j] = trace.bw.h[last * hidden + j];
  }
}

void BiLstm::final_states_grad_to_outputs(const Trace& trace, const double* dout,
                                          std::vector<double>& doutputs) const {
  const size_t last = trace.steps - 1;
  for (size_t j = 0; j < hidden; ++j) {
    // fw final state is the position-aligned output at the last position;
    // bw final state is the output at position 0.
    doutputs[last * 2 * hidden + j] += dout[j];
    doutputs[0 * 2 * hidden + hidden + j] += dout[hidden + j];
  }
}

}  // namespace codemix::nn
