#pragma once

#include <vector>

#include "codemix/nn/tensor.hpp"

namespace codemix::nn {

// Single-direction LSTM. Gate order in the fused weight matrices is
// (input, forget, cell, output); initial hidden and cell states are zero.
struct LstmParams {
  Param w_ih;  // [in][4H]
  Param w_hh;  // [H][4H]
  Param bias;  // [4H]
  size_t in = 0, hidden = 0;

  void init(const std::string& name, size_t in_dim, size_t hidden_dim, Rng& rng, double init_std,
            ParamRegistry& registry);
};

struct LstmTrace {
  size_t steps = 0;
  size_t hidden = 0;
  // Per-step gate activations and states, each [steps][H].
  std::vector<double> gate_i, gate_f, gate_g, gate_o;
  std::vector<double> cell, tanh_cell, h;
};

// x: [steps][in] in processing order. Outputs land in trace.h.
void lstm_forward(const LstmParams& params, const double* x, size_t steps, LstmTrace& trace);

// dh: [steps][H] gradient w.r.t. each step's hidden output. Accumulates param
// grads and, when non-null, dx ([steps][in], processing order).
void lstm_backward(LstmParams& params, const double* x, const LstmTrace& trace, const double* dh,
                   double* dx);

// Bidirectional wrapper: forward pass over x plus a backward pass over
// reversed x; the position-aligned output at t is [h_fw(t) ‖ h_bw(t)].
struct BiLstm {
  LstmParams fw, bw;
  size_t in = 0, hidden = 0;

  void init(const std::string& name, size_t in_dim, size_t hidden_dim, Rng& rng, double init_std,
            ParamRegistry& registry);

  struct Trace {
    LstmTrace fw, bw;
    std::vector<double> x_rev;
    size_t steps = 0;
  };

  size_t output_dim() const { return 2 * hidden; }

  // outputs: [steps][2H], position-aligned.
  void forward(const double* x, size_t steps, Trace& trace, std::vector<double>& outputs) const;
  // doutputs: [steps][2H], position-aligned; accumulates into params and dx.
  void backward(const double* x, const Trace& trace, const double* doutputs, double* dx);

  // Sequence encoding readout: final forward state ‖ final backward state
  // (the backward direction's final state corresponds to input position 0).
  void final_states(const Trace& trace, double* out) const;
  // Routes a gradient on final_states into a position-aligned doutputs buffer.
  void final_states_grad_to_outputs(const Trace& trace, const double* dout,
                                    std::vector<double>& doutputs) const;
};

}  // namespace codemix::nn
