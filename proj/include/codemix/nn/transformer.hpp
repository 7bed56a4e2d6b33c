#pragma once

#include <cstdint>
#include <vector>

#include "codemix/nn/layers.hpp"

namespace codemix::nn {

struct EncoderConfig {
  size_t vocab_size = 0;
  size_t d_model = 32;
  size_t n_layers = 2;
  size_t n_heads = 4;
  size_t d_ff = 64;
  size_t max_len = 384;

  void validate() const;
};

// Compact BERT-style encoder: token + position embeddings through layer-
// normalized post-LN transformer blocks. No dropout anywhere in the encoder;
// the only dropout in the system sits at the BiLSTM outputs of the fusion
// model, so eval/train encoder passes are identical and fully deterministic.
class TransformerEncoder {
 public:
  void init(const EncoderConfig& config, const std::string& prefix, uint64_t seed,
            ParamRegistry& registry);

  struct LayerTrace {
    std::vector<double> x_in;                // [B*T*D]
    std::vector<double> q, k, v;             // [B*T*D]
    std::vector<double> att;                 // [B*H*T*T]
    std::vector<double> ctx;                 // [B*T*D]
    std::vector<double> resid1;              // [B*T*D] x + attn
    std::vector<double> ln1_mean, ln1_rstd;  // [B*T]
    std::vector<double> x1;                  // [B*T*D]
    std::vector<double> ff_pre;              // [B*T*F]
    std::vector<double> ff_act;              // [B*T*F]
    std::vector<double> resid2;              // [B*T*D]
    std::vector<double> ln2_mean, ln2_rstd;  // [B*T]
  };

  struct Trace {
    size_t batch = 0, seq = 0;
    std::vector<std::vector<int>> ids;
    std::vector<std::vector<uint8_t>> mask;
    std::vector<double> emb_sum;                 // [B*T*D] pre-LN embeddings
    std::vector<double> emb_mean, emb_rstd;      // [B*T]
    std::vector<LayerTrace> layers;
    std::vector<double> states;                  // [B*T*D] final output
  };

  // ids/mask: [B][T]; padded key positions are excluded from attention, so
  // the states at real positions are invariant to padding length.
  void forward(const std::vector<std::vector<int>>& ids,
               const std::vector<std::vector<uint8_t>>& mask, Trace& trace) const;

  // dstates: [B*T*D]; accumulates parameter gradients.
  void backward(const Trace& trace, const std::vector<double>& dstates);

  const EncoderConfig& config() const { return cfg_; }

 private:
  struct Layer {
    Linear wq, wk, wv, wo;
    LayerNorm ln1;
    Linear ff1, ff2;
    LayerNorm ln2;
  };

  EncoderConfig cfg_;
  Embedding tok_emb_;
  Param pos_emb_;  // [max_len][D]
  LayerNorm emb_ln_;
  std::vector<Layer> layers_;
};

}  // namespace codemix::nn
