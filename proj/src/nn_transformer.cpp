#include "codemix/nn/transformer.hpp"

#include <cmath>

namespace codemix::nn {

namespace {
constexpr double kMaskedScore = -1e9;
constexpr double kInitStd = 0.02;
}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size == 0) throw ConfigError("encoder vocab_size must be > 0");
  if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_ff == 0 || max_len == 0) {
    throw ConfigError("encoder dimensions must be positive");
  }
  if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
}

void TransformerEncoder::init(const EncoderConfig& config, const std::string& prefix, uint64_t seed,
                              ParamRegistry& registry) {
  config.validate();
  cfg_ = config;
  Rng rng(seed);
  tok_emb_.init(prefix + "tok_emb", cfg_.vocab_size, cfg_.d_model, rng, kInitStd, registry);
  pos_emb_ = Param(prefix + "pos_emb", {cfg_.max_len, cfg_.d_model});
  for (double& v : pos_emb_.value.data) v = rng.gaussian(0.0, kInitStd);
  registry.add(&pos_emb_);
  emb_ln_.init(prefix + "emb_ln", cfg_.d_model, registry);

  layers_.resize(cfg_.n_layers);
  for (size_t l = 0; l < cfg_.n_layers; ++l) {
    const std::string lp = prefix + "layers." + std::to_string(l) + ".";
    layers_[l].wq.init(lp + "attn.wq", cfg_.d_model, cfg_.d_model, rng, kInitStd, registry);
    layers_[l].wk.init(lp + "attn.wk", cfg_.d_model, cfg_.d_model, rng, kInitStd, registry);
    layers_[l].wv.init(lp + "attn.wv", cfg_.d_model, cfg_.d_model, rng, kInitStd, registry);
    layers_[l].wo.init(lp + "attn.wo", cfg_.d_model, cfg_.d_model, rng, kInitStd, registry);
    layers_[l].ln1.init(lp + "ln1", cfg_.d_model, registry);
    layers_[l].ff1.init(lp + "ff1", cfg_.d_model, cfg_.d_ff, rng, kInitStd, registry);
    layers_[l].ff2.init(lp + "ff2", cfg_.d_ff, cfg_.d_model, rng, kInitStd, registry);
    layers_[l].ln2.init(lp + "ln2", cfg_.d_model, registry);
  }
}

void TransformerEncoder::forward(const std::vector<std::vector<int>>& ids,
                                 const std::vector<std::vector<uint8_t>>& mask,
                                 Trace& trace) const {
  const size_t B = ids.size();
  if (B == 0) throw TrainError("encoder forward on empty batch");
  const size_t T = ids[0].size();
  if (T > cfg_.max_len) {
    throw ConfigError("sequence length " + std::to_string(T) + " exceeds encoder max_len " +
                      std::to_string(cfg_.max_len));
  }
  const size_t D = cfg_.d_model;
  const size_t H = cfg_.n_heads;
  const size_t dh = D / H;
  const size_t F = cfg_.d_ff;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  trace.batch = B;
  trace.seq = T;
  trace.ids = ids;
  trace.mask = mask;
  trace.emb_sum.assign(B * T * D, 0.0);
  trace.emb_mean.assign(B * T, 0.0);
  trace.emb_rstd.assign(B * T, 0.0);
  trace.layers.assign(cfg_.n_layers, LayerTrace{});
  trace.states.assign(B * T * D, 0.0);

  for (size_t b = 0; b < B; ++b) {
    if (ids[b].size() != T || mask[b].size() != T) {
      throw TrainError("ragged batch passed to encoder");
    }
    for (size_t t = 0; t < T; ++t) {
      const double* tok = tok_emb_.row(ids[b][t]);
      const double* pos = pos_emb_.value.data.data() + t * D;
      double* dst = trace.emb_sum.data() + (b * T + t) * D;
      for (size_t d = 0; d < D; ++d) dst[d] = tok[d] + pos[d];
    }
  }

  std::vector<double> x(B * T * D);
  emb_ln_.forward(trace.emb_sum.data(), B * T, x.data(), trace.emb_mean.data(),
                  trace.emb_rstd.data());

  for (size_t l = 0; l < cfg_.n_layers; ++l) {
    const Layer& layer = layers_[l];
    LayerTrace& lt = trace.layers[l];
    lt.x_in = x;
    lt.q.assign(B * T * D, 0.0);
    lt.k.assign(B * T * D, 0.0);
    lt.v.assign(B * T * D, 0.0);
    lt.att.assign(B * H * T * T, 0.0);
    lt.ctx.assign(B * T * D, 0.0);

    layer.wq.forward(lt.x_in.data(), B * T, lt.q.data());
    layer.wk.forward(lt.x_in.data(), B * T, lt.k.data());
    layer.wv.forward(lt.x_in.data(), B * T, lt.v.data());

    for (size_t b = 0; b < B; ++b) {
      for (size_t h = 0; h < H; ++h) {
        for (size_t i = 0; i < T; ++i) {
          double* att_row = lt.att.data() + ((b * H + h) * T + i) * T;
          const double* qi = lt.q.data() + (b * T + i) * D + h * dh;
          double mx = -1e300;
          for (size_t j = 0; j < T; ++j) {
            double score = kMaskedScore;
            if (mask[b][j]) {
              const double* kj = lt.k.data() + (b * T + j) * D + h * dh;
              double dot = 0.0;
              for (size_t d = 0; d < dh; ++d) dot += qi[d] * kj[d];
              score = dot * scale;
            }
            att_row[j] = score;
            mx = std::max(mx, score);
          }
          double sum = 0.0;
          for (size_t j = 0; j < T; ++j) {
            att_row[j] = std::exp(att_row[j] - mx);
            sum += att_row[j];
          }
          const double inv = 1.0 / sum;
          for (size_t j = 0; j < T; ++j) att_row[j] *= inv;

          double* ci = lt.ctx.data() + (b * T + i) * D + h * dh;
          for (size_t j = 0; j < T; ++j) {
            const double a = att_row[j];
            if (a == 0.0) continue;
            const double* vj = lt.v.data() + (b * T + j) * D + h * dh;
            for (size_t d = 0; d < dh; ++d) ci[d] += a * vj[d];
          }
        }
      }
    }

    std::vector<double> attn_out(B * T * D, 0.0);
    layer.wo.forward(lt.ctx.data(), B * T, attn_out.data());

    lt.resid1.assign(B * T * D, 0.0);
    for (size_t i = 0; i < B * T * D; ++i) lt.resid1[i] = lt.x_in[i] + attn_out[i];
    lt.ln1_mean.assign(B * T, 0.0);
    lt.ln1_rstd.assign(B * T, 0.0);
    lt.x1.assign(B * T * D, 0.0);
    layer.ln1.forward(lt.resid1.data(), B * T, lt.x1.data(), lt.ln1_mean.data(), lt.ln1_rstd.data());

    lt.ff_pre.assign(B * T * F, 0.0);
    layer.ff1.forward(lt.x1.data(), B * T, lt.ff_pre.data());
    lt.ff_act.assign(B * T * F, 0.0);
    for (size_t i = 0; i < B * T * F; ++i) lt.ff_act[i] = gelu(lt.ff_pre[i]);
    std::vector<double> ff_out(B * T * D, 0.0);
    layer.ff2.forward(lt.ff_act.data(), B * T, ff_out.data());

    lt.resid2.assign(B * T * D, 0.0);
    for (size_t i = 0; i < B * T * D; ++i) lt.resid2[i] = lt.x1[i] + ff_out[i];
    lt.ln2_mean.assign(B * T, 0.0);
    lt.ln2_rstd.assign(B * T, 0.0);
    std::vector<double> x_out(B * T * D, 0.0);
    layer.ln2.forward(lt.resid2.data(), B * T, x_out.data(), lt.ln2_mean.data(), lt.ln2_rstd.data());
    x = std::move(x_out);
  }

  trace.states = x;
}

void TransformerEncoder::backward(const Trace& trace, const std::vector<double>& dstates) {
  const size_t B = trace.batch;
  const size_t T = trace.seq;
  const size_t D = cfg_.d_model;
  const size_t H = cfg_.n_heads;
  const size_t dh = D / H;
  const size_t F = cfg_.d_ff;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<double> dx = dstates;  // gradient w.r.t. current layer's output

  for (size_t l = cfg_.n_layers; l-- > 0;) {
    Layer& layer = layers_[l];
    const LayerTrace& lt = trace.layers[l];

    // ln2
    std::vector<double> dresid2(B * T * D, 0.0);
    layer.ln2.backward(lt.resid2.data(), lt.ln2_mean.data(), lt.ln2_rstd.data(), dx.data(), B * T,
                       dresid2.data());

    // resid2 = x1 + ff2(gelu(ff1(x1)))
    std::vector<double> dff_act(B * T * F, 0.0);
    layer.ff2.backward(lt.ff_act.data(), dresid2.data(), B * T, dff_act.data());
    std::vector<double> dff_pre(B * T * F, 0.0);
    for (size_t i = 0; i < B * T * F; ++i) dff_pre[i] = dff_act[i] * gelu_grad(lt.ff_pre[i]);
    std::vector<double> dx1 = dresid2;  // residual branch
    layer.ff1.backward(lt.x1.data(), dff_pre.data(), B * T, dx1.data());

    // ln1
    std::vector<double> dresid1(B * T * D, 0.0);
    layer.ln1.backward(lt.resid1.data(), lt.ln1_mean.data(), lt.ln1_rstd.data(), dx1.data(), B * T,
                       dresid1.data());

    // resid1 = x_in + wo(ctx)
    std::vector<double> dctx(B * T * D, 0.0);
    layer.wo.backward(lt.ctx.data(), dresid1.data(), B * T, dctx.data());

    std::vector<double> dq(B * T * D, 0.0);
    std::vector<double> dk(B * T * D, 0.0);
    std::vector<double> dv(B * T * D, 0.0);

    for (size_t b = 0; b < B; ++b) {
      for (size_t h = 0; h < H; ++h) {
        for (size_t i = 0; i < T; ++i) {
          const double* att_row = lt.att.data() + ((b * H + h) * T + i) * T;
          const double* dci = dctx.data() + (b * T + i) * D + h * dh;

          // datt[j] = dctx_i · v_j ; dv_j += att[j] * dctx_i
          std::vector<double> datt(T, 0.0);
          for (size_t j = 0; j < T; ++j) {
            const double a = att_row[j];
            const double* vj = lt.v.data() + (b * T + j) * D + h * dh;
            double dot = 0.0;
            for (size_t d = 0; d < dh; ++d) dot += dci[d] * vj[d];
            datt[j] = dot;
            if (a != 0.0) {
              double* dvj = dv.data() + (b * T + j) * D + h * dh;
              for (size_t d = 0; d < dh; ++d) dvj[d] += a * dci[d];
            }
          }

          // softmax backward
          double inner = 0.0;
          for (size_t j = 0; j < T; ++j) inner += datt[j] * att_row[j];
          const double* qi = lt.q.data() + (b * T + i) * D + h * dh;
          double* dqi = dq.data() + (b * T + i) * D + h * dh;
          for (size_t j = 0; j < T; ++j) {
            const double ds = att_row[j] * (datt[j] - inner);
            if (ds == 0.0) continue;
            const double* kj = lt.k.data() + (b * T + j) * D + h * dh;
            double* dkj = dk.data() + (b * T + j) * D + h * dh;
            for (size_t d = 0; d < dh; ++d) {
              dqi[d] += ds * scale * kj[d];
              dkj[d] += ds * scale * qi[d];
            }
          }
        }
      }
    }

    std::vector<double> dx_in = dresid1;  // residual branch
    layer.wq.backward(lt.x_in.data(), dq.data(), B * T, dx_in.data());
    layer.wk.backward(lt.x_in.data(), dk.data(), B * T, dx_in.data());
    layer.wv.backward(lt.x_in.data(), dv.data(), B * T, dx_in.data());
    dx = std::move(dx_in);
  }

  // Embedding LayerNorm, then token/position tables.
  std::vector<double> demb(B * T * D, 0.0);
  emb_ln_.backward(trace.emb_sum.data(), trace.emb_mean.data(), trace.emb_rstd.data(), dx.data(),
                   B * T, demb.data());
  for (size_t b = 0; b < B; ++b) {
    for (size_t t = 0; t < T; ++t) {
      const double* src = demb.data() + (b * T + t) * D;
      tok_emb_.accumulate_grad(trace.ids[b][t], src);
      double* dpos = pos_emb_.grad.data.data() + t * D;
      for (size_t d = 0; d < D; ++d) dpos[d] += src[d];
    }
  }
}

}  // namespace codemix::nn
