#include "codemix/models.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace codemix::models {

namespace {
constexpr double kInitStd = 0.02;
constexpr uint32_t kWeightsMagic = 0x434D5754;  // "CMWT"
constexpr uint32_t kWeightsVersion = 1;
}  // namespace

Architecture architecture_from_string(const std::string& name) {
  if (name == "cls") return Architecture::cls;
  if (name == "fusion") return Architecture::fusion;
  throw ConfigError("unknown architecture: " + name + " (expected cls|fusion)");
}

std::string architecture_name(Architecture architecture) {
  return architecture == Architecture::cls ? "cls" : "fusion";
}

textprep::TokenizerFamily BackboneConfig::tokenizer_family() const {
  if (family == "mbert") return textprep::TokenizerFamily::wordpiece;
  if (family == "xlmr") return textprep::TokenizerFamily::sentencepiece;
  throw ConfigError("unknown backbone family: " + family + " (expected mbert|xlmr)");
}

nlohmann::ordered_json BackboneConfig::to_json() const {
  return nlohmann::ordered_json{{"family", family},
                                {"vocab_size", encoder.vocab_size},
                                {"d_model", encoder.d_model},
                                {"n_layers", encoder.n_layers},
                                {"n_heads", encoder.n_heads},
                                {"d_ff", encoder.d_ff},
                                {"max_len", encoder.max_len},
                                {"init_seed", init_seed}};
}

BackboneConfig BackboneConfig::from_json(const nlohmann::json& j) {
  BackboneConfig cfg;
  cfg.family = j.at("family").get<std::string>();
  cfg.encoder.vocab_size = j.at("vocab_size").get<size_t>();
  cfg.encoder.d_model = j.at("d_model").get<size_t>();
  cfg.encoder.n_layers = j.at("n_layers").get<size_t>();
  cfg.encoder.n_heads = j.at("n_heads").get<size_t>();
  cfg.encoder.d_ff = j.at("d_ff").get<size_t>();
  cfg.encoder.max_len = j.at("max_len").get<size_t>();
  cfg.init_seed = j.at("init_seed").get<uint64_t>();
  return cfg;
}

Backbone::Backbone(const BackboneConfig& config) : cfg_(config) {
  cfg_.tokenizer_family();  // validates the family tag
  encoder_.init(cfg_.encoder, "encoder.", cfg_.init_seed, encoder_params_);
  Rng head_rng(Rng::derive(cfg_.init_seed, 0x4D4C4D));  // independent stream for the MLM head
  mlm_head_.init("mlm.head", cfg_.encoder.d_model, cfg_.encoder.vocab_size, head_rng, kInitStd,
                 mlm_params_);
  // mlm_params_ already holds the head; prepend encoder params for optimizers.
  nn::ParamRegistry combined;
  combined.add_all(encoder_params_);
  combined.add_all(mlm_params_);
  mlm_params_ = combined;
}

int argmax_index(const std::vector<double>& probs) {
  if (probs.empty()) throw TrainError("argmax over empty probability vector");
  size_t best = 0;
  for (size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return static_cast<int>(best);
}

std::vector<double> pool_subwords_to_words(const double* states, size_t seq_len, size_t d_model,
                                           const textprep::WordAlignment& alignment) {
  const size_t W = alignment.spans.size();
  std::vector<double> pooled(W * d_model, 0.0);
  for (size_t w = 0; w < W; ++w) {
    const auto [begin, end] = alignment.spans[w];
    if (begin < 0 || end <= begin || static_cast<size_t>(end) > seq_len) {
      throw TrainError("alignment span [" + std::to_string(begin) + "," + std::to_string(end) +
                       ") out of range for sequence of length " + std::to_string(seq_len));
    }
    double* dst = pooled.data() + w * d_model;
    for (int t = begin; t < end; ++t) {
      const double* src = states + static_cast<size_t>(t) * d_model;
      for (size_t d = 0; d < d_model; ++d) dst[d] += src[d];
    }
    const double inv = 1.0 / static_cast<double>(end - begin);
    for (size_t d = 0; d < d_model; ++d) dst[d] *= inv;
  }
  return pooled;
}

void pool_subwords_backward(double* dstates, size_t seq_len, size_t d_model,
                            const textprep::WordAlignment& alignment, const double* dpooled) {
  for (size_t w = 0; w < alignment.spans.size(); ++w) {
    const auto [begin, end] = alignment.spans[w];
    if (begin < 0 || end <= begin || static_cast<size_t>(end) > seq_len) {
      throw TrainError("alignment span out of range in pooling backward");
    }
    const double inv = 1.0 / static_cast<double>(end - begin);
    const double* src = dpooled + w * d_model;
    for (int t = begin; t < end; ++t) {
      double* dst = dstates + static_cast<size_t>(t) * d_model;
      for (size_t d = 0; d < d_model; ++d) dst[d] += src[d] * inv;
    }
  }
}

void FusionConfig::validate() const {
  if (char_hidden == 0 || word_hidden == 0 || d_enc == 0 || char_emb_dim == 0) {
    throw ConfigError("fusion dimensions must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("fusion dropout must be in [0,1)");
}

nlohmann::ordered_json FusionConfig::to_json() const {
  return nlohmann::ordered_json{{"char_hidden", char_hidden},
                                {"word_hidden", word_hidden},
                                {"dropout", dropout},
                                {"d_enc", d_enc},
                                {"char_emb_dim", char_emb_dim}};
}

FusionConfig FusionConfig::from_json(const nlohmann::json& j) {
  FusionConfig cfg;
  cfg.char_hidden = j.at("char_hidden").get<size_t>();
  cfg.word_hidden = j.at("word_hidden").get<size_t>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.d_enc = j.at("d_enc").get<size_t>();
  cfg.char_emb_dim = j.at("char_emb_dim").get<size_t>();
  return cfg;
}

void CharWordEncoder::init(const std::string& prefix, size_t char_vocab_size, size_t emb_dim,
                           size_t hidden, uint64_t seed, nn::ParamRegistry& registry) {
  emb_dim_ = emb_dim;
  hidden_ = hidden;
  Rng rng(seed);
  emb_.init(prefix + "char_emb", char_vocab_size, emb_dim, rng, kInitStd, registry);
  lstm_.init(prefix + "char_lstm", emb_dim, hidden, rng, 0.1, registry);
}

void CharWordEncoder::forward(const std::vector<int>& char_ids, Trace& trace, double* out) const {
  if (char_ids.empty()) throw TrainError("char encoder called with empty character sequence");
  const size_t n = char_ids.size();
  trace.chars = n;
  trace.x.assign(n * emb_dim_, 0.0);
  for (size_t t = 0; t < n; ++t) {
    const double* row = emb_.row(char_ids[t]);
    std::memcpy(trace.x.data() + t * emb_dim_, row, emb_dim_ * sizeof(double));
  }
  std::vector<double> outputs;
  lstm_.forward(trace.x.data(), n, trace.lstm, outputs);
  lstm_.final_states(trace.lstm, out);
}

void CharWordEncoder::backward(const Trace& trace, const std::vector<int>& char_ids,
                               const double* dout) {
  std::vector<double> doutputs(trace.chars * 2 * hidden_, 0.0);
  lstm_.final_states_grad_to_outputs(trace.lstm, dout, doutputs);
  std::vector<double> dx(trace.chars * emb_dim_, 0.0);
  lstm_.backward(trace.x.data(), trace.lstm, doutputs.data(), dx.data());
  for (size_t t = 0; t < trace.chars; ++t) {
    emb_.accumulate_grad(char_ids[t], dx.data() + t * emb_dim_);
  }
}

std::vector<double> CharWordEncoder::encode(const std::vector<int>& char_ids) const {
  Trace trace;
  std::vector<double> out(output_dim(), 0.0);
  forward(char_ids, trace, out.data());
  return out;
}

// ---------------------------------------------------------------------------
// CLS classifier

std::vector<PredictionRecord> classify_cls(const textprep::TokenizedBatch& batch,
                                           const Backbone& backbone, const nn::Linear& head,
                                           const corpus::LabelSchema& schema) {
  const size_t D = backbone.config().encoder.d_model;
  if (head.in != D) {
    throw ConfigError("classifier head expects width " + std::to_string(head.in) +
                      " but encoder produces " + std::to_string(D));
  }
  if (head.out != schema.size()) {
    throw ConfigError("classifier head output does not match label schema size");
  }
  const size_t B = batch.batch_size();
  nn::TransformerEncoder::Trace trace;
  backbone.encoder().forward(batch.subtoken_ids, batch.attention_mask, trace);

  std::vector<double> cls(B * D);
  for (size_t b = 0; b < B; ++b) {
    std::memcpy(cls.data() + b * D, trace.states.data() + b * batch.seq_len() * D,
                D * sizeof(double));
  }
  std::vector<double> probs(B * schema.size());
  head.forward(cls.data(), B, probs.data());
  nn::softmax_rows(probs.data(), B, schema.size());

  std::vector<PredictionRecord> records(B);
  for (size_t b = 0; b < B; ++b) {
    records[b].id = batch.ids[b];
    records[b].probs.assign(probs.begin() + static_cast<long>(b * schema.size()),
                            probs.begin() + static_cast<long>((b + 1) * schema.size()));
    records[b].label = schema.name(static_cast<size_t>(argmax_index(records[b].probs)));
  }
  return records;
}

ClsClassifier::ClsClassifier(const BackboneConfig& backbone_config,
                             const corpus::LabelSchema& schema, uint64_t head_seed)
    : backbone_(backbone_config), schema_(schema) {
  params_.add_all(backbone_.encoder_params());
  Rng rng(head_seed);
  head_.init("cls_head", backbone_config.encoder.d_model, schema.size(), rng, kInitStd, params_);
}

double ClsClassifier::loss(const textprep::TokenizedBatch& batch, bool accumulate_grads,
                           uint64_t /*dropout_seed*/) {
  const size_t B = batch.batch_size();
  const size_t D = backbone_.config().encoder.d_model;
  const size_t C = schema_.size();

  nn::TransformerEncoder::Trace trace;
  backbone_.encoder().forward(batch.subtoken_ids, batch.attention_mask, trace);

  std::vector<double> cls(B * D);
  for (size_t b = 0; b < B; ++b) {
    std::memcpy(cls.data() + b * D, trace.states.data() + b * batch.seq_len() * D,
                D * sizeof(double));
  }
  std::vector<double> probs(B * C);
  head_.forward(cls.data(), B, probs.data());
  nn::softmax_rows(probs.data(), B, C);

  std::vector<int> targets(B);
  std::vector<double> weights;
  for (size_t b = 0; b < B; ++b) {
    if (batch.labels[b] < 0) throw TrainError("unlabeled example '" + batch.ids[b] + "' in training batch");
    targets[b] = batch.labels[b];
  }
  if (!class_weights_.empty()) {
    weights.resize(B);
    for (size_t b = 0; b < B; ++b) weights[b] = class_weights_.at(static_cast<size_t>(targets[b]));
  }

  std::vector<double> dlogits(accumulate_grads ? B * C : 0);
  const double loss = nn::cross_entropy_mean(probs.data(), targets.data(), B, C,
                                             weights.empty() ? nullptr : weights.data(),
                                             accumulate_grads ? dlogits.data() : nullptr);
  if (!std::isfinite(loss)) throw TrainError("non-finite classification loss");

  if (accumulate_grads) {
    std::vector<double> dcls(B * D, 0.0);
    head_.backward(cls.data(), dlogits.data(), B, dcls.data());
    std::vector<double> dstates(B * batch.seq_len() * D, 0.0);
    for (size_t b = 0; b < B; ++b) {
      std::memcpy(dstates.data() + b * batch.seq_len() * D, dcls.data() + b * D,
                  D * sizeof(double));
    }
    backbone_.encoder().backward(trace, dstates);
  }
  return loss;
}

std::vector<PredictionRecord> ClsClassifier::predict(const textprep::TokenizedBatch& batch) const {
  return classify_cls(batch, backbone_, head_, schema_);
}

// ---------------------------------------------------------------------------
// Fusion classifier

namespace {

struct FusionExampleTrace {
  size_t n_words = 0;
  std::vector<double> pooled;                         // [W][d_enc]
  std::vector<CharWordEncoder::Trace> char_traces;    // per word
  std::vector<std::vector<double>> char_masks;        // per word dropout masks
  std::vector<double> fused;                          // [W][d_enc+2C]
  nn::BiLstm::Trace word_trace;
  std::vector<double> word_outputs;                   // [W][2*word_hidden]
  std::vector<double> readout_mask;                   // dropout mask on readout
  bool used_fallback = false;
};

}  // namespace

struct FusionTrace {
  nn::TransformerEncoder::Trace enc;
  std::vector<FusionExampleTrace> examples;
  std::vector<double> readouts;  // [B][2*word_hidden] post-dropout
};

FusionClassifier::FusionClassifier(const BackboneConfig& backbone_config, FusionConfig fusion_config,
                                   const corpus::LabelSchema& schema, size_t char_vocab_size,
                                   uint64_t head_seed)
    : backbone_(backbone_config), fcfg_(fusion_config), schema_(schema) {
  fcfg_.d_enc = backbone_config.encoder.d_model;
  fcfg_.validate();
  params_.add_all(backbone_.encoder_params());
  char_encoder_.init("fusion.", char_vocab_size, fcfg_.char_emb_dim, fcfg_.char_hidden,
                     Rng::derive(head_seed, 1), params_);
  Rng rng(Rng::derive(head_seed, 2));
  word_lstm_.init("fusion.word_lstm", fcfg_.fused_input_dim(), fcfg_.word_hidden, rng, 0.1, params_);
  empty_fallback_ = nn::Param("fusion.empty_fallback", {fcfg_.word_output_dim()});
  for (double& v : empty_fallback_.value.data) v = rng.gaussian(0.0, kInitStd);
  params_.add(&empty_fallback_);
  head_.init("fusion.head", fcfg_.word_output_dim(), schema.size(), rng, kInitStd, params_);
}

std::vector<std::vector<double>> FusionClassifier::forward_probs(
    const textprep::TokenizedBatch& batch, bool train, uint64_t dropout_seed,
    FusionTrace* trace) const {
  const size_t B = batch.batch_size();
  const size_t T = batch.seq_len();
  const size_t D = fcfg_.d_enc;
  const size_t charv = char_encoder_.output_dim();
  const size_t fused_dim = fcfg_.fused_input_dim();
  const size_t rdim = fcfg_.word_output_dim();
  const size_t C = schema_.size();

  FusionTrace local;
  FusionTrace& tr = trace ? *trace : local;
  tr.examples.assign(B, FusionExampleTrace{});
  tr.readouts.assign(B * rdim, 0.0);

  backbone_.encoder().forward(batch.subtoken_ids, batch.attention_mask, tr.enc);

  Rng dropout_rng(dropout_seed);
  for (size_t b = 0; b < B; ++b) {
    FusionExampleTrace& ex = tr.examples[b];
    const textprep::WordAlignment& align = batch.alignments[b];
    const size_t W = align.spans.size();
    ex.n_words = W;
    double* readout = tr.readouts.data() + b * rdim;

    if (W == 0) {
      ex.used_fallback = true;
      log_warning("example '" + batch.ids[b] + "' has no words; using learned fallback vector");
      std::memcpy(readout, empty_fallback_.value.data.data(), rdim * sizeof(double));
    } else {
      const double* states = tr.enc.states.data() + b * T * D;
      ex.pooled = pool_subwords_to_words(states, T, D, align);

      ex.char_traces.assign(W, CharWordEncoder::Trace{});
      ex.char_masks.assign(W, {});
      ex.fused.assign(W * fused_dim, 0.0);
      for (size_t w = 0; w < W; ++w) {
        double* fused_row = ex.fused.data() + w * fused_dim;
        std::memcpy(fused_row, ex.pooled.data() + w * D, D * sizeof(double));
        std::vector<double> charvec(charv, 0.0);
        char_encoder_.forward(batch.char_ids[b][w], ex.char_traces[w], charvec.data());
        if (train && fcfg_.dropout > 0.0) {
          ex.char_masks[w] = nn::dropout_mask(charv, fcfg_.dropout, dropout_rng);
          for (size_t i = 0; i < charv; ++i) charvec[i] *= ex.char_masks[w][i];
        }
        std::memcpy(fused_row + D, charvec.data(), charv * sizeof(double));
      }

      word_lstm_.forward(ex.fused.data(), W, ex.word_trace, ex.word_outputs);
      // The classification feature is the BiLSTM output at the last word.
      std::memcpy(readout, ex.word_outputs.data() + (W - 1) * rdim, rdim * sizeof(double));
    }

    if (train && fcfg_.dropout > 0.0) {
      ex.readout_mask = nn::dropout_mask(rdim, fcfg_.dropout, dropout_rng);
      for (size_t i = 0; i < rdim; ++i) readout[i] *= ex.readout_mask[i];
    }
  }

  std::vector<double> logits(B * C);
  head_.forward(tr.readouts.data(), B, logits.data());
  nn::softmax_rows(logits.data(), B, C);

  std::vector<std::vector<double>> probs(B);
  for (size_t b = 0; b < B; ++b) {
    probs[b].assign(logits.begin() + static_cast<long>(b * C),
                    logits.begin() + static_cast<long>((b + 1) * C));
  }
  return probs;
}

double FusionClassifier::loss(const textprep::TokenizedBatch& batch, bool accumulate_grads,
                              uint64_t dropout_seed) {
  const size_t B = batch.batch_size();
  const size_t T = batch.seq_len();
  const size_t D = fcfg_.d_enc;
  const size_t charv = char_encoder_.output_dim();
  const size_t fused_dim = fcfg_.fused_input_dim();
  const size_t rdim = fcfg_.word_output_dim();
  const size_t C = schema_.size();

  FusionTrace trace;
  const std::vector<std::vector<double>> probs = forward_probs(batch, true, dropout_seed, &trace);

  std::vector<double> flat_probs(B * C);
  std::vector<int> targets(B);
  std::vector<double> weights;
  for (size_t b = 0; b < B; ++b) {
    if (batch.labels[b] < 0) throw TrainError("unlabeled example '" + batch.ids[b] + "' in training batch");
    targets[b] = batch.labels[b];
    std::memcpy(flat_probs.data() + b * C, probs[b].data(), C * sizeof(double));
  }
  if (!class_weights_.empty()) {
    weights.resize(B);
    for (size_t b = 0; b < B; ++b) weights[b] = class_weights_.at(static_cast<size_t>(targets[b]));
  }

  std::vector<double> dlogits(accumulate_grads ? B * C : 0);
  const double loss = nn::cross_entropy_mean(flat_probs.data(), targets.data(), B, C,
                                             weights.empty() ? nullptr : weights.data(),
                                             accumulate_grads ? dlogits.data() : nullptr);
  if (!std::isfinite(loss)) throw TrainError("non-finite classification loss");
  if (!accumulate_grads) return loss;

  std::vector<double> dreadouts(B * rdim, 0.0);
  head_.backward(trace.readouts.data(), dlogits.data(), B, dreadouts.data());

  std::vector<double> dstates(B * T * D, 0.0);
  for (size_t b = 0; b < B; ++b) {
    FusionExampleTrace& ex = trace.examples[b];
    double* dreadout = dreadouts.data() + b * rdim;
    if (!ex.readout_mask.empty()) {
      for (size_t i = 0; i < rdim; ++i) dreadout[i] *= ex.readout_mask[i];
    }

    if (ex.used_fallback) {
      for (size_t i = 0; i < rdim; ++i) empty_fallback_.grad.data[i] += dreadout[i];
      continue;
    }

    const size_t W = ex.n_words;
    std::vector<double> doutputs(W * rdim, 0.0);
    std::memcpy(doutputs.data() + (W - 1) * rdim, dreadout, rdim * sizeof(double));

    std::vector<double> dfused(W * fused_dim, 0.0);
    word_lstm_.backward(ex.fused.data(), ex.word_trace, doutputs.data(), dfused.data());

    std::vector<double> dpooled(W * D, 0.0);
    for (size_t w = 0; w < W; ++w) {
      std::memcpy(dpooled.data() + w * D, dfused.data() + w * fused_dim, D * sizeof(double));
      std::vector<double> dcharvec(charv, 0.0);
      std::memcpy(dcharvec.data(), dfused.data() + w * fused_dim + D, charv * sizeof(double));
      if (!ex.char_masks[w].empty()) {
        for (size_t i = 0; i < charv; ++i) dcharvec[i] *= ex.char_masks[w][i];
      }
      char_encoder_.backward(ex.char_traces[w], batch.char_ids[b][w], dcharvec.data());
    }
    pool_subwords_backward(dstates.data() + b * T * D, T, D, batch.alignments[b], dpooled.data());
  }

  backbone_.encoder().backward(trace.enc, dstates);
  return loss;
}

std::vector<PredictionRecord> FusionClassifier::predict(const textprep::TokenizedBatch& batch) const {
  const std::vector<std::vector<double>> probs = forward_probs(batch, false, 0, nullptr);
  std::vector<PredictionRecord> records(batch.batch_size());
  for (size_t b = 0; b < batch.batch_size(); ++b) {
    records[b].id = batch.ids[b];
    records[b].probs = probs[b];
    records[b].label = schema_.name(static_cast<size_t>(argmax_index(records[b].probs)));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Checkpoint IO

namespace {

template <class T>
void write_pod(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in, const std::string& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw IoError("truncated weights file: " + path);
  return value;
}

struct StoredTensor {
  std::vector<size_t> shape;
  std::vector<double> data;
};

std::unordered_map<std::string, StoredTensor> read_weights_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weights file: " + path);
  if (read_pod<uint32_t>(in, path) != kWeightsMagic) throw IoError("bad magic in weights file: " + path);
  if (read_pod<uint32_t>(in, path) != kWeightsVersion) {
    throw IoError("unsupported weights version in " + path);
  }
  const uint64_t count = read_pod<uint64_t>(in, path);
  std::unordered_map<std::string, StoredTensor> tensors;
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_pod<uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint32_t ndims = read_pod<uint32_t>(in, path);
    StoredTensor tensor;
    size_t numel = 1;
    for (uint32_t d = 0; d < ndims; ++d) {
      const uint64_t dim = read_pod<uint64_t>(in, path);
      tensor.shape.push_back(dim);
      numel *= dim;
    }
    tensor.data.resize(numel);
    in.read(reinterpret_cast<char*>(tensor.data.data()),
            static_cast<std::streamsize>(numel * sizeof(double)));
    if (!in) throw IoError("truncated weights file: " + path);
    tensors.emplace(std::move(name), std::move(tensor));
  }
  return tensors;
}

void assign_tensor(nn::Param* param, const StoredTensor& tensor, const std::string& path) {
  if (tensor.shape != param->value.shape) {
    throw ConfigError("shape mismatch for '" + param->name + "' in " + path);
  }
  param->value.data = tensor.data;
}

}  // namespace

void save_weights(const std::string& path, const nn::ParamRegistry& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open weights file for writing: " + path);
  write_pod(out, kWeightsMagic);
  write_pod(out, kWeightsVersion);
  write_pod<uint64_t>(out, params.size());
  for (const nn::Param* p : params.items()) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_pod<uint32_t>(out, static_cast<uint32_t>(p->value.shape.size()));
    for (size_t dim : p->value.shape) write_pod<uint64_t>(out, dim);
    out.write(reinterpret_cast<const char*>(p->value.data.data()),
              static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing weights file: " + path);
}

void load_weights(const std::string& path, nn::ParamRegistry& params) {
  const auto tensors = read_weights_file(path);
  for (nn::Param* p : params.items()) {
    auto it = tensors.find(p->name);
    if (it == tensors.end()) throw ConfigError("weights file " + path + " missing tensor '" + p->name + "'");
    assign_tensor(p, it->second, path);
  }
}

void load_weights_prefix(const std::string& path, nn::ParamRegistry& params,
                         const std::string& prefix) {
  const auto tensors = read_weights_file(path);
  size_t loaded = 0;
  for (nn::Param* p : params.items()) {
    if (p->name.rfind(prefix, 0) != 0) continue;
    auto it = tensors.find(p->name);
    if (it == tensors.end()) throw ConfigError("weights file " + path + " missing tensor '" + p->name + "'");
    assign_tensor(p, it->second, path);
    ++loaded;
  }
  if (loaded == 0) throw ConfigError("no tensors with prefix '" + prefix + "' found in registry");
}

void save_backbone(const std::string& dir, Backbone& backbone,
                   const textprep::SubwordTokenizer& tokenizer, const nlohmann::json& extra_meta) {
  ensure_directory(dir);
  save_weights(dir + "/weights.bin", backbone.mlm_params());
  tokenizer.save(dir + "/tokenizer.vocab", dir + "/tokenizer.json");

  nlohmann::ordered_json meta;
  meta["format_version"] = 1;
  meta["kind"] = "mlm_backbone";
  meta["backbone"] = backbone.config().to_json();
  meta["tokenizer_family"] = textprep::tokenizer_family_name(tokenizer.family());
  meta["tokenizer_fingerprint"] = hex64(tokenizer.fingerprint());
  meta["extra"] = extra_meta;
  write_file(dir + "/meta.json", meta.dump(2) + "\n");
}

BackboneBundle load_backbone_bundle(const std::string& dir) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(dir + "/meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad checkpoint metadata in " + dir + ": " + e.what());
  }
  if (meta.at("kind").get<std::string>() != "mlm_backbone") {
    throw ConfigError(dir + " is not a backbone checkpoint");
  }
  BackboneBundle bundle{BackboneConfig::from_json(meta.at("backbone")),
                        textprep::SubwordTokenizer::load(dir + "/tokenizer.vocab", dir + "/tokenizer.json"),
                        meta};
  return bundle;
}

void save_classifier(const std::string& dir, TextClassifier& model,
                     const textprep::SubwordTokenizer& tokenizer,
                     const textprep::CharVocab* char_vocab,
                     const textprep::TransliterationPolicy& policy, size_t truncate_limit,
                     const nlohmann::json& extra_meta) {
  ensure_directory(dir);
  save_weights(dir + "/weights.bin", model.params());
  tokenizer.save(dir + "/tokenizer.vocab", dir + "/tokenizer.json");
  if (model.architecture() == Architecture::fusion) {
    if (!char_vocab) throw ConfigError("fusion checkpoint requires a char vocabulary");
    write_file(dir + "/charvocab.json", char_vocab->to_json());
  }

  nlohmann::ordered_json meta;
  meta["format_version"] = 1;
  meta["kind"] = "classifier";
  meta["architecture"] = architecture_name(model.architecture());
  meta["backbone"] = model.backbone_config().to_json();
  meta["language"] = corpus::language_name(model.schema().language());
  meta["label_schema"] = model.schema().names();
  if (model.architecture() == Architecture::fusion) {
    meta["fusion"] = static_cast<FusionClassifier&>(model).fusion_config().to_json();
    meta["char_vocab_fingerprint"] = hex64(char_vocab->fingerprint());
  }
  meta["input_mode"] = textprep::TransliterationPolicy::mode_name(policy.mode);
  meta["translit_engine"] = policy.engine;
  meta["translit_fallback"] = policy.fallback_to_identity;
  meta["truncate_chars"] = truncate_limit;
  meta["tokenizer_fingerprint"] = hex64(tokenizer.fingerprint());
  meta["extra"] = extra_meta;
  write_file(dir + "/meta.json", meta.dump(2) + "\n");
}

ClassifierBundle ClassifierBundle::load(const std::string& dir) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(dir + "/meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad checkpoint metadata in " + dir + ": " + e.what());
  }
  if (meta.at("kind").get<std::string>() != "classifier") {
    throw ConfigError(dir + " is not a classifier checkpoint");
  }

  ClassifierBundle bundle;
  bundle.meta_ = meta;
  bundle.tokenizer_ = textprep::SubwordTokenizer::load(dir + "/tokenizer.vocab", dir + "/tokenizer.json");
  const corpus::Language language = corpus::language_from_string(meta.at("language").get<std::string>());
  const corpus::LabelSchema schema = corpus::LabelSchema::for_language(language);
  if (meta.at("label_schema").get<std::vector<std::string>>() != schema.names()) {
    throw SchemaError("checkpoint " + dir + " label schema does not match the language's schema");
  }

  const BackboneConfig backbone_config = BackboneConfig::from_json(meta.at("backbone"));
  const Architecture arch = architecture_from_string(meta.at("architecture").get<std::string>());
  if (arch == Architecture::fusion) {
    bundle.char_vocab_ = textprep::CharVocab::from_json(read_file(dir + "/charvocab.json"));
    FusionConfig fusion_config = FusionConfig::from_json(meta.at("fusion"));
    bundle.model_ = std::make_unique<FusionClassifier>(backbone_config, fusion_config, schema,
                                                       bundle.char_vocab_.size(), /*head_seed=*/0);
  } else {
    bundle.model_ = std::make_unique<ClsClassifier>(backbone_config, schema, /*head_seed=*/0);
  }
  load_weights(dir + "/weights.bin", bundle.model_->params());

  textprep::TransliterationPolicy policy;
  policy.mode = textprep::TransliterationPolicy::mode_from_string(meta.at("input_mode").get<std::string>());
  policy.engine = meta.at("translit_engine").get<std::string>();
  policy.fallback_to_identity = meta.at("translit_fallback").get<bool>();
  bundle.policy_ = policy;
  bundle.engine_ = textprep::make_transliterator(policy.engine);
  bundle.truncate_limit_ = meta.at("truncate_chars").get<size_t>();
  return bundle;
}

textprep::EncodedExample ClassifierBundle::encode(const corpus::LabeledExample& example) const {
  const textprep::TransliterationResult translit = textprep::transliterate(example.text, policy_, *engine_);
  const std::string prepared = textprep::truncate_text(translit.text, truncate_limit_);
  textprep::EncodedExample encoded = textprep::tokenize_with_alignment(prepared, tokenizer_, char_vocab_);
  encoded.id = example.id;
  if (example.label) {
    encoded.label_index = schema().index_of(*example.label);
    if (encoded.label_index < 0) {
      throw SchemaError("label '" + *example.label + "' not in model schema");
    }
  }
  return encoded;
}

std::vector<PredictionRecord> ClassifierBundle::predict_examples(
    const std::vector<corpus::LabeledExample>& examples, size_t batch_size) const {
  std::vector<textprep::EncodedExample> encoded;
  encoded.reserve(examples.size());
  for (const auto& example : examples) encoded.push_back(encode(example));

  std::vector<PredictionRecord> records;
  records.reserve(examples.size());
  for (size_t start = 0; start < encoded.size(); start += batch_size) {
    const size_t end = std::min(encoded.size(), start + batch_size);
    std::vector<const textprep::EncodedExample*> ptrs;
    for (size_t i = start; i < end; ++i) ptrs.push_back(&encoded[i]);
    const textprep::TokenizedBatch batch = textprep::make_batch(ptrs, tokenizer_.pad_id());
    for (auto& record : model_->predict(batch)) records.push_back(std::move(record));
  }
  return records;
}

}  // namespace codemix::models
