#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "codemix/corpus.hpp"
#include "codemix/nn/lstm.hpp"
#include "codemix/nn/optim.hpp"
#include "codemix/nn/transformer.hpp"
#include "codemix/textprep.hpp"

namespace codemix::models {

enum class Architecture { cls, fusion };

Architecture architecture_from_string(const std::string& name);
std::string architecture_name(Architecture architecture);

// Backbone family tags. The family fixes the tokenizer convention; encoder
// dimensions come from the config (toy-scale by default, larger via config).
struct BackboneConfig {
  std::string family = "mbert";  // mbert | xlmr
  nn::EncoderConfig encoder;
  uint64_t init_seed = 1;

  textprep::TokenizerFamily tokenizer_family() const;
  nlohmann::ordered_json to_json() const;
  static BackboneConfig from_json(const nlohmann::json& j);
};

// Encoder plus an MLM prediction head over the subtoken vocabulary. The MLM
// head participates only in pretraining; classifiers reuse the encoder
// parameters alone.
class Backbone {
 public:
  explicit Backbone(const BackboneConfig& config);
  Backbone(const Backbone&) = delete;
  Backbone& operator=(const Backbone&) = delete;

  const BackboneConfig& config() const { return cfg_; }
  nn::TransformerEncoder& encoder() { return encoder_; }
  const nn::TransformerEncoder& encoder() const { return encoder_; }
  nn::Linear& mlm_head() { return mlm_head_; }
  const nn::Linear& mlm_head() const { return mlm_head_; }

  nn::ParamRegistry& encoder_params() { return encoder_params_; }
  nn::ParamRegistry& mlm_params() { return mlm_params_; }

 private:
  BackboneConfig cfg_;
  nn::TransformerEncoder encoder_;
  nn::Linear mlm_head_;
  nn::ParamRegistry encoder_params_;
  nn::ParamRegistry mlm_params_;
};

struct PredictionRecord {
  std::string id;
  std::vector<double> probs;
  std::string label;
};

// Argmax with ties broken by schema order (lowest index wins).
int argmax_index(const std::vector<double>& probs);

// Mean of each word's subtoken states. states: one example, [seq_len][d];
// returns [n_words][d] flattened. Spans must lie inside the sequence.
std::vector<double> pool_subwords_to_words(const double* states, size_t seq_len, size_t d_model,
                                           const textprep::WordAlignment& alignment);
void pool_subwords_backward(double* dstates, size_t seq_len, size_t d_model,
                            const textprep::WordAlignment& alignment, const double* dpooled);

struct FusionConfig {
  size_t char_hidden = 128;   // per direction
  size_t word_hidden = 256;   // per direction
  double dropout = 0.40;
  size_t d_enc = 0;           // filled in from the backbone
  size_t char_emb_dim = 64;

  size_t fused_input_dim() const { return d_enc + 2 * char_hidden; }
  size_t word_output_dim() const { return 2 * word_hidden; }
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static FusionConfig from_json(const nlohmann::json& j);
};

// Per-word character encoder: char embeddings through a BiLSTM, word vector
// is the concatenated final forward/backward states.
class CharWordEncoder {
 public:
  void init(const std::string& prefix, size_t char_vocab_size, size_t emb_dim, size_t hidden,
            uint64_t seed, nn::ParamRegistry& registry);

  struct Trace {
    std::vector<double> x;  // [chars][emb_dim]
    nn::BiLstm::Trace lstm;
    size_t chars = 0;
  };

  size_t output_dim() const { return 2 * hidden_; }
  void forward(const std::vector<int>& char_ids, Trace& trace, double* out) const;
  void backward(const Trace& trace, const std::vector<int>& char_ids, const double* dout);
  // Eval-mode convenience.
  std::vector<double> encode(const std::vector<int>& char_ids) const;

 private:
  nn::Embedding emb_;
  nn::BiLstm lstm_;
  size_t emb_dim_ = 0, hidden_ = 0;
};

class TextClassifier {
 public:
  virtual ~TextClassifier() = default;
  TextClassifier() = default;
  TextClassifier(const TextClassifier&) = delete;
  TextClassifier& operator=(const TextClassifier&) = delete;

  virtual Architecture architecture() const = 0;
  virtual bool has_encoder() const { return true; }
  virtual const corpus::LabelSchema& schema() const = 0;
  virtual const BackboneConfig& backbone_config() const = 0;
  virtual nn::ParamRegistry& params() = 0;

  // Training-mode loss over a labeled batch; dropout (where the architecture
  // has any) is driven by dropout_seed so repeated calls are reproducible.
  virtual double loss(const textprep::TokenizedBatch& batch, bool accumulate_grads,
                      uint64_t dropout_seed) = 0;
  // Eval-mode predictions: deterministic, dropout off.
  virtual std::vector<PredictionRecord> predict(const textprep::TokenizedBatch& batch) const = 0;

  // Optional per-class loss weights (off by default).
  void set_class_weights(std::vector<double> weights) { class_weights_ = std::move(weights); }
  const std::vector<double>& class_weights() const { return class_weights_; }

 protected:
  std::vector<double> class_weights_;
};

// Softmax over a linear head applied to the start-marker representation.
std::vector<PredictionRecord> classify_cls(const textprep::TokenizedBatch& batch,
                                           const Backbone& backbone, const nn::Linear& head,
                                           const corpus::LabelSchema& schema);

class ClsClassifier final : public TextClassifier {
 public:
  ClsClassifier(const BackboneConfig& backbone_config, const corpus::LabelSchema& schema,
                uint64_t head_seed);

  Architecture architecture() const override { return Architecture::cls; }
  const corpus::LabelSchema& schema() const override { return schema_; }
  const BackboneConfig& backbone_config() const override { return backbone_.config(); }
  nn::ParamRegistry& params() override { return params_; }
  Backbone& backbone() { return backbone_; }

  double loss(const textprep::TokenizedBatch& batch, bool accumulate_grads,
              uint64_t dropout_seed) override;
  std::vector<PredictionRecord> predict(const textprep::TokenizedBatch& batch) const override;

 private:
  Backbone backbone_;
  nn::Linear head_;
  corpus::LabelSchema schema_;
  nn::ParamRegistry params_;
};

class FusionClassifier final : public TextClassifier {
 public:
  FusionClassifier(const BackboneConfig& backbone_config, FusionConfig fusion_config,
                   const corpus::LabelSchema& schema, size_t char_vocab_size, uint64_t head_seed);

  Architecture architecture() const override { return Architecture::fusion; }
  const corpus::LabelSchema& schema() const override { return schema_; }
  const BackboneConfig& backbone_config() const override { return backbone_.config(); }
  nn::ParamRegistry& params() override { return params_; }
  Backbone& backbone() { return backbone_; }
  const FusionConfig& fusion_config() const { return fcfg_; }
  const CharWordEncoder& char_encoder() const { return char_encoder_; }

  double loss(const textprep::TokenizedBatch& batch, bool accumulate_grads,
              uint64_t dropout_seed) override;
  std::vector<PredictionRecord> predict(const textprep::TokenizedBatch& batch) const override;

 private:
  std::vector<std::vector<double>> forward_probs(const textprep::TokenizedBatch& batch, bool train,
                                                 uint64_t dropout_seed, struct FusionTrace* trace) const;

  Backbone backbone_;
  FusionConfig fcfg_;
  CharWordEncoder char_encoder_;
  nn::BiLstm word_lstm_;
  nn::Param empty_fallback_;  // stands in for the word-BiLSTM output on empty text
  nn::Linear head_;
  corpus::LabelSchema schema_;
  nn::ParamRegistry params_;
};

// ---------------------------------------------------------------------------
// Checkpoints: weights blob + meta.json (+ tokenizer and char vocab files so
// a checkpoint directory is self-contained).

void save_weights(const std::string& path, const nn::ParamRegistry& params);
// Strict: every registry param must be present with a matching shape.
void load_weights(const std::string& path, nn::ParamRegistry& params);
// Loads only params whose name starts with prefix; all of them must exist.
void load_weights_prefix(const std::string& path, nn::ParamRegistry& params,
                         const std::string& prefix);

void save_backbone(const std::string& dir, Backbone& backbone,
                   const textprep::SubwordTokenizer& tokenizer, const nlohmann::json& extra_meta);

struct BackboneBundle {
  BackboneConfig config;
  textprep::SubwordTokenizer tokenizer;
  nlohmann::json meta;
};
BackboneBundle load_backbone_bundle(const std::string& dir);

void save_classifier(const std::string& dir, TextClassifier& model,
                     const textprep::SubwordTokenizer& tokenizer,
                     const textprep::CharVocab* char_vocab,
                     const textprep::TransliterationPolicy& policy, size_t truncate_limit,
                     const nlohmann::json& extra_meta);

// A loaded classifier with everything needed to map raw text to predictions.
class ClassifierBundle {
 public:
  static ClassifierBundle load(const std::string& dir);

  TextClassifier& model() { return *model_; }
  const TextClassifier& model() const { return *model_; }
  const textprep::SubwordTokenizer& tokenizer() const { return tokenizer_; }
  const corpus::LabelSchema& schema() const { return model_->schema(); }
  const nlohmann::json& meta() const { return meta_; }

  textprep::EncodedExample encode(const corpus::LabeledExample& example) const;
  std::vector<PredictionRecord> predict_examples(const std::vector<corpus::LabeledExample>& examples,
                                                 size_t batch_size = 8) const;

 private:
  std::unique_ptr<TextClassifier> model_;
  textprep::SubwordTokenizer tokenizer_;
  textprep::CharVocab char_vocab_;
  textprep::TransliterationPolicy policy_;
  std::unique_ptr<textprep::Transliterator> engine_;
  size_t truncate_limit_ = textprep::kDefaultTruncationLimit;
  nlohmann::json meta_;
};

}  // namespace codemix::models
