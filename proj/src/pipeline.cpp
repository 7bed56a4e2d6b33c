#include "codemix/pipeline.hpp"

#include <cstdlib>

namespace codemix::pipeline {

PipelineConfig PipelineConfig::load(const std::string& config_path) {
  PipelineConfig config;
  if (const char* env_root = std::getenv(kDataRootEnvVar); env_root && *env_root) {
    config.data_root = env_root;
  }
  if (!config_path.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(config_path));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad config file " + config_path + ": " + e.what());
    }
    config.apply_json(j);
  }
  return config;
}

void PipelineConfig::apply_json(const nlohmann::json& j) {
  auto get_to = [](const nlohmann::json& obj, const char* key, auto& target) {
    if (obj.contains(key)) obj.at(key).get_to(target);
  };

  get_to(j, "data_root", data_root);
  get_to(j, "input_mode", input_mode);
  get_to(j, "translit_engine", translit_engine);
  get_to(j, "translit_fallback", translit_fallback);
  get_to(j, "truncate_chars", truncate_chars);

  if (j.contains("backbone")) {
    const auto& b = j.at("backbone");
    get_to(b, "d_model", backbone.d_model);
    get_to(b, "n_layers", backbone.n_layers);
    get_to(b, "n_heads", backbone.n_heads);
    get_to(b, "d_ff", backbone.d_ff);
    get_to(b, "max_len", backbone.max_len);
    get_to(b, "max_whole_words", backbone.max_whole_words);
  }
  if (j.contains("fusion")) {
    const auto& f = j.at("fusion");
    get_to(f, "char_hidden", fusion.char_hidden);
    get_to(f, "word_hidden", fusion.word_hidden);
    get_to(f, "dropout", fusion.dropout);
    get_to(f, "char_emb_dim", fusion.char_emb_dim);
  }
  if (j.contains("mlm")) {
    const auto& m = j.at("mlm");
    get_to(m, "epochs", mlm.epochs);
    get_to(m, "batch_size", mlm.batch_size);
    get_to(m, "seed", mlm.seed);
    get_to(m, "mask_rate", mlm.mask_rate);
    get_to(m, "dynamic_masking", mlm.dynamic_masking);
    get_to(m, "pure_mask", mlm.pure_mask);
    get_to(m, "lr", mlm.lr);
    get_to(m, "warmup_fraction", mlm.warmup_fraction);
    get_to(m, "weight_decay", mlm.weight_decay);
    get_to(m, "clip_norm", mlm.clip_norm);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    get_to(t, "epochs", train.epochs);
    get_to(t, "batch_size", train.batch_size);
    get_to(t, "seed", train.seed);
    if (t.contains("lr") && !t.at("lr").is_null()) train.lr = t.at("lr").get<double>();
    get_to(t, "warmup_fraction", train.warmup_fraction);
    get_to(t, "weight_decay", train.weight_decay);
    get_to(t, "clip_norm", train.clip_norm);
    get_to(t, "class_weighting", train.class_weighting);
  }
  if (j.contains("reproduce")) {
    const auto& r = j.at("reproduce");
    get_to(r, "pretrain_epochs", reproduce_pretrain_epochs);
    get_to(r, "pretrain_lr", reproduce_pretrain_lr);
    get_to(r, "train_lr", reproduce_train_lr);
    get_to(r, "train_batch_size", reproduce_train_batch);
    get_to(r, "warmup_fraction", reproduce_warmup);
    get_to(r, "mbert_seeds", mbert_seeds);
    get_to(r, "xlmr_seeds", xlmr_seeds);
  }
}

nlohmann::ordered_json PipelineConfig::to_json() const {
  nlohmann::ordered_json j;
  j["data_root"] = data_root;
  j["input_mode"] = input_mode;
  j["translit_engine"] = translit_engine;
  j["translit_fallback"] = translit_fallback;
  j["truncate_chars"] = truncate_chars;
  j["backbone"] = {{"d_model", backbone.d_model},     {"n_layers", backbone.n_layers},
                   {"n_heads", backbone.n_heads},     {"d_ff", backbone.d_ff},
                   {"max_len", backbone.max_len},     {"max_whole_words", backbone.max_whole_words}};
  j["fusion"] = {{"char_hidden", fusion.char_hidden},
                 {"word_hidden", fusion.word_hidden},
                 {"dropout", fusion.dropout},
                 {"char_emb_dim", fusion.char_emb_dim}};
  j["mlm"] = {{"epochs", mlm.epochs},
              {"batch_size", mlm.batch_size},
              {"seed", mlm.seed},
              {"mask_rate", mlm.mask_rate},
              {"dynamic_masking", mlm.dynamic_masking},
              {"pure_mask", mlm.pure_mask},
              {"lr", mlm.lr},
              {"warmup_fraction", mlm.warmup_fraction},
              {"weight_decay", mlm.weight_decay},
              {"clip_norm", mlm.clip_norm}};
  j["train"] = {{"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"seed", train.seed},
                {"lr", train.lr ? nlohmann::ordered_json(*train.lr) : nlohmann::ordered_json(nullptr)},
                {"warmup_fraction", train.warmup_fraction},
                {"weight_decay", train.weight_decay},
                {"clip_norm", train.clip_norm},
                {"class_weighting", train.class_weighting}};
  j["reproduce"] = {{"pretrain_epochs", reproduce_pretrain_epochs},
                    {"pretrain_lr", reproduce_pretrain_lr},
                    {"train_lr", reproduce_train_lr},
                    {"train_batch_size", reproduce_train_batch},
                    {"warmup_fraction", reproduce_warmup},
                    {"mbert_seeds", mbert_seeds},
                    {"xlmr_seeds", xlmr_seeds}};
  return j;
}

textprep::TransliterationPolicy PipelineConfig::policy() const {
  textprep::TransliterationPolicy policy;
  policy.mode = textprep::TransliterationPolicy::mode_from_string(input_mode);
  policy.engine = translit_engine;
  policy.fallback_to_identity = translit_fallback;
  return policy;
}

std::string split_path(const std::string& data_root, corpus::Language language,
                       corpus::Split split) {
  std::string dir = corpus::language_name(language);
  for (char& c : dir) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return data_root + "/" + dir + "/" + corpus::split_name(split) + ".tsv";
}

std::vector<textprep::EncodedExample> prepare_examples(
    const corpus::DatasetSplit& split, const PipelineConfig& config,
    const textprep::SubwordTokenizer& tokenizer, const textprep::CharVocab& char_vocab) {
  const textprep::TransliterationPolicy policy = config.policy();
  const std::unique_ptr<textprep::Transliterator> engine =
      textprep::make_transliterator(policy.engine);
  const corpus::LabelSchema schema = corpus::LabelSchema::for_language(split.language);

  std::vector<textprep::EncodedExample> out;
  out.reserve(split.examples.size());
  for (const auto& example : split.examples) {
    const textprep::TransliterationResult translit =
        textprep::transliterate(example.text, policy, *engine);
    const std::string prepared = textprep::truncate_text(translit.text, config.truncate_chars);
    textprep::EncodedExample encoded =
        textprep::tokenize_with_alignment(prepared, tokenizer, char_vocab);
    encoded.id = example.id;
    if (example.label) {
      encoded.label_index = schema.index_of(*example.label);
      if (encoded.label_index < 0) {
        throw SchemaError("label '" + *example.label + "' outside schema for " +
                          corpus::language_name(split.language));
      }
    }
    out.push_back(std::move(encoded));
  }
  return out;
}

models::BackboneConfig make_backbone_config(const PipelineConfig& config,
                                            const std::string& family, size_t vocab_size,
                                            uint64_t init_seed) {
  models::BackboneConfig backbone_config;
  backbone_config.family = family;
  backbone_config.encoder.vocab_size = vocab_size;
  backbone_config.encoder.d_model = config.backbone.d_model;
  backbone_config.encoder.n_layers = config.backbone.n_layers;
  backbone_config.encoder.n_heads = config.backbone.n_heads;
  backbone_config.encoder.d_ff = config.backbone.d_ff;
  backbone_config.encoder.max_len = config.backbone.max_len;
  backbone_config.init_seed = init_seed;
  return backbone_config;
}

}  // namespace codemix::pipeline
