#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "codemix/corpus.hpp"
#include "codemix/ensemble.hpp"
#include "codemix/metrics.hpp"
#include "codemix/mlm.hpp"
#include "codemix/models.hpp"
#include "codemix/textprep.hpp"
#include "codemix/training.hpp"

namespace codemix::pipeline {

inline constexpr const char* kDataRootEnvVar = "CODEMIX_DATA_ROOT";

struct BackboneDims {
  size_t d_model = 32;
  size_t n_layers = 2;
  size_t n_heads = 4;
  size_t d_ff = 64;
  size_t max_len = 384;
  size_t max_whole_words = 64;
};

// One serialized source of truth for every subcommand; CLI flags override
// individual fields after the config file is applied.
struct PipelineConfig {
  std::string data_root = "data/toy";
  std::string input_mode = "as-is";
  std::string translit_engine = "identity";
  bool translit_fallback = false;
  size_t truncate_chars = textprep::kDefaultTruncationLimit;

  BackboneDims backbone;
  models::FusionConfig fusion;
  mlm::MLMConfig mlm;
  training::TrainConfig train;

  // Toy-scale profile driving `reproduce` on the bundled fixture. Full-scale
  // runs override these through the config file.
  int reproduce_pretrain_epochs = 3;
  double reproduce_pretrain_lr = 2e-3;
  double reproduce_train_lr = 8e-3;
  int reproduce_train_batch = 2;
  double reproduce_warmup = 0.3;
  std::vector<uint64_t> mbert_seeds{101, 102, 103};
  std::vector<uint64_t> xlmr_seeds{201, 202, 203};

  // Loads defaults, then the env data root, then the config file when given.
  static PipelineConfig load(const std::string& config_path);
  void apply_json(const nlohmann::json& j);
  nlohmann::ordered_json to_json() const;

  textprep::TransliterationPolicy policy() const;
};

std::string split_path(const std::string& data_root, corpus::Language language,
                       corpus::Split split);

// Transliterate (per policy), truncate, tokenize. Labels become schema
// indices; unlabeled examples keep -1.
std::vector<textprep::EncodedExample> prepare_examples(
    const corpus::DatasetSplit& split, const PipelineConfig& config,
    const textprep::SubwordTokenizer& tokenizer, const textprep::CharVocab& char_vocab);

models::BackboneConfig make_backbone_config(const PipelineConfig& config,
                                            const std::string& family, size_t vocab_size,
                                            uint64_t init_seed);

// argv without the program name; returns the process exit status
// (0 ok, 1 runtime failure, 2 usage/config error).
int run_cli(const std::vector<std::string>& args);

}  // namespace codemix::pipeline
