#include <doctest.h>

#include <cmath>

#include "codemix/training.hpp"

using namespace codemix;
using corpus::Language;
using models::Architecture;
using textprep::CharVocab;
using textprep::SubwordTokenizer;
using textprep::TokenizerFamily;

namespace {

// Linearly separable 4-class toy task: each class carries a unique marker
// word, fillers are shared.
struct ToyTask {
  SubwordTokenizer tokenizer;
  CharVocab chars;
  corpus::LabelSchema schema;
  std::vector<textprep::EncodedExample> train;
};

ToyTask separable_task() {
  const std::vector<std::string> markers = {"akka", "bobo", "cici", "dudu"};
  const std::vector<std::string> fillers = {"idu", "oru"};
  std::vector<std::string> texts;
  std::vector<int> labels;
  Rng rng(12);
  for (int c = 0; c < 4; ++c) {
    for (int k = 0; k < 4; ++k) {
      std::string text = markers[static_cast<size_t>(c)];
      if (k % 2) text += " " + fillers[rng.below(fillers.size())];
      texts.push_back(text);
      labels.push_back(c);
    }
  }

  ToyTask task{SubwordTokenizer::build_from_texts(TokenizerFamily::wordpiece, texts),
               CharVocab::build(texts),
               corpus::LabelSchema::custom(Language::kannada, {"c0", "c1", "c2", "c3"}),
               {}};
  for (size_t i = 0; i < texts.size(); ++i) {
    textprep::EncodedExample ex =
        textprep::tokenize_with_alignment(texts[i], task.tokenizer, task.chars);
    ex.id = "train-" + std::to_string(i);
    ex.label_index = labels[i];
    task.train.push_back(std::move(ex));
  }
  return task;
}

models::BackboneConfig toy_backbone(const SubwordTokenizer& tok, uint64_t seed) {
  models::BackboneConfig config;
  config.family = "mbert";
  config.encoder.vocab_size = static_cast<size_t>(tok.vocab_size());
  config.encoder.d_model = 32;
  config.encoder.n_layers = 2;
  config.encoder.n_heads = 4;
  config.encoder.d_ff = 64;
  config.encoder.max_len = 24;
  config.init_seed = seed;
  return config;
}

std::unique_ptr<models::TextClassifier> make_model(Architecture arch, const ToyTask& task,
                                                   uint64_t seed) {
  if (arch == Architecture::fusion) {
    models::FusionConfig fusion;
    fusion.char_hidden = 32;
    fusion.word_hidden = 32;
    fusion.char_emb_dim = 16;
    fusion.dropout = 0.0;
    return std::make_unique<models::FusionClassifier>(toy_backbone(task.tokenizer, seed), fusion,
                                                      task.schema, task.chars.size(),
                                                      Rng::derive(seed, 1));
  }
  return std::make_unique<models::ClsClassifier>(toy_backbone(task.tokenizer, seed), task.schema,
                                                 Rng::derive(seed, 1));
}

training::TrainConfig overfit_config(uint64_t seed) {
  training::TrainConfig config;
  config.epochs = 5;
  config.batch_size = 1;  // 80 optimizer steps inside the 5-epoch budget
  config.seed = seed;
  config.lr = 0.005;
  config.warmup_fraction = 0.3;
  return config;
}

}  // namespace

TEST_CASE("optimizer policy follows the encoder-component rule") {
  CHECK(training::select_optimizer_policy({Architecture::cls, true}) ==
        training::OptimizerPolicy::encoder_adam_with_warmup);
  CHECK(training::select_optimizer_policy({Architecture::fusion, true}) ==
        training::OptimizerPolicy::encoder_adam_with_warmup);
  // standalone recurrent probe without an encoder component
  CHECK(training::select_optimizer_policy({Architecture::fusion, false}) ==
        training::OptimizerPolicy::plain_adam);

  const training::TrainConfig config;
  const auto warm = training::select_optimizer({Architecture::cls, true}, config, 100);
  CHECK(warm->describe().find("warmup_adam") != std::string::npos);
  const auto plain = training::select_optimizer({Architecture::cls, false}, config, 100);
  CHECK(plain->describe().find("warmup") == std::string::npos);
}

TEST_CASE("default learning rates depend on the policy") {
  const training::TrainConfig config;
  CHECK(config.effective_lr(training::OptimizerPolicy::encoder_adam_with_warmup) ==
        doctest::Approx(2e-5));
  CHECK(config.effective_lr(training::OptimizerPolicy::plain_adam) == doctest::Approx(1e-3));
  training::TrainConfig overridden;
  overridden.lr = 0.5;
  CHECK(overridden.effective_lr(training::OptimizerPolicy::plain_adam) == doctest::Approx(0.5));
}

TEST_CASE("best-epoch selection maximizes dev F1 with earliest-epoch ties") {
  using training::EpochRecord;
  CHECK(training::select_best_epoch({{1.0, 0.5, 0.5}, {0.9, 0.7, 0.6}, {0.8, 0.6, 0.6}}) == 2);
  // all equal -> epoch 1
  CHECK(training::select_best_epoch({{1.0, 0.5, 0.5}, {0.9, 0.5, 0.5}, {0.8, 0.5, 0.5}}) == 1);
  CHECK(training::select_best_epoch({{1.0, 0.2, 0.2}, {0.9, 0.9, 0.9}, {0.8, 0.9, 0.9}}) == 2);
  CHECK_THROWS_AS(training::select_best_epoch({}), ConfigError);
}

TEST_CASE("both architectures overfit the separable toy set within 5 epochs") {
  const ToyTask task = separable_task();
  for (Architecture arch : {Architecture::cls, Architecture::fusion}) {
    CAPTURE(models::architecture_name(arch));
    auto model = make_model(arch, task, 51);
    const training::RunRecord record =
        training::train_classifier(*model, task.train, task.train, task.tokenizer.pad_id(),
                                   overfit_config(3));
    CHECK(record.epochs.size() == 5);  // exactly `epochs` epochs
    const double accuracy =
        training::dataset_accuracy(*model, task.train, task.tokenizer.pad_id());
    CHECK(accuracy == doctest::Approx(1.0));
  }
}

TEST_CASE("run records carry exactly one entry per epoch") {
  const ToyTask task = separable_task();
  auto model = make_model(Architecture::cls, task, 61);
  training::TrainConfig config = overfit_config(5);
  config.epochs = 3;
  const training::RunRecord record =
      training::train_classifier(*model, task.train, task.train, task.tokenizer.pad_id(), config);
  CHECK(record.epochs.size() == 3);
  CHECK(record.selected_epoch >= 1);
  CHECK(record.selected_epoch <= 3);
  // the selected epoch achieves the maximum recorded dev F1
  double best = 0.0;
  for (const auto& e : record.epochs) best = std::max(best, e.dev_weighted_f1);
  CHECK(record.epochs[static_cast<size_t>(record.selected_epoch - 1)].dev_weighted_f1 ==
        doctest::Approx(best));
}

TEST_CASE("two runs with the same seed produce identical records") {
  const ToyTask task = separable_task();
  auto m1 = make_model(Architecture::fusion, task, 71);
  auto m2 = make_model(Architecture::fusion, task, 71);
  training::TrainConfig config = overfit_config(9);
  config.epochs = 2;
  const auto r1 =
      training::train_classifier(*m1, task.train, task.train, task.tokenizer.pad_id(), config);
  const auto r2 =
      training::train_classifier(*m2, task.train, task.train, task.tokenizer.pad_id(), config);
  REQUIRE(r1.epochs.size() == r2.epochs.size());
  for (size_t e = 0; e < r1.epochs.size(); ++e) {
    CHECK(r1.epochs[e].train_loss == r2.epochs[e].train_loss);  // exact
    CHECK(r1.epochs[e].dev_weighted_f1 == r2.epochs[e].dev_weighted_f1);
  }
  CHECK(r1.selected_epoch == r2.selected_epoch);
}

TEST_CASE("training loss drops after the first epoch in at least 2 of 3 seeds") {
  const ToyTask task = separable_task();
  int improved = 0;
  for (uint64_t seed : {101ull, 202ull, 303ull}) {
    auto model = make_model(Architecture::cls, task, Rng::derive(seed, 7));
    training::TrainConfig config = overfit_config(seed);
    config.epochs = 2;
    const auto record =
        training::train_classifier(*model, task.train, task.train, task.tokenizer.pad_id(), config);
    if (record.epochs[1].train_loss < record.epochs[0].train_loss) ++improved;
  }
  CHECK(improved >= 2);
}

TEST_CASE("training validates inputs") {
  const ToyTask task = separable_task();
  auto model = make_model(Architecture::cls, task, 81);
  const training::TrainConfig config = overfit_config(1);

  CHECK_THROWS_AS(
      training::train_classifier(*model, {}, task.train, task.tokenizer.pad_id(), config),
      TrainError);
  CHECK_THROWS_AS(
      training::train_classifier(*model, task.train, {}, task.tokenizer.pad_id(), config),
      TrainError);

  // unlabeled training example
  auto unlabeled = task.train;
  unlabeled[0].label_index = -1;
  CHECK_THROWS_AS(
      training::train_classifier(*model, unlabeled, task.train, task.tokenizer.pad_id(), config),
      SchemaError);

  // dev labels outside the model's schema
  auto bad_dev = task.train;
  bad_dev[0].label_index = 9;
  CHECK_THROWS_AS(
      training::train_classifier(*model, task.train, bad_dev, task.tokenizer.pad_id(), config),
      SchemaError);

  training::TrainConfig bad_config = config;
  bad_config.epochs = 0;
  CHECK_THROWS_AS(
      training::train_classifier(*model, task.train, task.train, task.tokenizer.pad_id(), bad_config),
      ConfigError);
}

TEST_CASE("class weighting produces valid training runs") {
  const ToyTask task = separable_task();
  auto model = make_model(Architecture::cls, task, 91);
  training::TrainConfig config = overfit_config(13);
  config.epochs = 1;
  config.class_weighting = true;
  const auto record =
      training::train_classifier(*model, task.train, task.train, task.tokenizer.pad_id(), config);
  CHECK(std::isfinite(record.epochs[0].train_loss));
}

TEST_CASE("run record JSON includes per-epoch rows and the selected epoch") {
  training::RunRecord record;
  record.epochs = {{0.9, 0.4, 0.5}, {0.5, 0.8, 0.7}};
  record.selected_epoch = 2;
  record.checkpoint_dir = "/tmp/x";
  const std::string json_text = training::run_record_to_json(record);
  CHECK(json_text.find("\"selected_epoch\": 2") != std::string::npos);
  CHECK(json_text.find("dev_weighted_f1") != std::string::npos);
}
