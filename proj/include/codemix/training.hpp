#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "codemix/metrics.hpp"
#include "codemix/models.hpp"
#include "codemix/nn/optim.hpp"

namespace codemix::training {

enum class OptimizerPolicy { encoder_adam_with_warmup, plain_adam };

std::string optimizer_policy_name(OptimizerPolicy policy);

// Minimal description of a model for optimizer selection: what matters is
// whether the model carries an encoder component.
struct ModelSpec {
  models::Architecture architecture = models::Architecture::cls;
  bool contains_encoder = true;
};

OptimizerPolicy select_optimizer_policy(const ModelSpec& spec);

struct TrainConfig {
  int epochs = 5;
  int batch_size = 8;
  uint64_t seed = 0;
  // Defaults when unset: 2e-5 for the encoder policy, 1e-3 for plain Adam.
  std::optional<double> lr;
  double warmup_fraction = 0.1;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  bool class_weighting = false;

  void validate() const;
  double effective_lr(OptimizerPolicy policy) const;
};

std::unique_ptr<nn::Optimizer> select_optimizer(const ModelSpec& spec, const TrainConfig& config,
                                                long total_steps);

struct EpochRecord {
  double train_loss = 0.0;
  double dev_weighted_f1 = 0.0;
  double dev_accuracy = 0.0;
};

struct RunRecord {
  std::vector<EpochRecord> epochs;
  int selected_epoch = 0;  // 1-based
  std::string checkpoint_dir;
};

// Highest dev weighted-F1 wins; ties go to the earliest epoch. 1-based.
int select_best_epoch(const std::vector<EpochRecord>& epochs);

std::string run_record_to_json(const RunRecord& record);

// Batched eval-mode prediction over encoded examples, input order preserved.
std::vector<models::PredictionRecord> predict_encoded(
    const models::TextClassifier& model, const std::vector<textprep::EncodedExample>& examples,
    int pad_id, size_t batch_size = 8);

// Fine-tuning: runs exactly config.epochs epochs of seeded-shuffle
// cross-entropy training, evaluates on dev after each epoch, and leaves the
// model holding the best-on-dev weights.
RunRecord train_classifier(models::TextClassifier& model,
                           const std::vector<textprep::EncodedExample>& train,
                           const std::vector<textprep::EncodedExample>& dev, int pad_id,
                           const TrainConfig& config);

// Accuracy of eval-mode predictions against the examples' own labels.
double dataset_accuracy(const models::TextClassifier& model,
                        const std::vector<textprep::EncodedExample>& examples, int pad_id,
                        size_t batch_size = 8);

}  // namespace codemix::training
