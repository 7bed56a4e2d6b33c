#include "codemix/training.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace codemix::training {

std::string optimizer_policy_name(OptimizerPolicy policy) {
  return policy == OptimizerPolicy::encoder_adam_with_warmup ? "encoder_adam_with_warmup"
                                                             : "plain_adam";
}

OptimizerPolicy select_optimizer_policy(const ModelSpec& spec) {
  return spec.contains_encoder ? OptimizerPolicy::encoder_adam_with_warmup
                               : OptimizerPolicy::plain_adam;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (lr && *lr <= 0.0) throw ConfigError("learning rate must be positive");
  if (warmup_fraction < 0.0 || warmup_fraction >= 1.0) {
    throw ConfigError("warmup fraction must be in [0,1)");
  }
}

double TrainConfig::effective_lr(OptimizerPolicy policy) const {
  if (lr) return *lr;
  return policy == OptimizerPolicy::encoder_adam_with_warmup ? 2e-5 : 1e-3;
}

std::unique_ptr<nn::Optimizer> select_optimizer(const ModelSpec& spec, const TrainConfig& config,
                                                long total_steps) {
  const OptimizerPolicy policy = select_optimizer_policy(spec);
  if (policy == OptimizerPolicy::encoder_adam_with_warmup) {
    return std::make_unique<nn::WarmupAdam>(config.effective_lr(policy), std::max(1L, total_steps),
                                            config.warmup_fraction, config.weight_decay,
                                            config.clip_norm);
  }
  return std::make_unique<nn::Adam>(config.effective_lr(policy));
}

int select_best_epoch(const std::vector<EpochRecord>& epochs) {
  if (epochs.empty()) throw ConfigError("no epochs recorded");
  size_t best = 0;
  for (size_t i = 1; i < epochs.size(); ++i) {
    if (epochs[i].dev_weighted_f1 > epochs[best].dev_weighted_f1) best = i;
  }
  return static_cast<int>(best) + 1;
}

std::string run_record_to_json(const RunRecord& record) {
  nlohmann::ordered_json j;
  j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : record.epochs) {
    j["epochs"].push_back({{"train_loss", e.train_loss},
                           {"dev_weighted_f1", e.dev_weighted_f1},
                           {"dev_accuracy", e.dev_accuracy}});
  }
  j["selected_epoch"] = record.selected_epoch;
  j["checkpoint_dir"] = record.checkpoint_dir;
  return j.dump(2) + "\n";
}

std::vector<models::PredictionRecord> predict_encoded(
    const models::TextClassifier& model, const std::vector<textprep::EncodedExample>& examples,
    int pad_id, size_t batch_size) {
  std::vector<models::PredictionRecord> records;
  records.reserve(examples.size());
  for (size_t start = 0; start < examples.size(); start += batch_size) {
    const size_t end = std::min(examples.size(), start + batch_size);
    std::vector<const textprep::EncodedExample*> ptrs;
    for (size_t i = start; i < end; ++i) ptrs.push_back(&examples[i]);
    const textprep::TokenizedBatch batch = textprep::make_batch(ptrs, pad_id);
    for (auto& record : model.predict(batch)) records.push_back(std::move(record));
  }
  return records;
}

namespace {

void check_labeled(const std::vector<textprep::EncodedExample>& examples, size_t n_classes,
                   const std::string& which) {
  for (const auto& ex : examples) {
    if (ex.label_index < 0) {
      throw SchemaError("unlabeled example '" + ex.id + "' in " + which + " split");
    }
    if (static_cast<size_t>(ex.label_index) >= n_classes) {
      throw SchemaError("label index out of schema range in " + which + " split");
    }
  }
}

std::vector<double> compute_class_weights(const std::vector<textprep::EncodedExample>& train,
                                          size_t n_classes) {
  std::vector<long> counts(n_classes, 0);
  for (const auto& ex : train) ++counts[static_cast<size_t>(ex.label_index)];
  // Inverse-frequency weights normalized so a balanced set yields all ones.
  std::vector<double> weights(n_classes, 0.0);
  for (size_t c = 0; c < n_classes; ++c) {
    weights[c] = counts[c] > 0 ? static_cast<double>(train.size()) /
                                     (static_cast<double>(n_classes) * static_cast<double>(counts[c]))
                               : 0.0;
  }
  return weights;
}

}  // namespace

RunRecord train_classifier(models::TextClassifier& model,
                           const std::vector<textprep::EncodedExample>& train,
                           const std::vector<textprep::EncodedExample>& dev, int pad_id,
                           const TrainConfig& config) {
  config.validate();
  if (train.empty()) throw TrainError("training split is empty");
  if (dev.empty()) throw TrainError("dev split is empty");
  const size_t n_classes = model.schema().size();
  check_labeled(train, n_classes, "train");
  check_labeled(dev, n_classes, "dev");

  if (config.class_weighting) {
    model.set_class_weights(compute_class_weights(train, n_classes));
  }

  const size_t batch_size = static_cast<size_t>(config.batch_size);
  const size_t n_batches = (train.size() + batch_size - 1) / batch_size;
  const ModelSpec spec{model.architecture(), model.has_encoder()};
  std::unique_ptr<nn::Optimizer> optimizer =
      select_optimizer(spec, config, static_cast<long>(n_batches) * config.epochs);

  std::vector<std::string> dev_gold;
  dev_gold.reserve(dev.size());
  for (const auto& ex : dev) dev_gold.push_back(model.schema().name(static_cast<size_t>(ex.label_index)));

  RunRecord record;
  std::vector<std::vector<double>> best_weights;
  double best_f1 = -1.0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(Rng::derive(config.seed, 0x7D1, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    size_t example_count = 0;
    size_t batch_index = 0;
    for (size_t start = 0; start < order.size(); start += batch_size, ++batch_index) {
      const size_t end = std::min(order.size(), start + batch_size);
      std::vector<const textprep::EncodedExample*> ptrs;
      for (size_t i = start; i < end; ++i) ptrs.push_back(&train[order[i]]);
      const textprep::TokenizedBatch batch = textprep::make_batch(ptrs, pad_id);

      model.params().zero_grads();
      const uint64_t dropout_seed =
          Rng::derive(config.seed, 0xD0 + static_cast<uint64_t>(epoch), batch_index);
      const double loss = model.loss(batch, /*accumulate_grads=*/true, dropout_seed);
      if (!std::isfinite(loss)) throw TrainError("non-finite training loss; aborting");
      optimizer->step(model.params());
      loss_sum += loss * static_cast<double>(ptrs.size());
      example_count += ptrs.size();
    }

    EpochRecord epoch_record;
    epoch_record.train_loss = loss_sum / static_cast<double>(example_count);

    const std::vector<models::PredictionRecord> dev_pred =
        predict_encoded(model, dev, pad_id, batch_size);
    std::vector<std::string> pred_labels;
    pred_labels.reserve(dev_pred.size());
    for (const auto& r : dev_pred) pred_labels.push_back(r.label);
    const metrics::MetricsReport dev_metrics =
        metrics::compute_metrics(dev_gold, pred_labels, model.schema());
    epoch_record.dev_weighted_f1 = dev_metrics.weighted_f1;
    epoch_record.dev_accuracy = dev_metrics.accuracy;
    record.epochs.push_back(epoch_record);

    if (epoch_record.dev_weighted_f1 > best_f1) {
      best_f1 = epoch_record.dev_weighted_f1;
      best_weights = model.params().snapshot();
    }
  }

  record.selected_epoch = select_best_epoch(record.epochs);
  model.params().restore(best_weights);
  return record;
}

double dataset_accuracy(const models::TextClassifier& model,
                        const std::vector<textprep::EncodedExample>& examples, int pad_id,
                        size_t batch_size) {
  const std::vector<models::PredictionRecord> predictions =
      predict_encoded(model, examples, pad_id, batch_size);
  size_t correct = 0;
  for (size_t i = 0; i < examples.size(); ++i) {
    const int pred = model.schema().index_of(predictions[i].label);
    if (pred == examples[i].label_index) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

}  // namespace codemix::training
