#include "codemix/mlm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <json.hpp>

namespace codemix::mlm {

MaskingPlan sample_masks(const std::vector<int>& subtoken_ids,
                         const textprep::SubwordTokenizer& tokenizer, double mask_rate, Rng& rng,
                         bool pure_mask) {
  if (mask_rate <= 0.0 || mask_rate > 1.0) {
    throw ConfigError("mask rate must be in (0,1], got " + std::to_string(mask_rate));
  }
  std::vector<int> eligible;
  for (size_t t = 0; t < subtoken_ids.size(); ++t) {
    if (!tokenizer.is_marker_or_pad(subtoken_ids[t])) eligible.push_back(static_cast<int>(t));
  }
  if (eligible.empty()) {
    throw TrainError("no eligible positions to mask (sequence has only markers/padding)");
  }

  const size_t want = std::max<size_t>(
      1, static_cast<size_t>(std::lround(mask_rate * static_cast<double>(eligible.size()))));
  const size_t count = std::min(want, eligible.size());

  // Partial Fisher-Yates: uniform selection without replacement.
  for (size_t i = 0; i < count; ++i) {
    const size_t j = i + static_cast<size_t>(rng.below(eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
  }
  MaskingPlan plan;
  plan.positions.assign(eligible.begin(), eligible.begin() + static_cast<long>(count));
  std::sort(plan.positions.begin(), plan.positions.end());

  const std::vector<int>& regular = tokenizer.regular_ids();
  for (int pos : plan.positions) {
    const int original = subtoken_ids[static_cast<size_t>(pos)];
    plan.labels.push_back(original);
    MaskingPlan::Replacement repl = MaskingPlan::Replacement::mask;
    if (!pure_mask) {
      const double u = rng.next_double();
      if (u < 0.8) {
        repl = MaskingPlan::Replacement::mask;
      } else if (u < 0.9) {
        repl = MaskingPlan::Replacement::random;
      } else {
        repl = MaskingPlan::Replacement::keep;
      }
    }
    plan.replacement.push_back(repl);
    switch (repl) {
      case MaskingPlan::Replacement::mask:
        plan.replacement_ids.push_back(tokenizer.mask_id());
        break;
      case MaskingPlan::Replacement::random:
        plan.replacement_ids.push_back(regular[rng.below(regular.size())]);
        break;
      case MaskingPlan::Replacement::keep:
        plan.replacement_ids.push_back(original);
        break;
    }
  }
  return plan;
}

std::vector<int> apply_plan(const std::vector<int>& subtoken_ids, const MaskingPlan& plan) {
  std::vector<int> out = subtoken_ids;
  for (size_t i = 0; i < plan.positions.size(); ++i) {
    out[static_cast<size_t>(plan.positions[i])] = plan.replacement_ids[i];
  }
  return out;
}

MLMDatasetSpec make_mlm_spec(const corpus::DatasetSplit& train, const corpus::DatasetSplit& dev,
                             const corpus::DatasetSplit& test) {
  MLMDatasetSpec spec;
  for (const auto& ex : train.examples) spec.train_texts.push_back(ex.text);
  for (const auto& ex : dev.examples) spec.train_texts.push_back(ex.text);
  for (const auto& ex : test.examples) spec.eval_texts.push_back(ex.text);
  return spec;
}

void MLMConfig::validate() const {
  if (epochs < 1) throw ConfigError("MLM epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("MLM batch size must be >= 1");
  if (mask_rate <= 0.0 || mask_rate > 1.0) throw ConfigError("mask rate must be in (0,1]");
  if (lr <= 0.0) throw ConfigError("MLM learning rate must be positive");
  if (truncate_limit < 1) throw ConfigError("truncation limit must be >= 1");
}

std::string report_to_json(const MLMReport& report) {
  nlohmann::ordered_json j;
  j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : report.epochs) {
    j["epochs"].push_back({{"train_loss", e.train_loss},
                           {"eval_loss", e.eval_loss},
                           {"eval_perplexity", e.eval_perplexity}});
  }
  return j.dump(2) + "\n";
}

std::pair<double, size_t> mlm_batch_loss(models::Backbone& backbone,
                                         const std::vector<std::vector<int>>& corrupted_ids,
                                         const std::vector<std::vector<uint8_t>>& attention_mask,
                                         const std::vector<MaskingPlan>& plans,
                                         bool accumulate_grads) {
  const size_t B = corrupted_ids.size();
  const size_t T = corrupted_ids.empty() ? 0 : corrupted_ids[0].size();
  const size_t D = backbone.config().encoder.d_model;
  const size_t V = backbone.config().encoder.vocab_size;

  size_t total_positions = 0;
  for (const auto& plan : plans) total_positions += plan.size();
  if (total_positions == 0) return {0.0, 0};

  nn::TransformerEncoder::Trace trace;
  backbone.encoder().forward(corrupted_ids, attention_mask, trace);

  // Gather selected-position states, run the prediction head only on those.
  std::vector<double> gathered(total_positions * D);
  std::vector<int> targets(total_positions);
  size_t row = 0;
  for (size_t b = 0; b < B; ++b) {
    for (size_t i = 0; i < plans[b].size(); ++i) {
      const size_t t = static_cast<size_t>(plans[b].positions[i]);
      std::memcpy(gathered.data() + row * D, trace.states.data() + (b * T + t) * D,
                  D * sizeof(double));
      targets[row] = plans[b].labels[i];
      ++row;
    }
  }

  std::vector<double> probs(total_positions * V);
  backbone.mlm_head().forward(gathered.data(), total_positions, probs.data());
  nn::softmax_rows(probs.data(), total_positions, V);

  std::vector<double> dlogits(accumulate_grads ? total_positions * V : 0);
  const double mean_loss =
      nn::cross_entropy_mean(probs.data(), targets.data(), total_positions, V, nullptr,
                             accumulate_grads ? dlogits.data() : nullptr);
  if (!std::isfinite(mean_loss)) throw TrainError("non-finite MLM loss");

  if (accumulate_grads) {
    std::vector<double> dgathered(total_positions * D, 0.0);
    backbone.mlm_head().backward(gathered.data(), dlogits.data(), total_positions, dgathered.data());
    std::vector<double> dstates(B * T * D, 0.0);
    row = 0;
    for (size_t b = 0; b < B; ++b) {
      for (size_t i = 0; i < plans[b].size(); ++i) {
        const size_t t = static_cast<size_t>(plans[b].positions[i]);
        std::memcpy(dstates.data() + (b * T + t) * D, dgathered.data() + row * D,
                    D * sizeof(double));
        ++row;
      }
    }
    backbone.encoder().backward(trace, dstates);
  }
  return {mean_loss * static_cast<double>(total_positions), total_positions};
}

namespace {

struct EncodedText {
  std::vector<int> ids;
  bool maskable = false;  // has at least one eligible position
};

std::vector<EncodedText> encode_texts(const std::vector<std::string>& texts,
                                      const textprep::SubwordTokenizer& tokenizer,
                                      size_t truncate_limit) {
  const textprep::CharVocab empty_chars;
  std::vector<EncodedText> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    const std::string prepared = textprep::truncate_text(text, truncate_limit);
    textprep::EncodedExample encoded =
        textprep::tokenize_with_alignment(prepared, tokenizer, empty_chars);
    EncodedText et;
    et.ids = std::move(encoded.subtoken_ids);
    for (int id : et.ids) {
      if (!tokenizer.is_marker_or_pad(id)) {
        et.maskable = true;
        break;
      }
    }
    if (!et.maskable) log_warning("text with no maskable subtokens skipped in MLM");
    out.push_back(std::move(et));
  }
  return out;
}

// Runs one pass over the given order; when optimizer is null this is a no-grad
// evaluation pass. Plans are derived from (seed, plan_epoch, example index).
std::pair<double, size_t> run_epoch(models::Backbone& backbone,
                                    const textprep::SubwordTokenizer& tokenizer,
                                    const std::vector<EncodedText>& encoded,
                                    const std::vector<size_t>& order, const MLMConfig& config,
                                    uint64_t plan_epoch, nn::Optimizer* optimizer,
                                    nn::ParamRegistry* params) {
  double loss_sum = 0.0;
  size_t position_count = 0;
  const size_t batch_size = static_cast<size_t>(config.batch_size);

  for (size_t start = 0; start < order.size(); start += batch_size) {
    const size_t end = std::min(order.size(), start + batch_size);
    std::vector<std::vector<int>> ids;
    std::vector<MaskingPlan> plans;
    size_t max_len = 0;
    for (size_t i = start; i < end; ++i) {
      const EncodedText& et = encoded[order[i]];
      if (!et.maskable) continue;
      Rng plan_rng(Rng::derive(config.seed, plan_epoch, order[i]));
      MaskingPlan plan = sample_masks(et.ids, tokenizer, config.mask_rate, plan_rng, config.pure_mask);
      ids.push_back(apply_plan(et.ids, plan));
      plans.push_back(std::move(plan));
      max_len = std::max(max_len, et.ids.size());
    }
    if (ids.empty()) continue;

    std::vector<std::vector<uint8_t>> mask;
    for (auto& seq : ids) {
      std::vector<uint8_t> m(seq.size(), 1);
      seq.resize(max_len, tokenizer.pad_id());
      m.resize(max_len, 0);
      mask.push_back(std::move(m));
    }

    if (optimizer) params->zero_grads();
    const auto [batch_loss, batch_positions] =
        mlm_batch_loss(backbone, ids, mask, plans, optimizer != nullptr);
    if (optimizer) optimizer->step(*params);
    loss_sum += batch_loss;
    position_count += batch_positions;
  }
  return {loss_sum, position_count};
}

}  // namespace

MLMReport pretrain_mlm(models::Backbone& backbone, const textprep::SubwordTokenizer& tokenizer,
                       const MLMDatasetSpec& spec, const MLMConfig& config) {
  config.validate();
  if (spec.train_texts.empty()) throw TrainError("MLM pretraining requires non-empty training texts");

  const std::vector<EncodedText> train_encoded =
      encode_texts(spec.train_texts, tokenizer, config.truncate_limit);
  const std::vector<EncodedText> eval_encoded =
      encode_texts(spec.eval_texts, tokenizer, config.truncate_limit);

  const size_t n_batches =
      (train_encoded.size() + static_cast<size_t>(config.batch_size) - 1) /
      static_cast<size_t>(config.batch_size);
  const long total_steps = static_cast<long>(n_batches) * config.epochs;
  nn::WarmupAdam optimizer(config.lr, std::max(1L, total_steps), config.warmup_fraction,
                           config.weight_decay, config.clip_norm);
  nn::ParamRegistry& params = backbone.mlm_params();

  std::vector<size_t> eval_order(eval_encoded.size());
  for (size_t i = 0; i < eval_order.size(); ++i) eval_order[i] = i;

  MLMReport report;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<size_t> order(train_encoded.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(Rng::derive(config.seed, 0x5148, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    const uint64_t plan_epoch = config.dynamic_masking ? static_cast<uint64_t>(epoch) : 0;
    const auto [train_loss_sum, train_positions] =
        run_epoch(backbone, tokenizer, train_encoded, order, config, plan_epoch, &optimizer, &params);

    MLMEpochStats stats;
    stats.train_loss = train_positions > 0 ? train_loss_sum / static_cast<double>(train_positions) : 0.0;

    if (!eval_encoded.empty()) {
      // Fixed eval plans (epoch-independent stream) keep epochs comparable.
      const auto [eval_loss_sum, eval_positions] =
          run_epoch(backbone, tokenizer, eval_encoded, eval_order, config,
                    /*plan_epoch=*/0xE7A1u, nullptr, nullptr);
      stats.eval_loss = eval_positions > 0 ? eval_loss_sum / static_cast<double>(eval_positions) : 0.0;
      stats.eval_perplexity = std::exp(stats.eval_loss);
    }
    report.epochs.push_back(stats);
  }
  return report;
}

}  // namespace codemix::mlm
