#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "codemix/corpus.hpp"
#include "codemix/models.hpp"
#include "codemix/textprep.hpp"

namespace codemix::mlm {

// One example's masking decisions. Terminal markers and padding are never
// selected; the selection count is round(rate * eligible), at least 1.
struct MaskingPlan {
  enum class Replacement : uint8_t { mask, random, keep };
  std::vector<int> positions;            // sorted subtoken indices
  std::vector<Replacement> replacement;  // per selected position
  std::vector<int> replacement_ids;      // id placed in the corrupted stream
  std::vector<int> labels;               // original ids at selected positions

  size_t size() const { return positions.size(); }
};

// pure_mask switches off the 80/10/10 corruption split and always places the
// mask token.
MaskingPlan sample_masks(const std::vector<int>& subtoken_ids,
                         const textprep::SubwordTokenizer& tokenizer, double mask_rate, Rng& rng,
                         bool pure_mask = false);

std::vector<int> apply_plan(const std::vector<int>& subtoken_ids, const MaskingPlan& plan);

struct MLMDatasetSpec {
  std::vector<std::string> train_texts;  // train + dev combined
  std::vector<std::string> eval_texts;   // test split
};

MLMDatasetSpec make_mlm_spec(const corpus::DatasetSplit& train, const corpus::DatasetSplit& dev,
                             const corpus::DatasetSplit& test);

struct MLMConfig {
  int epochs = 5;
  int batch_size = 8;
  uint64_t seed = 0;
  double mask_rate = 0.15;
  bool dynamic_masking = true;  // fresh plans per epoch; static reuses epoch-0 plans
  bool pure_mask = false;
  double lr = 2e-5;
  double warmup_fraction = 0.1;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  size_t truncate_limit = textprep::kDefaultTruncationLimit;

  void validate() const;
};

struct MLMEpochStats {
  double train_loss = 0.0;
  double eval_loss = 0.0;
  double eval_perplexity = 0.0;
};

struct MLMReport {
  std::vector<MLMEpochStats> epochs;
};

std::string report_to_json(const MLMReport& report);

// Batched cross-entropy over exactly the plan positions; empty plans yield
// zero loss and touch no gradients. Returns (total loss, positions).
std::pair<double, size_t> mlm_batch_loss(models::Backbone& backbone,
                                         const std::vector<std::vector<int>>& corrupted_ids,
                                         const std::vector<std::vector<uint8_t>>& attention_mask,
                                         const std::vector<MaskingPlan>& plans,
                                         bool accumulate_grads);

// Task-adaptive pretraining: trains on spec.train_texts, evaluates loss and
// perplexity on spec.eval_texts after every epoch (with fixed eval plans so
// epochs are comparable). Mutates the backbone in place.
MLMReport pretrain_mlm(models::Backbone& backbone, const textprep::SubwordTokenizer& tokenizer,
                       const MLMDatasetSpec& spec, const MLMConfig& config);

}  // namespace codemix::mlm
