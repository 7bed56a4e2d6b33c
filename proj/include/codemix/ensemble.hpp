#pragma once

#include <string>
#include <vector>

#include "codemix/models.hpp"

namespace codemix::ensemble {

struct EnsembleSpec {
  // Checkpoint directories, in member order. The paper's composition is six
  // members: three runs per backbone family.
  std::vector<std::string> member_dirs;
};

struct VoteResult {
  std::string id;
  std::vector<std::string> member_labels;  // in member order
  std::string final_label;
  bool tie_broken = false;
  std::vector<double> mean_probs;  // averaged over members, schema order
};

// Mode over member labels. Ties are broken by the highest mean probability
// among the tied labels, then by schema order; both rules are independent of
// member order.
VoteResult majority_vote(const std::vector<models::PredictionRecord>& member_records,
                         const corpus::LabelSchema& schema);

struct EnsembleOutput {
  std::vector<VoteResult> votes;                                  // dataset order
  std::vector<std::vector<models::PredictionRecord>> per_member;  // [member][example]
};

EnsembleOutput ensemble_predict(const EnsembleSpec& spec, const corpus::DatasetSplit& data,
                                size_t batch_size = 8);

// Submission-shaped predictions file: `id<TAB>label` per row.
std::string votes_to_tsv(const std::vector<VoteResult>& votes);
// Per-example audit records (member labels, probabilities, tie flags), one
// JSON object per line.
std::string votes_to_audit_jsonl(const EnsembleOutput& output,
                                 const corpus::LabelSchema& schema);

}  // namespace codemix::ensemble
