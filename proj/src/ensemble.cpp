#include "codemix/ensemble.hpp"

#include <algorithm>

#include <json.hpp>

namespace codemix::ensemble {

VoteResult majority_vote(const std::vector<models::PredictionRecord>& member_records,
                         const corpus::LabelSchema& schema) {
  if (member_records.empty()) throw ConfigError("majority_vote requires at least one member");
  const size_t n = schema.size();

  VoteResult result;
  result.id = member_records[0].id;
  result.mean_probs.assign(n, 0.0);
  std::vector<long> votes(n, 0);

  for (const auto& record : member_records) {
    if (record.id != result.id) {
      throw ConfigError("member predictions disagree on example id: '" + record.id + "' vs '" +
                        result.id + "'");
    }
    if (record.probs.size() != n) throw SchemaError("member probability vector size mismatch");
    const int label_index = schema.index_of(record.label);
    if (label_index < 0) throw SchemaError("member label '" + record.label + "' not in schema");
    ++votes[static_cast<size_t>(label_index)];
    result.member_labels.push_back(record.label);
    for (size_t c = 0; c < n; ++c) result.mean_probs[c] += record.probs[c];
  }
  for (size_t c = 0; c < n; ++c) {
    result.mean_probs[c] /= static_cast<double>(member_records.size());
  }

  const long top = *std::max_element(votes.begin(), votes.end());
  std::vector<size_t> tied;
  for (size_t c = 0; c < n; ++c) {
    if (votes[c] == top) tied.push_back(c);
  }

  size_t winner = tied[0];
  if (tied.size() > 1) {
    result.tie_broken = true;
    // Highest mean probability among tied labels; exact residual ties fall
    // back to schema order (tied is already in schema order).
    for (size_t c : tied) {
      if (result.mean_probs[c] > result.mean_probs[winner]) winner = c;
    }
  }
  result.final_label = schema.name(winner);
  return result;
}

EnsembleOutput ensemble_predict(const EnsembleSpec& spec, const corpus::DatasetSplit& data,
                                size_t batch_size) {
  if (spec.member_dirs.empty()) throw ConfigError("ensemble requires at least one member");

  EnsembleOutput output;
  const corpus::LabelSchema schema = corpus::LabelSchema::for_language(data.language);

  for (const auto& dir : spec.member_dirs) {
    try {
      models::ClassifierBundle bundle = models::ClassifierBundle::load(dir);
      if (!(bundle.schema() == schema)) {
        throw SchemaError("member label schema does not match dataset language");
      }
      output.per_member.push_back(bundle.predict_examples(data.examples, batch_size));
    } catch (const std::exception& e) {
      throw TrainError("ensemble member '" + dir + "' failed: " + e.what());
    }
  }

  for (size_t i = 0; i < data.examples.size(); ++i) {
    std::vector<models::PredictionRecord> records;
    records.reserve(output.per_member.size());
    for (const auto& member : output.per_member) records.push_back(member[i]);
    output.votes.push_back(majority_vote(records, schema));
  }
  return output;
}

std::string votes_to_tsv(const std::vector<VoteResult>& votes) {
  std::string out;
  for (const auto& vote : votes) {
    out += vote.id;
    out += '\t';
    out += vote.final_label;
    out += '\n';
  }
  return out;
}

std::string votes_to_audit_jsonl(const EnsembleOutput& output, const corpus::LabelSchema& schema) {
  std::string out;
  for (size_t i = 0; i < output.votes.size(); ++i) {
    const VoteResult& vote = output.votes[i];
    nlohmann::ordered_json j;
    j["id"] = vote.id;
    j["final_label"] = vote.final_label;
    j["tie_broken"] = vote.tie_broken;
    j["member_labels"] = vote.member_labels;
    j["mean_probs"] = vote.mean_probs;
    nlohmann::ordered_json member_probs = nlohmann::ordered_json::array();
    for (const auto& member : output.per_member) member_probs.push_back(member[i].probs);
    j["member_probs"] = member_probs;
    j["schema"] = schema.names();
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace codemix::ensemble
