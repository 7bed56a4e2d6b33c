#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "codemix/ensemble.hpp"

using namespace codemix;
using corpus::Language;
using models::PredictionRecord;

namespace {

corpus::LabelSchema abc_schema() {
  return corpus::LabelSchema::custom(Language::kannada, {"A", "B", "C"});
}

PredictionRecord record_for(const corpus::LabelSchema& schema, const std::string& label,
                            double confidence = 0.9, const std::string& id = "x-0") {
  PredictionRecord record;
  record.id = id;
  const size_t n = schema.size();
  record.probs.assign(n, (1.0 - confidence) / static_cast<double>(n - 1));
  record.probs[static_cast<size_t>(schema.index_of(label))] = confidence;
  record.label = label;
  return record;
}

// Brute-force oracle: count votes over labels; collect all modes; break ties
// by mean probability then schema order. Written independently of the library.
std::string oracle_vote(const std::vector<PredictionRecord>& records,
                        const corpus::LabelSchema& schema) {
  std::vector<int> counts(schema.size(), 0);
  for (const auto& r : records) ++counts[static_cast<size_t>(schema.index_of(r.label))];
  const int top = *std::max_element(counts.begin(), counts.end());
  std::vector<size_t> modes;
  for (size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == top) modes.push_back(c);
  }
  size_t best = modes[0];
  double best_mean = -1.0;
  for (size_t c : modes) {
    double mean = 0.0;
    for (const auto& r : records) mean += r.probs[c];
    mean /= static_cast<double>(records.size());
    if (mean > best_mean + 1e-15) {
      best_mean = mean;
      best = c;
    }
  }
  return schema.name(best);
}

}  // namespace

TEST_CASE("strict majority wins without tie-breaking") {
  const corpus::LabelSchema schema = abc_schema();
  std::vector<PredictionRecord> records;
  for (const char* label : {"A", "A", "B", "A", "B", "A"}) {
    records.push_back(record_for(schema, label));
  }
  const ensemble::VoteResult vote = ensemble::majority_vote(records, schema);
  CHECK(vote.final_label == "A");
  CHECK(!vote.tie_broken);
  CHECK(vote.member_labels.size() == 6);
}

TEST_CASE("3-3 ties break by the higher mean probability") {
  const corpus::LabelSchema schema = abc_schema();
  std::vector<PredictionRecord> records;
  // Labels split 3-3 between A and B; B carries more probability mass.
  for (int i = 0; i < 3; ++i) {
    PredictionRecord r = record_for(schema, "A");
    r.probs = {0.42, 0.40, 0.18};
    records.push_back(r);
  }
  for (int i = 0; i < 3; ++i) {
    PredictionRecord r = record_for(schema, "B");
    r.probs = {0.42, 0.51, 0.07};
    records.push_back(r);
  }
  const ensemble::VoteResult vote = ensemble::majority_vote(records, schema);
  CHECK(vote.final_label == "B");
  CHECK(vote.tie_broken);
  CHECK(vote.mean_probs[0] == doctest::Approx(0.42));
  CHECK(vote.mean_probs[1] == doctest::Approx(0.455));
}

TEST_CASE("residual exact ties fall back to schema order") {
  const corpus::LabelSchema schema = abc_schema();
  std::vector<PredictionRecord> records;
  PredictionRecord a = record_for(schema, "C");
  a.probs = {0.2, 0.3, 0.5};
  PredictionRecord b = record_for(schema, "B");
  b.probs = {0.2, 0.5, 0.3};
  records = {a, b};  // one vote each, identical mean prob for B and C
  const ensemble::VoteResult vote = ensemble::majority_vote(records, schema);
  CHECK(vote.tie_broken);
  CHECK(vote.final_label == "B");  // schema order: B before C
}

TEST_CASE("a single member is its own ensemble") {
  const corpus::LabelSchema schema = abc_schema();
  const ensemble::VoteResult vote = ensemble::majority_vote({record_for(schema, "A")}, schema);
  CHECK(vote.final_label == "A");
  CHECK(!vote.tie_broken);
}

TEST_CASE("mismatched example ids across members are rejected") {
  const corpus::LabelSchema schema = abc_schema();
  std::vector<PredictionRecord> records = {record_for(schema, "A", 0.9, "x-0"),
                                           record_for(schema, "A", 0.9, "x-1")};
  CHECK_THROWS_AS(ensemble::majority_vote(records, schema), ConfigError);
}

TEST_CASE("majority vote matches the brute-force oracle on sampled assignments") {
  const corpus::LabelSchema schema = abc_schema();
  Rng rng(424242);
  int forced_ties = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<PredictionRecord> records;
    const bool force_tie = trial % 4 == 0;  // a quarter of cases are forced 3-3 ties
    for (int m = 0; m < 6; ++m) {
      std::string label;
      if (force_tie) {
        label = m < 3 ? "A" : "B";
      } else {
        label = schema.name(rng.below(3));
      }
      PredictionRecord r = record_for(schema, label, 0.5 + 0.4 * rng.next_double());
      // jitter the probabilities while keeping the argmax on the label
      for (double& p : r.probs) p += 0.01 * rng.next_double();
      double sum = 0.0;
      for (double p : r.probs) sum += p;
      for (double& p : r.probs) p /= sum;
      r.label = schema.name(static_cast<size_t>(models::argmax_index(r.probs)));
      records.push_back(r);
    }
    const ensemble::VoteResult vote = ensemble::majority_vote(records, schema);
    CHECK(vote.final_label == oracle_vote(records, schema));
    if (vote.tie_broken) ++forced_ties;

    // vote counts always sum to the member count
    std::vector<int> counts(schema.size(), 0);
    for (const auto& label : vote.member_labels) ++counts[static_cast<size_t>(schema.index_of(label))];
    int total = 0;
    for (int c : counts) total += c;
    CHECK(total == 6);
  }
  CHECK(forced_ties >= 50);
}

TEST_CASE("member order never changes the outcome") {
  const corpus::LabelSchema schema = abc_schema();
  Rng rng(777);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<PredictionRecord> records;
    for (int m = 0; m < 6; ++m) {
      PredictionRecord r = record_for(schema, schema.name(rng.below(3)),
                                      0.4 + 0.5 * rng.next_double());
      records.push_back(r);
    }
    const std::string baseline = ensemble::majority_vote(records, schema).final_label;
    for (int p = 0; p < 5; ++p) {
      rng.shuffle(records);
      CHECK(ensemble::majority_vote(records, schema).final_label == baseline);
    }
  }
}

TEST_CASE("duplicating the winning member never changes the outcome") {
  const corpus::LabelSchema schema = abc_schema();
  Rng rng(888);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<PredictionRecord> records;
    for (int m = 0; m < 5; ++m) {
      records.push_back(record_for(schema, schema.name(rng.below(3)),
                                   0.4 + 0.5 * rng.next_double()));
    }
    const ensemble::VoteResult before = ensemble::majority_vote(records, schema);
    // find a member that voted for the winner and duplicate it
    for (const auto& r : records) {
      if (r.label == before.final_label) {
        records.push_back(r);
        break;
      }
    }
    const ensemble::VoteResult after = ensemble::majority_vote(records, schema);
    CHECK(after.final_label == before.final_label);
  }
}

TEST_CASE("votes serialize to submission TSV and audit JSONL") {
  const corpus::LabelSchema schema = abc_schema();
  ensemble::EnsembleOutput output;
  output.per_member.push_back({record_for(schema, "A", 0.9, "dev-0")});
  output.per_member.push_back({record_for(schema, "A", 0.8, "dev-0")});
  output.votes.push_back(ensemble::majority_vote(
      {output.per_member[0][0], output.per_member[1][0]}, schema));

  CHECK(ensemble::votes_to_tsv(output.votes) == "dev-0\tA\n");
  const std::string audit = ensemble::votes_to_audit_jsonl(output, schema);
  CHECK(audit.find("\"final_label\":\"A\"") != std::string::npos);
  CHECK(audit.find("member_probs") != std::string::npos);
  CHECK(std::count(audit.begin(), audit.end(), '\n') == 1);
}

TEST_CASE("ensemble_predict fails loudly when a member is unloadable") {
  ensemble::EnsembleSpec spec;
  spec.member_dirs = {"/nonexistent/member_a"};
  corpus::DatasetSplit data;
  data.language = Language::kannada;
  data.split = corpus::Split::dev;
  data.examples.push_back({"dev-0", "text", "Not_offensive"});
  CHECK_THROWS_WITH_AS(ensemble::ensemble_predict(spec, data),
                       doctest::Contains("member_a"), TrainError);
}
