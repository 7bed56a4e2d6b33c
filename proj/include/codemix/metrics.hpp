#pragma once

#include <string>
#include <vector>

#include "codemix/corpus.hpp"

namespace codemix::metrics {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;

  bool operator==(const ClassMetrics&) const = default;
};

struct MetricsReport {
  std::vector<std::string> labels;  // schema order
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  double macro_f1 = 0.0;
  std::vector<std::vector<long>> confusion;  // rows = gold, cols = predicted
  // Classes where a 0/0 precision or recall was coerced to 0.
  std::vector<std::string> zero_division_labels;

  bool operator==(const MetricsReport&) const = default;
};

// Accuracy plus per-class precision/recall/F1 with weighted and macro
// averages. 0/0 ratios are defined as 0 and recorded in
// zero_division_labels.
MetricsReport compute_metrics(const std::vector<std::string>& gold,
                              const std::vector<std::string>& pred,
                              const corpus::LabelSchema& schema);

// "70.30 / 74.00" — percentages with two decimals, weighted F1 then accuracy.
std::string format_f1_acc(const MetricsReport& report);

// Human-readable classification report ending with the F1 / Acc line.
std::string format_report(const MetricsReport& report);

std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& json_text);

}  // namespace codemix::metrics
