#include "codemix/metrics.hpp"

#include <algorithm>
#include <cstdio>

#include <json.hpp>

namespace codemix::metrics {

MetricsReport compute_metrics(const std::vector<std::string>& gold,
                              const std::vector<std::string>& pred,
                              const corpus::LabelSchema& schema) {
  if (gold.empty()) throw ConfigError("compute_metrics called with empty inputs");
  if (gold.size() != pred.size()) {
    throw ConfigError("gold/pred length mismatch: " + std::to_string(gold.size()) + " vs " +
                      std::to_string(pred.size()));
  }
  const size_t n = schema.size();

  MetricsReport report;
  report.labels = schema.names();
  report.per_class.assign(n, ClassMetrics{});
  report.confusion.assign(n, std::vector<long>(n, 0));

  for (size_t i = 0; i < gold.size(); ++i) {
    const int g = schema.index_of(gold[i]);
    const int p = schema.index_of(pred[i]);
    if (g < 0) throw SchemaError("gold label '" + gold[i] + "' not in schema");
    if (p < 0) throw SchemaError("predicted label '" + pred[i] + "' not in schema");
    ++report.confusion[static_cast<size_t>(g)][static_cast<size_t>(p)];
  }

  long correct = 0;
  double weighted_sum = 0.0;
  double macro_sum = 0.0;
  long support_total = 0;
  for (size_t c = 0; c < n; ++c) {
    const long tp = report.confusion[c][c];
    long gold_total = 0;  // support
    long pred_total = 0;
    for (size_t k = 0; k < n; ++k) {
      gold_total += report.confusion[c][k];
      pred_total += report.confusion[k][c];
    }
    ClassMetrics& cm = report.per_class[c];
    cm.support = gold_total;
    bool zero_division = false;
    if (pred_total > 0) {
      cm.precision = static_cast<double>(tp) / static_cast<double>(pred_total);
    } else {
      zero_division = true;
    }
    if (gold_total > 0) {
      cm.recall = static_cast<double>(tp) / static_cast<double>(gold_total);
    } else {
      zero_division = true;
    }
    cm.f1 = (cm.precision + cm.recall) > 0.0
                ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall)
                : 0.0;
    if (zero_division) report.zero_division_labels.push_back(report.labels[c]);

    correct += tp;
    support_total += gold_total;
    weighted_sum += static_cast<double>(gold_total) * cm.f1;
    macro_sum += cm.f1;
  }

  report.accuracy = static_cast<double>(correct) / static_cast<double>(gold.size());
  report.weighted_f1 = weighted_sum / static_cast<double>(support_total);
  report.macro_f1 = macro_sum / static_cast<double>(n);
  return report;
}

namespace {

std::string pct2(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
  return buf;
}

}  // namespace

std::string format_f1_acc(const MetricsReport& report) {
  return pct2(report.weighted_f1) + " / " + pct2(report.accuracy);
}

std::string format_report(const MetricsReport& report) {
  size_t width = 12;
  for (const auto& label : report.labels) width = std::max(width, label.size());

  char line[256];
  std::string out;
  std::snprintf(line, sizeof(line), "%-*s %9s %9s %9s %9s\n", static_cast<int>(width), "",
                "precision", "recall", "f1", "support");
  out += line;
  for (size_t c = 0; c < report.labels.size(); ++c) {
    const ClassMetrics& cm = report.per_class[c];
    std::snprintf(line, sizeof(line), "%-*s %9.4f %9.4f %9.4f %9ld\n", static_cast<int>(width),
                  report.labels[c].c_str(), cm.precision, cm.recall, cm.f1, cm.support);
    out += line;
  }
  std::snprintf(line, sizeof(line), "\n%-*s %9.4f\n", static_cast<int>(width), "accuracy",
                report.accuracy);
  out += line;
  std::snprintf(line, sizeof(line), "%-*s %9.4f\n", static_cast<int>(width), "macro F1",
                report.macro_f1);
  out += line;
  std::snprintf(line, sizeof(line), "%-*s %9.4f\n", static_cast<int>(width), "weighted F1",
                report.weighted_f1);
  out += line;
  if (!report.zero_division_labels.empty()) {
    out += "zero-division classes:";
    for (const auto& label : report.zero_division_labels) out += " " + label;
    out += "\n";
  }
  out += "F1 / Acc: " + format_f1_acc(report) + "\n";
  return out;
}

std::string report_to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["accuracy"] = report.accuracy;
  j["weighted_f1"] = report.weighted_f1;
  j["macro_f1"] = report.macro_f1;
  j["f1_acc"] = format_f1_acc(report);
  j["labels"] = report.labels;
  nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
  for (size_t c = 0; c < report.labels.size(); ++c) {
    const ClassMetrics& cm = report.per_class[c];
    per_class[report.labels[c]] = {{"precision", cm.precision},
                                   {"recall", cm.recall},
                                   {"f1", cm.f1},
                                   {"support", cm.support}};
  }
  j["per_class"] = per_class;
  j["confusion"] = report.confusion;
  j["zero_division_labels"] = report.zero_division_labels;
  return j.dump(2) + "\n";
}

MetricsReport report_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad metrics JSON: ") + e.what());
  }
  MetricsReport report;
  report.accuracy = j.at("accuracy").get<double>();
  report.weighted_f1 = j.at("weighted_f1").get<double>();
  report.macro_f1 = j.at("macro_f1").get<double>();
  report.labels = j.at("labels").get<std::vector<std::string>>();
  for (const auto& label : report.labels) {
    const auto& pc = j.at("per_class").at(label);
    ClassMetrics cm;
    cm.precision = pc.at("precision").get<double>();
    cm.recall = pc.at("recall").get<double>();
    cm.f1 = pc.at("f1").get<double>();
    cm.support = pc.at("support").get<long>();
    report.per_class.push_back(cm);
  }
  report.confusion = j.at("confusion").get<std::vector<std::vector<long>>>();
  report.zero_division_labels = j.at("zero_division_labels").get<std::vector<std::string>>();
  return report;
}

}  // namespace codemix::metrics
