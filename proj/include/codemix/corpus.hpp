#pragma once

#include <optional>
#include <string>
#include <vector>

#include "codemix/common.hpp"

namespace codemix::corpus {

enum class Language { kannada, tamil, malayalam };
enum class Split { train, dev, test };

Language language_from_string(const std::string& name);
std::string language_name(Language language);
std::string language_code(Language language);

Split split_from_string(const std::string& name);
std::string split_name(Split split);

// The task's six-way label set, with the not-in-language class instantiated
// per language (Not-Kannada / Not-Tamil / Not-Malayalam). The order here fixes
// the classifier output dimension, schema-order tie breaking, and report
// ordering everywhere downstream. Classes with zero support stay in the
// schema so output dimensions are stable across splits.
class LabelSchema {
 public:
  static LabelSchema for_language(Language language);
  // Arbitrary label list (probe experiments, tests). Order is significant.
  static LabelSchema custom(Language language, std::vector<std::string> names);

  size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(size_t index) const { return names_.at(index); }
  // -1 when the label is not part of the schema.
  int index_of(const std::string& label) const;
  bool contains(const std::string& label) const { return index_of(label) >= 0; }
  Language language() const { return language_; }

  bool operator==(const LabelSchema& other) const {
    return language_ == other.language_ && names_ == other.names_;
  }

 private:
  Language language_;
  std::vector<std::string> names_;
};

struct LabeledExample {
  std::string id;
  std::string text;  // raw bytes, stored verbatim
  std::optional<std::string> label;
};

struct DatasetSplit {
  Language language = Language::kannada;
  Split split = Split::train;
  std::vector<LabeledExample> examples;

  size_t size() const { return examples.size(); }
};

struct ClassDistribution {
  // Counts in schema order; labels with zero examples are present with 0.
  std::vector<std::string> labels;
  std::vector<long> counts;
  long total = 0;

  long count_of(const std::string& label) const;
};

// TSV loader: one row per example, `text<TAB>label` with the label column
// optional (test files may ship unlabeled). Rows with more than two columns
// are ambiguous and rejected with the offending line number.
DatasetSplit load_split(const std::string& path, Language language, Split split);

// Inverse of load_split modulo id synthesis: `text<TAB>label\n` rows, no
// label column for unlabeled examples.
std::string to_tsv(const DatasetSplit& split);
void save_split(const DatasetSplit& split, const std::string& path);

ClassDistribution class_distribution(const DatasetSplit& split);

std::string distribution_to_json(const ClassDistribution& distribution, Language language, Split split);

}  // namespace codemix::corpus
