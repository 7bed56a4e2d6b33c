#include "codemix/corpus.hpp"

#include <algorithm>

#include <json.hpp>

#include "codemix/unicode.hpp"

namespace codemix::corpus {

namespace {

std::string strip_trailing_cr(std::string row) {
  if (!row.empty() && row.back() == '\r') row.pop_back();
  return row;
}

}  // namespace

Language language_from_string(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "kannada" || lower == "kn") return Language::kannada;
  if (lower == "tamil" || lower == "ta") return Language::tamil;
  if (lower == "malayalam" || lower == "ml") return Language::malayalam;
  throw ConfigError("unknown language: " + name + " (expected kannada|tamil|malayalam or kn|ta|ml)");
}

std::string language_name(Language language) {
  switch (language) {
    case Language::kannada:
      return "Kannada";
    case Language::tamil:
      return "Tamil";
    case Language::malayalam:
      return "Malayalam";
  }
  throw ConfigError("invalid language enum value");
}

std::string language_code(Language language) {
  switch (language) {
    case Language::kannada:
      return "kn";
    case Language::tamil:
      return "ta";
    case Language::malayalam:
      return "ml";
  }
  throw ConfigError("invalid language enum value");
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "dev" || name == "validation" || name == "val") return Split::dev;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split: " + name + " (expected train|dev|test)");
}

std::string split_name(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::dev:
      return "dev";
    case Split::test:
      return "test";
  }
  throw ConfigError("invalid split enum value");
}

LabelSchema LabelSchema::for_language(Language language) {
  LabelSchema schema;
  schema.language_ = language;
  schema.names_ = {
      "Not-" + language_name(language),
      "Not_offensive",
      "Offensive_Targeted_Insult_Individual",
      "Offensive_Targeted_Insult_Group",
      "Offensive_Targeted_Insult_Other",
      "Offensive_Untargeted",
  };
  return schema;
}

LabelSchema LabelSchema::custom(Language language, std::vector<std::string> names) {
  if (names.empty()) throw ConfigError("label schema must be non-empty");
  LabelSchema schema;
  schema.language_ = language;
  schema.names_ = std::move(names);
  return schema;
}

int LabelSchema::index_of(const std::string& label) const {
  for (size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == label) return static_cast<int>(i);
  }
  return -1;
}

long ClassDistribution::count_of(const std::string& label) const {
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return counts[i];
  }
  return 0;
}

DatasetSplit load_split(const std::string& path, Language language, Split split) {
  const std::string content = read_file(path);
  const LabelSchema schema = LabelSchema::for_language(language);

  DatasetSplit out;
  out.language = language;
  out.split = split;

  size_t line_no = 0;
  size_t pos = 0;
  while (pos < content.size()) {
    size_t nl = content.find('\n', pos);
    const bool last_without_newline = (nl == std::string::npos);
    std::string row = content.substr(pos, last_without_newline ? std::string::npos : nl - pos);
    pos = last_without_newline ? content.size() : nl + 1;
    ++line_no;
    row = strip_trailing_cr(std::move(row));

    const size_t first_tab = row.find('\t');
    std::string text;
    std::optional<std::string> label;
    if (first_tab == std::string::npos) {
      text = row;
    } else {
      if (row.find('\t', first_tab + 1) != std::string::npos) {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": ambiguous row with more than 2 columns (embedded tabs must be pre-escaped)");
      }
      text = row.substr(0, first_tab);
      label = row.substr(first_tab + 1);
    }

    if (text.empty()) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": row with empty text");
    }
    unicode::decode(text);  // reject malformed encodings early

    if (label) {
      if (!schema.contains(*label)) {
        throw SchemaError(path + ":" + std::to_string(line_no) + ": unknown label '" + *label +
                          "' for language " + language_name(language));
      }
    }

    LabeledExample example;
    example.id = split_name(split) + "-" + std::to_string(out.examples.size());
    example.text = std::move(text);
    example.label = std::move(label);
    out.examples.push_back(std::move(example));
  }

  if (out.examples.empty()) {
    throw ParseError(path + ": no examples");
  }
  return out;
}

std::string to_tsv(const DatasetSplit& split) {
  std::string out;
  for (const auto& example : split.examples) {
    out += example.text;
    if (example.label) {
      out += '\t';
      out += *example.label;
    }
    out += '\n';
  }
  return out;
}

void save_split(const DatasetSplit& split, const std::string& path) { write_file(path, to_tsv(split)); }

ClassDistribution class_distribution(const DatasetSplit& split) {
  const LabelSchema schema = LabelSchema::for_language(split.language);
  ClassDistribution dist;
  dist.labels = schema.names();
  dist.counts.assign(schema.size(), 0);
  for (const auto& example : split.examples) {
    if (!example.label) {
      throw SchemaError("unlabeled example '" + example.id + "' in class_distribution");
    }
    const int idx = schema.index_of(*example.label);
    if (idx < 0) {
      throw SchemaError("label '" + *example.label + "' outside schema for " + language_name(split.language));
    }
    ++dist.counts[static_cast<size_t>(idx)];
  }
  dist.total = static_cast<long>(split.examples.size());
  for (size_t i = 0; i < dist.labels.size(); ++i) {
    if (dist.counts[i] == 0) {
      log_warning("class '" + dist.labels[i] + "' has zero support in " + split_name(split.split) + " split");
    }
  }
  return dist;
}

std::string distribution_to_json(const ClassDistribution& distribution, Language language, Split split) {
  nlohmann::ordered_json j;
  j["language"] = language_name(language);
  j["split"] = split_name(split);
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  for (size_t i = 0; i < distribution.labels.size(); ++i) {
    counts[distribution.labels[i]] = distribution.counts[i];
  }
  j["counts"] = counts;
  j["total"] = distribution.total;
  return j.dump(2) + "\n";
}

}  // namespace codemix::corpus
