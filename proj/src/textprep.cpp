#include "codemix/textprep.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "codemix/unicode.hpp"

namespace codemix::textprep {

namespace {

constexpr const char* kWordBeginPrefix = "\xE2\x96\x81";  // U+2581 LOWER ONE EIGHTH BLOCK
constexpr const char* kContinuationPrefix = "##";

bool is_ascii(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return c < 0x80; });
}

}  // namespace

// ---------------------------------------------------------------------------
// Truncation

std::string truncate_text(const std::string& text, size_t limit) {
  if (limit < 1) throw ConfigError("truncation limit must be >= 1");
  return unicode::truncate(text, limit);
}

// ---------------------------------------------------------------------------
// Transliteration

namespace {

class IdentityTransliterator final : public Transliterator {
 public:
  std::string name() const override { return "identity"; }
  std::string apply(const std::string& text) const override { return text; }
};

// Word-by-word lookup backed by a frozen mapping file. ASCII words pass
// through unchanged (an already-romanized word is a fixed point); unmapped
// native-script words are an engine failure.
class MappingTransliterator final : public Transliterator {
 public:
  explicit MappingTransliterator(const std::string& path) : path_(path) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad transliteration mapping file " + path + ": " + e.what());
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
      mapping_[it.key()] = it.value().get<std::string>();
    }
  }

  std::string name() const override { return "fixture:" + path_; }

  std::string apply(const std::string& text) const override {
    const std::vector<uint32_t> cps = unicode::decode(text);
    std::string out;
    std::string word;
    auto flush = [&]() {
      if (word.empty()) return;
      auto it = mapping_.find(word);
      if (it != mapping_.end()) {
        out += it->second;
      } else if (is_ascii(word)) {
        out += word;
      } else {
        throw TransliterationError("no mapping for word '" + word + "' in " + path_, text);
      }
      word.clear();
    };
    for (uint32_t cp : cps) {
      if (unicode::is_space(cp)) {
        flush();
        out += unicode::encode_one(cp);
      } else {
        word += unicode::encode_one(cp);
      }
    }
    flush();
    return out;
  }

 private:
  std::string path_;
  std::unordered_map<std::string, std::string> mapping_;
};

// Adapter for an external line-oriented transliterator process.
class CommandTransliterator final : public Transliterator {
 public:
  explicit CommandTransliterator(std::string command) : command_(std::move(command)) {}

  std::string name() const override { return "command:" + command_; }

  std::string apply(const std::string& text) const override {
    if (text.find('\n') != std::string::npos) {
      throw TransliterationError("command engine input must be a single line", text);
    }
    const std::string tmp = "/tmp/codemix_translit_" + hex64(fnv1a64(text)) + ".txt";
    write_file(tmp, text + "\n");
    const std::string cmd = command_ + " < " + tmp;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) throw TransliterationError("cannot launch engine: " + command_, text);
    std::string out;
    char buf[4096];
    size_t n;
    while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) out.append(buf, n);
    const int status = pclose(pipe);
    std::remove(tmp.c_str());
    if (status != 0) {
      throw TransliterationError("engine '" + command_ + "' exited with status " + std::to_string(status), text);
    }
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out;
  }

 private:
  std::string command_;
};

}  // namespace

std::unique_ptr<Transliterator> make_transliterator(const std::string& engine_spec) {
  if (engine_spec == "identity") return std::make_unique<IdentityTransliterator>();
  if (engine_spec.rfind("fixture:", 0) == 0) {
    return std::make_unique<MappingTransliterator>(engine_spec.substr(8));
  }
  if (engine_spec.rfind("command:", 0) == 0) {
    return std::make_unique<CommandTransliterator>(engine_spec.substr(8));
  }
  throw ConfigError("unknown transliterator engine: " + engine_spec);
}

TransliterationPolicy::Mode TransliterationPolicy::mode_from_string(const std::string& name) {
  if (name == "as-is" || name == "as_is") return Mode::as_is;
  if (name == "romanized") return Mode::romanized;
  throw ConfigError("unknown input mode: " + name + " (expected as-is|romanized)");
}

std::string TransliterationPolicy::mode_name(Mode mode) {
  return mode == Mode::as_is ? "as-is" : "romanized";
}

TransliterationResult transliterate(const std::string& text, const TransliterationPolicy& policy,
                                    const Transliterator& engine) {
  TransliterationResult result;
  result.original = text;
  if (policy.mode == TransliterationPolicy::Mode::as_is) {
    result.text = text;
    return result;
  }
  try {
    result.text = engine.apply(text);
  } catch (const TransliterationError& e) {
    if (!policy.fallback_to_identity) throw;
    log_warning(std::string("transliteration failed (") + e.what() + "); falling back to identity");
    result.text = text;
    result.fell_back = true;
  }
  return result;
}

// ---------------------------------------------------------------------------
// CharVocab

CharVocab CharVocab::build(const std::vector<std::string>& training_texts) {
  CharVocab vocab;
  std::vector<uint32_t> seen;
  for (const auto& text : training_texts) {
    for (uint32_t cp : unicode::decode(text)) {
      if (!unicode::is_space(cp)) seen.push_back(cp);
    }
  }
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  vocab.codepoints_ = std::move(seen);
  for (size_t i = 0; i < vocab.codepoints_.size(); ++i) {
    vocab.ids_[vocab.codepoints_[i]] = static_cast<int>(i) + 2;
  }
  return vocab;
}

int CharVocab::id_of(uint32_t codepoint) const {
  auto it = ids_.find(codepoint);
  return it == ids_.end() ? kUnkId : it->second;
}

std::vector<int> CharVocab::encode(const std::string& word) const {
  std::vector<int> out;
  for (uint32_t cp : unicode::decode(word)) out.push_back(id_of(cp));
  return out;
}

std::string CharVocab::to_json() const {
  nlohmann::ordered_json j;
  j["reserved"] = {{"pad", kPadId}, {"unk", kUnkId}};
  j["codepoints"] = codepoints_;
  return j.dump(2) + "\n";
}

CharVocab CharVocab::from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad char vocab JSON: ") + e.what());
  }
  CharVocab vocab;
  vocab.codepoints_ = j.at("codepoints").get<std::vector<uint32_t>>();
  for (size_t i = 0; i < vocab.codepoints_.size(); ++i) {
    vocab.ids_[vocab.codepoints_[i]] = static_cast<int>(i) + 2;
  }
  return vocab;
}

uint64_t CharVocab::fingerprint() const { return fnv1a64(to_json()); }

// ---------------------------------------------------------------------------
// SubwordTokenizer

TokenizerFamily tokenizer_family_from_string(const std::string& name) {
  if (name == "wordpiece") return TokenizerFamily::wordpiece;
  if (name == "sentencepiece") return TokenizerFamily::sentencepiece;
  throw ConfigError("unknown tokenizer family: " + name);
}

std::string tokenizer_family_name(TokenizerFamily family) {
  return family == TokenizerFamily::wordpiece ? "wordpiece" : "sentencepiece";
}

SubwordTokenizer::SubwordTokenizer(TokenizerFamily family, std::vector<std::string> pieces)
    : family_(family), pieces_(std::move(pieces)) {
  index_pieces();
}

void SubwordTokenizer::index_pieces() {
  piece_to_id_.clear();
  regular_ids_.clear();
  for (size_t i = 0; i < pieces_.size(); ++i) {
    if (!piece_to_id_.emplace(pieces_[i], static_cast<int>(i)).second) {
      throw ConfigError("duplicate piece in vocabulary: " + pieces_[i]);
    }
  }
  auto find = [&](const char* token) {
    auto it = piece_to_id_.find(token);
    if (it == piece_to_id_.end()) throw ConfigError(std::string("vocabulary missing special token ") + token);
    return it->second;
  };
  pad_id_ = find(kPadToken);
  unk_id_ = find(kUnkToken);
  cls_id_ = find(kClsToken);
  sep_id_ = find(kSepToken);
  mask_id_ = find(kMaskToken);
  for (size_t i = 0; i < pieces_.size(); ++i) {
    if (!is_special(static_cast<int>(i))) regular_ids_.push_back(static_cast<int>(i));
  }
  if (regular_ids_.empty()) throw ConfigError("vocabulary has no regular pieces");
}

bool SubwordTokenizer::is_special(int id) const {
  return id == pad_id_ || id == unk_id_ || id == cls_id_ || id == sep_id_ || id == mask_id_;
}

SubwordTokenizer SubwordTokenizer::build_from_texts(TokenizerFamily family,
                                                    const std::vector<std::string>& texts,
                                                    size_t max_whole_words) {
  // Character pieces in both positional variants guarantee coverage; frequent
  // whole words are added on top so common tokens stay single pieces.
  std::vector<uint32_t> chars;
  std::map<std::string, long> word_counts;
  for (const auto& text : texts) {
    for (const auto& word : unicode::split_words(text)) {
      ++word_counts[word];
      for (uint32_t cp : unicode::decode(word)) chars.push_back(cp);
    }
  }
  std::sort(chars.begin(), chars.end());
  chars.erase(std::unique(chars.begin(), chars.end()), chars.end());

  std::vector<std::string> pieces = {kPadToken, kUnkToken, kClsToken, kSepToken, kMaskToken};
  const bool wp = family == TokenizerFamily::wordpiece;
  for (uint32_t cp : chars) {
    const std::string c = unicode::encode_one(cp);
    if (wp) {
      pieces.push_back(c);
      pieces.push_back(std::string(kContinuationPrefix) + c);
    } else {
      pieces.push_back(std::string(kWordBeginPrefix) + c);
      pieces.push_back(c);
    }
  }

  std::vector<std::pair<std::string, long>> ranked(word_counts.begin(), word_counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  size_t added = 0;
  for (const auto& [word, count] : ranked) {
    if (added >= max_whole_words) break;
    if (unicode::length(word) < 2) continue;  // single chars already covered
    const std::string piece = wp ? word : std::string(kWordBeginPrefix) + word;
    if (std::find(pieces.begin(), pieces.end(), piece) == pieces.end()) {
      pieces.push_back(piece);
      ++added;
    }
  }
  return SubwordTokenizer(family, std::move(pieces));
}

SubwordTokenizer SubwordTokenizer::load(const std::string& vocab_path, const std::string& meta_path) {
  const std::string vocab_text = read_file(vocab_path);
  std::vector<std::string> pieces;
  std::string line;
  std::istringstream in(vocab_text);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) pieces.push_back(line);
  }
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(meta_path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad tokenizer metadata " + meta_path + ": " + e.what());
  }
  const TokenizerFamily family = tokenizer_family_from_string(meta.at("family").get<std::string>());
  SubwordTokenizer tok(family, std::move(pieces));
  // Marker names are recorded in the metadata for interoperability; verify
  // they agree with the vocabulary.
  const auto markers = meta.at("markers");
  auto check = [&](const char* key, const char* expected) {
    if (markers.at(key).get<std::string>() != expected) {
      throw ConfigError(std::string("tokenizer metadata marker mismatch for ") + key);
    }
  };
  check("pad", kPadToken);
  check("unk", kUnkToken);
  check("start", kClsToken);
  check("end", kSepToken);
  check("mask", kMaskToken);
  return tok;
}

void SubwordTokenizer::save(const std::string& vocab_path, const std::string& meta_path) const {
  std::string vocab_text;
  for (const auto& piece : pieces_) {
    vocab_text += piece;
    vocab_text += '\n';
  }
  write_file(vocab_path, vocab_text);

  nlohmann::ordered_json meta;
  meta["family"] = tokenizer_family_name(family_);
  meta["markers"] = {{"pad", kPadToken}, {"unk", kUnkToken}, {"start", kClsToken},
                     {"end", kSepToken}, {"mask", kMaskToken}};
  meta["continuation_prefix"] = family_ == TokenizerFamily::wordpiece ? kContinuationPrefix : "";
  meta["word_begin_prefix"] = family_ == TokenizerFamily::sentencepiece ? kWordBeginPrefix : "";
  write_file(meta_path, meta.dump(2) + "\n");
}

std::vector<int> SubwordTokenizer::encode_word(const std::string& word) const {
  const std::vector<uint32_t> cps = unicode::decode(word);
  if (cps.empty()) return {unk_id_};

  std::vector<int> out;
  size_t start = 0;
  while (start < cps.size()) {
    // Greedy longest match; piece spelling depends on position and family.
    int matched_id = -1;
    size_t matched_len = 0;
    std::string candidate;
    for (size_t end = cps.size(); end > start; --end) {
      candidate.clear();
      if (family_ == TokenizerFamily::wordpiece && start > 0) candidate = kContinuationPrefix;
      if (family_ == TokenizerFamily::sentencepiece && start == 0) candidate = kWordBeginPrefix;
      for (size_t k = start; k < end; ++k) candidate += unicode::encode_one(cps[k]);
      auto it = piece_to_id_.find(candidate);
      if (it != piece_to_id_.end()) {
        matched_id = it->second;
        matched_len = end - start;
        break;
      }
    }
    if (matched_id < 0) {
      if (family_ == TokenizerFamily::wordpiece) {
        // Canonical wordpiece behavior: an uncoverable word becomes one UNK.
        return {unk_id_};
      }
      out.push_back(unk_id_);
      start += 1;
      continue;
    }
    out.push_back(matched_id);
    start += matched_len;
  }
  return out;
}

uint64_t SubwordTokenizer::fingerprint() const {
  std::string joined = tokenizer_family_name(family_);
  for (const auto& piece : pieces_) {
    joined += '\n';
    joined += piece;
  }
  return fnv1a64(joined);
}

// ---------------------------------------------------------------------------
// Alignment-preserving tokenization

EncodedExample tokenize_with_alignment(const std::string& text, const SubwordTokenizer& tokenizer,
                                       const CharVocab& char_vocab) {
  EncodedExample out;
  out.text = text;
  out.subtoken_ids.push_back(tokenizer.cls_id());

  for (const auto& word : unicode::split_words(text)) {
    std::vector<int> piece_ids = tokenizer.encode_word(word);
    if (piece_ids.empty()) {
      // encode_word never returns empty, but keep the contract explicit.
      log_warning("word '" + word + "' produced no subtokens; substituting UNK");
      piece_ids = {tokenizer.unk_id()};
    }
    const int begin = static_cast<int>(out.subtoken_ids.size());
    out.subtoken_ids.insert(out.subtoken_ids.end(), piece_ids.begin(), piece_ids.end());
    const int end = static_cast<int>(out.subtoken_ids.size());
    out.alignment.words.push_back(word);
    out.alignment.spans.emplace_back(begin, end);
    out.char_ids.push_back(char_vocab.encode(word));
  }

  out.subtoken_ids.push_back(tokenizer.sep_id());
  return out;
}

TokenizedBatch make_batch(const std::vector<const EncodedExample*>& examples, int pad_id,
                          size_t min_length) {
  TokenizedBatch batch;
  size_t max_len = min_length;
  for (const auto* ex : examples) max_len = std::max(max_len, ex->subtoken_ids.size());

  for (const auto* ex : examples) {
    std::vector<int> ids = ex->subtoken_ids;
    std::vector<uint8_t> mask(ids.size(), 1);
    ids.resize(max_len, pad_id);
    mask.resize(max_len, 0);
    batch.ids.push_back(ex->id);
    batch.subtoken_ids.push_back(std::move(ids));
    batch.attention_mask.push_back(std::move(mask));
    batch.alignments.push_back(ex->alignment);
    batch.char_ids.push_back(ex->char_ids);
    batch.labels.push_back(ex->label_index);
  }
  return batch;
}

}  // namespace codemix::textprep
