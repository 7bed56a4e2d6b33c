#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "codemix/common.hpp"

namespace codemix::textprep {

// ---------------------------------------------------------------------------
// Truncation

inline constexpr size_t kDefaultTruncationLimit = 300;

// First `limit` unicode code points, spaces counted; shorter text unchanged.
std::string truncate_text(const std::string& text, size_t limit = kDefaultTruncationLimit);

// ---------------------------------------------------------------------------
// Transliteration

class Transliterator {
 public:
  virtual ~Transliterator() = default;
  virtual std::string name() const = 0;
  // Throws TransliterationError (carrying the original text) on failure.
  virtual std::string apply(const std::string& text) const = 0;
};

// Engine specs: "identity", "fixture:<mapping.json>", "command:<shell command>".
// The command engine adapts an external transliterator that reads one line on
// stdin and writes the romanized line on stdout.
std::unique_ptr<Transliterator> make_transliterator(const std::string& engine_spec);

struct TransliterationPolicy {
  enum class Mode { as_is, romanized };
  Mode mode = Mode::as_is;
  std::string engine = "identity";
  bool fallback_to_identity = false;

  static Mode mode_from_string(const std::string& name);
  static std::string mode_name(Mode mode);
};

struct TransliterationResult {
  std::string text;
  std::string original;
  bool fell_back = false;
};

TransliterationResult transliterate(const std::string& text, const TransliterationPolicy& policy,
                                    const Transliterator& engine);

// ---------------------------------------------------------------------------
// Character vocabulary (fusion model input)

class CharVocab {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;

  CharVocab() = default;

  // Built solely from training-split text; unseen characters map to UNK later.
  static CharVocab build(const std::vector<std::string>& training_texts);

  int id_of(uint32_t codepoint) const;
  std::vector<int> encode(const std::string& word) const;
  size_t size() const { return 2 + codepoints_.size(); }

  std::string to_json() const;
  static CharVocab from_json(const std::string& json_text);
  uint64_t fingerprint() const;

 private:
  std::vector<uint32_t> codepoints_;  // sorted, ids are offset by the 2 reserved slots
  std::unordered_map<uint32_t, int> ids_;
};

// ---------------------------------------------------------------------------
// Subword tokenization

enum class TokenizerFamily { wordpiece, sentencepiece };

TokenizerFamily tokenizer_family_from_string(const std::string& name);
std::string tokenizer_family_name(TokenizerFamily family);

// Greedy longest-match subword tokenizer covering both backbone conventions:
// wordpiece marks continuation pieces with "##", sentencepiece marks
// word-initial pieces with U+2581. Deterministic by construction.
class SubwordTokenizer {
 public:
  static constexpr const char* kPadToken = "[PAD]";
  static constexpr const char* kUnkToken = "[UNK]";
  static constexpr const char* kClsToken = "[CLS]";
  static constexpr const char* kSepToken = "[SEP]";
  static constexpr const char* kMaskToken = "[MASK]";

  SubwordTokenizer() = default;
  SubwordTokenizer(TokenizerFamily family, std::vector<std::string> pieces);

  // Builds a vocabulary from training text: every seen character (in both
  // positional variants) plus the most frequent whole words. Guarantees all
  // training words tokenize without UNK.
  static SubwordTokenizer build_from_texts(TokenizerFamily family, const std::vector<std::string>& texts,
                                           size_t max_whole_words = 64);

  // Vocabulary file: one piece per line; side JSON carries family and markers.
  static SubwordTokenizer load(const std::string& vocab_path, const std::string& meta_path);
  void save(const std::string& vocab_path, const std::string& meta_path) const;

  // Subtoken ids for one word, no terminal markers. Never empty: words the
  // vocabulary cannot cover come back as a single UNK id.
  std::vector<int> encode_word(const std::string& word) const;

  TokenizerFamily family() const { return family_; }
  int vocab_size() const { return static_cast<int>(pieces_.size()); }
  const std::string& piece(int id) const { return pieces_.at(static_cast<size_t>(id)); }

  int pad_id() const { return pad_id_; }
  int unk_id() const { return unk_id_; }
  int cls_id() const { return cls_id_; }
  int sep_id() const { return sep_id_; }
  int mask_id() const { return mask_id_; }
  bool is_special(int id) const;
  bool is_marker_or_pad(int id) const { return id == pad_id_ || id == cls_id_ || id == sep_id_; }
  // Ids eligible as random-replacement draws in masking (all non-special).
  const std::vector<int>& regular_ids() const { return regular_ids_; }

  uint64_t fingerprint() const;

 private:
  void index_pieces();

  TokenizerFamily family_ = TokenizerFamily::wordpiece;
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> piece_to_id_;
  std::vector<int> regular_ids_;
  int pad_id_ = -1, unk_id_ = -1, cls_id_ = -1, sep_id_ = -1, mask_id_ = -1;
};

// ---------------------------------------------------------------------------
// Alignment-preserving tokenization

struct WordAlignment {
  std::vector<std::string> words;
  // Per word, [begin, end) over absolute subtoken positions (markers excluded
  // from every span; position 0 is the start marker).
  std::vector<std::pair<int, int>> spans;
};

struct EncodedExample {
  std::string id;
  std::string text;  // post-preprocessing surface text
  std::vector<int> subtoken_ids;  // [CLS] pieces... [SEP], unpadded
  WordAlignment alignment;
  std::vector<std::vector<int>> char_ids;  // per word
  int label_index = -1;  // -1 when unlabeled
};

EncodedExample tokenize_with_alignment(const std::string& text, const SubwordTokenizer& tokenizer,
                                       const CharVocab& char_vocab);

// Padded batch view over encoded examples.
struct TokenizedBatch {
  std::vector<std::string> ids;
  std::vector<std::vector<int>> subtoken_ids;        // [B][T], right-padded
  std::vector<std::vector<uint8_t>> attention_mask;  // [B][T]
  std::vector<WordAlignment> alignments;
  std::vector<std::vector<std::vector<int>>> char_ids;
  std::vector<int> labels;  // -1 when unlabeled

  size_t batch_size() const { return subtoken_ids.size(); }
  size_t seq_len() const { return subtoken_ids.empty() ? 0 : subtoken_ids[0].size(); }
};

TokenizedBatch make_batch(const std::vector<const EncodedExample*>& examples, int pad_id,
                          size_t min_length = 0);

}  // namespace codemix::textprep
