#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "codemix/models.hpp"
#include "gradcheck.hpp"

using namespace codemix;
using corpus::Language;
using models::BackboneConfig;
using models::FusionConfig;
using textprep::CharVocab;
using textprep::SubwordTokenizer;
using textprep::TokenizerFamily;

namespace {

SubwordTokenizer fixture_tokenizer() {
  return SubwordTokenizer(TokenizerFamily::wordpiece,
                          {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a", "##b", "cd", "x",
                           "##x", "c", "##d", "b", "##a", "d", "##c"});
}

BackboneConfig toy_backbone(const SubwordTokenizer& tok, size_t d_model = 8, uint64_t seed = 5) {
  BackboneConfig config;
  config.family = "mbert";
  config.encoder.vocab_size = static_cast<size_t>(tok.vocab_size());
  config.encoder.d_model = d_model;
  config.encoder.n_layers = 1;
  config.encoder.n_heads = 2;
  config.encoder.d_ff = 16;
  config.encoder.max_len = 24;
  config.init_seed = seed;
  return config;
}

corpus::LabelSchema three_class_schema() {
  return corpus::LabelSchema::custom(Language::kannada, {"A", "B", "C"});
}

std::vector<textprep::EncodedExample> encode_rows(
    const SubwordTokenizer& tok, const CharVocab& chars,
    const std::vector<std::pair<std::string, int>>& rows) {
  std::vector<textprep::EncodedExample> out;
  out.reserve(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    textprep::EncodedExample ex = textprep::tokenize_with_alignment(rows[i].first, tok, chars);
    ex.id = "t-" + std::to_string(i);
    ex.label_index = rows[i].second;
    out.push_back(std::move(ex));
  }
  return out;
}

textprep::TokenizedBatch batch_of(const std::vector<textprep::EncodedExample>& encoded, int pad_id,
                                  size_t min_length = 0) {
  std::vector<const textprep::EncodedExample*> ptrs;
  for (const auto& ex : encoded) ptrs.push_back(&ex);
  return textprep::make_batch(ptrs, pad_id, min_length);
}

}  // namespace

TEST_CASE("softmax of [2,0,0,0] matches the hand computation") {
  std::vector<double> logits = {2.0, 0.0, 0.0, 0.0};
  nn::softmax_rows(logits.data(), 1, 4);
  const double e2 = std::exp(2.0);
  CHECK(logits[0] == doctest::Approx(e2 / (e2 + 3.0)).epsilon(1e-12));
  CHECK(logits[1] == doctest::Approx(1.0 / (e2 + 3.0)).epsilon(1e-12));
  CHECK(logits[0] == doctest::Approx(0.711).epsilon(1e-3));
  CHECK(logits[1] == doctest::Approx(0.096).epsilon(2e-2));
}

TEST_CASE("classify_cls with a zero head yields uniform probabilities") {
  const SubwordTokenizer tok = fixture_tokenizer();
  const CharVocab chars = CharVocab::build({"abcdx"});
  models::Backbone backbone(toy_backbone(tok));
  const corpus::LabelSchema schema =
      corpus::LabelSchema::custom(Language::kannada, {"w", "x", "y", "z"});

  nn::ParamRegistry head_reg;
  nn::Linear head;
  Rng rng(1);
  head.init("probe_head", 8, 4, rng, 0.02, head_reg);
  head.w.value.zero();
  head.b.value.zero();

  const auto batch = batch_of(encode_rows(tok, chars, {{"ab cd", -1}, {"x", -1}}), tok.pad_id());
  const auto records = models::classify_cls(batch, backbone, head, schema);
  REQUIRE(records.size() == 2);
  for (const auto& record : records) {
    for (double p : record.probs) CHECK(p == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(record.label == "w");  // tie broken by schema order
  }
}

TEST_CASE("classify_cls produces one simplex record per example") {
  const SubwordTokenizer tok = fixture_tokenizer();
  const CharVocab chars = CharVocab::build({"abcdx"});
  models::ClsClassifier model(toy_backbone(tok), three_class_schema(), 7);
  const auto batch = batch_of(
      encode_rows(tok, chars, {{"ab", -1}, {"cd x", -1}, {"ab cd x", -1}, {"x x", -1}}),
      tok.pad_id());
  const auto records = model.predict(batch);
  REQUIRE(records.size() == 4);
  for (const auto& record : records) {
    double sum = 0.0;
    for (double p : record.probs) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(std::fabs(sum - 1.0) < 1e-6);
    CHECK(record.probs.size() == 3);
  }
}

TEST_CASE("classify_cls rejects a head of the wrong width") {
  const SubwordTokenizer tok = fixture_tokenizer();
  const CharVocab chars = CharVocab::build({"abcdx"});
  models::Backbone backbone(toy_backbone(tok));
  nn::ParamRegistry reg;
  nn::Linear bad_head;
  Rng rng(1);
  bad_head.init("bad", 12, 3, rng, 0.02, reg);  // encoder width is 8
  const auto batch = batch_of(encode_rows(tok, chars, {{"ab", -1}}), tok.pad_id());
  CHECK_THROWS_AS(models::classify_cls(batch, backbone, bad_head, three_class_schema()),
                  ConfigError);
}

TEST_CASE("pooling: single-subtoken word copies its vector exactly") {
  const size_t D = 4;
  std::vector<double> states = {1.5, -2.25, 0.125, 3.0,  // t0
                                9.0, 8.0,   7.0,   6.0};
  textprep::WordAlignment align;
  align.words = {"w"};
  align.spans = {{1, 2}};
  const auto pooled = models::pool_subwords_to_words(states.data(), 2, D, align);
  REQUIRE(pooled.size() == D);
  for (size_t d = 0; d < D; ++d) CHECK(pooled[d] == states[D + d]);  // bitwise
}

TEST_CASE("pooling: two-subtoken word is the arithmetic mean") {
  std::vector<double> states = {0, 0, 1, 3, 3, 1};
  textprep::WordAlignment align;
  align.words = {"w"};
  align.spans = {{1, 3}};
  const auto pooled = models::pool_subwords_to_words(states.data(), 3, 2, align);
  CHECK(pooled[0] == doctest::Approx(2.0));
  CHECK(pooled[1] == doctest::Approx(2.0));
}

TEST_CASE("pooling matches a brute-force per-word oracle") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const size_t D = 1 + rng.below(6);
    const size_t n_words = 1 + rng.below(5);
    textprep::WordAlignment align;
    int pos = 1;
    for (size_t w = 0; w < n_words; ++w) {
      const int len = 1 + static_cast<int>(rng.below(3));
      align.words.push_back("w" + std::to_string(w));
      align.spans.emplace_back(pos, pos + len);
      pos += len;
    }
    const size_t T = static_cast<size_t>(pos) + 1;
    std::vector<double> states(T * D);
    for (double& s : states) s = rng.gaussian();

    const auto pooled = models::pool_subwords_to_words(states.data(), T, D, align);
    for (size_t w = 0; w < n_words; ++w) {
      const auto [begin, end] = align.spans[w];
      for (size_t d = 0; d < D; ++d) {
        double sum = 0.0;
        for (int t = begin; t < end; ++t) sum += states[static_cast<size_t>(t) * D + d];
        const double expected = sum / static_cast<double>(end - begin);
        CHECK(std::fabs(pooled[w * D + d] - expected) < 1e-6);
      }
    }
  }
}

TEST_CASE("pooling is linear in the states") {
  Rng rng(101);
  const size_t D = 3, T = 6;
  std::vector<double> states(T * D);
  for (double& s : states) s = rng.gaussian();
  textprep::WordAlignment align;
  align.words = {"a", "b"};
  align.spans = {{1, 3}, {3, 5}};

  const double alpha = 2.5;
  std::vector<double> scaled = states;
  for (double& s : scaled) s *= alpha;
  const auto p1 = models::pool_subwords_to_words(states.data(), T, D, align);
  const auto p2 = models::pool_subwords_to_words(scaled.data(), T, D, align);
  for (size_t i = 0; i < p1.size(); ++i) {
    CHECK(p2[i] == doctest::Approx(alpha * p1[i]).epsilon(1e-12));
  }
}

TEST_CASE("pooling rejects out-of-range spans") {
  std::vector<double> states(8, 0.0);
  textprep::WordAlignment align;
  align.words = {"w"};
  align.spans = {{1, 5}};
  CHECK_THROWS_AS(models::pool_subwords_to_words(states.data(), 4, 2, align), TrainError);
}

TEST_CASE("char encoder output: shape, determinism, content-dependence") {
  nn::ParamRegistry reg;
  models::CharWordEncoder encoder;
  encoder.init("probe.", 12, 3, 4, 71, reg);

  const std::vector<int> word = {2, 3, 4, 5};
  const auto v1 = encoder.encode(word);
  const auto v2 = encoder.encode(word);
  REQUIRE(v1.size() == 8);  // 2 * char_hidden
  CHECK(v1 == v2);          // deterministic in eval mode

  // identical character sequences from "different words" encode identically
  const std::vector<int> same_chars = {2, 3, 4, 5};
  CHECK(encoder.encode(same_chars) == v1);

  // reversing the word changes the output under generic random weights
  const std::vector<int> reversed = {5, 4, 3, 2};
  const auto vr = encoder.encode(reversed);
  double diff = 0.0;
  for (size_t i = 0; i < v1.size(); ++i) diff = std::max(diff, std::fabs(v1[i] - vr[i]));
  CHECK(diff > 1e-6);

  CHECK_THROWS_AS(encoder.encode({}), TrainError);
}

TEST_CASE("fusion dimension arithmetic follows the config") {
  FusionConfig config;
  config.d_enc = 768;
  CHECK(config.fused_input_dim() == 768 + 256);
  CHECK(config.word_output_dim() == 512);

  FusionConfig bad;
  bad.d_enc = 8;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("fusion predictions are invariant to padding length") {
  const SubwordTokenizer tok = fixture_tokenizer();
  const CharVocab chars = CharVocab::build({"abcdx"});
  FusionConfig fusion;
  fusion.char_hidden = 4;
  fusion.word_hidden = 4;
  fusion.char_emb_dim = 3;
  models::FusionClassifier model(toy_backbone(tok), fusion, three_class_schema(), chars.size(), 7);

  const auto encoded = encode_rows(tok, chars, {{"ab cd x", -1}});
  const auto batch10 = batch_of(encoded, tok.pad_id(), 10);
  const auto batch20 = batch_of(encoded, tok.pad_id(), 20);
  REQUIRE(batch10.seq_len() == 10);
  REQUIRE(batch20.seq_len() == 20);

  const auto r10 = model.predict(batch10);
  const auto r20 = model.predict(batch20);
  REQUIRE(r10.size() == 1);
  for (size_t c = 0; c < 3; ++c) {
    CHECK(std::fabs(r10[0].probs[c] - r20[0].probs[c]) < 1e-5);
  }
  CHECK(r10[0].label == r20[0].label);
}

TEST_CASE("fusion eval passes are deterministic") {
  const SubwordTokenizer tok = fixture_tokenizer();
  const CharVocab chars = CharVocab::build({"abcdx"});
  FusionConfig fusion;
  fusion.char_hidden = 4;
  fusion.word_hidden = 4;
  fusion.char_emb_dim = 3;
  models::FusionClassifier model(toy_backbone(tok), fusion, three_class_schema(), chars.size(), 9);
  const auto batch =
      batch_of(encode_rows(tok, chars, {{"ab cd", -1}, {"x ab", -1}}), tok.pad_id());
  const auto r1 = model.predict(batch);
  const auto r2 = model.predict(batch);
  for (size_t b = 0; b < r1.size(); ++b) CHECK(r1[b].probs == r2[b].probs);
}

TEST_CASE("single-word input reduces to the head over that word's output") {
  const SubwordTokenizer tok = fixture_tokenizer();
  const CharVocab chars = CharVocab::build({"abcdx"});
  FusionConfig fusion;
  fusion.char_hidden = 4;
  fusion.word_hidden = 4;
  fusion.char_emb_dim = 3;
  models::FusionClassifier model(toy_backbone(tok), fusion, three_class_schema(), chars.size(), 11);
  const auto batch = batch_of(encode_rows(tok, chars, {{"ab", -1}}), tok.pad_id());
  const auto records = model.predict(batch);
  REQUIRE(records.size() == 1);
  double sum = 0.0;
  for (double p : records[0].probs) sum += p;
  CHECK(std::fabs(sum - 1.0) < 1e-6);
}

TEST_CASE("empty text goes through the learned fallback vector") {
  const SubwordTokenizer tok = fixture_tokenizer();
  const CharVocab chars = CharVocab::build({"abcdx"});
  FusionConfig fusion;
  fusion.char_hidden = 4;
  fusion.word_hidden = 4;
  fusion.char_emb_dim = 3;
  models::FusionClassifier model(toy_backbone(tok), fusion, three_class_schema(), chars.size(), 13);

  const auto batch = batch_of(encode_rows(tok, chars, {{"", 1}}), tok.pad_id());
  const auto records = model.predict(batch);
  REQUIRE(records.size() == 1);
  double sum = 0.0;
  for (double p : records[0].probs) sum += p;
  CHECK(std::fabs(sum - 1.0) < 1e-6);

  // backward reaches the fallback parameter
  model.params().zero_grads();
  const double loss = model.loss(batch, true, 123);
  CHECK(std::isfinite(loss));
  const nn::Param* fallback = model.params().find("fusion.empty_fallback");
  REQUIRE(fallback != nullptr);
  double grad_norm = 0.0;
  for (double g : fallback->grad.data) grad_norm += g * g;
  CHECK(grad_norm > 0.0);
}

TEST_CASE("fusion gradients match central finite differences (toy config)") {
  const SubwordTokenizer tok = fixture_tokenizer();
  const CharVocab chars = CharVocab::build({"abcdx"});
  FusionConfig fusion;
  fusion.char_hidden = 4;
  fusion.word_hidden = 4;
  fusion.char_emb_dim = 3;
  fusion.dropout = 0.40;
  models::FusionClassifier model(toy_backbone(tok, 8, 17), fusion, three_class_schema(),
                                 chars.size(), 19);

  const auto batch =
      batch_of(encode_rows(tok, chars, {{"ab cd", 0}, {"x", 1}, {"ab x cd", 2}}), tok.pad_id());
  const uint64_t dropout_seed = 2024;

  auto loss_and_grads = [&]() {
    model.params().zero_grads();
    return model.loss(batch, true, dropout_seed);
  };
  auto loss_only = [&]() { return model.loss(batch, false, dropout_seed); };

  const GradCheckResult res = finite_difference_check(model.params(), loss_and_grads, loss_only);
  INFO("worst param: ", res.worst_param, " rel=", res.max_rel_err, " over ", res.checked);
  CHECK(res.max_rel_err < 1e-4);
  CHECK(res.checked == model.params().total_scalars());
}

TEST_CASE("cls gradients match central finite differences (toy config)") {
  const SubwordTokenizer tok = fixture_tokenizer();
  const CharVocab chars = CharVocab::build({"abcdx"});
  models::ClsClassifier model(toy_backbone(tok, 8, 23), three_class_schema(), 29);
  const auto batch =
      batch_of(encode_rows(tok, chars, {{"ab cd", 0}, {"x ab", 2}}), tok.pad_id());

  auto loss_and_grads = [&]() {
    model.params().zero_grads();
    return model.loss(batch, true, 0);
  };
  auto loss_only = [&]() { return model.loss(batch, false, 0); };
  const GradCheckResult res = finite_difference_check(model.params(), loss_and_grads, loss_only);
  INFO("worst param: ", res.worst_param, " rel=", res.max_rel_err);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("classifier checkpoints round-trip through disk") {
  const SubwordTokenizer tok = fixture_tokenizer();
  const CharVocab chars = CharVocab::build({"abcdx"});
  const corpus::LabelSchema schema = corpus::LabelSchema::for_language(Language::kannada);

  FusionConfig fusion;
  fusion.char_hidden = 4;
  fusion.word_hidden = 4;
  fusion.char_emb_dim = 3;
  models::FusionClassifier model(toy_backbone(tok), fusion, schema, chars.size(), 37);

  const std::string dir =
      (std::filesystem::temp_directory_path() / "codemix_ckpt_fusion").string();
  std::filesystem::remove_all(dir);
  textprep::TransliterationPolicy policy;
  models::save_classifier(dir, model, tok, &chars, policy, 300, {{"seed", 37}});

  models::ClassifierBundle bundle = models::ClassifierBundle::load(dir);
  CHECK(bundle.model().architecture() == models::Architecture::fusion);

  std::vector<corpus::LabeledExample> raw = {{"e-0", "ab cd x", std::nullopt},
                                             {"e-1", "x", std::nullopt}};
  auto encoded = encode_rows(tok, chars, {{"ab cd x", -1}, {"x", -1}});
  encoded[0].id = "e-0";
  encoded[1].id = "e-1";
  const auto before = model.predict(batch_of(encoded, tok.pad_id()));
  const auto after = bundle.predict_examples(raw);
  REQUIRE(before.size() == after.size());
  for (size_t i = 0; i < before.size(); ++i) {
    CHECK(after[i].label == before[i].label);
    for (size_t c = 0; c < before[i].probs.size(); ++c) {
      CHECK(after[i].probs[c] == doctest::Approx(before[i].probs[c]).epsilon(1e-12));
    }
  }
}

TEST_CASE("backbone checkpoints feed classifier encoders via prefix loading") {
  const SubwordTokenizer tok = fixture_tokenizer();
  const BackboneConfig config = toy_backbone(tok, 8, 41);
  models::Backbone backbone(config);
  // make the encoder weights recognizably different from a fresh init
  for (nn::Param* p : backbone.encoder_params().items()) {
    for (double& v : p->value.data) v += 0.25;
  }
  const std::string dir = (std::filesystem::temp_directory_path() / "codemix_ckpt_bb").string();
  std::filesystem::remove_all(dir);
  models::save_backbone(dir, backbone, tok, {{"seed", 1}});

  const models::BackboneBundle bundle = models::load_backbone_bundle(dir);
  CHECK(bundle.config.encoder.d_model == 8);
  CHECK(bundle.tokenizer.fingerprint() == tok.fingerprint());

  models::ClsClassifier model(bundle.config, three_class_schema(), 43);
  models::load_weights_prefix(dir + "/weights.bin", model.params(), "encoder.");
  const nn::Param* tok_emb = model.params().find("encoder.tok_emb");
  const nn::Param* src = backbone.encoder_params().find("encoder.tok_emb");
  REQUIRE(tok_emb != nullptr);
  CHECK(tok_emb->value.data == src->value.data);
}
