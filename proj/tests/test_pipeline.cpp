#include <doctest.h>

#include <filesystem>

#include <json.hpp>

#include "codemix/pipeline.hpp"

using namespace codemix;

namespace {

const std::string kToyRoot = std::string(CODEMIX_SOURCE_DIR) + "/data/toy";

std::string fresh_dir(const std::string& name) {
  const std::string path = (std::filesystem::temp_directory_path() / name).string();
  std::filesystem::remove_all(path);
  std::filesystem::create_directories(path);
  return path;
}

int cli(const std::vector<std::string>& args) { return pipeline::run_cli(args); }

}  // namespace

TEST_CASE("stats subcommand emits the class distribution as JSON") {
  const std::string out = fresh_dir("cm_stats") + "/stats.json";
  const int rc = cli({"stats", "--language", "kn", "--split", "train", "--data-root", kToyRoot,
                      "--out", out});
  REQUIRE(rc == 0);
  const nlohmann::json j = nlohmann::json::parse(read_file(out));
  CHECK(j.at("language") == "Kannada");
  CHECK(j.at("total") == 40);
  CHECK(j.at("counts").at("Not_offensive") == 14);
}

TEST_CASE("unknown subcommand exits with usage code 2") {
  CHECK(cli({"frobnicate"}) == 2);
  CHECK(cli({}) == 2);
}

TEST_CASE("missing data root is a usage-class error") {
  CHECK(cli({"stats", "--language", "kn", "--data-root", "/nonexistent/root"}) == 1);
  CHECK(cli({"stats", "--language", "nosuch", "--data-root", kToyRoot}) == 2);
}

TEST_CASE("pretrain -> train -> predict -> evaluate -> ensemble chain on the toy fixture") {
  const std::string work = fresh_dir("cm_chain");
  const std::string pre_dir = work + "/pretrain";
  const std::string m1_dir = work + "/member1";

  // quick task-adaptive pretraining
  REQUIRE(cli({"pretrain", "--language", "kn", "--backbone", "mbert", "--epochs", "1", "--seed",
               "5", "--lr", "0.003", "--data-root", kToyRoot, "--out", pre_dir}) == 0);
  CHECK(file_exists(pre_dir + "/weights.bin"));
  CHECK(file_exists(pre_dir + "/meta.json"));
  CHECK(file_exists(pre_dir + "/mlm_report.json"));
  CHECK(file_exists(pre_dir + "/manifest.json"));

  // fine-tune from the pretrained backbone
  REQUIRE(cli({"train", "--language", "kn", "--architecture", "cls", "--backbone", "mbert",
               "--from-checkpoint", pre_dir, "--epochs", "2", "--seed", "11", "--lr", "0.02",
               "--data-root", kToyRoot, "--out", m1_dir}) == 0);
  CHECK(file_exists(m1_dir + "/weights.bin"));
  CHECK(file_exists(m1_dir + "/run_record.json"));

  // manifest records inputs with fingerprints
  const nlohmann::json manifest = nlohmann::json::parse(read_file(m1_dir + "/manifest.json"));
  CHECK(manifest.at("command") == "train");
  CHECK(manifest.at("inputs").at("train").contains("fingerprint"));

  // predict preserves row count and order
  const std::string pred_path = work + "/dev_pred.tsv";
  REQUIRE(cli({"predict", "--model", m1_dir, "--data", kToyRoot + "/kannada/dev.tsv", "--split",
               "dev", "--out", pred_path, "--audit", work + "/dev_pred.jsonl"}) == 0);
  const std::string pred_text = read_file(pred_path);
  size_t rows = 0;
  for (char c : pred_text) rows += c == '\n';
  CHECK(rows == 10);
  CHECK(pred_text.rfind("dev-0\t", 0) == 0);
  CHECK(pred_text.find("\ndev-9\t") != std::string::npos);

  // evaluate the predictions against gold
  REQUIRE(cli({"evaluate", "--gold", kToyRoot + "/kannada/dev.tsv", "--pred", pred_path,
               "--language", "kn", "--split", "dev", "--out-json", work + "/metrics.json",
               "--out-report", work + "/report.txt"}) == 0);
  const nlohmann::json metrics_json = nlohmann::json::parse(read_file(work + "/metrics.json"));
  CHECK(metrics_json.at("accuracy").get<double>() >= 0.0);
  CHECK(read_file(work + "/report.txt").find("F1 / Acc:") != std::string::npos);

  // an ensemble of identical members is unanimous with the single model
  const std::string ens_pred = work + "/ens_pred.tsv";
  REQUIRE(cli({"ensemble", "--members", m1_dir + "," + m1_dir + "," + m1_dir, "--data",
               kToyRoot + "/kannada/dev.tsv", "--language", "kn", "--split", "dev", "--out",
               ens_pred, "--audit", work + "/ens_audit.jsonl"}) == 0);
  CHECK(read_file(ens_pred) == pred_text);

  // audit has one JSON object per example with member detail
  const std::string audit = read_file(work + "/ens_audit.jsonl");
  size_t audit_rows = 0;
  for (char c : audit) audit_rows += c == '\n';
  CHECK(audit_rows == 10);
  CHECK(audit.find("tie_broken") != std::string::npos);
}

TEST_CASE("evaluate rejects mismatched prediction files") {
  const std::string work = fresh_dir("cm_eval_err");
  write_file(work + "/short.tsv", "dev-0\tNot_offensive\n");
  CHECK(cli({"evaluate", "--gold", kToyRoot + "/kannada/dev.tsv", "--pred", work + "/short.tsv",
             "--language", "kn", "--split", "dev"}) == 2);

  // right row count, wrong ids
  std::string rows;
  for (int i = 0; i < 10; ++i) rows += "bogus-" + std::to_string(i) + "\tNot_offensive\n";
  write_file(work + "/bogus.tsv", rows);
  CHECK(cli({"evaluate", "--gold", kToyRoot + "/kannada/dev.tsv", "--pred", work + "/bogus.tsv",
             "--language", "kn", "--split", "dev"}) == 2);
}

TEST_CASE("fusion training works through the CLI") {
  const std::string work = fresh_dir("cm_fusion_cli");
  REQUIRE(cli({"train", "--language", "ml", "--architecture", "fusion", "--backbone", "xlmr",
               "--epochs", "1", "--seed", "3", "--lr", "0.02", "--data-root", kToyRoot, "--out",
               work + "/fusion"}) == 0);
  CHECK(file_exists(work + "/fusion/charvocab.json"));
  const nlohmann::json meta = nlohmann::json::parse(read_file(work + "/fusion/meta.json"));
  CHECK(meta.at("architecture") == "fusion");
  CHECK(meta.at("fusion").at("char_hidden") == 128);
}

TEST_CASE("reproduce runs the full chain and writes a complete manifest") {
  const std::string work = fresh_dir("cm_repro_smoke");
  // small profile to keep the unit suite fast; acceptance runs the default
  const std::string config_path = work + "/config.json";
  write_file(config_path, R"({
    "train": {"epochs": 2},
    "backbone": {"d_model": 16, "n_layers": 1, "n_heads": 2, "d_ff": 32},
    "reproduce": {"pretrain_epochs": 1, "pretrain_lr": 0.003, "train_lr": 0.02,
                   "mbert_seeds": [1, 2, 3], "xlmr_seeds": [4, 5, 6]}
  })");
  REQUIRE(cli({"reproduce", "--language", "ta", "--config", config_path, "--data-root", kToyRoot,
               "--out", work + "/run", "--jobs", "2"}) == 0);

  CHECK(file_exists(work + "/run/stats_train.json"));
  CHECK(file_exists(work + "/run/pretrain_mbert/weights.bin"));
  CHECK(file_exists(work + "/run/pretrain_xlmr/weights.bin"));
  for (int s : {1, 2, 3}) {
    CHECK(file_exists(work + "/run/members/mbert_s" + std::to_string(s) + "/weights.bin"));
  }
  for (int s : {4, 5, 6}) {
    CHECK(file_exists(work + "/run/members/xlmr_s" + std::to_string(s) + "/weights.bin"));
  }
  CHECK(file_exists(work + "/run/ensemble/pred.tsv"));
  CHECK(file_exists(work + "/run/eval/metrics.json"));
  CHECK(read_file(work + "/run/eval/report.txt").find("Ensemble (Mode)") != std::string::npos);

  const nlohmann::json manifest = nlohmann::json::parse(read_file(work + "/run/manifest.json"));
  CHECK(manifest.at("command") == "reproduce");
  REQUIRE(manifest.at("stages").size() >= 5);
  for (const auto& stage : manifest.at("stages")) {
    CHECK(stage.at("status") == "ok");
  }
}

TEST_CASE("reproduce marks the failure point in its manifest") {
  const std::string work = fresh_dir("cm_repro_fail");
  // duplicate seeds across members violate the ensemble spec invariant
  write_file(work + "/config.json", R"({
    "reproduce": {"pretrain_epochs": 1, "mbert_seeds": [1, 2, 3], "xlmr_seeds": [3, 4, 5]}
  })");
  CHECK(cli({"reproduce", "--language", "kn", "--config", work + "/config.json", "--data-root",
             kToyRoot, "--out", work + "/run"}) == 2);
  const nlohmann::json manifest = nlohmann::json::parse(read_file(work + "/run/manifest.json"));
  const auto& stages = manifest.at("stages");
  REQUIRE(!stages.empty());
  CHECK(stages.back().at("status") == "failed");
  // artifacts from completed stages are preserved
  CHECK(file_exists(work + "/run/stats_train.json"));
}

TEST_CASE("romanized input mode runs through the fixture transliterator") {
  const std::string work = fresh_dir("cm_roman");
  const std::string engine =
      "fixture:" + std::string(CODEMIX_SOURCE_DIR) + "/data/fixtures/translit_dravidian.json";
  REQUIRE(cli({"train", "--language", "kn", "--architecture", "cls", "--epochs", "1", "--seed",
               "7", "--lr", "0.02", "--data-root", kToyRoot, "--input-mode", "romanized",
               "--translit-engine", engine, "--out", work + "/model"}) == 0);
  const nlohmann::json meta = nlohmann::json::parse(read_file(work + "/model/meta.json"));
  CHECK(meta.at("input_mode") == "romanized");

  // the saved model carries its preprocessing; prediction must apply it too
  REQUIRE(cli({"predict", "--model", work + "/model", "--data", kToyRoot + "/kannada/dev.tsv",
               "--split", "dev", "--out", work + "/pred.tsv"}) == 0);
  CHECK(file_exists(work + "/pred.tsv"));
}
