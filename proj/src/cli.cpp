#include <algorithm>
#include <cstring>
#include <exception>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "codemix/pipeline.hpp"

namespace codemix::pipeline {

namespace {

using corpus::DatasetSplit;
using corpus::Language;
using corpus::Split;

nlohmann::ordered_json input_entry(const std::string& path) {
  return {{"path", path}, {"fingerprint", hex64(file_fingerprint(path))}};
}

std::vector<std::string> split_member_list(const std::string& joined) {
  std::vector<std::string> out;
  std::stringstream ss(joined);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Prepared (transliterated) raw texts, used for vocabulary building.
std::vector<std::string> prepared_texts(const DatasetSplit& split, const PipelineConfig& config) {
  const textprep::TransliterationPolicy policy = config.policy();
  const auto engine = textprep::make_transliterator(policy.engine);
  std::vector<std::string> out;
  out.reserve(split.examples.size());
  for (const auto& example : split.examples) {
    out.push_back(textprep::transliterate(example.text, policy, *engine).text);
  }
  return out;
}

struct StageLog {
  nlohmann::ordered_json manifest;
  std::string path;

  void begin(const std::string& command, const nlohmann::ordered_json& config_json) {
    manifest["command"] = command;
    manifest["config"] = config_json;
    manifest["inputs"] = nlohmann::ordered_json::object();
    manifest["stages"] = nlohmann::ordered_json::array();
    flush();
  }

  void add_input(const std::string& name, const std::string& file_path) {
    manifest["inputs"][name] = input_entry(file_path);
    flush();
  }

  void stage_ok(const std::string& name, const std::vector<std::string>& outputs) {
    manifest["stages"].push_back(
        {{"name", name}, {"status", "ok"}, {"outputs", outputs}});
    flush();
  }

  void stage_failed(const std::string& name, const std::string& message) {
    manifest["stages"].push_back({{"name", name}, {"status", "failed"}, {"error", message}});
    flush();
  }

  void flush() const {
    if (!path.empty()) write_file(path, manifest.dump(2) + "\n");
  }
};

// ---------------------------------------------------------------------------
// stats

int cmd_stats(const PipelineConfig& config, Language language, Split split,
              const std::string& out_path) {
  const std::string path = split_path(config.data_root, language, split);
  const DatasetSplit dataset = corpus::load_split(path, language, split);
  const corpus::ClassDistribution distribution = corpus::class_distribution(dataset);
  const std::string json_text = corpus::distribution_to_json(distribution, language, split);
  std::cout << json_text;
  if (!out_path.empty()) write_file(out_path, json_text);
  return 0;
}

// ---------------------------------------------------------------------------
// pretrain

int cmd_pretrain(const PipelineConfig& config, Language language, const std::string& family,
                 const std::string& from_checkpoint, const std::string& out_dir) {
  ensure_directory(out_dir);
  StageLog log;
  log.path = out_dir + "/manifest.json";
  log.begin("pretrain", config.to_json());

  const std::string train_path = split_path(config.data_root, language, Split::train);
  const std::string dev_path = split_path(config.data_root, language, Split::dev);
  const std::string test_path = split_path(config.data_root, language, Split::test);
  log.add_input("train", train_path);
  log.add_input("dev", dev_path);
  log.add_input("test", test_path);

  const DatasetSplit train = corpus::load_split(train_path, language, Split::train);
  const DatasetSplit dev = corpus::load_split(dev_path, language, Split::dev);
  const DatasetSplit test = corpus::load_split(test_path, language, Split::test);

  mlm::MLMDatasetSpec spec;
  {
    const textprep::TransliterationPolicy policy = config.policy();
    const auto engine = textprep::make_transliterator(policy.engine);
    for (const auto& ex : train.examples) {
      spec.train_texts.push_back(textprep::transliterate(ex.text, policy, *engine).text);
    }
    for (const auto& ex : dev.examples) {
      spec.train_texts.push_back(textprep::transliterate(ex.text, policy, *engine).text);
    }
    for (const auto& ex : test.examples) {
      spec.eval_texts.push_back(textprep::transliterate(ex.text, policy, *engine).text);
    }
  }

  textprep::SubwordTokenizer tokenizer;
  models::BackboneConfig backbone_config;
  std::unique_ptr<models::Backbone> backbone;
  if (!from_checkpoint.empty()) {
    models::BackboneBundle bundle = models::load_backbone_bundle(from_checkpoint);
    tokenizer = std::move(bundle.tokenizer);
    backbone_config = bundle.config;
    backbone = std::make_unique<models::Backbone>(backbone_config);
    models::load_weights(from_checkpoint + "/weights.bin", backbone->mlm_params());
  } else {
    const textprep::TokenizerFamily tok_family =
        family == "mbert" ? textprep::TokenizerFamily::wordpiece
                          : textprep::TokenizerFamily::sentencepiece;
    tokenizer = textprep::SubwordTokenizer::build_from_texts(tok_family, spec.train_texts,
                                                             config.backbone.max_whole_words);
    backbone_config = make_backbone_config(config, family, tokenizer.vocab_size(),
                                           Rng::derive(config.mlm.seed, fnv1a64(family)));
    backbone = std::make_unique<models::Backbone>(backbone_config);
  }

  mlm::MLMConfig mlm_config = config.mlm;
  mlm_config.truncate_limit = config.truncate_chars;
  const mlm::MLMReport report = mlm::pretrain_mlm(*backbone, tokenizer, spec, mlm_config);

  nlohmann::ordered_json extra;
  extra["seed"] = mlm_config.seed;
  extra["epochs"] = mlm_config.epochs;
  extra["mask_rate"] = mlm_config.mask_rate;
  extra["language"] = corpus::language_name(language);
  extra["input_mode"] = config.input_mode;
  extra["data_fingerprints"] = {{"train", hex64(file_fingerprint(train_path))},
                                {"dev", hex64(file_fingerprint(dev_path))},
                                {"test", hex64(file_fingerprint(test_path))}};
  models::save_backbone(out_dir, *backbone, tokenizer, extra);
  write_file(out_dir + "/mlm_report.json", mlm::report_to_json(report));

  log.stage_ok("pretrain", {out_dir + "/weights.bin", out_dir + "/meta.json",
                            out_dir + "/mlm_report.json"});
  for (const auto& epoch : report.epochs) {
    std::cout << "train_loss " << epoch.train_loss << "  eval_loss " << epoch.eval_loss
              << "  eval_ppl " << epoch.eval_perplexity << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainedMember {
  training::RunRecord record;
  std::string dir;
};

TrainedMember train_one(const PipelineConfig& config, Language language,
                        models::Architecture architecture, const std::string& family,
                        const std::string& from_checkpoint, const std::string& out_dir,
                        const DatasetSplit& train_split, const DatasetSplit& dev_split) {
  const corpus::LabelSchema schema = corpus::LabelSchema::for_language(language);

  textprep::SubwordTokenizer tokenizer;
  models::BackboneConfig backbone_config;
  if (!from_checkpoint.empty()) {
    models::BackboneBundle bundle = models::load_backbone_bundle(from_checkpoint);
    tokenizer = std::move(bundle.tokenizer);
    backbone_config = bundle.config;
  } else {
    const textprep::TokenizerFamily tok_family =
        family == "mbert" ? textprep::TokenizerFamily::wordpiece
                          : textprep::TokenizerFamily::sentencepiece;
    tokenizer = textprep::SubwordTokenizer::build_from_texts(
        tok_family, prepared_texts(train_split, config), config.backbone.max_whole_words);
    backbone_config = make_backbone_config(config, family, tokenizer.vocab_size(),
                                           Rng::derive(config.train.seed, fnv1a64(family)));
  }

  // Char vocabulary comes from training-split text only.
  textprep::CharVocab char_vocab = textprep::CharVocab::build(prepared_texts(train_split, config));

  const std::vector<textprep::EncodedExample> train_encoded =
      prepare_examples(train_split, config, tokenizer, char_vocab);
  const std::vector<textprep::EncodedExample> dev_encoded =
      prepare_examples(dev_split, config, tokenizer, char_vocab);

  std::unique_ptr<models::TextClassifier> model;
  const uint64_t head_seed = Rng::derive(config.train.seed, 0xEAD);
  if (architecture == models::Architecture::fusion) {
    models::FusionConfig fusion_config = config.fusion;
    fusion_config.d_enc = backbone_config.encoder.d_model;
    model = std::make_unique<models::FusionClassifier>(backbone_config, fusion_config, schema,
                                                       char_vocab.size(), head_seed);
  } else {
    model = std::make_unique<models::ClsClassifier>(backbone_config, schema, head_seed);
  }
  if (!from_checkpoint.empty()) {
    models::load_weights_prefix(from_checkpoint + "/weights.bin", model->params(), "encoder.");
  }

  training::RunRecord record =
      training::train_classifier(*model, train_encoded, dev_encoded, tokenizer.pad_id(), config.train);
  record.checkpoint_dir = out_dir;

  nlohmann::ordered_json extra;
  extra["seed"] = config.train.seed;
  extra["epochs"] = config.train.epochs;
  extra["selected_epoch"] = record.selected_epoch;
  extra["from_checkpoint"] = from_checkpoint;
  extra["family"] = family;
  models::save_classifier(out_dir, *model, tokenizer,
                          architecture == models::Architecture::fusion ? &char_vocab : nullptr,
                          config.policy(), config.truncate_chars, extra);
  write_file(out_dir + "/run_record.json", training::run_record_to_json(record));
  return {std::move(record), out_dir};
}

int cmd_train(const PipelineConfig& config, Language language, models::Architecture architecture,
              const std::string& family, const std::string& from_checkpoint,
              const std::string& out_dir) {
  ensure_directory(out_dir);
  StageLog log;
  log.path = out_dir + "/manifest.json";
  log.begin("train", config.to_json());

  const std::string train_path = split_path(config.data_root, language, Split::train);
  const std::string dev_path = split_path(config.data_root, language, Split::dev);
  log.add_input("train", train_path);
  log.add_input("dev", dev_path);

  const DatasetSplit train_split = corpus::load_split(train_path, language, Split::train);
  const DatasetSplit dev_split = corpus::load_split(dev_path, language, Split::dev);

  const TrainedMember member = train_one(config, language, architecture, family, from_checkpoint,
                                         out_dir, train_split, dev_split);
  log.stage_ok("train", {out_dir + "/weights.bin", out_dir + "/meta.json",
                         out_dir + "/run_record.json"});

  for (size_t i = 0; i < member.record.epochs.size(); ++i) {
    const auto& e = member.record.epochs[i];
    std::cout << "epoch " << (i + 1) << "  train_loss " << e.train_loss << "  dev_f1 "
              << e.dev_weighted_f1 << "  dev_acc " << e.dev_accuracy << "\n";
  }
  std::cout << "selected epoch " << member.record.selected_epoch << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// predict

int cmd_predict(const std::string& model_dir, const std::string& data_path, Split split,
                const std::string& out_path, const std::string& audit_path) {
  models::ClassifierBundle bundle = models::ClassifierBundle::load(model_dir);
  const Language language = bundle.schema().language();
  const DatasetSplit dataset = corpus::load_split(data_path, language, split);
  const std::vector<models::PredictionRecord> records = bundle.predict_examples(dataset.examples);

  std::string tsv;
  for (const auto& record : records) {
    tsv += record.id;
    tsv += '\t';
    tsv += record.label;
    tsv += '\n';
  }
  write_file(out_path, tsv);

  if (!audit_path.empty()) {
    std::string jsonl;
    for (const auto& record : records) {
      nlohmann::ordered_json j;
      j["id"] = record.id;
      j["label"] = record.label;
      j["probs"] = record.probs;
      jsonl += j.dump();
      jsonl += '\n';
    }
    write_file(audit_path, jsonl);
  }
  std::cout << "wrote " << records.size() << " predictions to " << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// ensemble

int cmd_ensemble(const std::string& members_joined, const std::string& data_path,
                 Language language, Split split, const std::string& out_path,
                 const std::string& audit_path) {
  ensemble::EnsembleSpec spec;
  spec.member_dirs = split_member_list(members_joined);
  const DatasetSplit dataset = corpus::load_split(data_path, language, split);
  const ensemble::EnsembleOutput output = ensemble::ensemble_predict(spec, dataset);

  write_file(out_path, ensemble::votes_to_tsv(output.votes));
  const corpus::LabelSchema schema = corpus::LabelSchema::for_language(language);
  if (!audit_path.empty()) {
    write_file(audit_path, ensemble::votes_to_audit_jsonl(output, schema));
  }

  nlohmann::ordered_json manifest;
  manifest["command"] = "ensemble";
  manifest["members"] = spec.member_dirs;
  manifest["data"] = input_entry(data_path);
  manifest["outputs"] = {out_path};
  write_file(out_path + ".manifest.json", manifest.dump(2) + "\n");

  std::cout << "wrote " << output.votes.size() << " ensembled predictions to " << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

std::vector<std::pair<std::string, std::string>> load_predictions_tsv(const std::string& path) {
  const std::string content = read_file(path);
  std::vector<std::pair<std::string, std::string>> rows;
  size_t pos = 0;
  size_t line_no = 0;
  while (pos < content.size()) {
    size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) nl = content.size();
    std::string row = content.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!row.empty() && row.back() == '\r') row.pop_back();
    if (row.empty()) continue;
    const size_t tab = row.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected `id<TAB>label`");
    }
    rows.emplace_back(row.substr(0, tab), row.substr(tab + 1));
  }
  if (rows.empty()) throw ParseError(path + ": no predictions");
  return rows;
}

int cmd_evaluate(const std::string& gold_path, const std::string& pred_path, Language language,
                 Split split, const std::string& out_json, const std::string& out_report) {
  const DatasetSplit gold = corpus::load_split(gold_path, language, split);
  const auto pred_rows = load_predictions_tsv(pred_path);
  if (pred_rows.size() != gold.examples.size()) {
    throw ConfigError("prediction count " + std::to_string(pred_rows.size()) +
                      " does not match gold count " + std::to_string(gold.examples.size()));
  }

  std::vector<std::string> gold_labels, pred_labels;
  for (size_t i = 0; i < gold.examples.size(); ++i) {
    if (!gold.examples[i].label) {
      throw SchemaError("gold example '" + gold.examples[i].id + "' is unlabeled");
    }
    if (pred_rows[i].first != gold.examples[i].id) {
      throw ConfigError("prediction id '" + pred_rows[i].first + "' does not match gold id '" +
                        gold.examples[i].id + "' at row " + std::to_string(i + 1));
    }
    gold_labels.push_back(*gold.examples[i].label);
    pred_labels.push_back(pred_rows[i].second);
  }

  const corpus::LabelSchema schema = corpus::LabelSchema::for_language(language);
  const metrics::MetricsReport report = metrics::compute_metrics(gold_labels, pred_labels, schema);
  const std::string text = metrics::format_report(report);
  std::cout << text;
  if (!out_json.empty()) write_file(out_json, metrics::report_to_json(report));
  if (!out_report.empty()) write_file(out_report, text);
  return 0;
}

// ---------------------------------------------------------------------------
// reproduce

int cmd_reproduce(const PipelineConfig& base_config, Language language, const std::string& out_dir,
                  int jobs) {
  ensure_directory(out_dir);
  StageLog log;
  log.path = out_dir + "/manifest.json";
  log.begin("reproduce", base_config.to_json());

  const std::string train_path = split_path(base_config.data_root, language, Split::train);
  const std::string dev_path = split_path(base_config.data_root, language, Split::dev);
  const std::string test_path = split_path(base_config.data_root, language, Split::test);

  std::string stage = "load_data";
  try {
    log.add_input("train", train_path);
    log.add_input("dev", dev_path);
    log.add_input("test", test_path);
    const DatasetSplit train_split = corpus::load_split(train_path, language, Split::train);
    const DatasetSplit dev_split = corpus::load_split(dev_path, language, Split::dev);
    const DatasetSplit test_split = corpus::load_split(test_path, language, Split::test);
    log.stage_ok(stage, {});

    // Dataset audit.
    stage = "stats";
    const corpus::ClassDistribution distribution = corpus::class_distribution(train_split);
    write_file(out_dir + "/stats_train.json",
               corpus::distribution_to_json(distribution, language, Split::train));
    log.stage_ok(stage, {out_dir + "/stats_train.json"});

    // Task-adaptive pretraining, one backbone per family.
    PipelineConfig pretrain_config = base_config;
    pretrain_config.mlm.epochs = base_config.reproduce_pretrain_epochs;
    pretrain_config.mlm.lr = base_config.reproduce_pretrain_lr;
    const std::vector<std::string> families = {"mbert", "xlmr"};
    std::vector<std::string> pretrain_dirs;
    for (size_t f = 0; f < families.size(); ++f) {
      stage = "pretrain_" + families[f];
      pretrain_config.mlm.seed = 1000 + f;
      const std::string dir = out_dir + "/pretrain_" + families[f];
      const int rc = cmd_pretrain(pretrain_config, language, families[f], "", dir);
      if (rc != 0) throw TrainError("pretraining failed for " + families[f]);
      pretrain_dirs.push_back(dir);
      log.stage_ok(stage, {dir});
    }

    // Six fine-tuned members: three seeds per family, from the family's
    // task-adaptively pretrained backbone.
    stage = "train_members";
    struct MemberPlan {
      std::string family;
      std::string pretrain_dir;
      uint64_t seed;
      std::string dir;
    };
    std::vector<MemberPlan> plans;
    for (size_t f = 0; f < families.size(); ++f) {
      const auto& seeds = families[f] == "mbert" ? base_config.mbert_seeds : base_config.xlmr_seeds;
      for (uint64_t seed : seeds) {
        plans.push_back({families[f], pretrain_dirs[f], seed,
                         out_dir + "/members/" + families[f] + "_s" + std::to_string(seed)});
      }
    }
    {
      std::vector<uint64_t> all_seeds;
      for (const auto& plan : plans) all_seeds.push_back(plan.seed);
      std::sort(all_seeds.begin(), all_seeds.end());
      if (std::adjacent_find(all_seeds.begin(), all_seeds.end()) != all_seeds.end()) {
        throw ConfigError("ensemble member seeds must be distinct");
      }
    }

    std::vector<std::exception_ptr> errors(plans.size());
    auto run_member = [&](size_t index) {
      try {
        PipelineConfig member_config = base_config;
        member_config.train.lr = base_config.reproduce_train_lr;
        member_config.train.batch_size = base_config.reproduce_train_batch;
        member_config.train.warmup_fraction = base_config.reproduce_warmup;
        member_config.train.seed = plans[index].seed;
        train_one(member_config, language, models::Architecture::cls, plans[index].family,
                  plans[index].pretrain_dir, plans[index].dir, train_split, dev_split);
      } catch (...) {
        errors[index] = std::current_exception();
      }
    };
    if (jobs <= 1) {
      for (size_t i = 0; i < plans.size(); ++i) run_member(i);
    } else {
      for (size_t start = 0; start < plans.size(); start += static_cast<size_t>(jobs)) {
        std::vector<std::thread> pool;
        for (size_t i = start; i < std::min(plans.size(), start + static_cast<size_t>(jobs)); ++i) {
          pool.emplace_back(run_member, i);
        }
        for (auto& t : pool) t.join();
      }
    }
    for (const auto& error : errors) {
      if (error) std::rethrow_exception(error);
    }
    std::vector<std::string> member_dirs;
    for (const auto& plan : plans) member_dirs.push_back(plan.dir);
    log.stage_ok(stage, member_dirs);

    // Majority vote over the dev split.
    stage = "ensemble";
    ensure_directory(out_dir + "/ensemble");
    ensemble::EnsembleSpec spec;
    spec.member_dirs = member_dirs;
    const ensemble::EnsembleOutput output = ensemble::ensemble_predict(spec, dev_split);
    write_file(out_dir + "/ensemble/pred.tsv", ensemble::votes_to_tsv(output.votes));
    const corpus::LabelSchema schema = corpus::LabelSchema::for_language(language);
    write_file(out_dir + "/ensemble/audit.jsonl", ensemble::votes_to_audit_jsonl(output, schema));
    log.stage_ok(stage, {out_dir + "/ensemble/pred.tsv", out_dir + "/ensemble/audit.jsonl"});

    // Dev-split evaluation, reported per member and for the ensemble.
    stage = "evaluate";
    std::vector<std::string> gold_labels;
    for (const auto& ex : dev_split.examples) gold_labels.push_back(*ex.label);

    std::string summary;
    summary += "Model                Input Text   F1 / Acc (Dev Split)\n";
    for (size_t m = 0; m < plans.size(); ++m) {
      std::vector<std::string> labels;
      for (const auto& record : output.per_member[m]) labels.push_back(record.label);
      const metrics::MetricsReport member_report =
          metrics::compute_metrics(gold_labels, labels, schema);
      char line[160];
      std::snprintf(line, sizeof(line), "%-20s %-12s %s\n",
                    (plans[m].family + " (run-" + std::to_string(m % 3 + 1) + ")").c_str(),
                    base_config.input_mode.c_str(), metrics::format_f1_acc(member_report).c_str());
      summary += line;
    }
    std::vector<std::string> final_labels;
    for (const auto& vote : output.votes) final_labels.push_back(vote.final_label);
    const metrics::MetricsReport ensemble_report =
        metrics::compute_metrics(gold_labels, final_labels, schema);
    char line[160];
    std::snprintf(line, sizeof(line), "%-20s %-12s %s\n", "Ensemble (Mode)",
                  base_config.input_mode.c_str(), metrics::format_f1_acc(ensemble_report).c_str());
    summary += line;

    ensure_directory(out_dir + "/eval");
    write_file(out_dir + "/eval/metrics.json", metrics::report_to_json(ensemble_report));
    write_file(out_dir + "/eval/report.txt",
               summary + "\n" + metrics::format_report(ensemble_report));
    log.stage_ok(stage, {out_dir + "/eval/metrics.json", out_dir + "/eval/report.txt"});

    std::cout << summary;
    std::cout << "F1 / Acc: " << metrics::format_f1_acc(ensemble_report) << "\n";
    return 0;
  } catch (const std::exception& e) {
    log.stage_failed(stage, e.what());
    throw;
  }
}

// ---------------------------------------------------------------------------
// CLI

std::string find_config_arg(const std::vector<std::string>& args) {
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return "";
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  PipelineConfig config = PipelineConfig::load(find_config_arg(args));

  CLI::App app{"code-mixed offensive language identification pipeline"};
  app.require_subcommand(1);
  std::string config_path;  // consumed during preload; declared so flags parse

  std::string language_arg;
  std::string split_arg;
  std::string out_path;
  std::string out_dir;
  std::string model_dir;
  std::string data_path;
  std::string audit_path;
  std::string members_joined;
  std::string from_checkpoint;
  std::string family = "mbert";
  std::string architecture_arg = "cls";
  std::string gold_path, pred_path, out_json, out_report;
  int jobs = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file (flags take precedence)");
    sub->add_option("--data-root", config.data_root, "dataset root directory");
    sub->add_option("--input-mode", config.input_mode, "as-is|romanized");
    sub->add_option("--translit-engine", config.translit_engine,
                    "identity | fixture:<map.json> | command:<cmd>");
  };

  CLI::App* stats = app.add_subcommand("stats", "class distribution of a split as JSON");
  stats->add_option("--language", language_arg, "kannada|tamil|malayalam (or kn|ta|ml)")->required();
  stats->add_option("--split", split_arg, "train|dev|test")->default_val("train");
  stats->add_option("--out", out_path, "also write the JSON here");
  add_common(stats);

  CLI::App* pretrain = app.add_subcommand("pretrain", "task-adaptive MLM pretraining of a backbone");
  pretrain->add_option("--language", language_arg)->required();
  pretrain->add_option("--backbone", family, "mbert|xlmr");
  pretrain->add_option("--epochs", config.mlm.epochs);
  pretrain->add_option("--batch-size", config.mlm.batch_size);
  pretrain->add_option("--seed", config.mlm.seed);
  pretrain->add_option("--lr", config.mlm.lr);
  pretrain->add_option("--mask-rate", config.mlm.mask_rate);
  pretrain->add_flag("--pure-mask", config.mlm.pure_mask,
                     "always place the mask token (no 80/10/10 split)");
  pretrain->add_option("--from-checkpoint", from_checkpoint, "continue from a backbone checkpoint");
  pretrain->add_option("--out", out_dir, "checkpoint output directory")->required();
  add_common(pretrain);

  CLI::App* train = app.add_subcommand("train", "fine-tune a classifier");
  train->add_option("--language", language_arg)->required();
  train->add_option("--architecture", architecture_arg, "cls|fusion");
  train->add_option("--backbone", family, "mbert|xlmr");
  train->add_option("--from-checkpoint", from_checkpoint, "pretrained backbone checkpoint");
  train->add_option("--epochs", config.train.epochs);
  train->add_option("--batch-size", config.train.batch_size);
  train->add_option("--seed", config.train.seed);
  train->add_option("--lr", [&config](const std::vector<std::string>& values) {
    config.train.lr = std::stod(values[0]);
    return true;
  }, "learning rate (default: policy default)");
  train->add_flag("--class-weighting", config.train.class_weighting,
                  "inverse-frequency class weights in the loss");
  train->add_option("--out", out_dir, "checkpoint output directory")->required();
  add_common(train);

  CLI::App* predict = app.add_subcommand("predict", "label a TSV file with one model");
  predict->add_option("--model", model_dir, "classifier checkpoint directory")->required();
  predict->add_option("--data", data_path, "input TSV")->required();
  predict->add_option("--split", split_arg, "split name used for synthesized ids")
      ->default_val("test");
  predict->add_option("--out", out_path, "output predictions TSV")->required();
  predict->add_option("--audit", audit_path, "per-example probability JSONL");

  CLI::App* ens = app.add_subcommand("ensemble", "majority-vote over member checkpoints");
  ens->add_option("--members", members_joined, "comma-separated checkpoint directories")->required();
  ens->add_option("--data", data_path, "input TSV")->required();
  ens->add_option("--language", language_arg)->required();
  ens->add_option("--split", split_arg)->default_val("dev");
  ens->add_option("--out", out_path, "output predictions TSV")->required();
  ens->add_option("--audit", audit_path, "per-example audit JSONL");

  CLI::App* evaluate = app.add_subcommand("evaluate", "score predictions against gold labels");
  evaluate->add_option("--gold", gold_path, "gold TSV (text<TAB>label)")->required();
  evaluate->add_option("--pred", pred_path, "predictions TSV (id<TAB>label)")->required();
  evaluate->add_option("--language", language_arg)->required();
  evaluate->add_option("--split", split_arg)->default_val("dev");
  evaluate->add_option("--out-json", out_json, "write metrics JSON here");
  evaluate->add_option("--out-report", out_report, "write the text report here");

  CLI::App* reproduce = app.add_subcommand(
      "reproduce", "full pipeline: stats, pretrain, 6x train, ensemble, evaluate");
  reproduce->add_option("--language", language_arg)->required();
  reproduce->add_option("--out", out_dir, "output directory")->required();
  reproduce->add_option("--jobs", jobs, "parallel member training jobs");
  add_common(reproduce);

  std::vector<const char*> argv;
  argv.push_back("codemix");
  for (const auto& arg : args) argv.push_back(arg.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help() << "\n";
    return 2;
  }

  try {
    if (stats->parsed()) {
      return cmd_stats(config, corpus::language_from_string(language_arg),
                       corpus::split_from_string(split_arg), out_path);
    }
    if (pretrain->parsed()) {
      if (family != "mbert" && family != "xlmr") {
        throw ConfigError("unknown backbone family: " + family);
      }
      return cmd_pretrain(config, corpus::language_from_string(language_arg), family,
                          from_checkpoint, out_dir);
    }
    if (train->parsed()) {
      return cmd_train(config, corpus::language_from_string(language_arg),
                       models::architecture_from_string(architecture_arg), family, from_checkpoint,
                       out_dir);
    }
    if (predict->parsed()) {
      return cmd_predict(model_dir, data_path, corpus::split_from_string(split_arg), out_path,
                         audit_path);
    }
    if (ens->parsed()) {
      return cmd_ensemble(members_joined, data_path, corpus::language_from_string(language_arg),
                          corpus::split_from_string(split_arg), out_path, audit_path);
    }
    if (evaluate->parsed()) {
      return cmd_evaluate(gold_path, pred_path, corpus::language_from_string(language_arg),
                          corpus::split_from_string(split_arg), out_json, out_report);
    }
    if (reproduce->parsed()) {
      return cmd_reproduce(config, corpus::language_from_string(language_arg), out_dir, jobs);
    }
    std::cerr << app.help() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace codemix::pipeline
