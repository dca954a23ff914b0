#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <json.hpp>

#include "sentspan/corpus.hpp"
#include "sentspan/errors.hpp"
#include "sentspan/evaluator.hpp"
#include "sentspan/runconfig.hpp"
#include "sentspan/spanprep.hpp"
#include "sentspan/text.hpp"
#include "sentspan/tokenizer.hpp"
#include "sentspan/trainer.hpp"

namespace sentspan::cli {

namespace fs = std::filesystem;

namespace {

void ensure_dir(const std::string& path) {
  if (path.empty()) return;
  std::error_code ec;
  fs::create_directories(path, ec);
  if (ec) raise("IoError", "cannot create directory " + path + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) raise("IoError", "cannot write " + path);
  f << content;
}

void write_effective_config(const RunConfig& config, const std::string& command) {
  ensure_dir(config.output_dir);
  write_text(config.output_dir + "/" + command + "-config.txt", config.serialize());
}

std::string split_path(const RunConfig& config, const std::string& split) {
  return config.prepared_dir + "/" + split + ".jsonl";
}

ModelConfig resolved_model_config(const RunConfig& config, const Vocab& vocab) {
  ModelConfig m = config.model;
  m.vocab_size = vocab.size();
  m.max_source_length = config.max_source_length;
  m.validate();
  return m;
}

std::string split_label(const std::string& name) {
  if (name == "train") return "Training data";
  if (name == "validation") return "Validation data";
  if (name == "test") return "Test dataset";
  return name;
}

struct SplitInput {
  std::string name;
  std::vector<RawExample> examples;
};

}  // namespace

void cmd_prepare(const RunConfig& config) {
  if (config.train_csv.empty()) raise("BadConfig", "train_csv is required for prepare");
  ensure_dir(config.output_dir);
  ensure_dir(config.prepared_dir);
  const std::string vocab_parent = fs::path(config.vocab_file).parent_path().string();
  ensure_dir(vocab_parent);

  nlohmann::json inputs = nlohmann::json::object();
  auto note_input = [&](const std::string& path, const LoadResult& r) {
    inputs[path] = {{"rows_loaded", r.examples.size()},
                    {"rows_excluded_empty_text", r.excluded_rows}};
  };

  LoadResult train_load = load_csv(config.train_csv);
  note_input(config.train_csv, train_load);

  std::vector<SplitInput> splits;
  if (config.split_ratios) {
    DatasetSplit ds = split_dataset(train_load.examples, *config.split_ratios, config.split_seed);
    splits.push_back({"train", std::move(ds.train)});
    splits.push_back({"validation", std::move(ds.validation)});
    splits.push_back({"test", std::move(ds.test)});
  } else {
    splits.push_back({"train", std::move(train_load.examples)});
    if (!config.val_csv.empty()) {
      LoadResult r = load_csv(config.val_csv);
      note_input(config.val_csv, r);
      splits.push_back({"validation", std::move(r.examples)});
    }
    if (!config.test_csv.empty()) {
      LoadResult r = load_csv(config.test_csv);
      note_input(config.test_csv, r);
      splits.push_back({"test", std::move(r.examples)});
    }
  }

  std::vector<std::string> corpus_texts;
  corpus_texts.reserve(splits.front().examples.size() * 2);
  for (const auto& ex : splits.front().examples) {
    corpus_texts.push_back(format_source(ex.sentiment, ex.text));
    corpus_texts.push_back(format_target(ex.selected_text));
  }
  Vocab vocab = build_vocab(corpus_texts, config.vocab_max_size);
  save_vocab(vocab, config.vocab_file);

  nlohmann::json split_audit = nlohmann::json::object();
  for (auto& sp : splits) {
    if (sp.examples.empty()) {
      std::cerr << "warning: split '" << sp.name << "' has no examples\n";
    }
    std::ofstream findings_file(config.prepared_dir + "/" + sp.name + "-findings.jsonl",
                                std::ios::binary);
    if (!findings_file) raise("IoError", "cannot write findings for split " + sp.name);

    std::vector<TokenizedExample> prepared;
    prepared.reserve(sp.examples.size());
    int failed = 0, crossed = 0;
    std::map<std::string, int> finding_counts;
    for (const auto& ex : sp.examples) {
      for (Finding f : validate_example(ex)) {
        ++finding_counts[to_string(f)];
        nlohmann::json j{{"id", ex.id}, {"finding", to_string(f)}};
        findings_file << j.dump() << '\n';
      }
      try {
        TokenizedExample te = align(vocab, ex, config.max_source_length);
        if (te.has_flag(kFlagCrossedSpan)) ++crossed;
        prepared.push_back(std::move(te));
      } catch (const Error& e) {
        if (e.code() != "AlignmentFailed") throw;
        ++failed;
        ++finding_counts["AlignmentFailed"];
        nlohmann::json j{{"id", ex.id}, {"finding", "AlignmentFailed"}, {"detail", e.what()}};
        findings_file << j.dump() << '\n';
      }
    }
    save_prepared(split_path(config, sp.name), prepared);
    split_audit[sp.name] = {{"examples", sp.examples.size()},
                            {"aligned", prepared.size()},
                            {"alignment_failed", failed},
                            {"crossed_span", crossed},
                            {"findings", finding_counts}};
    std::cout << sp.name << ": " << prepared.size() << " aligned, " << failed
              << " alignment failures, " << crossed << " crossed spans\n";
  }

  nlohmann::json audit{{"inputs", inputs}, {"splits", split_audit}};
  write_text(config.output_dir + "/prepare-audit.json", audit.dump(2) + "\n");
  write_effective_config(config, "prepare");
  std::cout << "vocab: " << vocab.size() << " tokens -> " << config.vocab_file << '\n';
}

void cmd_train(const RunConfig& config) {
  Vocab vocab = load_vocab(config.vocab_file);
  std::vector<TokenizedExample> train_set = load_prepared(split_path(config, "train"));
  if (train_set.empty()) {
    raise("EmptyDataset", "prepared training set is empty: " + split_path(config, "train"));
  }
  std::vector<TokenizedExample> val_set;
  if (fs::exists(split_path(config, "validation"))) {
    val_set = load_prepared(split_path(config, "validation"));
  }

  ModelConfig mc = resolved_model_config(config, vocab);
  ensure_dir(config.checkpoint_dir);
  ensure_dir(config.output_dir);

  Trainer trainer(Params::init(mc), config.train, vocab);
  const int last_epoch = config.train.max_epochs - 1;
  TrainResult result =
      trainer.train(train_set, val_set, [&](int epoch, const Params& p, const StepResult*) {
        if (config.checkpoint_every_epoch) {
          save_checkpoint(p, config.checkpoint_dir + "/epoch-" + std::to_string(epoch) + ".json");
        }
        if (epoch == last_epoch) save_checkpoint(p, config.checkpoint_dir + "/final.json");
      });
  save_checkpoint(trainer.params(), config.checkpoint_dir + "/best.json");
  save_train_log(config.output_dir + "/train-log.jsonl", result.log);
  write_effective_config(config, "train");

  for (auto it = result.log.rbegin(); it != result.log.rend(); ++it) {
    if (it->split == "train") {
      std::cout << "final train batch: total_loss " << it->total_loss << ", mean_jaccard "
                << it->mean_jaccard << '\n';
      break;
    }
  }
  std::cout << "best epoch: " << result.best_epoch << ", checkpoints -> "
            << config.checkpoint_dir << '\n';
}

void cmd_eval(const RunConfig& config, const std::string& checkpoint_path,
              const std::vector<std::string>& splits) {
  Vocab vocab = load_vocab(config.vocab_file);
  ModelConfig mc = resolved_model_config(config, vocab);
  Params params = load_checkpoint_checked(checkpoint_path, mc);

  std::vector<std::string> names = splits;
  if (names.empty()) {
    for (const char* candidate : {"train", "validation", "test"}) {
      if (fs::exists(split_path(config, candidate))) names.push_back(candidate);
    }
    if (names.empty()) raise("IoError", "no prepared splits found in " + config.prepared_dir);
  }

  ensure_dir(config.output_dir);
  std::vector<std::pair<std::string, EvalReport>> rows;
  for (const auto& name : names) {
    std::vector<TokenizedExample> dataset = load_prepared(split_path(config, name));
    if (dataset.empty()) {
      std::cerr << "warning: split '" << name << "' is empty, skipped\n";
      continue;
    }
    EvalReport report = evaluate(params, vocab, dataset, config.train.batch_size);
    save_eval_report(config.output_dir + "/eval-" + name + ".json", report);
    rows.emplace_back(split_label(name), report);
  }

  const std::string table = format_eval_table(rows);
  write_text(config.output_dir + "/eval-table.txt", table);
  std::cout << table;
  write_effective_config(config, "eval");
}

void cmd_predict(const RunConfig& config, const std::string& checkpoint_path,
                 const std::string& sentiment, const std::string& raw_text) {
  const Sentiment s = parse_sentiment(sentiment);
  if (s == Sentiment::unknown) {
    raise("BadConfig", "sentiment must be positive, negative, or neutral, got '" + sentiment + "'");
  }
  Vocab vocab = load_vocab(config.vocab_file);
  ModelConfig mc = resolved_model_config(config, vocab);
  Params params = load_checkpoint_checked(checkpoint_path, mc);
  std::cout << extract_answer(params, vocab, s, raw_text) << '\n';
  write_effective_config(config, "predict");
}

void cmd_inspect_alignment(const RunConfig& config) {
  Vocab vocab = load_vocab(config.vocab_file);

  std::map<std::string, RawExample> raw_by_id;
  for (const std::string& path : {config.train_csv, config.val_csv, config.test_csv}) {
    if (path.empty() || !fs::exists(path)) continue;
    for (auto& ex : load_csv(path).examples) raw_by_id[ex.id] = std::move(ex);
  }

  ensure_dir(config.output_dir);
  const std::string audit_path = config.output_dir + "/alignment-audit.jsonl";
  std::ofstream out(audit_path, std::ios::binary);
  if (!out) raise("IoError", "cannot write " + audit_path);

  for (const char* name : {"train", "validation", "test"}) {
    const std::string path = split_path(config, name);
    if (!fs::exists(path)) continue;
    size_t n = 0, good = 0;
    int crossed = 0;
    double sum_jac = 0.0;
    for (const auto& te : load_prepared(path)) {
      TokenSequence span(te.source_ids.begin() + te.start_position,
                         te.source_ids.begin() + te.end_position + 1);
      const std::string span_text = decode(vocab, span, true);
      const std::string target_text = decode(vocab, te.target_ids, true);
      const double jt = jaccard(span_text, target_text);

      nlohmann::json j;
      j["split"] = name;
      j["id"] = te.id;
      j["start"] = te.start_position;
      j["end"] = te.end_position;
      j["span_text"] = span_text;
      j["target_text"] = target_text;
      j["jaccard_tokens"] = jt;
      auto it = raw_by_id.find(te.id);
      if (it != raw_by_id.end()) {
        j["jaccard_raw"] = jaccard(span_text, it->second.selected_text);
      } else {
        j["jaccard_raw"] = nullptr;
      }
      j["flags"] = te.flags;
      out << j.dump() << '\n';

      ++n;
      sum_jac += jt;
      if (jt >= 0.8) ++good;
      if (te.has_flag(kFlagCrossedSpan)) ++crossed;
    }
    if (n > 0) {
      std::cout << name << ": " << n << " examples, mean token jaccard "
                << sum_jac / static_cast<double>(n) << ", fraction >= 0.8 "
                << static_cast<double>(good) / static_cast<double>(n) << ", crossed " << crossed
                << '\n';
    }
  }
  write_effective_config(config, "inspect-alignment");
  std::cout << "audit -> " << audit_path << '\n';
}

}  // namespace sentspan::cli
