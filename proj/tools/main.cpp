#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sentspan/errors.hpp"
#include "sentspan/runconfig.hpp"

namespace {

void report_error(const std::string& code, const std::string& message) {
  nlohmann::json j{{"error", code}, {"message", message}};
  std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sentiment span extraction: prepare data, train, evaluate, predict"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "run configuration file (key = value lines)");
  app.add_option("--set", overrides, "override one config key, e.g. --set train.max_epochs=5");

  auto* prepare = app.add_subcommand("prepare", "build the vocabulary and aligned datasets");
  prepare->fallthrough();

  auto* train = app.add_subcommand("train", "train a model on the prepared datasets");
  train->fallthrough();

  std::string eval_checkpoint;
  std::vector<std::string> eval_splits;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on prepared splits");
  eval->fallthrough();
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file to evaluate")->required();
  eval->add_option("--splits", eval_splits, "splits to evaluate (default: all present)");

  std::string predict_checkpoint, predict_sentiment, predict_text;
  auto* predict = app.add_subcommand("predict", "extract the sentiment span from one text");
  predict->fallthrough();
  predict->add_option("--checkpoint", predict_checkpoint, "checkpoint file")->required();
  predict->add_option("--sentiment", predict_sentiment, "positive, negative, or neutral")
      ->required();
  predict->add_option("--text", predict_text, "text to extract from")->required();

  auto* inspect = app.add_subcommand("inspect-alignment", "audit gold span round-trip quality");
  inspect->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    sentspan::RunConfig config;
    if (!config_path.empty()) config = sentspan::RunConfig::from_file(config_path);
    for (const auto& o : overrides) config.apply_override(o);

    if (prepare->parsed()) {
      sentspan::cli::cmd_prepare(config);
    } else if (train->parsed()) {
      sentspan::cli::cmd_train(config);
    } else if (eval->parsed()) {
      sentspan::cli::cmd_eval(config, eval_checkpoint, eval_splits);
    } else if (predict->parsed()) {
      sentspan::cli::cmd_predict(config, predict_checkpoint, predict_sentiment, predict_text);
    } else if (inspect->parsed()) {
      sentspan::cli::cmd_inspect_alignment(config);
    }
    return 0;
  } catch (const sentspan::Error& e) {
    report_error(e.code(), e.what());
    return e.code() == "Internal" ? 3 : 2;
  } catch (const std::exception& e) {
    report_error("Internal", e.what());
    return 3;
  }
}
