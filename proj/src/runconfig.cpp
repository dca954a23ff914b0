#include "sentspan/runconfig.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "sentspan/errors.hpp"
#include "sentspan/text.hpp"

namespace sentspan {

namespace {

long long parse_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    raise("BadConfig", "config key '" + key + "' needs an integer, got '" + value + "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    unsigned long long v = std::stoull(value, &used);
    // stoull wraps negative input instead of rejecting it.
    if (used != value.size() || value.find('-') != std::string::npos) {
      throw std::invalid_argument(value);
    }
    return v;
  } catch (const std::exception&) {
    raise("BadConfig", "config key '" + key + "' needs a non-negative integer, got '" + value + "'");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    raise("BadConfig", "config key '" + key + "' needs a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  raise("BadConfig", "config key '" + key + "' needs true or false, got '" + value + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::stod(buf) == v) break;
  }
  return buf;
}

}  // namespace

void RunConfig::apply_override(const std::string& key_equals_value) {
  const size_t eq = key_equals_value.find('=');
  if (eq == std::string::npos) {
    raise("BadConfig", "expected key=value, got '" + key_equals_value + "'");
  }
  const std::string key = text::trim(key_equals_value.substr(0, eq));
  const std::string value = text::trim(key_equals_value.substr(eq + 1));
  if (key.empty()) raise("BadConfig", "empty config key in '" + key_equals_value + "'");

  if (key == "train_csv") train_csv = value;
  else if (key == "val_csv") val_csv = value;
  else if (key == "test_csv") test_csv = value;
  else if (key == "vocab_file") vocab_file = value;
  else if (key == "prepared_dir") prepared_dir = value;
  else if (key == "checkpoint_dir") checkpoint_dir = value;
  else if (key == "output_dir") output_dir = value;
  else if (key == "max_source_length") max_source_length = static_cast<int>(parse_int(key, value));
  else if (key == "vocab_max_size") vocab_max_size = static_cast<int>(parse_int(key, value));
  else if (key == "split_ratios") {
    if (value == "none" || value.empty()) {
      split_ratios.reset();
    } else {
      std::array<double, 3> r{};
      std::stringstream ss(value);
      std::string part;
      size_t i = 0;
      while (std::getline(ss, part, ',')) {
        if (i >= 3) raise("BadConfig", "split_ratios needs exactly 3 comma-separated numbers");
        r[i++] = parse_double(key, text::trim(part));
      }
      if (i != 3) raise("BadConfig", "split_ratios needs exactly 3 comma-separated numbers");
      split_ratios = r;
    }
  }
  else if (key == "split_seed") split_seed = parse_u64(key, value);
  else if (key == "model.model_dim") model.model_dim = static_cast<int>(parse_int(key, value));
  else if (key == "model.num_heads") model.num_heads = static_cast<int>(parse_int(key, value));
  else if (key == "model.num_layers") model.num_layers = static_cast<int>(parse_int(key, value));
  else if (key == "model.ffn_dim") model.ffn_dim = static_cast<int>(parse_int(key, value));
  else if (key == "model.dropout_rate") model.dropout_rate = parse_double(key, value);
  else if (key == "model.seed") model.seed = parse_u64(key, value);
  else if (key == "train.learning_rate") train.learning_rate = parse_double(key, value);
  else if (key == "train.batch_size") train.batch_size = static_cast<int>(parse_int(key, value));
  else if (key == "train.max_epochs") train.max_epochs = static_cast<int>(parse_int(key, value));
  else if (key == "train.adam_beta1") train.adam_beta1 = parse_double(key, value);
  else if (key == "train.adam_beta2") train.adam_beta2 = parse_double(key, value);
  else if (key == "train.adam_epsilon") train.adam_epsilon = parse_double(key, value);
  else if (key == "train.grad_clip_norm") {
    if (value == "none") train.grad_clip_norm.reset();
    else train.grad_clip_norm = parse_double(key, value);
  }
  else if (key == "train.seed") train.seed = parse_u64(key, value);
  else if (key == "train.loss_combination") {
    if (value == "mean") train.loss_combination = LossCombination::mean;
    else if (value == "sum") train.loss_combination = LossCombination::sum;
    else raise("BadConfig", "train.loss_combination must be mean or sum, got '" + value + "'");
  }
  else if (key == "checkpoint_every_epoch") checkpoint_every_epoch = parse_bool(key, value);
  else raise("BadConfig", "unknown config key '" + key + "'");
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) raise("IoError", "cannot read config file: " + path);
  RunConfig config;
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const std::string t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    try {
      config.apply_override(t);
    } catch (const Error& e) {
      raise(e.code(), path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return config;
}

std::string RunConfig::serialize() const {
  std::ostringstream out;
  out << "train_csv = " << train_csv << '\n';
  out << "val_csv = " << val_csv << '\n';
  out << "test_csv = " << test_csv << '\n';
  out << "vocab_file = " << vocab_file << '\n';
  out << "prepared_dir = " << prepared_dir << '\n';
  out << "checkpoint_dir = " << checkpoint_dir << '\n';
  out << "output_dir = " << output_dir << '\n';
  out << "max_source_length = " << max_source_length << '\n';
  out << "vocab_max_size = " << vocab_max_size << '\n';
  if (split_ratios) {
    out << "split_ratios = " << fmt_double((*split_ratios)[0]) << ','
        << fmt_double((*split_ratios)[1]) << ',' << fmt_double((*split_ratios)[2]) << '\n';
  } else {
    out << "split_ratios = none\n";
  }
  out << "split_seed = " << split_seed << '\n';
  out << "model.model_dim = " << model.model_dim << '\n';
  out << "model.num_heads = " << model.num_heads << '\n';
  out << "model.num_layers = " << model.num_layers << '\n';
  out << "model.ffn_dim = " << model.ffn_dim << '\n';
  out << "model.dropout_rate = " << fmt_double(model.dropout_rate) << '\n';
  out << "model.seed = " << model.seed << '\n';
  out << "train.learning_rate = " << fmt_double(train.learning_rate) << '\n';
  out << "train.batch_size = " << train.batch_size << '\n';
  out << "train.max_epochs = " << train.max_epochs << '\n';
  out << "train.adam_beta1 = " << fmt_double(train.adam_beta1) << '\n';
  out << "train.adam_beta2 = " << fmt_double(train.adam_beta2) << '\n';
  out << "train.adam_epsilon = " << fmt_double(train.adam_epsilon) << '\n';
  if (train.grad_clip_norm) {
    out << "train.grad_clip_norm = " << fmt_double(*train.grad_clip_norm) << '\n';
  } else {
    out << "train.grad_clip_norm = none\n";
  }
  out << "train.seed = " << train.seed << '\n';
  out << "train.loss_combination = "
      << (train.loss_combination == LossCombination::mean ? "mean" : "sum") << '\n';
  out << "checkpoint_every_epoch = " << (checkpoint_every_epoch ? "true" : "false") << '\n';
  return out.str();
}

}  // namespace sentspan
