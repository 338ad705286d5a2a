#include "a2os2a/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace a2os2a {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("key '" + key + "': cannot parse '" + text + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) throw ConfigError("key '" + key + "' must be finite");
  }
  return v;
}

std::string format(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (optimizer.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (optimizer.momentum < 0.0 || optimizer.momentum >= 1.0) {
    throw ConfigError("momentum must lie in [0,1)");
  }
  if (dataset_format != "auto" && dataset_format != "spkt" && dataset_format != "cifar10") {
    throw ConfigError("dataset_format must be auto, spkt or cifar10");
  }
  if (dataset == "synthetic") {
    if (synthetic_train == 0) throw ConfigError("synthetic_train must be >= 1");
  } else if (!std::filesystem::exists(dataset)) {
    throw ConfigError("dataset '" + dataset + "' does not exist");
  }
  if (!val_dataset.empty() && !std::filesystem::exists(val_dataset)) {
    throw ConfigError("val_dataset '" + val_dataset + "' does not exist");
  }
  if (target_train_accuracy < 0.0 || target_train_accuracy > 1.0) {
    throw ConfigError("target_train_accuracy must lie in [0,1]");
  }
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : model.to_key_values()) os << k << " = " << v << '\n';
  os << "optimizer = " << (optimizer.kind == OptimizerKind::sgd ? "sgd" : "adamw") << '\n'
     << "learning_rate = " << format(optimizer.learning_rate) << '\n'
     << "momentum = " << format(optimizer.momentum) << '\n'
     << "beta2 = " << format(optimizer.beta2) << '\n'
     << "weight_decay = " << format(optimizer.weight_decay) << '\n'
     << "schedule = " << (optimizer.schedule == Schedule::cosine ? "cosine" : "constant") << '\n'
     << "warmup_epochs = " << optimizer.warmup_epochs << '\n'
     << "epochs = " << epochs << '\n'
     << "batch_size = " << batch_size << '\n'
     << "seed = " << seed << '\n'
     << "dataset = " << dataset << '\n'
     << "dataset_format = " << dataset_format << '\n';
  if (!val_dataset.empty()) os << "val_dataset = " << val_dataset << '\n';
  os << "synthetic_train = " << synthetic_train << '\n'
     << "synthetic_val = " << synthetic_val << '\n'
     << "synthetic_noise = " << format(synthetic_noise) << '\n'
     << "output_dir = " << output_dir.string() << '\n'
     << "target_train_accuracy = " << format(target_train_accuracy) << '\n';
  return os.str();
}

ExperimentConfig parse_experiment_config(std::string_view text) {
  ExperimentConfig cfg;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (value.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty value");

    if (cfg.model.set(key, value)) continue;
    if (key == "optimizer") {
      if (value == "sgd") cfg.optimizer.kind = OptimizerKind::sgd;
      else if (value == "adamw") cfg.optimizer.kind = OptimizerKind::adamw;
      else throw ConfigError("optimizer must be sgd or adamw");
    } else if (key == "learning_rate") {
      cfg.optimizer.learning_rate = parse_number<double>(key, value);
    } else if (key == "momentum") {
      cfg.optimizer.momentum = parse_number<double>(key, value);
    } else if (key == "beta2") {
      cfg.optimizer.beta2 = parse_number<double>(key, value);
    } else if (key == "weight_decay") {
      cfg.optimizer.weight_decay = parse_number<double>(key, value);
    } else if (key == "schedule") {
      if (value == "cosine") cfg.optimizer.schedule = Schedule::cosine;
      else if (value == "constant") cfg.optimizer.schedule = Schedule::constant;
      else throw ConfigError("schedule must be cosine or constant");
    } else if (key == "warmup_epochs") {
      cfg.optimizer.warmup_epochs = parse_number<std::size_t>(key, value);
    } else if (key == "epochs") {
      cfg.epochs = parse_number<std::size_t>(key, value);
    } else if (key == "batch_size") {
      cfg.batch_size = parse_number<std::size_t>(key, value);
    } else if (key == "seed") {
      cfg.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "dataset") {
      cfg.dataset = value;
    } else if (key == "dataset_format") {
      cfg.dataset_format = value;
    } else if (key == "val_dataset") {
      cfg.val_dataset = value;
    } else if (key == "synthetic_train") {
      cfg.synthetic_train = parse_number<std::size_t>(key, value);
    } else if (key == "synthetic_val") {
      cfg.synthetic_val = parse_number<std::size_t>(key, value);
    } else if (key == "synthetic_noise") {
      cfg.synthetic_noise = parse_number<double>(key, value);
    } else if (key == "output_dir") {
      cfg.output_dir = value;
    } else if (key == "target_train_accuracy") {
      cfg.target_train_accuracy = parse_number<double>(key, value);
    } else {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str());
}

}  // namespace a2os2a
