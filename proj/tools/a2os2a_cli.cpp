// Command-line driver: train, eval, compare, analyze, synth.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "a2os2a/analysis.hpp"
#include "a2os2a/checkpoint.hpp"
#include "a2os2a/training.hpp"

using namespace a2os2a;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

ExperimentConfig load_config(const std::string& path, const Globals& g) {
  ExperimentConfig cfg = load_experiment_config(path);
  if (g.seed) cfg.seed = *g.seed;
  if (g.out_dir) cfg.output_dir = *g.out_dir;
  return cfg;
}

void print_epoch(const MetricsRecord& tr, const MetricsRecord* val) {
  std::cerr << "epoch " << tr.epoch << "  loss " << tr.loss << "  train_acc " << tr.accuracy;
  if (val) std::cerr << "  val_acc " << val->accuracy;
  std::cerr << "  spike_rate " << tr.spike_rate << "  t " << tr.wall_time << "s\n";
}

/// "synthetic" (optionally "synthetic:<samples>") or a dataset file.
Dataset load_data(const std::string& spec, const std::string& format, const ModelConfig& m,
                  std::uint64_t seed) {
  if (spec.rfind("synthetic", 0) == 0) {
    SyntheticSpec s{256, m.num_classes, m.in_channels, m.image_height, m.image_width, 0.05, seed};
    if (spec.size() > 10 && spec[9] == ':') s.samples = std::stoul(spec.substr(10));
    return make_synthetic(s);
  }
  return load_dataset(spec, parse_dataset_format(format), m.num_classes);
}

std::vector<AttentionVariant> parse_variants(const std::string& list) {
  std::vector<AttentionVariant> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_attention_variant(item));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spiking Transformer with addition-only spiking self-attention"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Override the configured seed");
  app.add_option("--out-dir", g.out_dir, "Override the output directory");

  std::string config_path, checkpoint_path, data_spec, format = "auto", variants = "vssa,a2os2a";
  std::string report_format = "kv";
  bool capacity = false, opcount = false;
  std::size_t batch_size = 64;

  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file");
  train_cmd->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", data_spec, "Dataset file or synthetic[:N]")->required();
  eval_cmd->add_option("--format", format, "auto, spkt or cifar10");
  eval_cmd->add_option("--batch-size", batch_size);

  auto* compare_cmd = app.add_subcommand("compare", "Train several attention variants");
  compare_cmd->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  compare_cmd->add_option("--variants", variants, "Comma-separated list");
  compare_cmd->add_option("--report", report_format, "text or jsonl");

  auto* analyze_cmd = app.add_subcommand("analyze", "Capacity and operation counts");
  analyze_cmd->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
  analyze_cmd->add_flag("--capacity", capacity);
  analyze_cmd->add_flag("--opcount", opcount);
  analyze_cmd->add_option("--data", data_spec, "Sample source for --opcount");
  analyze_cmd->add_option("--format", format);
  analyze_cmd->add_option("--report", report_format, "kv or jsonl");

  std::string synth_out;
  SyntheticSpec synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic SPKT dataset");
  synth_cmd->add_option("--out", synth_out)->required();
  synth_cmd->add_option("--samples", synth.samples);
  synth_cmd->add_option("--classes", synth.num_classes);
  synth_cmd->add_option("--channels", synth.channels);
  synth_cmd->add_option("--height", synth.height);
  synth_cmd->add_option("--width", synth.width);
  synth_cmd->add_option("--noise", synth.noise);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      const auto cfg = load_config(config_path, g);
      const auto res = train(cfg, print_epoch);
      std::cout << "checkpoint " << res.checkpoint.string() << "\nbest_epoch " << res.best_epoch
                << "\nbest_accuracy " << res.best_val_accuracy << "\nfinal_train_accuracy "
                << res.final_train_accuracy << '\n';
    } else if (*eval_cmd) {
      const ModelConfig m = read_checkpoint_config(checkpoint_path);
      const Dataset data = load_data(data_spec, format, m, g.seed.value_or(0));
      std::cout << evaluate(checkpoint_path, data, batch_size).to_json() << '\n';
    } else if (*compare_cmd) {
      const auto cfg = load_config(config_path, g);
      const auto table = compare_variants(cfg, parse_variants(variants), print_epoch);
      std::cout << (report_format == "jsonl" ? table.to_jsonl() : table.to_text());
    } else if (*analyze_cmd) {
      auto model = load_checkpoint<float>(checkpoint_path);
      if (!capacity && !opcount) capacity = opcount = true;
      if (capacity) {
        for (const auto& row : attention_capacity_table(model.config())) {
          if (report_format == "jsonl") {
            nlohmann::ordered_json j{{"variant", row.variant}, {"tensor", row.tensor},
                                     {"kind", row.kind}, {"bits", row.bits}};
            std::cout << j.dump() << '\n';
          } else {
            std::cout << "capacity." << row.variant << '.' << row.tensor << '=' << row.bits
                      << "  # " << row.kind << '\n';
          }
        }
      }
      if (opcount) {
        const Dataset data = load_data(data_spec.empty() ? "synthetic:1" : data_spec, format,
                                       model.config(), g.seed.value_or(0));
        check_compatible(model.config(), data);
        const std::size_t first = 0;
        const auto report =
            count_ops(model, make_batch<float>(data, std::span<const std::size_t>(&first, 1)));
        std::cout << (report_format == "jsonl" ? report.to_jsonl() : report.to_key_value());
      }
    } else if (*synth_cmd) {
      synth.seed = g.seed.value_or(0);
      save_spkt(make_synthetic(synth), synth_out);
      std::cout << "wrote " << synth.samples << " samples to " << synth_out << '\n';
    }
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
