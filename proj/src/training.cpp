#include "a2os2a/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "a2os2a/checkpoint.hpp"
#include "a2os2a/optimizer.hpp"

namespace a2os2a {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename R>
std::size_t count_correct(const Tensor<R>& logits, std::span<const int> labels) {
  const std::size_t classes = logits.dim(1);
  auto v = logits.values();
  std::size_t correct = 0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const R* row = v.data() + b * classes;
    const auto best = std::max_element(row, row + classes) - row;
    if (best == labels[b]) ++correct;
  }
  return correct;
}

std::span<const std::size_t> batch_slice(const std::vector<std::size_t>& order, std::size_t start,
                                         std::size_t batch_size) {
  const std::size_t end = std::min(order.size(), start + batch_size);
  return std::span<const std::size_t>(order.data() + start, end - start);
}

}  // namespace

std::string MetricsRecord::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["split"] = split;
  if (std::isfinite(loss)) j["loss"] = loss;
  else j["loss"] = std::isnan(loss) ? "nan" : (loss > 0 ? "inf" : "-inf");
  j["accuracy"] = accuracy;
  j["correct"] = correct;
  j["samples"] = samples;
  j["wall_time"] = wall_time;
  j["spike_rate"] = spike_rate;
  return j.dump();
}

void check_compatible(const ModelConfig& cfg, const Dataset& data) {
  if (data.channels != cfg.in_channels || data.height != cfg.image_height ||
      data.width != cfg.image_width) {
    throw CompatibilityError("dataset images are " + std::to_string(data.channels) + "x" +
                             std::to_string(data.height) + "x" + std::to_string(data.width) +
                             ", model expects " + std::to_string(cfg.in_channels) + "x" +
                             std::to_string(cfg.image_height) + "x" +
                             std::to_string(cfg.image_width));
  }
  for (const auto& s : data.samples) {
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= cfg.num_classes) {
      throw CompatibilityError("label " + std::to_string(s.label) + " exceeds the model's " +
                               std::to_string(cfg.num_classes) + " classes");
    }
  }
}

std::pair<Dataset, Dataset> load_experiment_data(const ExperimentConfig& cfg) {
  const auto& m = cfg.model;
  Dataset train_data, val_data;
  if (cfg.dataset == "synthetic") {
    SyntheticSpec spec{cfg.synthetic_train, m.num_classes, m.in_channels, m.image_height,
                       m.image_width, cfg.synthetic_noise, cfg.seed};
    train_data = make_synthetic(spec);
    if (cfg.synthetic_val > 0) {
      spec.samples = cfg.synthetic_val;
      spec.seed = cfg.seed + 1;
      val_data = make_synthetic(spec);
    }
  } else {
    const auto format = parse_dataset_format(cfg.dataset_format);
    train_data = load_dataset(cfg.dataset, format, m.num_classes);
    if (!cfg.val_dataset.empty()) val_data = load_dataset(cfg.val_dataset, format, m.num_classes);
  }
  if (val_data.size() == 0) {
    val_data = Dataset{train_data.channels, train_data.height, train_data.width,
                       train_data.num_classes, {}};
  }
  return {std::move(train_data), std::move(val_data)};
}

template <typename R>
MetricsRecord evaluate(SpikingTransformer<R>& model, const Dataset& data, std::size_t batch_size) {
  check_compatible(model.config(), data);
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  NoGradScope<R> no_grad;
  MetricsRecord rec;
  rec.split = "eval";
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  double loss_sum = 0.0;
  std::uint64_t elements = 0, nonzero = 0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const auto idx = batch_slice(order, start, batch_size);
    const auto labels = batch_labels(data, idx);
    ForwardTrace trace;
    const Tensor<R> logits = model.forward(make_batch<R>(data, idx), Mode::eval, &trace);
    loss_sum += double(cross_entropy(logits, labels).item()) * double(idx.size());
    rec.correct += count_correct(logits, labels);
    for (const auto& f : trace.firing()) {
      elements += f.stats.elements;
      nonzero += f.stats.nonzero;
    }
  }
  rec.samples = data.size();
  rec.loss = rec.samples ? loss_sum / double(rec.samples) : 0.0;
  rec.accuracy = rec.samples ? double(rec.correct) / double(rec.samples) : 0.0;
  rec.spike_rate = elements ? double(nonzero) / double(elements) : 0.0;
  return rec;
}

MetricsRecord evaluate(const std::filesystem::path& checkpoint, const Dataset& data,
                       std::size_t batch_size) {
  auto model = load_checkpoint<float>(checkpoint);
  return evaluate(model, data, batch_size);
}

template <typename R>
void calibrate_batch_norm(SpikingTransformer<R>& model, const Dataset& data,
                          std::size_t batch_size, std::size_t max_batches) {
  check_compatible(model.config(), data);
  NoGradScope<R> no_grad;
  model.reset_batch_norm_statistics(true);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size() && batches < max_batches;
       start += batch_size, ++batches) {
    model.forward(make_batch<R>(data, batch_slice(order, start, batch_size)), Mode::train);
  }
  for (auto& [name, bn] : model.batch_norms()) bn->state.cumulative = false;
}

TrainResult train(const ExperimentConfig& cfg, const Dataset& train_data, const Dataset& val_data,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  check_compatible(cfg.model, train_data);
  if (val_data.size() > 0) check_compatible(cfg.model, val_data);
  if (train_data.size() == 0) throw DataError("training set is empty");

  std::filesystem::create_directories(cfg.output_dir);
  TrainResult result;
  result.checkpoint = cfg.output_dir / "best.ckpt";
  std::ofstream metrics_out(cfg.output_dir / "metrics.jsonl", std::ios::trunc);
  if (!metrics_out) throw Error("cannot write metrics to " + cfg.output_dir.string());
  auto emit = [&](const MetricsRecord& rec) {
    metrics_out << rec.to_json() << '\n';
    metrics_out.flush();
    result.metrics.push_back(rec);
  };

  const auto start_time = Clock::now();
  auto model = SpikingTransformer<float>::create(cfg.model, cfg.seed);
  const std::size_t steps_per_epoch = (train_data.size() + cfg.batch_size - 1) / cfg.batch_size;
  Optimizer<float> opt(cfg.optimizer, model.parameters(), steps_per_epoch * cfg.epochs,
                       steps_per_epoch);

  double best_score = -1.0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = epoch_order(train_data.size(), cfg.seed, epoch);
    MetricsRecord tr;
    tr.epoch = epoch;
    tr.split = "train";
    double loss_sum = 0.0;
    std::uint64_t elements = 0, nonzero = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto idx = batch_slice(order, start, cfg.batch_size);
      const auto labels = batch_labels(train_data, idx);
      Tape<float> tape;
      TapeScope<float> scope(tape);
      ForwardTrace trace;
      const Tensor<float> logits = model.forward(make_batch<float>(train_data, idx), Mode::train,
                                                 &trace);
      const Tensor<float> loss = cross_entropy(logits, labels);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        MetricsRecord diag = tr;
        diag.split = "diverged";
        diag.loss = value;
        diag.samples = start;
        diag.wall_time = seconds_since(start_time);
        emit(diag);
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                              std::to_string(start));
      }
      tape.backward(loss);
      opt.step();
      loss_sum += value * double(idx.size());
      tr.correct += count_correct(logits, labels);
      for (const auto& f : trace.firing()) {
        elements += f.stats.elements;
        nonzero += f.stats.nonzero;
      }
    }
    tr.samples = train_data.size();
    tr.loss = loss_sum / double(tr.samples);
    tr.accuracy = double(tr.correct) / double(tr.samples);
    tr.spike_rate = elements ? double(nonzero) / double(elements) : 0.0;
    tr.wall_time = seconds_since(start_time);
    emit(tr);

    std::optional<MetricsRecord> val;
    if (val_data.size() > 0) {
      val = evaluate(model, val_data, std::max<std::size_t>(cfg.batch_size, 64));
      val->epoch = epoch;
      val->split = "val";
      val->wall_time = seconds_since(start_time);
      emit(*val);
    }
    const double score = val ? val->accuracy : tr.accuracy;
    if (score > best_score) {
      best_score = score;
      result.best_epoch = epoch;
      result.best_val_accuracy = score;
      save_checkpoint(model, result.checkpoint);
    }
    result.epochs_run = epoch;
    result.final_train_accuracy = tr.accuracy;
    if (on_epoch) on_epoch(tr, val ? &*val : nullptr);
    if (cfg.target_train_accuracy > 0.0 && tr.accuracy >= cfg.target_train_accuracy) {
      result.reached_target = true;
      break;
    }
  }
  return result;
}

TrainResult train(const ExperimentConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  auto [train_data, val_data] = load_experiment_data(cfg);
  return train(cfg, train_data, val_data, on_epoch);
}

std::vector<ReferenceRow> published_reference_rows() {
  return {
      {"Spiking Transformer-2-256, T=4", "CIFAR-10", 94.39, 94.91},
      {"Spiking Transformer-2-256, T=4", "CIFAR-100", 76.00, 76.96},
      {"Spiking Transformer-2-512, T=4", "CIFAR-10", 95.51, 96.42},
      {"Spiking Transformer-2-512, T=4", "CIFAR-100", 78.83, 79.90},
  };
}

std::string ComparisonTable::to_text() const {
  std::ostringstream os;
  os << "# " << model_name << " (desk scale)\n";
  os << "variant  params  train_acc  val_acc  epochs  attn_adds  attn_mults  total_adds  "
        "total_mults\n";
  for (const auto& r : rows) {
    os << r.variant << "  " << r.parameters << "  " << r.train_accuracy << "  " << r.val_accuracy
       << "  " << r.epochs_run << "  " << r.attention.additions << "  "
       << r.attention.multiplications << "  " << r.total.additions << "  "
       << r.total.multiplications << '\n';
  }
  os << "# published reference (not reproduced here): model, dataset, baseline %, a2os2a %\n";
  for (const auto& r : references) {
    os << "# " << r.model << ", " << r.dataset << ", " << r.baseline_accuracy << ", "
       << r.a2os2a_accuracy << '\n';
  }
  return os.str();
}

std::string ComparisonTable::to_jsonl() const {
  std::ostringstream os;
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["model"] = model_name;
    j["variant"] = r.variant;
    j["parameters"] = r.parameters;
    j["train_accuracy"] = r.train_accuracy;
    j["val_accuracy"] = r.val_accuracy;
    j["epochs"] = r.epochs_run;
    j["attention_additions"] = r.attention.additions;
    j["attention_multiplications"] = r.attention.multiplications;
    j["total_additions"] = r.total.additions;
    j["total_multiplications"] = r.total.multiplications;
    os << j.dump() << '\n';
  }
  for (const auto& r : references) {
    nlohmann::ordered_json j;
    j["reference"] = true;
    j["model"] = r.model;
    j["dataset"] = r.dataset;
    j["baseline_accuracy"] = r.baseline_accuracy;
    j["a2os2a_accuracy"] = r.a2os2a_accuracy;
    os << j.dump() << '\n';
  }
  return os.str();
}

ComparisonTable compare_variants(const ExperimentConfig& cfg,
                                 const std::vector<AttentionVariant>& variants,
                                 const EpochCallback& on_epoch) {
  if (variants.size() < 2) throw ConfigError("compare needs at least two variants");
  cfg.validate();
  auto [train_data, val_data] = load_experiment_data(cfg);
  const Dataset& probe = val_data.size() > 0 ? val_data : train_data;
  const std::size_t probe_index = 0;

  ComparisonTable table;
  table.model_name = cfg.model.name();
  table.references = published_reference_rows();
  for (AttentionVariant variant : variants) {
    ExperimentConfig run = cfg;
    run.model.attention.variant = variant;
    run.output_dir = cfg.output_dir / to_string(variant);
    const TrainResult res = train(run, train_data, val_data, on_epoch);

    auto model = load_checkpoint<float>(res.checkpoint);
    const auto report =
        count_ops(model, make_batch<float>(probe, std::span<const std::size_t>(&probe_index, 1)));
    ComparisonRow row;
    row.variant = to_string(variant);
    row.parameters = model.parameter_count();
    row.train_accuracy = res.final_train_accuracy;
    row.val_accuracy = res.best_val_accuracy;
    row.epochs_run = res.epochs_run;
    row.attention = report.totals(OpKind::attention_product);
    row.total = report.totals();
    table.rows.push_back(row);
  }
  for (const auto& r : table.rows) {
    if (r.parameters != table.rows.front().parameters) {
      throw StateError("variants ended up with different parameter counts");
    }
  }
  return table;
}

template MetricsRecord evaluate<float>(SpikingTransformer<float>&, const Dataset&, std::size_t);
template MetricsRecord evaluate<double>(SpikingTransformer<double>&, const Dataset&, std::size_t);
template void calibrate_batch_norm<float>(SpikingTransformer<float>&, const Dataset&, std::size_t,
                                          std::size_t);
template void calibrate_batch_norm<double>(SpikingTransformer<double>&, const Dataset&,
                                           std::size_t, std::size_t);

}  // namespace a2os2a
