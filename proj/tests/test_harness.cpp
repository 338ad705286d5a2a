#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "a2os2a/checkpoint.hpp"
#include "a2os2a/training.hpp"

using namespace a2os2a;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "a2os2a_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

ExperimentConfig tiny_experiment(const std::string& name) {
  ExperimentConfig cfg;
  cfg.model.layers = 1;
  cfg.model.dim = 16;
  cfg.model.timesteps = 2;
  cfg.model.image_height = 8;
  cfg.model.image_width = 8;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  cfg.synthetic_train = 64;
  cfg.synthetic_val = 32;
  cfg.output_dir = temp_dir(name);
  return cfg;
}

}  // namespace

TEST_CASE("experiment config parsing") {
  auto cfg = parse_experiment_config(
      "# comment\n"
      "layers = 1\n"
      "dim = 32   # trailing comment\n"
      "attention = vssa\n"
      "optimizer = adamw\n"
      "learning_rate = 0.001\n"
      "epochs = 3\n"
      "\n"
      "seed = 7\n");
  CHECK(cfg.model.layers == 1);
  CHECK(cfg.model.dim == 32);
  CHECK(cfg.model.attention.variant == AttentionVariant::vssa);
  CHECK(cfg.optimizer.kind == OptimizerKind::adamw);
  CHECK(cfg.optimizer.learning_rate == 0.001);
  CHECK(cfg.epochs == 3);
  CHECK(cfg.seed == 7);
  CHECK_THROWS_AS(parse_experiment_config("unknown_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("dim\n"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("epochs = many\n"), ConfigError);

  auto again = parse_experiment_config(cfg.to_text());
  CHECK(again.to_text() == cfg.to_text());

  ExperimentConfig missing;
  missing.dataset = "/nonexistent/data.bin";
  CHECK_THROWS_AS(missing.validate(), ConfigError);
}

TEST_CASE("SPKT round trip and errors") {
  SyntheticSpec spec{20, 4, 2, 3, 5, 0.05, 1};
  auto data = make_synthetic(spec);
  auto bytes = write_spkt(data);
  CHECK(bytes.size() == 20 + 20 * (2 + 4 * 30));
  auto back = read_spkt(bytes, 4);
  REQUIRE(back.size() == 20);
  CHECK(back.channels == 2);
  CHECK(back.height == 3);
  CHECK(back.width == 5);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(back.samples[i].label == data.samples[i].label);
    CHECK(back.samples[i].image == data.samples[i].image);
  }

  CHECK_THROWS_AS(read_spkt({}, 4), FormatError);
  auto truncated = std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 3);
  try {
    read_spkt(truncated, 4);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 20 + 19 * (2 + 4 * 30));
  }
  CHECK_THROWS_AS(read_spkt(bytes, 3), DataError);  // labels up to 3 exist
  auto bad_magic = bytes;
  bad_magic[1] = 'Q';
  CHECK_THROWS_AS(read_spkt(bad_magic, 4), FormatError);
}

TEST_CASE("empty dataset file is a format error") {
  auto dir = temp_dir("empty");
  std::ofstream(dir / "empty.bin").close();
  CHECK_THROWS_AS(load_dataset(dir / "empty.bin", DatasetFormat::automatic, 10), FormatError);
  CHECK_THROWS_AS(load_dataset(dir / "empty.bin", DatasetFormat::cifar10, 10), FormatError);
}

TEST_CASE("CIFAR binary batch parses to 10000 samples") {
  auto dir = temp_dir("cifar");
  std::vector<std::uint8_t> bytes(10000 * 3073);
  for (std::size_t r = 0; r < 10000; ++r) {
    bytes[r * 3073] = static_cast<std::uint8_t>(r % 10);
    for (std::size_t i = 1; i < 3073; ++i) bytes[r * 3073 + i] = static_cast<std::uint8_t>((r + i) % 256);
  }
  {
    std::ofstream out(dir / "data_batch_1.bin", std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  }
  auto data = load_dataset(dir / "data_batch_1.bin", DatasetFormat::automatic, 10);
  REQUIRE(data.size() == 10000);
  CHECK(data.channels == 3);
  CHECK(data.height == 32);
  CHECK(data.width == 32);
  CHECK(data.samples[3].label == 3);
  CHECK(data.samples[0].image[0] == 1.0f / 255.0f);
  CHECK(data.samples[0].image.size() == 3072);

  bytes[5 * 3073] = 10;
  CHECK_THROWS_AS(read_cifar10(bytes), DataError);
  bytes.pop_back();
  CHECK_THROWS_AS(read_cifar10(bytes), FormatError);
}

TEST_CASE("synthetic data is balanced, bounded and seeded") {
  auto a = make_synthetic({200, 10, 3, 8, 8, 0.05, 3});
  std::map<int, int> hist;
  for (const auto& s : a.samples) {
    ++hist[s.label];
    for (float v : s.image) CHECK((v >= 0.0f && v <= 1.0f));
  }
  CHECK(hist.size() == 10);
  for (const auto& [label, count] : hist) CHECK(count == 20);
  auto b = make_synthetic({200, 10, 3, 8, 8, 0.05, 3});
  CHECK(a.samples[17].image == b.samples[17].image);
  auto c = make_synthetic({200, 10, 3, 8, 8, 0.05, 4});
  CHECK(a.samples[17].image != c.samples[17].image);

  CHECK(epoch_order(50, 1, 1) == epoch_order(50, 1, 1));
  CHECK(epoch_order(50, 1, 1) != epoch_order(50, 1, 2));
}

TEST_CASE("train smoke: one epoch writes metrics and a loadable checkpoint") {
  auto cfg = tiny_experiment("smoke");
  auto res = train(cfg);
  CHECK(res.epochs_run == 1);
  REQUIRE(std::filesystem::exists(res.checkpoint));
  auto model = load_checkpoint<float>(res.checkpoint);
  CHECK(model.config().to_key_values() == cfg.model.to_key_values());

  std::ifstream in(cfg.output_dir / "metrics.jsonl");
  std::string line;
  std::vector<nlohmann::json> records;
  while (std::getline(in, line)) records.push_back(nlohmann::json::parse(line));
  REQUIRE(records.size() == 2);
  CHECK(records[0]["split"] == "train");
  CHECK(records[1]["split"] == "val");
  for (const auto& r : records) {
    CHECK(r["accuracy"].get<double>() >= 0.0);
    CHECK(r["accuracy"].get<double>() <= 1.0);
    CHECK(r["epoch"] == 1);
  }

  // Evaluating the saved checkpoint reproduces the validation accuracy.
  auto [train_data, val_data] = load_experiment_data(cfg);
  auto eval = evaluate(res.checkpoint, val_data);
  CHECK(eval.accuracy == records[1]["accuracy"].get<double>());
  CHECK(eval.loss == doctest::Approx(records[1]["loss"].get<double>()).epsilon(1e-12));
}

TEST_CASE("identical seeds give identical epoch-1 loss") {
  auto a = train(tiny_experiment("det_a"));
  auto b = train(tiny_experiment("det_b"));
  CHECK(a.metrics[0].loss == b.metrics[0].loss);
  CHECK(a.metrics[1].accuracy == b.metrics[1].accuracy);
}

TEST_CASE("evaluate matches a hand tally and never mutates the model") {
  auto cfg = tiny_experiment("tally");
  auto res = train(cfg);
  auto model = load_checkpoint<float>(res.checkpoint);
  auto before = serialize_checkpoint(model);

  Dataset subset = make_synthetic({32, 10, 3, 8, 8, 0.05, 99});
  auto rec = evaluate(model, subset, 5);
  CHECK(serialize_checkpoint(model) == before);

  std::size_t correct = 0;
  for (const auto& s : subset.samples) {
    auto logits = model.forward(Tensor<float>({3, 8, 8}, std::vector<float>(s.image)), Mode::eval);
    const auto v = logits.values();
    if (std::max_element(v.begin(), v.end()) - v.begin() == s.label) ++correct;
  }
  CHECK(rec.correct == correct);
  CHECK(rec.accuracy == double(correct) / 32.0);
}

TEST_CASE("evaluate rejects incompatible data") {
  auto cfg = tiny_experiment("compat");
  auto res = train(cfg);
  auto wrong_size = make_synthetic({8, 10, 3, 16, 16, 0.05, 1});
  CHECK_THROWS_AS(evaluate(res.checkpoint, wrong_size), CompatibilityError);
  auto too_many_classes = make_synthetic({24, 12, 3, 8, 8, 0.05, 1});
  CHECK_THROWS_AS(evaluate(res.checkpoint, too_many_classes), CompatibilityError);
}

TEST_CASE("divergence aborts with a diagnostic record") {
  auto cfg = tiny_experiment("diverge");
  cfg.optimizer.learning_rate = 1e38;
  cfg.epochs = 3;
  CHECK_THROWS_AS(train(cfg), DivergenceError);
  std::ifstream in(cfg.output_dir / "metrics.jsonl");
  std::string line, last;
  while (std::getline(in, line)) last = line;
  CHECK(nlohmann::json::parse(last)["split"] == "diverged");
}

TEST_CASE("compare emits one row per variant with equal parameter counts") {
  auto cfg = tiny_experiment("compare");
  auto table = compare_variants(cfg, {AttentionVariant::vsa, AttentionVariant::a2os2a});
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[0].parameters == table.rows[1].parameters);
  CHECK(table.rows[0].attention.multiplications > 0);
  CHECK(table.rows[1].attention.multiplications == 0);
  CHECK(table.to_text().find("94.91") != std::string::npos);
  CHECK_THROWS_AS(compare_variants(cfg, {AttentionVariant::a2os2a}), ConfigError);
}
