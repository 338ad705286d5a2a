#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "a2os2a/checkpoint.hpp"
#include "support.hpp"

using namespace a2os2a;
using namespace a2os2a::testing;

namespace {

ModelConfig small() {
  ModelConfig cfg;
  cfg.layers = 1;
  cfg.dim = 16;
  cfg.timesteps = 2;
  cfg.image_height = 8;
  cfg.image_width = 8;
  return cfg;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "a2os2a_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("checkpoint header layout") {
  auto model = SpikingTransformer<float>::create(small(), 1);
  auto bytes = serialize_checkpoint(model);
  REQUIRE(bytes.size() > 15);
  CHECK(std::string(bytes.begin(), bytes.begin() + 7) == "A2OS2A1");
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= std::uint64_t{bytes[7 + i]} << (8 * i);
  const std::string text(bytes.begin() + 15, bytes.begin() + 15 + n);
  CHECK(text.find("dim=16\n") != std::string::npos);
  CHECK(text.find("attention=a2os2a\n") != std::string::npos);
}

TEST_CASE("save, load, save is byte-identical") {
  auto model = SpikingTransformer<float>::create(small(), 2);
  Rng rng(3);
  std::vector<float> img(2 * 3 * 8 * 8);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = float(i % 7) / 7.0f;
  model.forward(Tensor<float>({2, 3, 8, 8}, img), Mode::train);  // populate BN statistics
  auto a = serialize_checkpoint(model);
  auto loaded = deserialize_checkpoint<float>(a);
  CHECK(serialize_checkpoint(loaded) == a);

  auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(model, path);
  auto from_disk = load_checkpoint<float>(path);
  CHECK(serialize_checkpoint(from_disk) == a);
  CHECK(read_checkpoint_config(path).to_key_values() == small().to_key_values());

  auto x = Tensor<float>({2, 3, 8, 8}, img);
  auto l1 = model.forward(x, Mode::eval);
  auto l2 = from_disk.forward(x, Mode::eval);
  CHECK(std::equal(l1.values().begin(), l1.values().end(), l2.values().begin()));
}

TEST_CASE("uninitialised BN statistics survive a round trip") {
  auto model = SpikingTransformer<float>::create(small(), 4);
  auto bytes = serialize_checkpoint(model);
  auto loaded = deserialize_checkpoint<float>(bytes);
  for (auto& [name, bn] : loaded.batch_norms()) CHECK_FALSE(bn->state.initialized);
  CHECK(serialize_checkpoint(loaded) == bytes);
}

TEST_CASE("malformed checkpoints raise format errors with offsets") {
  auto model = SpikingTransformer<float>::create(small(), 5);
  auto bytes = serialize_checkpoint(model);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint<float>(bad_magic), FormatError);

  auto truncated = std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + bytes.size() / 2);
  try {
    deserialize_checkpoint<float>(truncated);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() <= truncated.size());
    CHECK(e.offset() > 0);
  }
  CHECK_THROWS_AS(deserialize_checkpoint<float>({}), FormatError);

  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(deserialize_checkpoint<float>(trailing), FormatError);
}

TEST_CASE("shape mismatch against the stored config is a compatibility error") {
  auto model = SpikingTransformer<float>::create(small(), 6);
  auto bytes = serialize_checkpoint(model);
  // Rewrite dim=16 to dim=24 in the header: every tensor now has the wrong shape.
  std::string all(bytes.begin(), bytes.end());
  const auto at = all.find("dim=16");
  REQUIRE(at != std::string::npos);
  bytes[at + 4] = '2';
  bytes[at + 5] = '4';
  CHECK_THROWS_AS(deserialize_checkpoint<float>(bytes), CompatibilityError);
}
