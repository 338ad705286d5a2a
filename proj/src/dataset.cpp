#include "a2os2a/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

namespace a2os2a {

namespace {

std::uint32_t get_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[at + i]} << (8 * i);
  return v;
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

constexpr std::size_t kSpktHeader = 20;
constexpr std::size_t kCifarPixels = 3 * 32 * 32;

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

DatasetFormat parse_dataset_format(const std::string& text) {
  if (text == "auto") return DatasetFormat::automatic;
  if (text == "spkt") return DatasetFormat::spkt;
  if (text == "cifar10") return DatasetFormat::cifar10;
  throw ConfigError("unknown dataset format '" + text + "'");
}

Dataset read_spkt(const std::vector<std::uint8_t>& bytes, std::size_t num_classes) {
  if (bytes.empty()) throw FormatError("empty dataset file", 0);
  if (bytes.size() < 4 || !std::equal(bytes.begin(), bytes.begin() + 4, "SPKT")) {
    throw FormatError("missing SPKT magic", 0);
  }
  if (bytes.size() < kSpktHeader) throw FormatError("truncated SPKT header", bytes.size());
  Dataset d;
  const std::size_t count = get_u32(bytes, 4);
  d.channels = get_u32(bytes, 8);
  d.height = get_u32(bytes, 12);
  d.width = get_u32(bytes, 16);
  d.num_classes = num_classes;
  if (count == 0) throw FormatError("SPKT file holds no samples", 4);
  if (d.image_size() == 0) throw FormatError("SPKT image size is zero", 8);
  const std::size_t record = 2 + 4 * d.image_size();
  d.samples.reserve(std::min(count, (bytes.size() - kSpktHeader) / record + 1));
  std::size_t at = kSpktHeader;
  for (std::size_t i = 0; i < count; ++i) {
    if (bytes.size() - at < record) {
      throw FormatError("truncated SPKT record " + std::to_string(i), at);
    }
    Sample s;
    s.label = bytes[at] | (bytes[at + 1] << 8);
    if (static_cast<std::size_t>(s.label) >= num_classes) {
      throw DataError("label " + std::to_string(s.label) + " at byte " + std::to_string(at) +
                      " is outside [0," + std::to_string(num_classes) + ")");
    }
    at += 2;
    s.image.resize(d.image_size());
    for (float& v : s.image) {
      v = std::bit_cast<float>(get_u32(bytes, at));
      if (!std::isfinite(v)) throw FormatError("non-finite pixel value", at);
      at += 4;
    }
    d.samples.push_back(std::move(s));
  }
  if (at != bytes.size()) throw FormatError("trailing bytes after last SPKT record", at);
  return d;
}

Dataset read_cifar10(const std::vector<std::uint8_t>& bytes, std::size_t num_classes) {
  if (bytes.empty()) throw FormatError("empty dataset file", 0);
  constexpr std::size_t record = 1 + kCifarPixels;
  if (bytes.size() % record != 0) {
    throw FormatError("CIFAR file size is not a multiple of 3073", bytes.size() / record * record);
  }
  Dataset d{3, 32, 32, num_classes, {}};
  d.samples.reserve(bytes.size() / record);
  for (std::size_t at = 0; at < bytes.size(); at += record) {
    Sample s;
    s.label = bytes[at];
    if (static_cast<std::size_t>(s.label) >= num_classes) {
      throw DataError("label " + std::to_string(s.label) + " at byte " + std::to_string(at) +
                      " is outside [0," + std::to_string(num_classes) + ")");
    }
    s.image.resize(kCifarPixels);
    for (std::size_t i = 0; i < kCifarPixels; ++i) s.image[i] = bytes[at + 1 + i] / 255.0f;
    d.samples.push_back(std::move(s));
  }
  return d;
}

std::vector<std::uint8_t> write_spkt(const Dataset& data) {
  std::vector<std::uint8_t> out{'S', 'P', 'K', 'T'};
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  put_u32(out, static_cast<std::uint32_t>(data.channels));
  put_u32(out, static_cast<std::uint32_t>(data.height));
  put_u32(out, static_cast<std::uint32_t>(data.width));
  out.reserve(out.size() + data.size() * (2 + 4 * data.image_size()));
  for (const auto& s : data.samples) {
    if (s.image.size() != data.image_size()) throw DimensionError("sample size mismatch");
    out.push_back(static_cast<std::uint8_t>(s.label));
    out.push_back(static_cast<std::uint8_t>(s.label >> 8));
    for (float v : s.image) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     std::size_t num_classes) {
  const auto bytes = read_bytes(path);
  if (format == DatasetFormat::automatic) {
    const bool spkt = bytes.size() >= 4 && std::equal(bytes.begin(), bytes.begin() + 4, "SPKT");
    format = spkt ? DatasetFormat::spkt : DatasetFormat::cifar10;
  }
  return format == DatasetFormat::spkt ? read_spkt(bytes, num_classes)
                                       : read_cifar10(bytes, num_classes);
}

void save_spkt(const Dataset& data, const std::filesystem::path& path) {
  const auto bytes = write_spkt(data);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.samples == 0 || spec.num_classes == 0 || spec.channels == 0 || spec.height == 0 ||
      spec.width == 0) {
    throw ConfigError("synthetic dataset dimensions must be positive");
  }
  Dataset d{spec.channels, spec.height, spec.width, spec.num_classes, {}};
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> jitter(-1.5, 1.5);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, spec.noise);

  const double H = double(spec.height), W = double(spec.width);
  const double side = std::min(H, W);
  const double radius = 0.28 * side;
  const double sigma = 0.12 * side;
  const double freq = 2.0 * std::numbers::pi / std::max(2.0, side / 4.0);
  const double K = double(spec.num_classes);

  std::vector<int> labels(spec.samples);
  for (std::size_t i = 0; i < spec.samples; ++i) labels[i] = int(i % spec.num_classes);
  std::shuffle(labels.begin(), labels.end(), rng);

  d.samples.reserve(spec.samples);
  for (int label : labels) {
    const double a = 2.0 * std::numbers::pi * label / K;
    const double cx = W / 2 + radius * std::cos(a) + jitter(rng);
    const double cy = H / 2 + radius * std::sin(a) + jitter(rng);
    const double theta = std::numbers::pi * label / K;
    const double phase = phase_dist(rng);
    Sample s;
    s.label = label;
    s.image.resize(d.image_size());
    for (std::size_t c = 0; c < spec.channels; ++c) {
      const double colour =
          0.5 + 0.5 * std::cos(a + 2.0 * std::numbers::pi * double(c) / double(spec.channels));
      for (std::size_t y = 0; y < spec.height; ++y) {
        for (std::size_t x = 0; x < spec.width; ++x) {
          const double dx = double(x) - cx, dy = double(y) - cy;
          const double blob = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
          const double stripe =
              0.5 + 0.5 * std::sin(freq * (double(x) * std::cos(theta) + double(y) * std::sin(theta)) + phase);
          const double v = 0.15 + 0.55 * blob * colour + 0.2 * stripe + noise(rng);
          s.image[(c * spec.height + y) * spec.width + x] = float(std::clamp(v, 0.0, 1.0));
        }
      }
    }
    d.samples.push_back(std::move(s));
  }
  return d;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ull * (epoch + 1)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

template <typename R>
Tensor<R> make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  const std::size_t per = data.image_size();
  std::vector<R> values;
  values.reserve(indices.size() * per);
  for (std::size_t i : indices) {
    if (i >= data.size()) throw DimensionError("batch index out of range");
    const auto& img = data.samples[i].image;
    values.insert(values.end(), img.begin(), img.end());
  }
  return Tensor<R>({indices.size(), data.channels, data.height, data.width}, std::move(values));
}

std::vector<int> batch_labels(const Dataset& data, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(data.samples.at(i).label);
  return out;
}

template Tensor<float> make_batch<float>(const Dataset&, std::span<const std::size_t>);
template Tensor<double> make_batch<double>(const Dataset&, std::span<const std::size_t>);

}  // namespace a2os2a
