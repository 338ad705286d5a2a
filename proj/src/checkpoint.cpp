#include "a2os2a/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

namespace a2os2a {

namespace {

constexpr std::size_t kMagicLength = sizeof(kCheckpointMagic) - 1;

class Writer {
 public:
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  void raw(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void text(const std::string& s) {
    u64(s.size());
    raw(s);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32(const char* what) {
    need(4, what);
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return std::bit_cast<float>(bits);
  }
  std::string raw(std::uint64_t n, const char* what) {
    need(n, what);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::string text(const char* what) { return raw(u64(what), what); }
  std::uint64_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n, const char* what) {
    if (n > bytes_.size() - pos_) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what, pos_);
    }
  }
  const std::vector<std::uint8_t>& bytes_;
  std::uint64_t pos_ = 0;
};

std::string config_text(const ModelConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg.to_key_values()) out += k + "=" + v + "\n";
  return out;
}

ModelConfig parse_config_text(const std::string& text, std::uint64_t offset) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint config line without '='", offset);
    try {
      if (!cfg.set(line.substr(0, eq), line.substr(eq + 1))) {
        throw FormatError("checkpoint config has unknown key '" + line.substr(0, eq) + "'", offset);
      }
    } catch (const ConfigError& e) {
      throw FormatError(std::string("checkpoint config: ") + e.what(), offset);
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what(), offset);
  }
  return cfg;
}

ModelConfig read_header(Reader& reader) {
  const std::string magic = reader.raw(kMagicLength, "magic");
  if (magic != kCheckpointMagic) throw FormatError("not an A2OS2A1 checkpoint", 0);
  const std::uint64_t at = reader.offset();
  return parse_config_text(reader.text("config"), at);
}

struct RawTensor {
  Shape shape;
  std::vector<float> values;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

template <typename R>
std::vector<std::uint8_t> serialize_checkpoint(SpikingTransformer<R>& model) {
  struct Entry {
    std::string name;
    Shape shape;
    std::span<const R> values;
  };
  std::vector<Entry> entries;
  for (const auto& p : model.parameters()) entries.push_back({p.name, p.tensor.shape(), p.tensor.values()});
  for (auto& [name, bn] : model.batch_norms()) {
    const auto& st = bn->state;
    const std::size_t c = st.initialized ? st.running_mean.size() : 0;
    entries.push_back({name + ".running_mean", {c}, std::span<const R>(st.running_mean.data(), c)});
    entries.push_back({name + ".running_var", {c}, std::span<const R>(st.running_var.data(), c)});
  }

  Writer w;
  w.raw(kCheckpointMagic);
  w.text(config_text(model.config()));
  w.u64(entries.size());
  for (const auto& e : entries) {
    w.text(e.name);
    w.u64(e.shape.size());
    for (std::size_t d : e.shape) w.u64(d);
    for (R v : e.values) w.f32(static_cast<float>(v));
  }
  return w.take();
}

template <typename R>
SpikingTransformer<R> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader reader(bytes);
  const ModelConfig cfg = read_header(reader);
  const std::uint64_t count = reader.u64("tensor count");
  std::map<std::string, RawTensor> tensors;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t at = reader.offset();
    std::string name = reader.text("tensor name");
    const std::uint64_t rank = reader.u64("rank");
    if (rank > 8) throw FormatError("tensor '" + name + "' has implausible rank", at);
    RawTensor t;
    std::uint64_t numel = 1;
    for (std::uint64_t d = 0; d < rank; ++d) {
      t.shape.push_back(reader.u64("dims"));
      numel *= t.shape.back();
    }
    if (numel > bytes.size()) throw FormatError("tensor '" + name + "' larger than the file", at);
    t.values.resize(numel);
    for (float& v : t.values) v = reader.f32("elements");
    if (!tensors.emplace(name, std::move(t)).second) {
      throw FormatError("duplicate tensor '" + name + "'", at);
    }
  }
  if (!reader.done()) throw FormatError("trailing bytes after last tensor", reader.offset());

  auto model = SpikingTransformer<R>::create(cfg, 0);
  auto take = [&](const std::string& name) -> RawTensor {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint lacks tensor '" + name + "'", 0);
    RawTensor t = std::move(it->second);
    tensors.erase(it);
    return t;
  };
  for (const auto& p : model.parameters()) {
    RawTensor t = take(p.name);
    if (t.shape != p.tensor.shape()) {
      throw CompatibilityError("tensor '" + p.name + "' has shape " + shape_str(t.shape) +
                               ", config expects " + shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<R>(t.values[i]);
  }
  for (auto& [name, bn] : model.batch_norms()) {
    RawTensor mean = take(name + ".running_mean");
    RawTensor var = take(name + ".running_var");
    const std::size_t c = bn->gamma.numel();
    if (mean.values.empty() && var.values.empty()) continue;
    if (mean.values.size() != c || var.values.size() != c) {
      throw CompatibilityError("running statistics of '" + name + "' do not match its width");
    }
    bn->state.running_mean.assign(mean.values.begin(), mean.values.end());
    bn->state.running_var.assign(var.values.begin(), var.values.end());
    bn->state.initialized = true;
  }
  if (!tensors.empty()) throw FormatError("unexpected tensor '" + tensors.begin()->first + "'", 0);
  return model;
}

template <typename R>
void save_checkpoint(SpikingTransformer<R>& model, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

template <typename R>
SpikingTransformer<R> load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint<R>(read_file(path));
}

ModelConfig read_checkpoint_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  Reader reader(bytes);
  return read_header(reader);
}

template std::vector<std::uint8_t> serialize_checkpoint<float>(SpikingTransformer<float>&);
template std::vector<std::uint8_t> serialize_checkpoint<double>(SpikingTransformer<double>&);
template SpikingTransformer<float> deserialize_checkpoint<float>(const std::vector<std::uint8_t>&);
template SpikingTransformer<double> deserialize_checkpoint<double>(const std::vector<std::uint8_t>&);
template void save_checkpoint<float>(SpikingTransformer<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(SpikingTransformer<double>&, const std::filesystem::path&);
template SpikingTransformer<float> load_checkpoint<float>(const std::filesystem::path&);
template SpikingTransformer<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace a2os2a
