#include "a2os2a/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace a2os2a {

std::string to_string(OpKind kind) {
  switch (kind) {
    case OpKind::weight_layer: return "weight_layer";
    case OpKind::attention_product: return "attention_product";
    case OpKind::elementwise: return "elementwise";
    case OpKind::neuron: return "neuron";
    case OpKind::head: return "head";
  }
  return "unknown";
}

void CapacityQuery::validate() const {
  if (dims.empty()) throw ConfigError("capacity query needs at least one dimension");
  for (std::size_t d : dims) {
    if (d == 0) throw ConfigError("capacity query dimensions must be positive");
  }
  if (kind == ValueKind::real && bits == 0) throw ConfigError("real-valued width must be >= 1 bit");
}

double capacity_bits(const CapacityQuery& query) {
  query.validate();
  double elements = 1.0;
  for (std::size_t d : query.dims) elements *= static_cast<double>(d);
  switch (query.kind) {
    case ValueKind::binary: return elements;
    case ValueKind::ternary: return std::log2(3.0) * elements;
    case ValueKind::real: return static_cast<double>(query.bits) * elements;
  }
  return 0.0;
}

std::vector<CapacityRow> attention_capacity_table(const ModelConfig& cfg) {
  const std::vector<std::size_t> dims{cfg.timesteps, cfg.tokens(), cfg.dim};
  auto bits = [&](ValueKind kind) { return capacity_bits({kind, 32, dims}); };
  return {
      {"vssa", "Q", "binary", bits(ValueKind::binary)},
      {"vssa", "K", "binary", bits(ValueKind::binary)},
      {"vssa", "V", "binary", bits(ValueKind::binary)},
      {"a2os2a", "Q", "binary", bits(ValueKind::binary)},
      {"a2os2a", "K", "real32", bits(ValueKind::real)},
      {"a2os2a", "V", "ternary (extension)", bits(ValueKind::ternary)},
  };
}

OpRecord OpCountReport::totals() const {
  OpRecord t{"total", OpKind::elementwise, 0, 0, 0};
  for (const auto& r : layers) {
    t.additions += r.additions;
    t.multiplications += r.multiplications;
    t.comparisons += r.comparisons;
  }
  return t;
}

OpRecord OpCountReport::totals(OpKind kind) const {
  OpRecord t{"total." + to_string(kind), kind, 0, 0, 0};
  for (const auto& r : layers) {
    if (r.kind != kind) continue;
    t.additions += r.additions;
    t.multiplications += r.multiplications;
    t.comparisons += r.comparisons;
  }
  return t;
}

std::string OpCountReport::to_key_value() const {
  std::ostringstream os;
  for (const auto& r : layers) {
    os << "layer." << r.layer << ".kind=" << to_string(r.kind) << '\n'
       << "layer." << r.layer << ".additions=" << r.additions << '\n'
       << "layer." << r.layer << ".multiplications=" << r.multiplications << '\n'
       << "layer." << r.layer << ".comparisons=" << r.comparisons << '\n';
  }
  const OpRecord t = totals();
  os << "total.additions=" << t.additions << '\n'
     << "total.multiplications=" << t.multiplications << '\n'
     << "total.comparisons=" << t.comparisons << '\n'
     << "total.attention_product_multiplications=" << attention_product_multiplications() << '\n';
  return os.str();
}

std::string OpCountReport::to_jsonl() const {
  std::ostringstream os;
  auto line = [&os](const OpRecord& r, const std::string& kind) {
    nlohmann::json j{{"layer", r.layer},
                     {"kind", kind},
                     {"additions", r.additions},
                     {"multiplications", r.multiplications},
                     {"comparisons", r.comparisons}};
    os << j.dump() << '\n';
  };
  for (const auto& r : layers) line(r, to_string(r.kind));
  line(totals(), "total");
  return os.str();
}

OpCountReport make_report(const ForwardTrace& trace) {
  // Merge repeated records of one layer, keeping first-seen order.
  OpCountReport report;
  for (const auto& r : trace.records()) {
    auto it = std::find_if(report.layers.begin(), report.layers.end(), [&](const OpRecord& x) {
      return x.layer == r.layer && x.kind == r.kind;
    });
    if (it == report.layers.end()) {
      report.layers.push_back(r);
    } else {
      it->additions += r.additions;
      it->multiplications += r.multiplications;
      it->comparisons += r.comparisons;
    }
  }
  return report;
}

template <typename R>
OpCountReport count_ops(SpikingTransformer<R>& model, const Tensor<R>& images) {
  NoGradScope<R> no_grad;
  ForwardTrace trace;
  model.forward(images, Mode::eval, &trace);
  return make_report(trace);
}

template OpCountReport count_ops<float>(SpikingTransformer<float>&, const Tensor<float>&);
template OpCountReport count_ops<double>(SpikingTransformer<double>&, const Tensor<double>&);

}  // namespace a2os2a
