#include "dmsa/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace dmsa {

namespace {

constexpr char kMagic[8] = {'D', 'M', 'S', 'A', 'W', 'T', 'S', '1'};

enum : std::uint8_t { kBinary = 0, kTernary = 1, kFloat = 2, kActivation = 3, kBatchNorm = 4 };
enum : std::uint8_t { kInt8 = 1, kF64 = 2 };

static_assert(std::endian::native == std::endian::little, "weights I/O assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::size_t v) {
    if (v > 0xffffffffu) throw WeightsFormatError("dimension too large for the weights container");
    const auto x = static_cast<std::uint32_t>(v);
    bytes(&x, 4);
  }
  void f64(double v) { bytes(&v, 8); }
  void f64s(std::span<const double> v) {
    for (double x : v) f64(x);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  void bytes(void* p, std::size_t n) {
    if (pos_ + n > in_.size()) throw WeightsFormatError("truncated weights at byte " + std::to_string(pos_));
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() {
    std::uint8_t v = 0;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    bytes(&v, 4);
    return v;
  }
  double f64() {
    double v = 0;
    bytes(&v, 8);
    return v;
  }
  Vector vec(std::size_t n) {
    if (n > remaining() / 8) throw WeightsFormatError("truncated weights at byte " + std::to_string(pos_));
    std::vector<double> v(n);
    for (double& x : v) x = f64();
    return Vector(std::move(v));
  }
  bool done() const { return pos_ == in_.size(); }
  std::size_t remaining() const { return in_.size() - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void write_int8_matrix(Writer& w, const Matrix& m) {
  w.u32(m.rows());
  w.u32(m.cols());
  w.u8(kInt8);
  for (double v : m.values()) w.u8(static_cast<std::uint8_t>(static_cast<std::int8_t>(v)));
}

Matrix read_matrix(Reader& r) {
  const std::size_t rows = r.u32();
  const std::size_t cols = r.u32();
  const std::uint8_t dtype = r.u8();
  if (dtype != kInt8 && dtype != kF64)
    throw WeightsFormatError("unknown dtype tag " + std::to_string(dtype) + " at byte " + std::to_string(r.pos() - 1));
  const std::size_t width = dtype == kInt8 ? 1 : 8;
  if (rows * cols > r.remaining() / width) throw WeightsFormatError("truncated weights at byte " + std::to_string(r.pos()));
  std::vector<double> data(rows * cols);
  for (double& v : data) v = dtype == kInt8 ? static_cast<std::int8_t>(r.u8()) : r.f64();
  return Matrix(rows, cols, std::move(data));
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::uint8_t> serialize_weights(const Network& net) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(net.input_dim());
  w.u32(net.depth());
  for (const auto& layer : net.layers()) {
    if (const auto* b = std::get_if<BinaryDense>(&layer)) {
      w.u8(kBinary);
      write_int8_matrix(w, b->theta());
    } else if (const auto* t = std::get_if<TernaryDense>(&layer)) {
      w.u8(kTernary);
      write_int8_matrix(w, t->theta());
      w.f64(t->lambda());
    } else if (const auto* f = std::get_if<FloatDense>(&layer)) {
      w.u8(kFloat);
      w.u32(f->theta().rows());
      w.u32(f->theta().cols());
      w.u8(kF64);
      w.f64s(f->theta().values());
      w.u8(f->bias() ? 1 : 0);
      if (f->bias()) w.f64s(f->bias()->values());
    } else if (const auto* a = std::get_if<Activation>(&layer)) {
      w.u8(kActivation);
      w.u8(static_cast<std::uint8_t>(a->kind));
    } else {
      const auto& bn = std::get<BatchNorm>(layer);
      w.u8(kBatchNorm);
      w.u32(bn.dim());
      w.f64(bn.eps());
      w.f64(bn.momentum());
      w.f64s(bn.gamma().values());
      w.f64s(bn.beta().values());
      w.f64s(bn.running_mean().values());
      w.f64s(bn.running_var().values());
    }
  }
  return w.take();
}

Network deserialize_weights(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw WeightsFormatError("not a weights file (bad magic)");
  const std::size_t input_dim = r.u32();
  const std::size_t count = r.u32();
  std::vector<Layer> layers;
  try {
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint8_t kind = r.u8();
      switch (kind) {
        case kBinary:
          layers.emplace_back(BinaryDense(read_matrix(r)));
          break;
        case kTernary: {
          Matrix m = read_matrix(r);
          layers.emplace_back(TernaryDense(std::move(m), r.f64()));
          break;
        }
        case kFloat: {
          Matrix m = read_matrix(r);
          std::optional<Vector> bias;
          if (r.u8() != 0) bias = r.vec(m.rows());
          layers.emplace_back(FloatDense(std::move(m), std::move(bias)));
          break;
        }
        case kActivation: {
          const std::uint8_t a = r.u8();
          if (a > static_cast<std::uint8_t>(ActivationKind::identity))
            throw WeightsFormatError("unknown activation tag " + std::to_string(a));
          layers.emplace_back(Activation{static_cast<ActivationKind>(a)});
          break;
        }
        case kBatchNorm: {
          const std::size_t dim = r.u32();
          const double eps = r.f64();
          const double momentum = r.f64();
          Vector gamma = r.vec(dim);
          Vector beta = r.vec(dim);
          Vector mean = r.vec(dim);
          Vector var = r.vec(dim);
          layers.emplace_back(BatchNorm(std::move(gamma), std::move(beta), std::move(mean), std::move(var), eps, momentum));
          break;
        }
        default:
          throw WeightsFormatError("unknown layer tag " + std::to_string(kind) + " at byte " + std::to_string(r.pos() - 1));
      }
    }
  } catch (const WeightsFormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw WeightsFormatError(std::string("invalid layer in weights file: ") + e.what());
  }
  if (!r.done()) throw WeightsFormatError("trailing bytes after the last layer");
  try {
    return Network(input_dim, std::move(layers));
  } catch (const std::exception& e) {
    throw WeightsFormatError(std::string("inconsistent weights file: ") + e.what());
  }
}

void save_weights(const std::filesystem::path& path, const Network& net) {
  const auto bytes = serialize_weights(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

Network load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read weights " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_weights(bytes);
}

std::string metrics_csv(const Network& net, const std::vector<MetricsRecord>& metrics) {
  std::string out = "epoch,step,j_train,train_error,test_error,sparsity";
  for (std::size_t t = 0; t < net.depth(); ++t) {
    if (is_discrete(net.layer(t))) out += ",sparsity_layer" + std::to_string(t);
  }
  out += "\n";
  for (const auto& m : metrics) {
    out += std::to_string(m.epoch) + "," + std::to_string(m.step) + "," + fmt(m.j_train) + "," +
           fmt(m.train_error) + "," + (m.test_error ? fmt(*m.test_error) : std::string()) + "," + fmt(m.sparsity);
    for (const auto& [layer, frac] : m.layer_sparsity) out += "," + fmt(frac);
    out += "\n";
  }
  return out;
}

nlohmann::ordered_json metrics_json(const std::vector<MetricsRecord>& metrics) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& m : metrics) {
    nlohmann::ordered_json e;
    e["epoch"] = m.epoch;
    e["step"] = m.step;
    e["j_train"] = m.j_train;
    e["train_error"] = m.train_error;
    e["test_error"] = m.test_error ? nlohmann::ordered_json(*m.test_error) : nlohmann::ordered_json(nullptr);
    e["sparsity"] = m.sparsity;
    nlohmann::ordered_json per = nlohmann::ordered_json::object();
    for (const auto& [layer, frac] : m.layer_sparsity) per[std::to_string(layer)] = frac;
    e["layer_sparsity"] = per;
    e["wall_ms"] = m.wall_ms;
    arr.push_back(std::move(e));
  }
  return arr;
}

nlohmann::ordered_json to_json(const ErrorEstimateReport& r) {
  return {{"delta_J", r.delta_j},
          {"hamiltonian_gain", r.hamiltonian_gain},
          {"penalty_f", r.penalty_f},
          {"penalty_grad_f", r.penalty_grad_f},
          {"penalty_grad_L", r.penalty_grad_l}};
}

nlohmann::ordered_json to_json(const PmpResidualReport& r) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"layer", l.layer},
                      {"kind", l.kind},
                      {"hamiltonian_gap", l.hamiltonian_gap},
                      {"state_residual", l.state_residual},
                      {"costate_residual", l.costate_residual},
                      {"singular", l.singular}});
  }
  return {{"terminal_residual", r.terminal_residual}, {"max_gap", r.max_gap()}, {"layers", layers}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("short write to " + path.string());
}

}  // namespace dmsa
