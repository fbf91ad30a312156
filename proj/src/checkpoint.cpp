#include "uqens/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace uqens {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'U', 'Q', 'E', 'N', 'S', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <typename T>
  void put(T v) {
    out_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void put_tensor(const Tensor& t) {
    put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put<std::uint64_t>(e);
    out_.append(reinterpret_cast<const char*>(t.raw()), t.size() * sizeof(double));
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  template <typename T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Tensor get_tensor() {
    const auto rank = get<std::uint32_t>();
    if (rank > 8) throw std::runtime_error("checkpoint tensor rank " + std::to_string(rank) + " is implausible");
    Shape shape(rank);
    for (auto& e : shape) e = get<std::uint64_t>();
    const std::size_t n = shape_size(shape);
    need(n * sizeof(double));
    std::vector<double> values(n);
    std::memcpy(values.data(), in_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return Tensor(std::move(shape), std::move(values));
  }
  void expect(const char* bytes, std::size_t n) {
    need(n);
    if (std::memcmp(in_.data() + pos_, bytes, n) != 0) throw std::runtime_error("not a uqens checkpoint");
    pos_ += n;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw std::runtime_error("truncated checkpoint");
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string network_config_to_text(const NetworkConfig& c) {
  std::ostringstream out;
  out << "input_side = " << c.input_side << '\n'
      << "input_channels = " << c.input_channels << '\n'
      << "kernel_size = " << c.kernel_size << '\n'
      << "n_residual_blocks = " << c.n_residual_blocks << '\n'
      << "channels_per_stage = " << join(c.channels_per_stage) << '\n'
      << "dropout_rate = " << exact(c.dropout_rate) << '\n'
      << "mc_samples = " << c.mc_samples << '\n'
      << "heteroscedastic = " << (c.heteroscedastic ? "true" : "false") << '\n'
      << "per_class_variance = " << (c.per_class_variance ? "true" : "false") << '\n'
      << "n_outputs = " << c.n_outputs << '\n'
      << "bn_momentum = " << exact(c.bn_momentum) << '\n'
      << "bn_epsilon = " << exact(c.bn_epsilon) << '\n';
  return out.str();
}

NetworkConfig network_config_from_text(const std::string& text) {
  NetworkConfig c;
  std::istringstream in(text);
  std::string line;
  auto as_bool = [](const std::string& v, const std::string& key) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw std::invalid_argument("expected true/false for " + key + ", got '" + v + "'");
  };
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("malformed config line: " + line);
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "input_side") c.input_side = std::stoul(value);
    else if (key == "input_channels") c.input_channels = std::stoul(value);
    else if (key == "kernel_size") c.kernel_size = std::stoul(value);
    else if (key == "n_residual_blocks") c.n_residual_blocks = std::stoul(value);
    else if (key == "channels_per_stage") {
      c.channels_per_stage.clear();
      std::istringstream parts(value);
      std::string part;
      while (std::getline(parts, part, ',')) c.channels_per_stage.push_back(std::stoul(trim(part)));
    } else if (key == "dropout_rate") c.dropout_rate = std::stod(value);
    else if (key == "mc_samples") c.mc_samples = std::stoul(value);
    else if (key == "heteroscedastic") c.heteroscedastic = as_bool(value, key);
    else if (key == "per_class_variance") c.per_class_variance = as_bool(value, key);
    else if (key == "n_outputs") c.n_outputs = std::stoul(value);
    else if (key == "bn_momentum") c.bn_momentum = std::stod(value);
    else if (key == "bn_epsilon") c.bn_epsilon = std::stod(value);
    else throw std::invalid_argument("unknown network config key: " + key);
  }
  return c;
}

std::string serialize_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kVersion);
  w.put_string(network_config_to_text(ck.config));
  w.put<std::uint64_t>(ck.params.step);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.params.parameters.size()));
  for (const auto& p : ck.params.parameters) {
    w.put_string(p.name);
    w.put_tensor(p.value);
    w.put_tensor(p.first_moment);
    w.put_tensor(p.second_moment);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ck.params.buffers.size()));
  for (const auto& b : ck.params.buffers) {
    w.put_string(b.name);
    w.put_tensor(b.value);
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  r.expect(kMagic, sizeof kMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.config = network_config_from_text(r.get_string());
  ck.config.validate();
  ck.params.step = r.get<std::uint64_t>();
  const auto n_params = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_params; ++i) {
    Parameter p;
    p.name = r.get_string();
    p.value = r.get_tensor();
    p.first_moment = r.get_tensor();
    p.second_moment = r.get_tensor();
    ck.params.parameters.push_back(std::move(p));
  }
  const auto n_buffers = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_buffers; ++i) {
    Buffer b;
    b.name = r.get_string();
    b.value = r.get_tensor();
    ck.params.buffers.push_back(std::move(b));
  }
  if (!r.done()) throw std::runtime_error("trailing bytes after checkpoint");

  // Names and shapes must match what the stored config would create.
  const ParameterSet expected = init_parameters(ck.config, 0);
  if (expected.parameters.size() != ck.params.parameters.size() ||
      expected.buffers.size() != ck.params.buffers.size()) {
    throw std::runtime_error("checkpoint parameters do not match its network config");
  }
  for (std::size_t i = 0; i < expected.parameters.size(); ++i) {
    const auto& a = expected.parameters[i];
    const auto& b = ck.params.parameters[i];
    if (a.name != b.name || !a.value.same_shape(b.value) || !a.value.same_shape(b.first_moment) ||
        !a.value.same_shape(b.second_moment)) {
      throw std::runtime_error("checkpoint parameter " + b.name + " does not match its network config");
    }
  }
  for (std::size_t i = 0; i < expected.buffers.size(); ++i) {
    if (expected.buffers[i].name != ck.params.buffers[i].name ||
        !expected.buffers[i].value.same_shape(ck.params.buffers[i].value)) {
      throw std::runtime_error("checkpoint buffer " + ck.params.buffers[i].name + " does not match its network config");
    }
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  const std::string bytes = serialize_checkpoint(checkpoint);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace uqens
