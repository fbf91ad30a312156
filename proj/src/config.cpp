#include "uqens/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace uqens {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  if (out.empty() || (out.size() == 1 && out[0].empty())) throw std::invalid_argument("empty list");
  for (const auto& s : out)
    if (s.empty()) throw std::invalid_argument("empty list item in '" + text + "'");
  return out;
}

std::size_t parse_size(const std::string& text) {
  std::size_t v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

double parse_real(const std::string& text) {
  double v = 0.0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw std::invalid_argument("expected a finite number, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw std::invalid_argument("expected true or false, got '" + text + "'");
}

LossKind parse_loss(const std::string& text) {
  if (text == "cross_entropy") return LossKind::cross_entropy;
  if (text == "attenuated") return LossKind::attenuated;
  if (text == "combined") return LossKind::combined;
  throw std::invalid_argument("loss must be cross_entropy, attenuated or combined, got '" + text + "'");
}

std::string loss_name(LossKind k) {
  switch (k) {
    case LossKind::cross_entropy: return "cross_entropy";
    case LossKind::attenuated: return "attenuated";
    case LossKind::combined: return "combined";
  }
  return "?";
}

UncertaintyForm parse_form(const std::string& text) {
  if (text == "relative") return UncertaintyForm::relative;
  if (text == "absolute") return UncertaintyForm::absolute;
  throw std::invalid_argument("uncertainty must be relative or absolute, got '" + text + "'");
}

template <typename T, typename F>
std::string join(const std::vector<T>& values, F format) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format(values[i]);
  return out;
}

std::string real_text(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::filesystem::path&)>;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  const std::filesystem::path p(value);
  return p.is_absolute() || base.empty() ? p : base / p;
}

const std::map<std::string, Setter>& setters() {
  using P = std::filesystem::path;
  static const std::map<std::string, Setter> table{
      {"data.manifest", [](RunConfig& c, const std::string& v, const P& b) { c.manifest = resolve(b, v); }},
      {"data.synth_per_class", [](RunConfig& c, const std::string& v, const P&) { c.synth.n_per_class = parse_size(v); }},
      {"data.synth_side", [](RunConfig& c, const std::string& v, const P&) { c.synth.side = parse_size(v); }},
      {"data.synth_seed", [](RunConfig& c, const std::string& v, const P&) { c.synth.seed = parse_u64(v); }},
      {"data.standardize_first",
       [](RunConfig& c, const std::string& v, const P&) { c.standardize_first = parse_bool(v); }},
      {"data.input_side", [](RunConfig& c, const std::string& v, const P&) { c.network.input_side = parse_size(v); }},
      {"network.kernel_sizes", [](RunConfig& c, const std::string& v, const P&) { c.kernel_sizes = parse_size_list(v); }},
      {"network.n_residual_blocks",
       [](RunConfig& c, const std::string& v, const P&) { c.network.n_residual_blocks = parse_size(v); }},
      {"network.channels",
       [](RunConfig& c, const std::string& v, const P&) { c.network.channels_per_stage = parse_size_list(v); }},
      {"network.dropout_rate", [](RunConfig& c, const std::string& v, const P&) { c.network.dropout_rate = parse_real(v); }},
      {"network.heteroscedastic",
       [](RunConfig& c, const std::string& v, const P&) { c.network.heteroscedastic = parse_bool(v); }},
      {"network.per_class_variance",
       [](RunConfig& c, const std::string& v, const P&) { c.network.per_class_variance = parse_bool(v); }},
      {"network.bn_momentum", [](RunConfig& c, const std::string& v, const P&) { c.network.bn_momentum = parse_real(v); }},
      {"network.bn_epsilon", [](RunConfig& c, const std::string& v, const P&) { c.network.bn_epsilon = parse_real(v); }},
      {"bayes.mc_samples", [](RunConfig& c, const std::string& v, const P&) { c.network.mc_samples = parse_size(v); }},
      {"bayes.noise_samples", [](RunConfig& c, const std::string& v, const P&) { c.train.noise_samples = parse_size(v); }},
      {"bayes.loss", [](RunConfig& c, const std::string& v, const P&) { c.train.loss = parse_loss(v); }},
      {"bayes.uncertainty", [](RunConfig& c, const std::string& v, const P&) { c.uncertainty = parse_form(v); }},
      {"adam.lr", [](RunConfig& c, const std::string& v, const P&) { c.train.adam.learning_rate = parse_real(v); }},
      {"adam.beta1", [](RunConfig& c, const std::string& v, const P&) { c.train.adam.beta1 = parse_real(v); }},
      {"adam.beta2", [](RunConfig& c, const std::string& v, const P&) { c.train.adam.beta2 = parse_real(v); }},
      {"adam.epsilon", [](RunConfig& c, const std::string& v, const P&) { c.train.adam.epsilon = parse_real(v); }},
      {"adam.weight_decay", [](RunConfig& c, const std::string& v, const P&) { c.train.adam.weight_decay = parse_real(v); }},
      {"train.epochs", [](RunConfig& c, const std::string& v, const P&) { c.epochs = parse_size_list(v); }},
      {"train.batch_size", [](RunConfig& c, const std::string& v, const P&) { c.train.batch_size = parse_size(v); }},
      {"train.validation_fraction",
       [](RunConfig& c, const std::string& v, const P&) { c.train.validation_fraction = parse_real(v); }},
      {"train.class_weights", [](RunConfig& c, const std::string& v, const P&) { c.train.weight_classes = parse_bool(v); }},
      {"eval.n_folds", [](RunConfig& c, const std::string& v, const P&) { c.n_folds = parse_size(v); }},
      {"tree.sensitivities",
       [](RunConfig& c, const std::string& v, const P&) {
         c.sensitivities.clear();
         for (const auto& s : split_list(v)) c.sensitivities.push_back(parse_real(s));
       }},
      {"run.seed", [](RunConfig& c, const std::string& v, const P&) { c.seed = parse_u64(v); }},
      {"run.out", [](RunConfig& c, const std::string& v, const P& b) { c.out = resolve(b, v); }},
      {"run.threads", [](RunConfig& c, const std::string& v, const P&) { c.threads = parse_size(v); }},
      {"predict.ensemble", [](RunConfig& c, const std::string& v, const P& b) { c.ensemble = resolve(b, v); }},
  };
  return table;
}

}  // namespace

std::vector<KeyValueEntry> parse_key_values(const std::string& text, const std::string& origin) {
  std::vector<KeyValueEntry> entries;
  std::istringstream in(text);
  std::string raw, section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw ConfigError(where + "malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + line + "'");
    KeyValueEntry e{section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no};
    if (e.key.empty()) throw ConfigError(where + "empty key");
    for (const auto& prior : entries)
      if (prior.section == e.section && prior.key == e.key) throw ConfigError(where + "duplicate key '" + e.key + "'");
    entries.push_back(std::move(e));
  }
  return entries;
}

Scale parse_scale(const std::string& text) {
  if (text == "desk") return Scale::desk;
  if (text == "paper") return Scale::paper;
  throw ConfigError("scale must be desk or paper, got '" + text + "'");
}

RunConfig RunConfig::preset(Scale scale) {
  RunConfig c;
  if (scale == Scale::desk) {
    c.kernel_sizes = desk_kernel_sizes();
    return c;
  }
  c.kernel_sizes = full_kernel_sizes();
  c.network.input_side = 224;
  c.network.n_residual_blocks = 4;
  c.network.channels_per_stage = {64, 128, 256, 512};
  c.synth.side = 224;
  return c;
}

void RunConfig::validate() const {
  try {
    if (!seed) throw ConfigError("seed is mandatory (set run.seed or pass --seed)");
    if (manifest && !std::filesystem::is_regular_file(*manifest)) {
      throw ConfigError("data.manifest does not exist: " + manifest->string());
    }
    if (!manifest && (synth.n_per_class == 0 || synth.side < 16)) {
      throw ConfigError("synthetic data needs synth_per_class >= 1 and synth_side >= 16");
    }
    if (kernel_sizes.empty()) throw ConfigError("network.kernel_sizes is empty");
    for (auto k : kernel_sizes) {
      NetworkConfig probe = network;
      probe.kernel_size = k;
      probe.validate();
    }
    train.adam.validate();
    if (epochs.size() != 3) throw ConfigError("train.epochs needs one value per tree level (3)");
    if (sensitivities.size() != 3) throw ConfigError("tree.sensitivities needs one value per tree level (3)");
    for (double c : sensitivities)
      if (c < 0.0) throw ConfigError("tree.sensitivities must be non-negative");
    if (n_folds < 2) throw ConfigError("eval.n_folds must be at least 2");
    if (train.batch_size < 2) throw ConfigError("train.batch_size must be at least 2");
    if (!(train.validation_fraction >= 0.0 && train.validation_fraction < 1.0)) {
      throw ConfigError("train.validation_fraction must lie in [0, 1)");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

std::filesystem::path RunConfig::ensemble_path() const { return ensemble ? *ensemble : out / "ensemble.cfg"; }

RunConfig parse_run_config(const std::string& text, const RunConfig& base, const std::filesystem::path& base_dir,
                           const std::string& origin) {
  RunConfig c = base;
  for (const auto& e : parse_key_values(text, origin)) {
    const std::string where = origin + ":" + std::to_string(e.line) + ": ";
    const auto it = setters().find(e.section + "." + e.key);
    if (it == setters().end()) {
      throw ConfigError(where + "unknown key '" + e.key + "' in section [" + e.section + "]");
    }
    try {
      it->second(c, e.value, base_dir);
    } catch (const std::exception& ex) {
      throw ConfigError(where + e.section + "." + e.key + ": " + ex.what());
    }
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), base, path.parent_path(), path.string());
}

std::string run_config_to_text(const RunConfig& c) {
  auto sz = [](std::size_t v) { return std::to_string(v); };
  auto flag = [](bool v) { return std::string(v ? "true" : "false"); };
  std::ostringstream o;
  o << "[data]\n";
  if (c.manifest) o << "manifest = " << c.manifest->string() << "\n";
  o << "synth_per_class = " << c.synth.n_per_class << "\nsynth_side = " << c.synth.side
    << "\nsynth_seed = " << c.synth.seed << "\nstandardize_first = " << flag(c.standardize_first) << "\ninput_side = " << c.network.input_side << "\n\n";
  o << "[network]\nkernel_sizes = " << join(c.kernel_sizes, sz) << "\nn_residual_blocks = "
    << c.network.n_residual_blocks << "\nchannels = " << join(c.network.channels_per_stage, sz)
    << "\ndropout_rate = " << real_text(c.network.dropout_rate) << "\nheteroscedastic = "
    << flag(c.network.heteroscedastic) << "\nper_class_variance = " << flag(c.network.per_class_variance)
    << "\nbn_momentum = " << real_text(c.network.bn_momentum) << "\nbn_epsilon = " << real_text(c.network.bn_epsilon)
    << "\n\n";
  o << "[bayes]\nmc_samples = " << c.network.mc_samples << "\nnoise_samples = " << c.train.noise_samples
    << "\nloss = " << loss_name(c.train.loss)
    << "\nuncertainty = " << (c.uncertainty == UncertaintyForm::relative ? "relative" : "absolute") << "\n\n";
  o << "[adam]\nlr = " << real_text(c.train.adam.learning_rate) << "\nbeta1 = " << real_text(c.train.adam.beta1)
    << "\nbeta2 = " << real_text(c.train.adam.beta2) << "\nepsilon = " << real_text(c.train.adam.epsilon)
    << "\nweight_decay = " << real_text(c.train.adam.weight_decay) << "\n\n";
  o << "[train]\nepochs = " << join(c.epochs, sz) << "\nbatch_size = " << c.train.batch_size
    << "\nvalidation_fraction = " << real_text(c.train.validation_fraction)
    << "\nclass_weights = " << flag(c.train.weight_classes) << "\n\n";
  o << "[eval]\nn_folds = " << c.n_folds << "\n\n";
  o << "[tree]\nsensitivities = " << join(c.sensitivities, real_text) << "\n\n";
  o << "[run]\n";
  if (c.seed) o << "seed = " << *c.seed << "\n";
  o << "out = " << c.out.string() << "\nthreads = " << c.threads << "\n";
  if (c.ensemble) o << "\n[predict]\nensemble = " << c.ensemble->string() << "\n";
  return o.str();
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& s : split_list(text)) out.push_back(parse_size(s));
  return out;
}

std::uint64_t parse_u64(const std::string& text) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size() || text.empty()) {
    throw std::invalid_argument("expected an unsigned 64-bit integer, got '" + text + "'");
  }
  return v;
}

}  // namespace uqens
