#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "uqens/network.hpp"
#include "uqens/training.hpp"

namespace uqens {

/// Malformed or inconsistent configuration. `what()` names the origin and line.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct KeyValueEntry {
  std::string section;
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// `[section]` headers, `key = value` lines, `#` comments, blank lines.
std::vector<KeyValueEntry> parse_key_values(const std::string& text, const std::string& origin);

struct SynthSpec {
  std::size_t n_per_class = 200;
  std::size_t side = 32;
  std::uint64_t seed = 7;
};

enum class Scale { desk, paper };
Scale parse_scale(const std::string& text);

struct RunConfig {
  std::optional<std::filesystem::path> manifest;
  SynthSpec synth;  // used when no manifest is given
  /// Standardize at source resolution, then resize. Default resizes first.
  bool standardize_first = false;
  NetworkConfig network;
  std::vector<std::size_t> kernel_sizes;
  TrainOptions train;
  std::vector<std::size_t> epochs{15, 20, 25};
  UncertaintyForm uncertainty = UncertaintyForm::relative;
  std::size_t n_folds = 5;
  std::vector<double> sensitivities{1.0, 1.0, 1.0};
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = "uqens_out";
  /// Worker threads for independent training jobs; 0 picks the hardware count.
  std::size_t threads = 1;
  /// Ensemble manifest for `predict`; defaults to `<out>/ensemble.cfg`.
  std::optional<std::filesystem::path> ensemble;

  static RunConfig preset(Scale scale);
  /// Throws ConfigError on any inconsistency, including a missing seed.
  void validate() const;
  std::filesystem::path ensemble_path() const;
};

/// Applies `text` on top of `base`. Relative paths resolve against `base_dir`.
RunConfig parse_run_config(const std::string& text, const RunConfig& base, const std::filesystem::path& base_dir,
                           const std::string& origin = "config");
RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base);
/// Canonical text form; parsing it back over any preset reproduces the config.
std::string run_config_to_text(const RunConfig& config);

std::vector<std::size_t> parse_size_list(const std::string& text);
std::uint64_t parse_u64(const std::string& text);

}  // namespace uqens
