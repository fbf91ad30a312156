#pragma once

#include <filesystem>
#include <string>

#include "uqens/network.hpp"

namespace uqens {

struct Checkpoint {
  NetworkConfig config;
  ParameterSet params;
};

/// `key = value` lines describing a network configuration.
std::string network_config_to_text(const NetworkConfig& config);
NetworkConfig network_config_from_text(const std::string& text);

/// Versioned little-endian binary container: magic, version, config text,
/// step counter, then every parameter (value and Adam moments) and buffer
/// with its name and extents. Values are stored bit-exact.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace uqens
