#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uqens/tensor.hpp"
#include "uqens/tree.hpp"

namespace uqens {

struct LabeledImage {
  Tensor pixels;  // H x W grayscale
  Diagnosis label = Diagnosis::ctl;
  std::string source_id;
};

struct ManifestRecord {
  std::filesystem::path path;
  Diagnosis label = Diagnosis::ctl;
};

/// CSV with header `path,label`. Relative paths resolve against the
/// manifest's directory.
struct DatasetManifest {
  std::vector<ManifestRecord> records;

  std::array<std::size_t, kDiagnosisCount> counts() const;
};

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Binary 8-bit PGM (P5, maxval 255) to an H x W tensor of values in [0, 255].
Tensor read_pgm(const std::filesystem::path& path);
/// Writes values rounded and clamped to [0, 255].
void write_pgm(const std::filesystem::path& path, const Tensor& image);

/// Images in manifest order. Errors name the offending record.
std::vector<LabeledImage> load_dataset(const std::filesystem::path& manifest_path);

/// (I - mean) / std with population statistics; constant images map to zeros.
Tensor standardize(const Tensor& image);

/// Resamples an H x W image to target_side x target_side: box averaging on
/// axes that shrink, bilinear interpolation on axes that grow.
Tensor resize(const Tensor& image, std::size_t target_side);

/// Resize, then standardize.
Tensor preprocess(const Tensor& image, std::size_t side);

/// Stacks equally sized H x W images into a B x H x W x 1 batch.
Tensor stack_batch(std::span<const Tensor> images);

/// Four-class synthetic chest-film stand-in on a noisy two-lung background:
/// CTL background only, BAC one large bright consolidation, VIR_NO_COVID
/// many small scattered spots, COVID diffuse haze along both outer lung
/// margins. Pixels are integers in [0, 255]; output is grouped by class.
std::vector<LabeledImage> synth_generate(std::size_t n_per_class, std::size_t side, std::uint64_t seed);

/// Writes every image as PGM plus `manifest.csv` into `dir`.
DatasetManifest write_dataset(const std::filesystem::path& dir, std::span<const LabeledImage> images);

}  // namespace uqens
