#include "uqens/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "uqens/csv.hpp"
#include "uqens/rng.hpp"

namespace uqens {
namespace {

constexpr double kPi = 3.14159265358979323846;

// Weight matrix (out x in) of a 1D resampler.
std::vector<std::vector<double>> resample_weights(std::size_t in, std::size_t out) {
  std::vector<std::vector<double>> w(out, std::vector<double>(in, 0.0));
  if (in == out) {
    for (std::size_t i = 0; i < in; ++i) w[i][i] = 1.0;
  } else if (out < in) {
    // Box average: output pixel i covers [i * s, (i + 1) * s) of the source.
    const double s = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
      const double lo = static_cast<double>(i) * s, hi = lo + s;
      for (auto j = static_cast<std::size_t>(std::floor(lo)); j < in && static_cast<double>(j) < hi; ++j) {
        const double overlap = std::min(hi, static_cast<double>(j + 1)) - std::max(lo, static_cast<double>(j));
        if (overlap > 0.0) w[i][j] = overlap / s;
      }
    }
  } else {
    const double s = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
      double src = (static_cast<double>(i) + 0.5) * s - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto j0 = static_cast<std::size_t>(std::floor(src));
      const std::size_t j1 = std::min(j0 + 1, in - 1);
      const double f = src - static_cast<double>(j0);
      w[i][j0] += 1.0 - f;
      w[i][j1] += f;
    }
  }
  return w;
}

void skip_header_space(std::istream& in) {
  while (true) {
    const int c = in.peek();
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (c != EOF && std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

std::size_t read_header_int(std::istream& in, const std::string& what, const std::filesystem::path& path) {
  skip_header_space(in);
  long long v = -1;
  if (!(in >> v) || v <= 0) throw std::runtime_error("malformed PGM " + what + " in " + path.string());
  return static_cast<std::size_t>(v);
}

struct LungGeometry {
  double row, col, radius_rows, radius_cols;
};

double lung_membership(double r, double c, const LungGeometry& g) {
  const double dr = (r - g.row) / g.radius_rows, dc = (c - g.col) / g.radius_cols;
  const double radius = std::sqrt(dr * dr + dc * dc);
  return 1.0 / (1.0 + std::exp((radius - 1.0) * 8.0));
}

void add_blob(Tensor& img, double row, double col, double sigma_rows, double sigma_cols, double amplitude,
              const std::vector<double>* weight = nullptr) {
  const std::size_t side = img.extent(0);
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) {
      const double dr = (static_cast<double>(r) - row) / sigma_rows;
      const double dc = (static_cast<double>(c) - col) / sigma_cols;
      double v = amplitude * std::exp(-0.5 * (dr * dr + dc * dc));
      if (weight) v *= (*weight)[r * side + c];
      img.at(r, c) += v;
    }
}

// Uniform point inside a lung ellipse, within `reach` of its normalized radius.
std::pair<double, double> point_in_lung(const LungGeometry& g, double reach, Rng& rng) {
  const double angle = rng.uniform(0.0, 2.0 * kPi);
  const double radius = reach * std::sqrt(rng.uniform());
  return {g.row + radius * g.radius_rows * std::sin(angle), g.col + radius * g.radius_cols * std::cos(angle)};
}

Tensor synth_image(Diagnosis label, std::size_t side, Rng& rng) {
  const double s = static_cast<double>(side);
  Tensor img({side, side});
  const double base = 140.0 + rng.uniform(-2.0, 2.0);
  const double depth = 80.0 + rng.uniform(-3.0, 3.0);
  const LungGeometry lungs[2] = {
      {0.5 * s + rng.uniform(-0.02, 0.02) * s, 0.30 * s + rng.uniform(-0.02, 0.02) * s, 0.32 * s, 0.15 * s},
      {0.5 * s + rng.uniform(-0.02, 0.02) * s, 0.70 * s + rng.uniform(-0.02, 0.02) * s, 0.32 * s, 0.15 * s}};

  std::vector<double> mask(side * side);
  double wave_amp[2], wave_freq[2], wave_phase[2];
  for (int k = 0; k < 2; ++k) {
    wave_amp[k] = rng.uniform(1.0, 2.5);
    wave_freq[k] = rng.uniform(1.0, 3.0) * 2.0 * kPi / s;
    wave_phase[k] = rng.uniform(0.0, 2.0 * kPi);
  }
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) {
      const double rr = static_cast<double>(r), cc = static_cast<double>(c);
      const double m = std::max(lung_membership(rr, cc, lungs[0]), lung_membership(rr, cc, lungs[1]));
      mask[r * side + c] = m;
      const double texture = wave_amp[0] * std::sin(wave_freq[0] * rr + wave_phase[0]) +
                             wave_amp[1] * std::sin(wave_freq[1] * cc + wave_phase[1]);
      img.at(r, c) = base - depth * m + texture;
    }

  switch (label) {
    case Diagnosis::ctl:
      break;
    case Diagnosis::bac: {
      const LungGeometry& g = lungs[rng.integer(0, 1)];
      const auto [row, col] = point_in_lung(g, 0.5, rng);
      const double sigma = rng.uniform(0.09, 0.12) * s;
      add_blob(img, row, col, sigma, sigma, rng.uniform(75.0, 95.0));
      break;
    }
    case Diagnosis::vir_no_covid: {
      const int spots = rng.integer(10, 16);
      for (int i = 0; i < spots; ++i) {
        const LungGeometry& g = lungs[rng.integer(0, 1)];
        const auto [row, col] = point_in_lung(g, 0.85, rng);
        const double sigma = rng.uniform(0.02, 0.03) * s;
        add_blob(img, row, col, sigma, sigma, rng.uniform(40.0, 55.0));
      }
      break;
    }
    case Diagnosis::covid: {
      for (int k = 0; k < 2; ++k) {
        const LungGeometry& g = lungs[k];
        const double outward = k == 0 ? -1.0 : 1.0;
        const double row = g.row + rng.uniform(-0.08, 0.08) * s;
        const double col = g.col + outward * 0.10 * s;
        add_blob(img, row, col, 0.18 * s, 0.05 * s, rng.uniform(45.0, 60.0), &mask);
      }
      break;
    }
  }

  for (double& v : img.values()) v = std::clamp(std::round(v + 6.0 * rng.normal()), 0.0, 255.0);
  return img;
}

}  // namespace

std::array<std::size_t, kDiagnosisCount> DatasetManifest::counts() const {
  std::array<std::size_t, kDiagnosisCount> n{};
  for (const auto& r : records) ++n[static_cast<std::size_t>(r.label)];
  return n;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  if (table.header != std::vector<std::string>{"path", "label"}) {
    throw std::runtime_error("manifest " + path.string() + " must have header 'path,label'");
  }
  DatasetManifest m;
  const auto base = path.parent_path();
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    std::filesystem::path p(row[0]);
    if (p.is_relative()) p = base / p;
    try {
      m.records.push_back({p, parse_diagnosis(row[1])});
    } catch (const std::exception& e) {
      throw std::runtime_error("manifest record " + std::to_string(i + 1) + " (" + row[0] + "): " + e.what());
    }
  }
  for (std::size_t i = 0; i < m.records.size(); ++i)
    for (std::size_t j = i + 1; j < m.records.size(); ++j)
      if (m.records[i].path == m.records[j].path) {
        throw std::runtime_error("manifest lists " + m.records[i].path.string() + " twice");
      }
  return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  CsvTable t;
  t.header = {"path", "label"};
  const auto base = path.parent_path();
  for (const auto& r : manifest.records) {
    auto rel = r.path.lexically_relative(base);
    t.rows.push_back({(rel.empty() ? r.path : rel).generic_string(), std::string(diagnosis_name(r.label))});
  }
  write_csv(path, t);
}

Tensor read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5') throw std::runtime_error("not a binary PGM (P5): " + path.string());
  const std::size_t width = read_header_int(in, "width", path);
  const std::size_t height = read_header_int(in, "height", path);
  const std::size_t maxval = read_header_int(in, "maxval", path);
  if (maxval != 255) throw std::runtime_error("PGM maxval must be 255 in " + path.string());
  if (!std::isspace(in.get())) throw std::runtime_error("malformed PGM header in " + path.string());
  std::vector<unsigned char> raster(width * height);
  in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (static_cast<std::size_t>(in.gcount()) != raster.size()) {
    throw std::runtime_error("truncated PGM raster in " + path.string());
  }
  Tensor img({height, width});
  for (std::size_t i = 0; i < raster.size(); ++i) img[i] = raster[i];
  return img;
}

void write_pgm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 2) throw ShapeError("write_pgm expects an H x W image, got " + shape_string(image.shape()));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image " + path.string());
  out << "P5\n" << image.extent(1) << ' ' << image.extent(0) << "\n255\n";
  std::vector<unsigned char> raster(image.size());
  for (std::size_t i = 0; i < image.size(); ++i)
    raster[i] = static_cast<unsigned char>(std::clamp(std::round(image[i]), 0.0, 255.0));
  out.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!out) throw std::runtime_error("failed writing image " + path.string());
}

std::vector<LabeledImage> load_dataset(const std::filesystem::path& manifest_path) {
  const DatasetManifest m = read_manifest(manifest_path);
  std::vector<LabeledImage> images;
  images.reserve(m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    try {
      Tensor px = read_pgm(r.path);
      if (px.extent(0) < 8 || px.extent(1) < 8) throw std::runtime_error("image smaller than 8 x 8");
      images.push_back({std::move(px), r.label, r.path.string()});
    } catch (const std::exception& e) {
      throw std::runtime_error("manifest record " + std::to_string(i + 1) + " (" + r.path.string() + "): " + e.what());
    }
  }
  return images;
}

Tensor standardize(const Tensor& image) {
  if (image.empty()) throw ShapeError("cannot standardize an empty image");
  const double n = static_cast<double>(image.size());
  double mean = 0.0;
  for (double v : image.values()) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : image.values()) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  Tensor out(image.shape());
  if (sd == 0.0) return out;
  for (std::size_t i = 0; i < image.size(); ++i) out[i] = (image[i] - mean) / sd;
  return out;
}

Tensor resize(const Tensor& image, std::size_t target_side) {
  if (target_side == 0) throw std::invalid_argument("resize target must be positive");
  if (image.rank() != 2 || image.empty()) throw ShapeError("resize expects an H x W image, got " + shape_string(image.shape()));
  const std::size_t h = image.extent(0), w = image.extent(1);
  if (h == target_side && w == target_side) return image;
  const auto wr = resample_weights(h, target_side);
  const auto wc = resample_weights(w, target_side);
  Tensor rows({target_side, w});
  for (std::size_t i = 0; i < target_side; ++i)
    for (std::size_t j = 0; j < h; ++j) {
      if (wr[i][j] == 0.0) continue;
      for (std::size_t c = 0; c < w; ++c) rows.at(i, c) += wr[i][j] * image.at(j, c);
    }
  Tensor out({target_side, target_side});
  for (std::size_t r = 0; r < target_side; ++r)
    for (std::size_t i = 0; i < target_side; ++i) {
      double acc = 0.0;
      for (std::size_t c = 0; c < w; ++c) acc += wc[i][c] * rows.at(r, c);
      out.at(r, i) = acc;
    }
  return out;
}

Tensor preprocess(const Tensor& image, std::size_t side) { return standardize(resize(image, side)); }

Tensor stack_batch(std::span<const Tensor> images) {
  if (images.empty()) throw ShapeError("cannot stack an empty batch");
  const std::size_t h = images[0].extent(0), w = images[0].extent(1);
  Tensor batch({images.size(), h, w, 1});
  for (std::size_t b = 0; b < images.size(); ++b) {
    if (images[b].rank() != 2 || images[b].extent(0) != h || images[b].extent(1) != w) {
      throw ShapeError("batch image " + std::to_string(b) + " has shape " + shape_string(images[b].shape()));
    }
    std::copy(images[b].raw(), images[b].raw() + h * w, batch.raw() + b * h * w);
  }
  return batch;
}

std::vector<LabeledImage> synth_generate(std::size_t n_per_class, std::size_t side, std::uint64_t seed) {
  if (n_per_class < 1) throw std::invalid_argument("n_per_class must be at least 1");
  if (side < 16) throw std::invalid_argument("synthetic side must be at least 16, got " + std::to_string(side));
  std::vector<LabeledImage> images;
  images.reserve(4 * n_per_class);
  for (std::size_t cls = 0; cls < kDiagnosisCount; ++cls) {
    const auto label = static_cast<Diagnosis>(cls);
    for (std::size_t i = 0; i < n_per_class; ++i) {
      Rng rng(derive_seed(seed, {stream::synth, cls, i}));
      images.push_back({synth_image(label, side, rng), label,
                        "synth-" + std::string(diagnosis_name(label)) + "-" + std::to_string(i)});
    }
  }
  return images;
}

DatasetManifest write_dataset(const std::filesystem::path& dir, std::span<const LabeledImage> images) {
  std::filesystem::create_directories(dir / "images");
  DatasetManifest m;
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "%05zu_%s.pgm", i, std::string(diagnosis_name(images[i].label)).c_str());
    const auto p = dir / "images" / name;
    write_pgm(p, images[i].pixels);
    m.records.push_back({p, images[i].label});
  }
  write_manifest(dir / "manifest.csv", m);
  return m;
}

}  // namespace uqens
