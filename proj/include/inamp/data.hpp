#pragma once

// Band-stack raster format ("MSIB"), dataset manifests, the synthetic
// multi-spectral scene generator, flips, stratified splits, and the
// NDVI/NBR/NDBI spectral indices.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "inamp/errors.hpp"
#include "inamp/rng.hpp"
#include "inamp/tensor.hpp"

namespace inamp {

// ---------------------------------------------------------------------------
// Raster type and MSIB container.

struct MultiSpectralImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::string> bands;
  std::vector<float> values;  // (row, col, channel), nominal range [0,1]

  std::size_t channels() const { return bands.size(); }

  float& at(std::size_t row, std::size_t col, std::size_t c) {
    return values[(row * width + col) * channels() + c];
  }
  float at(std::size_t row, std::size_t col, std::size_t c) const {
    return values[(row * width + col) * channels() + c];
  }

  void validate() const {
    if (width == 0 || height == 0 || bands.empty())
      throw InvalidShape("image: empty extent or band list");
    if (values.size() != width * height * bands.size())
      throw ShapeMismatch("image: value count does not match extent");
    for (float v : values) {
      if (!std::isfinite(v)) throw NonFiniteValue("image: non-finite reflectance");
    }
  }
};

namespace detail {

inline void msib_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void msib_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class MsibReader {
 public:
  explicit MsibReader(std::string bytes) : bytes_(std::move(bytes)) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint16_t u16() {
    const char* p = take(2);
    return static_cast<std::uint16_t>(static_cast<std::uint8_t>(p[0]) |
                                      (static_cast<std::uint8_t>(p[1]) << 8));
  }
  std::uint32_t u32() {
    const char* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(p[i])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) { return std::string(take(n), n); }

 private:
  const char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw TruncatedFile("read_msib: unexpected end of file");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Layout: magic "MSIB" | version u16 LE = 1 | width u32 | height u32 |
// channels u16 | dtype u8 = 0 (float32 LE) | reserved u8 = 0 |
// per band: name length u8 + UTF-8 bytes | values row-major (row, col, channel).
inline void write_msib(const MultiSpectralImage& img, const std::string& path) {
  img.validate();
  std::string out;
  out += "MSIB";
  detail::msib_u16(out, 1);
  detail::msib_u32(out, static_cast<std::uint32_t>(img.width));
  detail::msib_u32(out, static_cast<std::uint32_t>(img.height));
  detail::msib_u16(out, static_cast<std::uint16_t>(img.channels()));
  out.push_back(0);  // dtype: float32 LE
  out.push_back(0);  // reserved
  for (const auto& name : img.bands) {
    out.push_back(static_cast<char>(name.size()));
    out += name;
  }
  for (float v : img.values) detail::msib_u32(out, std::bit_cast<std::uint32_t>(v));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_msib: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write_msib: short write to " + path);
}

inline MultiSpectralImage read_msib(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_msib: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  detail::MsibReader r(std::move(bytes));

  if (r.str(4) != "MSIB") throw BadMagic("read_msib: not a band-stack raster: " + path);
  const std::uint16_t version = r.u16();
  if (version != 1) throw UnsupportedVersion("read_msib: version " + std::to_string(version));
  MultiSpectralImage img;
  img.width = r.u32();
  img.height = r.u32();
  const std::uint16_t channels = r.u16();
  const std::uint8_t dtype = r.u8();
  if (dtype != 0) throw UnsupportedVersion("read_msib: unknown dtype " + std::to_string(dtype));
  r.u8();  // reserved
  img.bands.reserve(channels);
  for (std::uint16_t c = 0; c < channels; ++c) img.bands.push_back(r.str(r.u8()));
  img.values.resize(static_cast<std::size_t>(img.width) * img.height * channels);
  for (float& v : img.values) v = r.f32();
  return img;
}

// ---------------------------------------------------------------------------
// Manifests: UTF-8 CSV with header "path,label_index,label_name".

struct ManifestRecord {
  std::string path;
  std::size_t label_index = 0;
  std::string label_name;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::vector<std::string> label_names;  // dense taxonomy, index = label

  std::size_t n_labels() const { return label_names.size(); }
};

inline void write_manifest(const DatasetManifest& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("write_manifest: cannot open " + path);
  f << "path,label_index,label_name\n";
  for (const auto& r : m.records) f << r.path << "," << r.label_index << "," << r.label_name << "\n";
  if (!f) throw IoError("write_manifest: short write to " + path);
}

inline DatasetManifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("read_manifest: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != "path,label_index,label_name")
    throw ConfigError("read_manifest: missing header in " + path);
  DatasetManifest m;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw ConfigError("read_manifest: malformed line: " + line);
    ManifestRecord r;
    r.path = line.substr(0, c1);
    r.label_index = static_cast<std::size_t>(std::stoull(line.substr(c1 + 1, c2 - c1 - 1)));
    r.label_name = line.substr(c2 + 1);
    if (r.label_index >= m.label_names.size()) m.label_names.resize(r.label_index + 1);
    if (m.label_names[r.label_index].empty())
      m.label_names[r.label_index] = r.label_name;
    else if (m.label_names[r.label_index] != r.label_name)
      throw ConfigError("read_manifest: label " + std::to_string(r.label_index) + " has two names");
    m.records.push_back(std::move(r));
  }
  for (std::size_t i = 0; i < m.label_names.size(); ++i) {
    if (m.label_names[i].empty())
      throw ConfigError("read_manifest: label indices not dense, " + std::to_string(i) + " unused");
  }
  return m;
}

// ---------------------------------------------------------------------------
// Synthetic scenes: smooth background fields; aerosol labels get elliptical
// plumes alpha-blended with a per-label spectral signature. Smoke and
// other_aerosol share the plume-shape distribution and the visible-band
// signature by construction, so they separate only in nir/swir.

inline const std::vector<std::string>& synthetic_band_names() {
  static const std::vector<std::string> names{"blue", "green", "red", "nir", "swir1", "swir2"};
  return names;
}

inline const std::vector<std::string>& synthetic_label_names() {
  static const std::vector<std::string> names{"clear", "other_aerosol", "smoke"};
  return names;
}

struct SyntheticSpec {
  std::uint64_t seed = 0;
  std::size_t images_per_label = 10;
  std::size_t size = 64;
  double noise_sigma = 0.02;
  std::size_t min_plumes = 1;
  std::size_t max_plumes = 3;
  std::array<float, 6> smoke_signature{0.60f, 0.60f, 0.60f, 0.25f, 0.15f, 0.10f};
  std::array<float, 6> other_signature{0.60f, 0.60f, 0.60f, 0.65f, 0.60f, 0.55f};

  void validate() const {
    if (images_per_label < 1) throw ConfigError("synthetic: images_per_label must be >= 1");
    if (size < 16) throw ConfigError("synthetic: size must be >= 16");
    if (min_plumes < 1 || max_plumes < min_plumes)
      throw ConfigError("synthetic: plume count range invalid");
    if (!(noise_sigma >= 0)) throw ConfigError("synthetic: noise_sigma must be >= 0");
    for (std::size_t b = 0; b < 3; ++b) {
      if (smoke_signature[b] != other_signature[b])
        throw ConfigError("synthetic: aerosol signatures must agree in the visible bands");
    }
  }
};

/// One generated scene plus its plume opacity mask (zero for clear scenes).
struct SyntheticScene {
  MultiSpectralImage image;
  std::vector<float> plume_alpha;  // H*W, blend weight actually applied
};

/// Fully determined by (spec.seed, image_index); label 0=clear,
/// 1=other_aerosol, 2=smoke.
inline SyntheticScene gen_image(const SyntheticSpec& spec, std::size_t label, std::size_t image_index) {
  spec.validate();
  if (label >= 3) throw LabelOutOfRange("gen_image: label must be 0..2");
  RngStream rng(spec.seed, "gen", image_index);
  const std::size_t s = spec.size;

  SyntheticScene scene;
  scene.image.width = s;
  scene.image.height = s;
  scene.image.bands = synthetic_band_names();
  scene.image.values.resize(s * s * 6);
  scene.plume_alpha.assign(s * s, 0.0f);

  // smooth background: value noise on a coarse grid, bilinear between knots
  const std::size_t cells = std::max<std::size_t>(2, s / 8);
  const std::size_t knots = cells + 1;
  std::vector<double> grid(knots * knots * 6);
  for (double& g : grid) g = rng.uniform(0.05, 0.45);
  const double cell_px = static_cast<double>(s) / static_cast<double>(cells);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      const double gy = static_cast<double>(i) / cell_px;
      const double gx = static_cast<double>(j) / cell_px;
      const std::size_t y0 = std::min<std::size_t>(static_cast<std::size_t>(gy), cells - 1);
      const std::size_t x0 = std::min<std::size_t>(static_cast<std::size_t>(gx), cells - 1);
      const double fy = gy - static_cast<double>(y0);
      const double fx = gx - static_cast<double>(x0);
      for (std::size_t b = 0; b < 6; ++b) {
        const double v00 = grid[(y0 * knots + x0) * 6 + b];
        const double v01 = grid[(y0 * knots + x0 + 1) * 6 + b];
        const double v10 = grid[((y0 + 1) * knots + x0) * 6 + b];
        const double v11 = grid[((y0 + 1) * knots + x0 + 1) * 6 + b];
        const double v = v00 * (1 - fy) * (1 - fx) + v01 * (1 - fy) * fx + v10 * fy * (1 - fx) +
                         v11 * fy * fx;
        scene.image.values[(i * s + j) * 6 + b] = static_cast<float>(v);
      }
    }
  }
  if (label == 0) return scene;  // clear: background only

  // plumes: both aerosol labels draw shapes from the same distribution
  const std::size_t n_plumes =
      spec.min_plumes + rng.below(spec.max_plumes - spec.min_plumes + 1);
  const double fs = static_cast<double>(s);
  for (std::size_t p = 0; p < n_plumes; ++p) {
    const double cy = rng.uniform(0.2 * fs, 0.8 * fs);
    const double cx = rng.uniform(0.2 * fs, 0.8 * fs);
    const double a = rng.uniform(0.15 * fs, 0.35 * fs);
    const double b = rng.uniform(0.15 * fs, 0.35 * fs);
    const double theta = rng.uniform(0.0, 3.14159265358979323846);
    const double ct = std::cos(theta), st = std::sin(theta);
    for (std::size_t i = 0; i < s; ++i) {
      for (std::size_t j = 0; j < s; ++j) {
        const double dy = static_cast<double>(i) - cy;
        const double dx = static_cast<double>(j) - cx;
        const double u = dx * ct + dy * st;
        const double v = -dx * st + dy * ct;
        const double r2 = (u / a) * (u / a) + (v / b) * (v / b);
        const double alpha = std::clamp(1.4 * (1.0 - r2), 0.0, 1.0);
        auto& acc = scene.plume_alpha[i * s + j];
        acc = std::max(acc, static_cast<float>(alpha));
      }
    }
  }

  const auto& sig = (label == 2) ? spec.smoke_signature : spec.other_signature;
  for (std::size_t px = 0; px < s * s; ++px) {
    const float alpha = scene.plume_alpha[px];
    if (alpha <= 0.0f) continue;
    for (std::size_t b = 0; b < 6; ++b) {
      float& v = scene.image.values[px * 6 + b];
      const double blended = (1.0 - alpha) * v + alpha * sig[b] + rng.normal(0.0, spec.noise_sigma);
      v = static_cast<float>(std::clamp(blended, 0.0, 1.0));
    }
  }
  return scene;
}

/// Writes images_per_label scenes for each of the three labels into out_dir
/// and returns the manifest (paths point into out_dir).
inline DatasetManifest gen_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("gen_synthetic: cannot create " + out_dir + ": " + ec.message());

  DatasetManifest manifest;
  manifest.label_names = synthetic_label_names();
  for (std::size_t label = 0; label < 3; ++label) {
    for (std::size_t i = 0; i < spec.images_per_label; ++i) {
      const std::size_t image_index = label * spec.images_per_label + i;
      auto scene = gen_image(spec, label, image_index);
      std::ostringstream name;
      name << manifest.label_names[label] << "_";
      name.width(4);
      name.fill('0');
      name << i;
      const std::string path = out_dir + "/" + name.str() + ".msib";
      write_msib(scene.image, path);
      manifest.records.push_back({path, label, manifest.label_names[label]});
    }
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Augmentation and splits.

inline MultiSpectralImage augment_flip(const MultiSpectralImage& img, bool horizontal, bool vertical) {
  MultiSpectralImage out = img;
  const std::size_t h = img.height, w = img.width, c = img.channels();
  for (std::size_t i = 0; i < h; ++i) {
    const std::size_t si = vertical ? h - 1 - i : i;
    for (std::size_t j = 0; j < w; ++j) {
      const std::size_t sj = horizontal ? w - 1 - j : j;
      for (std::size_t b = 0; b < c; ++b) out.values[(i * w + j) * c + b] = img.values[(si * w + sj) * c + b];
    }
  }
  return out;
}

struct SplitResult {
  DatasetManifest train, val, test;
};

/// Per-label stratified shuffle: train ⌊0.64n⌋, val ⌊0.16n⌋, test the rest.
inline SplitResult split_dataset(const DatasetManifest& manifest, std::uint64_t seed) {
  if (manifest.records.empty()) throw EmptyManifest("split_dataset: no records");
  SplitResult out;
  out.train.label_names = out.val.label_names = out.test.label_names = manifest.label_names;
  for (std::size_t label = 0; label < manifest.n_labels(); ++label) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      if (manifest.records[i].label_index == label) idx.push_back(i);
    }
    RngStream rng(seed, "split", label);
    rng.shuffle(idx);
    const std::size_t n = idx.size();
    const std::size_t n_train = static_cast<std::size_t>(0.64 * static_cast<double>(n));
    const std::size_t n_val = static_cast<std::size_t>(0.16 * static_cast<double>(n));
    for (std::size_t k = 0; k < n; ++k) {
      const auto& rec = manifest.records[idx[k]];
      if (k < n_train)
        out.train.records.push_back(rec);
      else if (k < n_train + n_val)
        out.val.records.push_back(rec);
      else
        out.test.records.push_back(rec);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spectral indices (denominator 0 -> 0; clamped to [-1,1]).

enum class IndexKind { Ndvi, Nbr, Ndbi };

inline IndexKind index_kind_from_name(const std::string& name) {
  if (name == "ndvi") return IndexKind::Ndvi;
  if (name == "nbr") return IndexKind::Nbr;
  if (name == "ndbi") return IndexKind::Ndbi;
  throw ConfigError("unknown index kind: " + name);
}

/// Which band names play the red/nir/swir roles.
struct BandMap {
  std::string red = "red";
  std::string nir = "nir";
  std::string swir = "swir2";
};

inline std::size_t find_band(const MultiSpectralImage& img, const std::string& name) {
  for (std::size_t i = 0; i < img.bands.size(); ++i) {
    if (img.bands[i] == name) return i;
  }
  throw MissingBand("band '" + name + "' not present in image");
}

inline std::vector<float> spectral_index(const MultiSpectralImage& img, IndexKind kind,
                                         const BandMap& bm = {}) {
  const std::size_t c = img.channels();
  std::size_t top, bottom;  // index = (top - bottom) / (top + bottom)
  switch (kind) {
    case IndexKind::Ndvi:
      top = find_band(img, bm.nir);
      bottom = find_band(img, bm.red);
      break;
    case IndexKind::Nbr:
      top = find_band(img, bm.nir);
      bottom = find_band(img, bm.swir);
      break;
    default:  // ndbi = (swir - nir) / (swir + nir)
      top = find_band(img, bm.swir);
      bottom = find_band(img, bm.nir);
      break;
  }
  std::vector<float> out(img.width * img.height);
  for (std::size_t px = 0; px < out.size(); ++px) {
    const float a = img.values[px * c + top];
    const float b = img.values[px * c + bottom];
    const float denom = a + b;
    out[px] = denom == 0.0f ? 0.0f : std::clamp((a - b) / denom, -1.0f, 1.0f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scaling and band selection.

enum class NormalizeMode { PerBandMinmax, FixedUnit };

inline MultiSpectralImage normalize(const MultiSpectralImage& img, NormalizeMode mode) {
  MultiSpectralImage out = img;
  const std::size_t c = img.channels(), n = img.width * img.height;
  if (mode == NormalizeMode::FixedUnit) {
    for (float v : img.values) {
      if (v < 0.0f || v > 1.0f) throw RangeError("normalize: value outside [0,1] in fixed_unit mode");
    }
    return out;
  }
  for (std::size_t b = 0; b < c; ++b) {
    float lo = img.values[b], hi = img.values[b];
    for (std::size_t px = 0; px < n; ++px) {
      lo = std::min(lo, img.values[px * c + b]);
      hi = std::max(hi, img.values[px * c + b]);
    }
    for (std::size_t px = 0; px < n; ++px) {
      float& v = out.values[px * c + b];
      v = hi > lo ? (img.values[px * c + b] - lo) / (hi - lo) : 0.0f;
    }
  }
  return out;
}

inline MultiSpectralImage select_bands(const MultiSpectralImage& img, const std::vector<std::size_t>& keep) {
  if (keep.empty()) throw EmptyInput("select_bands: no bands selected");
  const std::size_t c = img.channels();
  MultiSpectralImage out;
  out.width = img.width;
  out.height = img.height;
  for (std::size_t b : keep) {
    if (b >= c) throw IndexOutOfRange("select_bands: band " + std::to_string(b));
    out.bands.push_back(img.bands[b]);
  }
  out.values.resize(img.width * img.height * keep.size());
  for (std::size_t px = 0; px < img.width * img.height; ++px) {
    for (std::size_t k = 0; k < keep.size(); ++k)
      out.values[px * keep.size() + k] = img.values[px * c + keep[k]];
  }
  return out;
}

// ---------------------------------------------------------------------------
// In-memory dataset for the training harness.

struct Dataset {
  std::vector<MultiSpectralImage> images;
  std::vector<std::size_t> labels;
  std::vector<std::string> label_names;
};

/// Reads every manifest record; optionally keeps only the listed bands.
inline Dataset load_dataset(const DatasetManifest& manifest, const std::vector<std::size_t>* bands = nullptr) {
  if (manifest.records.empty()) throw EmptyManifest("load_dataset: no records");
  Dataset ds;
  ds.label_names = manifest.label_names;
  ds.images.reserve(manifest.records.size());
  for (const auto& rec : manifest.records) {
    auto img = read_msib(rec.path);
    ds.images.push_back(bands ? select_bands(img, *bands) : std::move(img));
    ds.labels.push_back(rec.label_index);
  }
  return ds;
}

/// Stacks same-extent images into an [N,H,W,C] batch tensor.
template <typename T>
Tensor<T> stack_images(const std::vector<const MultiSpectralImage*>& batch) {
  if (batch.empty()) throw EmptyInput("stack_images: empty batch");
  const auto& first = *batch[0];
  const std::size_t h = first.height, w = first.width, c = first.channels();
  std::vector<T> values(batch.size() * h * w * c);
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto& img = *batch[n];
    if (img.height != h || img.width != w || img.channels() != c)
      throw ShapeMismatch("stack_images: mixed extents in batch");
    for (std::size_t i = 0; i < h * w * c; ++i)
      values[n * h * w * c + i] = static_cast<T>(img.values[i]);
  }
  return Tensor<T>::from_values({batch.size(), h, w, c}, std::move(values));
}

}  // namespace inamp
