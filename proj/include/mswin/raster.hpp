#pragma once

// Band-stack data model, tiling, normalization and the on-disk container.
//
// Container layout (one directory per stack):
//   meta.json      {"width", "height", "bands": [names], "dtype": "f32le",
//                   "nodata", "geo", "pixel_area"}
//   <name>.f32     width*height little-endian IEEE-754 float32, row-major

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mswin {

inline constexpr float kNoData = -9999.0f;

// Row-major height x width float32 grid.
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  Grid() = default;
  Grid(int h, int w, float fill = 0.0f);
  Grid(int h, int w, std::vector<float> data);

  float& operator()(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
  float operator()(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }

  std::size_t size() const { return values.size(); }
  bool same_shape(const Grid& other) const { return height == other.height && width == other.width; }
  std::span<const float> span() const { return values; }

  bool operator==(const Grid&) const = default;
};

struct GeoTransform {
  std::array<double, 6> affine{};
  std::string crs;

  bool operator==(const GeoTransform&) const = default;
};

struct Band {
  std::string name;
  Grid grid;

  bool operator==(const Band&) const = default;
};

// Ordered, uniquely named bands sharing one shape. Immutable once built,
// apart from appending bands.
class BandStack {
 public:
  BandStack() = default;
  BandStack(int height, int width) : height_(height), width_(width) {}

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t band_count() const { return bands_.size(); }

  // Throws ValidationError on shape mismatch or duplicate name.
  void add_band(std::string name, Grid grid);

  const Band& band(std::size_t index) const { return bands_.at(index); }
  const Grid& grid(std::size_t index) const { return bands_.at(index).grid; }
  const Grid& grid(std::string_view name) const;
  std::optional<std::size_t> find(std::string_view name) const;
  std::vector<std::string> names() const;
  const std::vector<Band>& bands() const { return bands_; }

  bool is_nodata(float v) const { return nodata && v == *nodata; }

  // Copy of the named bands, in the given order, with metadata preserved.
  BandStack select(std::span<const std::string> names) const;

  std::optional<float> nodata;
  std::optional<GeoTransform> geo;
  std::optional<double> pixel_area;  // m^2 per pixel

  bool operator==(const BandStack&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<Band> bands_;
};

void save_stack(const BandStack& stack, const std::filesystem::path& dir);
BandStack load_stack(const std::filesystem::path& dir);

// Convenience for single-band containers (masks, carbon maps, estimates).
BandStack single_band(std::string name, Grid grid, std::optional<float> nodata = std::nullopt);

struct Tile {
  int row = 0;
  int col = 0;
  int height = 0;
  int width = 0;
  int fold_id = 0;
  BandStack data;
};

// Top-left origins at stride steps; a trailing partial row/column is covered
// by one extra tile snapped back against the boundary. Row-major order.
std::vector<Tile> tile_stack(const BandStack& stack, int tile_h, int tile_w, int stride_h, int stride_w);
std::vector<int> tile_origins(int extent, int size, int stride);
BandStack crop(const BandStack& stack, int row, int col, int h, int w);
Grid crop(const Grid& grid, int row, int col, int h, int w);

enum class NormMode { MinMaxSymmetric, MinMaxUnit, FixedScale };

struct BandRange {
  float min = 0.0f;
  float max = 0.0f;
};

struct NormalizationSpec {
  NormMode mode = NormMode::MinMaxSymmetric;
  double max_value = 500.0;           // FixedScale only
  std::vector<BandRange> per_band;    // min/max per band, recorded at fit time
  std::vector<std::string> warnings;  // zero-range bands etc.
};

// Records per-band min/max over non-nodata pixels.
NormalizationSpec fit_normalization(const BandStack& stack, NormMode mode, double max_value = 500.0);
NormalizationSpec fixed_scale(double max_value);

// Zero-range bands map to the midpoint of the target range (and back to
// their constant value); nodata passes through untouched.
BandStack normalize(const BandStack& stack, const NormalizationSpec& spec,
                    std::vector<std::string>* warnings = nullptr);
BandStack denormalize(const BandStack& stack, const NormalizationSpec& spec);

std::string to_string(NormMode mode);
NormMode norm_mode_from_string(std::string_view s);

std::string normalization_to_json(const NormalizationSpec& spec);
NormalizationSpec normalization_from_json(std::string_view text);

}  // namespace mswin
