#include "mswin/raster.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include <json.hpp>

#include "mswin/errors.hpp"

namespace mswin {

namespace fs = std::filesystem;
using nlohmann::json;

Grid::Grid(int h, int w, float fill) : height(h), width(w) {
  if (h < 0 || w < 0) throw ValidationError("grid dimensions must be non-negative");
  values.assign(static_cast<std::size_t>(h) * w, fill);
}

Grid::Grid(int h, int w, std::vector<float> data) : height(h), width(w), values(std::move(data)) {
  if (values.size() != static_cast<std::size_t>(h) * w)
    throw ValidationError("grid data size " + std::to_string(values.size()) + " does not match " +
                          std::to_string(h) + "x" + std::to_string(w));
}

void BandStack::add_band(std::string name, Grid grid) {
  if (name.empty()) throw ValidationError("band name must not be empty");
  if (grid.height != height_ || grid.width != width_)
    throw ValidationError("band '" + name + "' is " + std::to_string(grid.height) + "x" +
                          std::to_string(grid.width) + ", stack is " + std::to_string(height_) + "x" +
                          std::to_string(width_));
  if (grid.values.size() != static_cast<std::size_t>(height_) * width_)
    throw ValidationError("band '" + name + "' has inconsistent storage size");
  if (find(name)) throw ValidationError("duplicate band name '" + name + "'");
  bands_.push_back(Band{std::move(name), std::move(grid)});
}

std::optional<std::size_t> BandStack::find(std::string_view name) const {
  for (std::size_t i = 0; i < bands_.size(); ++i)
    if (bands_[i].name == name) return i;
  return std::nullopt;
}

const Grid& BandStack::grid(std::string_view name) const {
  auto idx = find(name);
  if (!idx) throw ValidationError("no band named '" + std::string(name) + "'");
  return bands_[*idx].grid;
}

std::vector<std::string> BandStack::names() const {
  std::vector<std::string> out;
  out.reserve(bands_.size());
  for (const auto& b : bands_) out.push_back(b.name);
  return out;
}

BandStack BandStack::select(std::span<const std::string> names) const {
  BandStack out(height_, width_);
  out.nodata = nodata;
  out.geo = geo;
  out.pixel_area = pixel_area;
  for (const auto& n : names) out.add_band(n, grid(n));
  return out;
}

BandStack single_band(std::string name, Grid grid, std::optional<float> nodata) {
  BandStack s(grid.height, grid.width);
  s.nodata = nodata;
  s.add_band(std::move(name), std::move(grid));
  return s;
}

// ---------------------------------------------------------------------------
// container

namespace {

void check_band_name(const std::string& name) {
  if (name.empty() || name == "meta" || name.find('/') != std::string::npos ||
      name.find('\\') != std::string::npos || name.find('\0') != std::string::npos || name == "." ||
      name == "..")
    throw ValidationError("band name '" + name + "' cannot be used as a file name");
}

std::uint32_t swap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

void write_f32le(const fs::path& file, const std::vector<float>& values) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
  } else {
    for (float v : values) {
      auto bits = swap32(std::bit_cast<std::uint32_t>(v));
      out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
  }
  if (!out) throw IoError("write failed for " + file.string());
}

std::vector<float> read_f32le(const fs::path& file, std::size_t count, const std::string& band) {
  std::error_code ec;
  if (!fs::exists(file, ec)) throw CorruptionError("band '" + band + "' listed in meta.json is missing: " + file.string());
  const auto bytes = fs::file_size(file, ec);
  if (ec) throw IoError("cannot stat " + file.string());
  if (bytes != count * sizeof(float))
    throw CorruptionError("band '" + band + "' has " + std::to_string(bytes) + " bytes, expected " +
                          std::to_string(count * sizeof(float)));
  std::vector<float> values(count);
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw IoError("read failed for " + file.string());
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& v : values) v = std::bit_cast<float>(swap32(std::bit_cast<std::uint32_t>(v)));
  }
  return values;
}

}  // namespace

void save_stack(const BandStack& stack, const fs::path& dir) {
  for (const auto& b : stack.bands()) {
    check_band_name(b.name);
    if (b.grid.height != stack.height() || b.grid.width != stack.width() ||
        b.grid.values.size() != static_cast<std::size_t>(stack.height()) * stack.width())
      throw ValidationError("band '" + b.name + "' does not match the stack size");
  }
  if (stack.nodata && std::isnan(*stack.nodata)) throw ValidationError("NaN nodata cannot be stored in meta.json");

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  json meta;
  meta["width"] = stack.width();
  meta["height"] = stack.height();
  meta["bands"] = stack.names();
  meta["dtype"] = "f32le";
  meta["nodata"] = stack.nodata ? json(*stack.nodata) : json(nullptr);
  if (stack.geo) {
    meta["geo"] = {{"transform", stack.geo->affine}, {"crs", stack.geo->crs}};
  } else {
    meta["geo"] = nullptr;
  }
  meta["pixel_area"] = stack.pixel_area ? json(*stack.pixel_area) : json(nullptr);

  for (const auto& b : stack.bands()) write_f32le(dir / (b.name + ".f32"), b.grid.values);

  std::ofstream out(dir / "meta.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "meta.json").string());
  out << meta.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + (dir / "meta.json").string());
}

BandStack load_stack(const fs::path& dir) {
  const auto meta_path = dir / "meta.json";
  std::ifstream in(meta_path);
  if (!in) throw IoError("cannot open " + meta_path.string());
  json meta;
  try {
    in >> meta;
  } catch (const json::exception& e) {
    throw CorruptionError("malformed " + meta_path.string() + ": " + e.what());
  }
  try {
    const auto dtype = meta.at("dtype").get<std::string>();
    if (dtype != "f32le") throw UnsupportedFormatError("unsupported dtype '" + dtype + "' in " + meta_path.string());
    const int width = meta.at("width").get<int>();
    const int height = meta.at("height").get<int>();
    if (width < 0 || height < 0) throw CorruptionError("negative dimensions in " + meta_path.string());

    BandStack stack(height, width);
    if (meta.contains("nodata") && !meta["nodata"].is_null()) stack.nodata = meta["nodata"].get<float>();
    if (meta.contains("geo") && !meta["geo"].is_null()) {
      GeoTransform g;
      g.affine = meta["geo"].at("transform").get<std::array<double, 6>>();
      g.crs = meta["geo"].value("crs", "");
      stack.geo = g;
    }
    if (meta.contains("pixel_area") && !meta["pixel_area"].is_null())
      stack.pixel_area = meta["pixel_area"].get<double>();

    const auto count = static_cast<std::size_t>(width) * height;
    for (const auto& name : meta.at("bands").get<std::vector<std::string>>()) {
      check_band_name(name);
      stack.add_band(name, Grid(height, width, read_f32le(dir / (name + ".f32"), count, name)));
    }
    return stack;
  } catch (const json::exception& e) {
    throw CorruptionError("invalid " + meta_path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// tiling

std::vector<int> tile_origins(int extent, int size, int stride) {
  if (size < 1 || stride < 1) throw ValidationError("tile size and stride must be >= 1");
  if (size > extent)
    throw ValidationError("tile size " + std::to_string(size) + " exceeds extent " + std::to_string(extent));
  std::vector<int> origins;
  int pos = 0;
  for (; pos + size <= extent; pos += stride) origins.push_back(pos);
  if (origins.back() + size < extent) origins.push_back(extent - size);
  return origins;
}

Grid crop(const Grid& grid, int row, int col, int h, int w) {
  if (row < 0 || col < 0 || h < 0 || w < 0 || row + h > grid.height || col + w > grid.width)
    throw ValidationError("crop window outside the grid");
  Grid out(h, w);
  for (int r = 0; r < h; ++r)
    std::copy_n(grid.values.begin() + static_cast<std::ptrdiff_t>(row + r) * grid.width + col, w,
                out.values.begin() + static_cast<std::ptrdiff_t>(r) * w);
  return out;
}

BandStack crop(const BandStack& stack, int row, int col, int h, int w) {
  BandStack out(h, w);
  out.nodata = stack.nodata;
  out.pixel_area = stack.pixel_area;
  if (stack.geo) {
    // Shift the affine origin to the crop corner.
    GeoTransform g = *stack.geo;
    const auto& a = stack.geo->affine;
    g.affine[0] = a[0] + col * a[1] + row * a[2];
    g.affine[3] = a[3] + col * a[4] + row * a[5];
    out.geo = g;
  }
  for (const auto& b : stack.bands()) out.add_band(b.name, crop(b.grid, row, col, h, w));
  return out;
}

std::vector<Tile> tile_stack(const BandStack& stack, int tile_h, int tile_w, int stride_h, int stride_w) {
  const auto rows = tile_origins(stack.height(), tile_h, stride_h);
  const auto cols = tile_origins(stack.width(), tile_w, stride_w);
  std::vector<Tile> tiles;
  tiles.reserve(rows.size() * cols.size());
  for (int r : rows)
    for (int c : cols) tiles.push_back(Tile{r, c, tile_h, tile_w, 0, crop(stack, r, c, tile_h, tile_w)});
  return tiles;
}

// ---------------------------------------------------------------------------
// normalization

std::string to_string(NormMode mode) {
  switch (mode) {
    case NormMode::MinMaxSymmetric: return "minmax_symmetric";
    case NormMode::MinMaxUnit: return "minmax_unit";
    case NormMode::FixedScale: return "fixed_scale";
  }
  return "?";
}

NormMode norm_mode_from_string(std::string_view s) {
  if (s == "minmax_symmetric") return NormMode::MinMaxSymmetric;
  if (s == "minmax_unit") return NormMode::MinMaxUnit;
  if (s == "fixed_scale") return NormMode::FixedScale;
  throw ValidationError("unknown normalization mode '" + std::string(s) + "'");
}

NormalizationSpec fit_normalization(const BandStack& stack, NormMode mode, double max_value) {
  NormalizationSpec spec;
  spec.mode = mode;
  spec.max_value = max_value;
  if (mode == NormMode::FixedScale) {
    if (!(max_value > 0)) throw ValidationError("fixed_scale needs a positive max value");
    return spec;
  }
  for (const auto& b : stack.bands()) {
    float lo = std::numeric_limits<float>::infinity();
    float hi = -std::numeric_limits<float>::infinity();
    for (float v : b.grid.values) {
      if (stack.is_nodata(v) || !std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (lo > hi) lo = hi = 0.0f;  // all nodata
    if (lo == hi) spec.warnings.push_back("band '" + b.name + "' has zero range; it maps to the range midpoint");
    spec.per_band.push_back({lo, hi});
  }
  return spec;
}

NormalizationSpec fixed_scale(double max_value) { return fit_normalization(BandStack{}, NormMode::FixedScale, max_value); }

namespace {

struct Affine {
  double scale;
  double offset;
  bool degenerate;
  double midpoint;
  double constant;
};

Affine band_affine(const NormalizationSpec& spec, std::size_t band) {
  switch (spec.mode) {
    case NormMode::FixedScale:
      return {1.0 / spec.max_value, 0.0, false, 0.0, 0.0};
    case NormMode::MinMaxUnit:
    case NormMode::MinMaxSymmetric: {
      if (band >= spec.per_band.size()) throw ValidationError("normalization spec was fitted on fewer bands");
      const double lo = spec.per_band[band].min;
      const double hi = spec.per_band[band].max;
      const bool sym = spec.mode == NormMode::MinMaxSymmetric;
      const double mid = sym ? 0.0 : 0.5;
      if (hi == lo) return {0.0, 0.0, true, mid, lo};
      const double span = hi - lo;
      return sym ? Affine{2.0 / span, -2.0 * lo / span - 1.0, false, mid, lo}
                 : Affine{1.0 / span, -lo / span, false, mid, lo};
    }
  }
  throw ValidationError("bad normalization mode");
}

}  // namespace

BandStack normalize(const BandStack& stack, const NormalizationSpec& spec, std::vector<std::string>* warnings) {
  BandStack out(stack.height(), stack.width());
  out.nodata = stack.nodata;
  out.geo = stack.geo;
  out.pixel_area = stack.pixel_area;
  for (std::size_t i = 0; i < stack.band_count(); ++i) {
    const auto& b = stack.band(i);
    const Affine a = band_affine(spec, i);
    if (a.degenerate && warnings)
      warnings->push_back("band '" + b.name + "' has zero range; mapped to the range midpoint");
    Grid g = b.grid;
    for (float& v : g.values) {
      if (stack.is_nodata(v)) continue;
      v = a.degenerate ? static_cast<float>(a.midpoint) : static_cast<float>(a.scale * v + a.offset);
    }
    out.add_band(b.name, std::move(g));
  }
  return out;
}

BandStack denormalize(const BandStack& stack, const NormalizationSpec& spec) {
  BandStack out(stack.height(), stack.width());
  out.nodata = stack.nodata;
  out.geo = stack.geo;
  out.pixel_area = stack.pixel_area;
  for (std::size_t i = 0; i < stack.band_count(); ++i) {
    const auto& b = stack.band(i);
    const Affine a = band_affine(spec, i);
    Grid g = b.grid;
    for (float& v : g.values) {
      if (stack.is_nodata(v)) continue;
      v = a.degenerate ? static_cast<float>(a.constant) : static_cast<float>((v - a.offset) / a.scale);
    }
    out.add_band(b.name, std::move(g));
  }
  return out;
}

std::string normalization_to_json(const NormalizationSpec& spec) {
  json j;
  j["mode"] = to_string(spec.mode);
  j["max_value"] = spec.max_value;
  j["per_band"] = json::array();
  for (const auto& r : spec.per_band) j["per_band"].push_back({r.min, r.max});
  j["warnings"] = spec.warnings;
  return j.dump();
}

NormalizationSpec normalization_from_json(std::string_view text) {
  try {
    const auto j = json::parse(text);
    NormalizationSpec spec;
    spec.mode = norm_mode_from_string(j.at("mode").get<std::string>());
    spec.max_value = j.value("max_value", 500.0);
    for (const auto& r : j.value("per_band", json::array())) spec.per_band.push_back({r.at(0).get<float>(), r.at(1).get<float>()});
    spec.warnings = j.value("warnings", std::vector<std::string>{});
    return spec;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid normalization JSON: ") + e.what());
  }
}

}  // namespace mswin
