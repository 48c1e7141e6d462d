#include "mswin/vegetation_mask.hpp"

#include <cmath>

#include "mswin/errors.hpp"

namespace mswin::mask {

namespace {

bool usable(float v, std::optional<float> nodata) { return std::isfinite(v) && !(nodata && v == *nodata); }

}  // namespace

ThresholdStats compute_threshold(const Grid& ndvi, std::optional<float> nodata) {
  double sum = 0.0;
  std::size_t n = 0;
  for (float v : ndvi.values) {
    if (!usable(v, nodata)) continue;
    sum += v;
    ++n;
  }
  if (n == 0) throw ValidationError("NDVI grid has no valid pixels");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (float v : ndvi.values) {
    if (!usable(v, nodata)) continue;
    ss += (v - mean) * (v - mean);
  }
  const double sd = std::sqrt(ss / static_cast<double>(n));
  return {threshold_from(mean, sd), mean, sd};
}

ForestMask binarize(const Grid& ndvi, double threshold, std::optional<float> nodata) {
  if (!std::isfinite(threshold)) throw ValidationError("mask threshold must be finite");
  ForestMask m;
  m.grid = Grid(ndvi.height, ndvi.width);
  m.threshold = threshold;
  m.mean = std::nan("");
  m.stddev = std::nan("");
  for (std::size_t i = 0; i < ndvi.size(); ++i) {
    const float v = ndvi.values[i];
    m.grid.values[i] = usable(v, nodata) && v >= threshold ? 1.0f : 0.0f;
  }
  return m;
}

ForestMask derive_mask(const Grid& ndvi, std::optional<float> nodata) {
  const ThresholdStats t = compute_threshold(ndvi, nodata);
  ForestMask m = binarize(ndvi, t.threshold, nodata);
  m.mean = t.mean;
  m.stddev = t.stddev;
  return m;
}

Grid apply_mask(const Grid& data, const Grid& mask) {
  if (!data.same_shape(mask)) throw ValidationError("mask is not co-registered with the data");
  Grid out = data;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask.values[i] == 0.0f) out.values[i] = 0.0f;
  return out;
}

BandStack apply_mask(const BandStack& stack, const Grid& mask) {
  if (mask.height != stack.height() || mask.width != stack.width())
    throw ValidationError("mask is not co-registered with the stack");
  BandStack out(stack.height(), stack.width());
  out.nodata = stack.nodata;
  out.geo = stack.geo;
  out.pixel_area = stack.pixel_area;
  for (const auto& b : stack.bands()) out.add_band(b.name, apply_mask(b.grid, mask));
  return out;
}

double coverage(const Grid& mask) {
  if (mask.size() == 0) return 0.0;
  std::size_t on = 0;
  for (float v : mask.values) on += v != 0.0f;
  return static_cast<double>(on) / static_cast<double>(mask.size());
}

}  // namespace mswin::mask
