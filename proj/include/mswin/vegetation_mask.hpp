#pragma once

// Forest mask from NDVI: threshold M = mean - 2 * stddev, pixel >= M is
// vegetation.

#include <optional>

#include "mswin/raster.hpp"

namespace mswin::mask {

struct ThresholdStats {
  double threshold = 0;
  double mean = 0;
  double stddev = 0;  // population
};

struct ForestMask {
  Grid grid;  // strictly 0/1
  double threshold = 0;
  double mean = 0;
  double stddev = 0;
};

// Statistics over non-nodata, finite pixels. Throws ValidationError when
// there are none.
ThresholdStats compute_threshold(const Grid& ndvi, std::optional<float> nodata = kNoData);

inline double threshold_from(double mean, double stddev) { return mean - 2.0 * stddev; }

// pixel >= threshold -> 1, otherwise (and nodata) -> 0.
ForestMask binarize(const Grid& ndvi, double threshold, std::optional<float> nodata = kNoData);

// compute_threshold followed by binarize, statistics recorded on the mask.
ForestMask derive_mask(const Grid& ndvi, std::optional<float> nodata = kNoData);

Grid apply_mask(const Grid& data, const Grid& mask);
BandStack apply_mask(const BandStack& stack, const Grid& mask);
inline Grid apply_mask(const Grid& data, const ForestMask& mask) { return apply_mask(data, mask.grid); }
inline BandStack apply_mask(const BandStack& stack, const ForestMask& mask) { return apply_mask(stack, mask.grid); }

double coverage(const Grid& mask);

}  // namespace mswin::mask
