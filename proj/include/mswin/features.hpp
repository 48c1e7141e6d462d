#pragma once

// Feature engineering for the 50-band condition stack:
//   1-4    spectral passthrough (Band1..Band4 = blue, green, red, nir)
//   5-15   topographic derivatives of the DEM
//   16-18  NDVI, DVI, RVI
//   19-50  GLCM texture, 8 statistics per spectral band, feature-major
//          within each band ("GLCM-Mean_Band1" is band 19)

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mswin/raster.hpp"

namespace mswin::features {

struct SpectralBands {
  Grid blue;
  Grid green;
  Grid red;
  Grid nir;
  std::optional<float> nodata;
};

// Extract blue/green/red/nir from a stack; names are matched
// case-insensitively, falling back to band order 1..4.
SpectralBands spectral_from_stack(const BandStack& stack);

Grid compute_ndvi(const SpectralBands& s, float nodata = kNoData);
Grid compute_rvi(const SpectralBands& s, float nodata = kNoData);
Grid compute_dvi(const SpectralBands& s, float nodata = kNoData);

enum class GlcmFeature { Mean, Variance, Homogeneity, Contrast, Dissimilarity, Entropy, SecondMoment, Correlation };

inline constexpr GlcmFeature kAllGlcmFeatures[] = {
    GlcmFeature::Mean,          GlcmFeature::Variance, GlcmFeature::Homogeneity,  GlcmFeature::Contrast,
    GlcmFeature::Dissimilarity, GlcmFeature::Entropy,  GlcmFeature::SecondMoment, GlcmFeature::Correlation};

std::string glcm_feature_name(GlcmFeature f);

struct GlcmSpec {
  int window = 7;
  int levels = 32;
  // (drow, dcol): 0, 45, 90 and 135 degrees at distance 1.
  std::vector<std::pair<int, int>> offsets{{0, 1}, {-1, 1}, {-1, 0}, {-1, -1}};
  bool symmetric = true;
  std::vector<GlcmFeature> features{std::begin(kAllGlcmFeatures), std::end(kAllGlcmFeatures)};

  void validate() const;
};

// Quantize v into [0, levels) over [lo, hi]; a zero range quantizes to 0.
int quantize(double v, double lo, double hi, int levels);

// Statistics of one normalized co-occurrence matrix p(i, j), i and j being
// bin indices. Cells are visited in row-major (i, j) order: a first pass
// accumulates the marginal means, a second pass everything else.
struct GlcmStats {
  double mean = 0;
  double variance = 0;
  double homogeneity = 0;
  double contrast = 0;
  double dissimilarity = 0;
  double entropy = 0;
  double second_moment = 0;
  double correlation = 0;

  double get(GlcmFeature f) const;
};

// One band per selected feature, named by glcm_feature_name. Window and
// neighbours are mirror-padded at the grid edges.
BandStack compute_glcm_features(const Grid& band, const GlcmSpec& spec, std::vector<std::string>* warnings = nullptr);

inline constexpr const char* kTopographicNames[] = {
    "Slope",
    "Aspect",
    "Shaded_Relief",
    "Profile_Convexity",
    "Plan_Convexity",
    "Longitudinal_Convexity",
    "Cross_Sectional_Convexity",
    "Minimum_Curvature",
    "Maximum_Curvature",
    "RMS",
    "Slope_Percent",
};

// Coefficients of z = a x^2 + b y^2 + c x y + d x + e y + f fitted by least
// squares to a 3x3 neighbourhood. x grows to the east, y to the north.
struct QuadraticFit {
  double a = 0, b = 0, c = 0, d = 0, e = 0, f = 0;
  double rms = 0;
};

// z[0..8] is the neighbourhood in row-major order (north row first).
QuadraticFit fit_quadratic(const double z[9], double cell_size);

// 11 bands in kTopographicNames order; stack nodata is set to kNoData
// (aspect on flat cells).
BandStack compute_topographic(const Grid& dem, double cell_size);

BandStack assemble_feature_stack(const SpectralBands& spectral, const Grid& dem, const GlcmSpec& glcm_spec,
                                 double cell_size = 16.0, std::vector<std::string>* warnings = nullptr);

}  // namespace mswin::features
