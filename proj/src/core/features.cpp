#include "mswin/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include "mswin/errors.hpp"

namespace mswin::features {

namespace {

int reflect(int idx, int n) {
  if (n == 1) return 0;
  while (idx < 0 || idx >= n) {
    if (idx < 0) idx = -idx;
    if (idx >= n) idx = 2 * (n - 1) - idx;
  }
  return idx;
}

void require_same_shape(const SpectralBands& s) {
  if (!s.red.same_shape(s.nir)) throw ValidationError("red and nir bands differ in shape");
}

bool is_nodata(const SpectralBands& s, float v) { return s.nodata && v == *s.nodata; }

std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

}  // namespace

SpectralBands spectral_from_stack(const BandStack& stack) {
  const char* wanted[4] = {"blue", "green", "red", "nir"};
  Grid* slots[4];
  SpectralBands s;
  slots[0] = &s.blue;
  slots[1] = &s.green;
  slots[2] = &s.red;
  slots[3] = &s.nir;
  for (int k = 0; k < 4; ++k) {
    bool found = false;
    for (const auto& b : stack.bands()) {
      if (lower(b.name) == wanted[k]) {
        *slots[k] = b.grid;
        found = true;
        break;
      }
    }
    if (!found) {
      if (stack.band_count() < 4)
        throw ValidationError("stack needs blue/green/red/nir bands (or at least four bands in that order)");
      *slots[k] = stack.grid(static_cast<std::size_t>(k));
    }
  }
  s.nodata = stack.nodata;
  return s;
}

Grid compute_ndvi(const SpectralBands& s, float nodata) {
  require_same_shape(s);
  Grid out(s.red.height, s.red.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double red = s.red.values[i];
    const double nir = s.nir.values[i];
    if (is_nodata(s, s.red.values[i]) || is_nodata(s, s.nir.values[i]) || nir + red == 0.0) {
      out.values[i] = nodata;
    } else {
      out.values[i] = static_cast<float>((nir - red) / (nir + red));
    }
  }
  return out;
}

Grid compute_rvi(const SpectralBands& s, float nodata) {
  require_same_shape(s);
  Grid out(s.red.height, s.red.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double red = s.red.values[i];
    if (is_nodata(s, s.red.values[i]) || is_nodata(s, s.nir.values[i]) || red == 0.0) {
      out.values[i] = nodata;
    } else {
      out.values[i] = static_cast<float>(s.nir.values[i] / red);
    }
  }
  return out;
}

Grid compute_dvi(const SpectralBands& s, float nodata) {
  require_same_shape(s);
  Grid out(s.red.height, s.red.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (is_nodata(s, s.red.values[i]) || is_nodata(s, s.nir.values[i])) {
      out.values[i] = nodata;
    } else {
      out.values[i] = static_cast<float>(static_cast<double>(s.nir.values[i]) - s.red.values[i]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// GLCM

std::string glcm_feature_name(GlcmFeature f) {
  switch (f) {
    case GlcmFeature::Mean: return "Mean";
    case GlcmFeature::Variance: return "Variance";
    case GlcmFeature::Homogeneity: return "Homogeneity";
    case GlcmFeature::Contrast: return "Contrast";
    case GlcmFeature::Dissimilarity: return "Dissimilarity";
    case GlcmFeature::Entropy: return "Entropy";
    case GlcmFeature::SecondMoment: return "SecondMoment";
    case GlcmFeature::Correlation: return "Correlation";
  }
  return "?";
}

void GlcmSpec::validate() const {
  if (window < 3 || window % 2 == 0) throw ValidationError("GLCM window must be odd and >= 3");
  if (levels < 2) throw ValidationError("GLCM needs at least 2 gray levels");
  if (levels > 4096) throw ValidationError("GLCM levels above 4096 are not supported");
  if (offsets.empty()) throw ValidationError("GLCM needs at least one offset");
  for (const auto& [dr, dc] : offsets) {
    if (dr == 0 && dc == 0) throw ValidationError("GLCM offsets must be nonzero");
    if (std::abs(dr) >= window || std::abs(dc) >= window)
      throw ValidationError("GLCM offset does not fit inside the window");
  }
  if (features.empty()) throw ValidationError("GLCM feature list is empty");
}

int quantize(double v, double lo, double hi, int levels) {
  if (!(hi > lo)) return 0;
  const int q = static_cast<int>(std::floor((v - lo) / (hi - lo) * levels));
  return std::clamp(q, 0, levels - 1);
}

double GlcmStats::get(GlcmFeature f) const {
  switch (f) {
    case GlcmFeature::Mean: return mean;
    case GlcmFeature::Variance: return variance;
    case GlcmFeature::Homogeneity: return homogeneity;
    case GlcmFeature::Contrast: return contrast;
    case GlcmFeature::Dissimilarity: return dissimilarity;
    case GlcmFeature::Entropy: return entropy;
    case GlcmFeature::SecondMoment: return second_moment;
    case GlcmFeature::Correlation: return correlation;
  }
  return 0.0;
}

namespace {

// Sorted pair codes (i * levels + j) -> statistics. Sorting puts the cells in
// row-major order, which fixes the floating-point accumulation order.
GlcmStats stats_from_codes(std::vector<std::uint32_t>& codes, int levels) {
  std::sort(codes.begin(), codes.end());
  const double total = static_cast<double>(codes.size());

  struct Cell {
    int i;
    int j;
    double p;
  };
  std::vector<Cell> cells;
  cells.reserve(codes.size());
  for (std::size_t k = 0; k < codes.size();) {
    std::size_t run = k;
    while (run < codes.size() && codes[run] == codes[k]) ++run;
    const int i = static_cast<int>(codes[k] / static_cast<std::uint32_t>(levels));
    const int j = static_cast<int>(codes[k] % static_cast<std::uint32_t>(levels));
    cells.push_back({i, j, static_cast<double>(run - k) / total});
    k = run;
  }

  GlcmStats s;
  double mean_j = 0.0;
  for (const auto& c : cells) {
    s.mean += c.i * c.p;
    mean_j += c.j * c.p;
  }
  double var_j = 0.0;
  double cov = 0.0;
  for (const auto& c : cells) {
    const double di = c.i - s.mean;
    const double dj = c.j - mean_j;
    const double d = c.i - c.j;
    s.variance += di * di * c.p;
    var_j += dj * dj * c.p;
    cov += di * dj * c.p;
    s.homogeneity += c.p / (1.0 + d * d);
    s.contrast += d * d * c.p;
    s.dissimilarity += std::abs(d) * c.p;
    s.entropy -= c.p * std::log(c.p);
    s.second_moment += c.p * c.p;
  }
  const double denom = std::sqrt(s.variance) * std::sqrt(var_j);
  s.correlation = denom == 0.0 ? 0.0 : cov / denom;
  return s;
}

}  // namespace

BandStack compute_glcm_features(const Grid& band, const GlcmSpec& spec, std::vector<std::string>* warnings) {
  spec.validate();
  if (band.height < 1 || band.width < 1) throw ValidationError("GLCM input grid is empty");

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (float v : band.values) {
    if (!std::isfinite(v)) throw ValidationError("GLCM input contains non-finite values");
    lo = std::min(lo, static_cast<double>(v));
    hi = std::max(hi, static_cast<double>(v));
  }
  if (hi == lo && warnings) warnings->push_back("GLCM input band is constant; texture features are degenerate");

  std::vector<int> q(band.size());
  for (std::size_t i = 0; i < band.size(); ++i) q[i] = quantize(band.values[i], lo, hi, spec.levels);

  const int half = spec.window / 2;
  const int w = spec.window;
  std::vector<Grid> out(spec.features.size(), Grid(band.height, band.width));
  std::vector<int> win(static_cast<std::size_t>(w) * w);
  std::vector<std::uint32_t> codes;
  codes.reserve(static_cast<std::size_t>(w) * w * spec.offsets.size() * 2);

  for (int r = 0; r < band.height; ++r) {
    for (int c = 0; c < band.width; ++c) {
      for (int u = 0; u < w; ++u) {
        const int rr = reflect(r + u - half, band.height);
        for (int v = 0; v < w; ++v) {
          const int cc = reflect(c + v - half, band.width);
          win[static_cast<std::size_t>(u) * w + v] = q[static_cast<std::size_t>(rr) * band.width + cc];
        }
      }
      codes.clear();
      for (const auto& [dr, dc] : spec.offsets) {
        for (int u = 0; u < w; ++u) {
          const int u2 = u + dr;
          if (u2 < 0 || u2 >= w) continue;
          for (int v = 0; v < w; ++v) {
            const int v2 = v + dc;
            if (v2 < 0 || v2 >= w) continue;
            const auto a = static_cast<std::uint32_t>(win[static_cast<std::size_t>(u) * w + v]);
            const auto b = static_cast<std::uint32_t>(win[static_cast<std::size_t>(u2) * w + v2]);
            codes.push_back(a * static_cast<std::uint32_t>(spec.levels) + b);
            if (spec.symmetric) codes.push_back(b * static_cast<std::uint32_t>(spec.levels) + a);
          }
        }
      }
      const GlcmStats s = stats_from_codes(codes, spec.levels);
      for (std::size_t f = 0; f < spec.features.size(); ++f) out[f](r, c) = static_cast<float>(s.get(spec.features[f]));
    }
  }

  BandStack stack(band.height, band.width);
  for (std::size_t f = 0; f < spec.features.size(); ++f)
    stack.add_band(glcm_feature_name(spec.features[f]), std::move(out[f]));
  return stack;
}

// ---------------------------------------------------------------------------
// topography

QuadraticFit fit_quadratic(const double z[9], double g) {
  // z1 z2 z3 / z4 z5 z6 / z7 z8 z9 with z1 at (-g, +g).
  const double z1 = z[0], z2 = z[1], z3 = z[2], z4 = z[3], z5 = z[4], z6 = z[5], z7 = z[6], z8 = z[7], z9 = z[8];
  const double g2 = g * g;
  QuadraticFit q;
  q.a = (z1 + z3 + z4 + z6 + z7 + z9) / (6.0 * g2) - (z2 + z5 + z8) / (3.0 * g2);
  q.b = (z1 + z2 + z3 + z7 + z8 + z9) / (6.0 * g2) - (z4 + z5 + z6) / (3.0 * g2);
  q.c = (z3 + z7 - z1 - z9) / (4.0 * g2);
  q.d = (z3 + z6 + z9 - z1 - z4 - z7) / (6.0 * g);
  q.e = (z1 + z2 + z3 - z7 - z8 - z9) / (6.0 * g);
  q.f = (2.0 * (z2 + z4 + z6 + z8) - (z1 + z3 + z7 + z9) + 5.0 * z5) / 9.0;

  double ss = 0.0;
  for (int k = 0; k < 9; ++k) {
    const double x = ((k % 3) - 1) * g;
    const double y = (1 - (k / 3)) * g;
    const double fit = q.a * x * x + q.b * y * y + q.c * x * y + q.d * x + q.e * y + q.f;
    ss += (z[k] - fit) * (z[k] - fit);
  }
  q.rms = std::sqrt(ss / 9.0);
  return q;
}

BandStack compute_topographic(const Grid& dem, double cell_size) {
  if (dem.height < 3 || dem.width < 3) throw ValidationError("DEM must be at least 3x3");
  if (!(cell_size > 0)) throw ValidationError("cell size must be positive");

  constexpr double kDeg = 180.0 / std::numbers::pi;
  constexpr double kRad = std::numbers::pi / 180.0;
  const double sun_zenith = (90.0 - 45.0) * kRad;
  const double sun_azimuth = 315.0 * kRad;

  std::vector<Grid> out(11, Grid(dem.height, dem.width));
  double z[9];
  for (int r = 0; r < dem.height; ++r) {
    for (int c = 0; c < dem.width; ++c) {
      for (int k = 0; k < 9; ++k) {
        const float v = dem(reflect(r + k / 3 - 1, dem.height), reflect(c + k % 3 - 1, dem.width));
        if (!std::isfinite(v)) throw ValidationError("DEM contains non-finite values");
        z[k] = v;
      }
      const QuadraticFit q = fit_quadratic(z, cell_size);
      const double p = q.d * q.d + q.e * q.e;
      const double grad = std::sqrt(p);
      const double slope = std::atan(grad);

      // Compass bearing of the downslope direction (-d, -e), clockwise from north.
      double aspect = kNoData;
      if (p > 0.0) {
        aspect = std::atan2(-q.d, -q.e) * kDeg;
        if (aspect < 0.0) aspect += 360.0;
      }

      double shade = std::cos(sun_zenith) * std::cos(slope);
      if (p > 0.0) shade += std::sin(sun_zenith) * std::sin(slope) * std::cos(sun_azimuth - aspect * kRad);
      shade = std::max(shade, 0.0);

      // Curvature-like terms are second derivatives: positive for a bowl.
      const double along = q.a * q.d * q.d + q.b * q.e * q.e + q.c * q.d * q.e;
      const double across = q.b * q.d * q.d + q.a * q.e * q.e - q.c * q.d * q.e;
      const double profile = p > 0.0 ? 2.0 * along / (p * std::pow(1.0 + p, 1.5)) : 0.0;
      const double plan = p > 0.0 ? 2.0 * across / std::pow(p, 1.5) : 0.0;
      const double longitudinal = p > 0.0 ? 2.0 * along / p : 0.0;
      const double cross = p > 0.0 ? 2.0 * across / p : 0.0;
      const double root = std::sqrt((q.a - q.b) * (q.a - q.b) + q.c * q.c);

      out[0](r, c) = static_cast<float>(slope * kDeg);
      out[1](r, c) = static_cast<float>(aspect);
      out[2](r, c) = static_cast<float>(shade);
      out[3](r, c) = static_cast<float>(profile);
      out[4](r, c) = static_cast<float>(plan);
      out[5](r, c) = static_cast<float>(longitudinal);
      out[6](r, c) = static_cast<float>(cross);
      out[7](r, c) = static_cast<float>(q.a + q.b - root);
      out[8](r, c) = static_cast<float>(q.a + q.b + root);
      out[9](r, c) = static_cast<float>(q.rms);
      out[10](r, c) = static_cast<float>(100.0 * grad);
    }
  }

  BandStack stack(dem.height, dem.width);
  stack.nodata = kNoData;
  for (int k = 0; k < 11; ++k) stack.add_band(kTopographicNames[k], std::move(out[k]));
  return stack;
}

// ---------------------------------------------------------------------------

BandStack assemble_feature_stack(const SpectralBands& spectral, const Grid& dem, const GlcmSpec& glcm_spec,
                                 double cell_size, std::vector<std::string>* warnings) {
  const Grid* bands[4] = {&spectral.blue, &spectral.green, &spectral.red, &spectral.nir};
  for (const Grid* b : bands)
    if (!b->same_shape(spectral.blue)) throw ValidationError("spectral bands are not co-registered");
  if (!dem.same_shape(spectral.blue))
    throw ValidationError("DEM is " + std::to_string(dem.height) + "x" + std::to_string(dem.width) +
                          ", spectral grid is " + std::to_string(spectral.blue.height) + "x" +
                          std::to_string(spectral.blue.width));
  glcm_spec.validate();

  BandStack out(spectral.blue.height, spectral.blue.width);
  out.nodata = kNoData;
  for (int k = 0; k < 4; ++k) out.add_band("Band" + std::to_string(k + 1), *bands[k]);

  const BandStack topo = compute_topographic(dem, cell_size);
  for (const auto& b : topo.bands()) out.add_band(b.name, b.grid);

  out.add_band("NDVI", compute_ndvi(spectral));
  out.add_band("DVI", compute_dvi(spectral));
  out.add_band("RVI", compute_rvi(spectral));

  for (int k = 0; k < 4; ++k) {
    Grid src = *bands[k];
    // GLCM quantization needs finite values; nodata pixels take the band minimum.
    if (spectral.nodata) {
      float lo = std::numeric_limits<float>::infinity();
      for (float v : src.values)
        if (v != *spectral.nodata) lo = std::min(lo, v);
      if (!std::isfinite(lo)) lo = 0.0f;
      for (float& v : src.values)
        if (v == *spectral.nodata) v = lo;
    }
    const BandStack tex = compute_glcm_features(src, glcm_spec, warnings);
    for (const auto& b : tex.bands()) out.add_band("GLCM-" + b.name + "_Band" + std::to_string(k + 1), b.grid);
  }
  return out;
}

}  // namespace mswin::features
