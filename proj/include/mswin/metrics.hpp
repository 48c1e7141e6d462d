#pragma once

// Post-processing and evaluation: selective median filter, error metrics,
// SSIM and change accounting between two carbon maps.

#include <optional>
#include <string>
#include <vector>

#include "mswin/raster.hpp"

namespace mswin::metrics {

// Replace pixels strictly above `threshold` with the median of their
// kernel x kernel neighbourhood (mirror-padded, taken from the input).
// Every other pixel is copied bit-for-bit.
Grid selective_median_filter(const Grid& img, float threshold = 240.0f, int kernel = 3);

// Map [lo, hi] values onto the 0-255 intensity scale and back.
Grid to_intensity(const Grid& values, double lo, double hi);
Grid from_intensity(const Grid& intensity, double lo, double hi);

// Evaluated support is mask == 1 when a mask is given, else every pixel.
// Empty support throws ValidationError.
double mae(const Grid& pred, const Grid& truth, const Grid* mask = nullptr);
double mse(const Grid& pred, const Grid& truth, const Grid* mask = nullptr);
double rmse(const Grid& pred, const Grid& truth, const Grid* mask = nullptr);

// 1 - SS_res / SS_tot; nullopt (plus a warning) when truth is constant on
// the support.
std::optional<double> r_squared(const Grid& pred, const Grid& truth, const Grid* mask = nullptr,
                                std::vector<std::string>* warnings = nullptr);

struct SsimParams {
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;  // L: 255 for intensity images
  int window = 11;
  double sigma = 1.5;

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

// One SSIM evaluation from means, variances and covariance.
double ssim_formula(double mu_x, double mu_y, double var_x, double var_y, double cov_xy, const SsimParams& p);

// Whole-image statistics (population moments), one formula evaluation.
double ssim_global(const Grid& a, const Grid& b, const SsimParams& params = {});

// Gaussian-windowed SSIM map over the valid region (no padding), averaged.
// With a mask, the average runs over window centres where mask == 1. Images
// smaller than the window fall back to ssim_global with a warning.
double ssim(const Grid& a, const Grid& b, const SsimParams& params = {}, const Grid* mask = nullptr,
            std::vector<std::string>* warnings = nullptr);

struct ChangeReport {
  double increased_pct = 0;
  double decreased_pct = 0;
  double unchanged_pct = 0;
  double increased_area_km2 = 0;
  double decreased_area_km2 = 0;
  double unchanged_area_km2 = 0;
  double epsilon = 0;
  std::size_t pixels = 0;
  Grid classes;  // +1 increased, -1 decreased, 0 unchanged, nodata outside support

  std::string to_json() const;
};

// delta = t1 - t0; delta > eps -> increased, delta < -eps -> decreased.
ChangeReport change_stats(const Grid& t0, const Grid& t1, const Grid* mask, double epsilon = 5.0,
                          std::optional<double> pixel_area_m2 = std::nullopt);

struct EvaluationReport {
  double mae = 0;
  double mse = 0;
  double rmse = 0;
  std::optional<double> r2;
  double ssim = 0;
  std::size_t pixels = 0;
  std::vector<std::string> warnings;

  std::string to_json() const;
};

EvaluationReport evaluate(const Grid& pred, const Grid& truth, const Grid* mask, const SsimParams& params);

}  // namespace mswin::metrics
