#include "mswin/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "mswin/errors.hpp"

namespace mswin::metrics {

namespace {

int reflect(int idx, int n) {
  if (n == 1) return 0;
  while (idx < 0 || idx >= n) {
    if (idx < 0) idx = -idx;
    if (idx >= n) idx = 2 * (n - 1) - idx;
  }
  return idx;
}

void check_pair(const Grid& pred, const Grid& truth, const Grid* mask) {
  if (!pred.same_shape(truth)) throw ValidationError("prediction and truth differ in shape");
  if (mask && !mask->same_shape(truth)) throw ValidationError("mask is not co-registered");
}

bool on_support(const Grid* mask, std::size_t i) { return !mask || mask->values[i] == 1.0f; }

}  // namespace

Grid selective_median_filter(const Grid& img, float threshold, int kernel) {
  if (kernel < 3 || kernel % 2 == 0) throw ValidationError("median kernel must be odd and >= 3");
  const int half = kernel / 2;
  Grid out = img;
  std::vector<float> window(static_cast<std::size_t>(kernel) * kernel);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      if (!(img(r, c) > threshold)) continue;
      std::size_t k = 0;
      for (int u = -half; u <= half; ++u)
        for (int v = -half; v <= half; ++v) window[k++] = img(reflect(r + u, img.height), reflect(c + v, img.width));
      auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
      std::nth_element(window.begin(), mid, window.end());
      out(r, c) = *mid;
    }
  }
  return out;
}

Grid to_intensity(const Grid& values, double lo, double hi) {
  if (!(hi > lo)) throw ValidationError("intensity range must be increasing");
  Grid out = values;
  for (float& v : out.values) v = static_cast<float>((v - lo) / (hi - lo) * 255.0);
  return out;
}

Grid from_intensity(const Grid& intensity, double lo, double hi) {
  if (!(hi > lo)) throw ValidationError("intensity range must be increasing");
  Grid out = intensity;
  for (float& v : out.values) v = static_cast<float>(lo + v / 255.0 * (hi - lo));
  return out;
}

double mse(const Grid& pred, const Grid& truth, const Grid* mask) {
  check_pair(pred, truth, mask);
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!on_support(mask, i)) continue;
    const double d = static_cast<double>(pred.values[i]) - truth.values[i];
    sum += d * d;
    ++n;
  }
  if (n == 0) throw ValidationError("evaluation support is empty");
  return sum / static_cast<double>(n);
}

double mae(const Grid& pred, const Grid& truth, const Grid* mask) {
  check_pair(pred, truth, mask);
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!on_support(mask, i)) continue;
    sum += std::abs(static_cast<double>(pred.values[i]) - truth.values[i]);
    ++n;
  }
  if (n == 0) throw ValidationError("evaluation support is empty");
  return sum / static_cast<double>(n);
}

double rmse(const Grid& pred, const Grid& truth, const Grid* mask) { return std::sqrt(mse(pred, truth, mask)); }

std::optional<double> r_squared(const Grid& pred, const Grid& truth, const Grid* mask,
                                std::vector<std::string>* warnings) {
  check_pair(pred, truth, mask);
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!on_support(mask, i)) continue;
    sum += truth.values[i];
    ++n;
  }
  if (n == 0) throw ValidationError("evaluation support is empty");
  const double mean = sum / static_cast<double>(n);
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!on_support(mask, i)) continue;
    const double y = truth.values[i];
    const double d = y - pred.values[i];
    ss_res += d * d;
    ss_tot += (y - mean) * (y - mean);
  }
  if (ss_tot == 0.0) {
    if (warnings) warnings->push_back("R^2 undefined: truth has zero variance on the evaluated support");
    return std::nullopt;
  }
  return 1.0 - ss_res / ss_tot;
}

double ssim_formula(double mu_x, double mu_y, double var_x, double var_y, double cov_xy, const SsimParams& p) {
  const double c1 = p.c1();
  const double c2 = p.c2();
  return ((2.0 * mu_x * mu_y + c1) * (2.0 * cov_xy + c2)) / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2));
}

double ssim_global(const Grid& a, const Grid& b, const SsimParams& params) {
  check_pair(a, b, nullptr);
  if (a.size() == 0) throw ValidationError("SSIM of empty images");
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a.values[i];
    mb += b.values[i];
  }
  ma /= n;
  mb /= n;
  double va = 0, vb = 0, cab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a.values[i] - ma;
    const double db = b.values[i] - mb;
    va += da * da;
    vb += db * db;
    cab += da * db;
  }
  return ssim_formula(ma, mb, va / n, vb / n, cab / n, params);
}

double ssim(const Grid& a, const Grid& b, const SsimParams& params, const Grid* mask, std::vector<std::string>* warnings) {
  check_pair(a, b, mask);
  if (params.window < 1 || params.window % 2 == 0) throw ValidationError("SSIM window must be odd");
  const int w = params.window;
  if (a.height < w || a.width < w) {
    if (warnings) warnings->push_back("image smaller than the SSIM window; using global SSIM");
    return ssim_global(a, b, params);
  }

  // Separable normalized Gaussian.
  std::vector<double> g(static_cast<std::size_t>(w));
  double gsum = 0;
  for (int i = 0; i < w; ++i) {
    const double x = i - w / 2;
    g[static_cast<std::size_t>(i)] = std::exp(-(x * x) / (2.0 * params.sigma * params.sigma));
    gsum += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= gsum;

  const int oh = a.height - w + 1;
  const int ow = a.width - w + 1;
  // Horizontal pass: five moment images of size height x ow.
  std::vector<double> h[5];
  for (auto& v : h) v.assign(static_cast<std::size_t>(a.height) * ow, 0.0);
  for (int r = 0; r < a.height; ++r) {
    for (int c = 0; c < ow; ++c) {
      double s[5] = {0, 0, 0, 0, 0};
      for (int k = 0; k < w; ++k) {
        const double x = a(r, c + k);
        const double y = b(r, c + k);
        const double gk = g[static_cast<std::size_t>(k)];
        s[0] += gk * x;
        s[1] += gk * y;
        s[2] += gk * x * x;
        s[3] += gk * y * y;
        s[4] += gk * x * y;
      }
      for (int m = 0; m < 5; ++m) h[m][static_cast<std::size_t>(r) * ow + c] = s[m];
    }
  }

  double total = 0;
  std::size_t count = 0;
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      const int cr = r + w / 2;
      const int cc = c + w / 2;
      if (mask && (*mask)(cr, cc) != 1.0f) continue;
      double s[5] = {0, 0, 0, 0, 0};
      for (int k = 0; k < w; ++k) {
        const double gk = g[static_cast<std::size_t>(k)];
        for (int m = 0; m < 5; ++m) s[m] += gk * h[m][static_cast<std::size_t>(r + k) * ow + c];
      }
      const double var_x = s[2] - s[0] * s[0];
      const double var_y = s[3] - s[1] * s[1];
      const double cov = s[4] - s[0] * s[1];
      total += ssim_formula(s[0], s[1], var_x, var_y, cov, params);
      ++count;
    }
  }
  if (count == 0) {
    if (warnings) warnings->push_back("mask has no pixels inside the SSIM valid region; using global SSIM");
    return ssim_global(a, b, params);
  }
  return total / static_cast<double>(count);
}

ChangeReport change_stats(const Grid& t0, const Grid& t1, const Grid* mask, double epsilon,
                          std::optional<double> pixel_area_m2) {
  check_pair(t1, t0, mask);
  if (!(epsilon >= 0)) throw ValidationError("epsilon must be >= 0");
  ChangeReport rep;
  rep.epsilon = epsilon;
  rep.classes = Grid(t0.height, t0.width, kNoData);
  std::size_t inc = 0, dec = 0, same = 0;
  for (std::size_t i = 0; i < t0.size(); ++i) {
    if (!on_support(mask, i)) continue;
    const double d = static_cast<double>(t1.values[i]) - t0.values[i];
    if (d > epsilon) {
      ++inc;
      rep.classes.values[i] = 1.0f;
    } else if (d < -epsilon) {
      ++dec;
      rep.classes.values[i] = -1.0f;
    } else {
      ++same;
      rep.classes.values[i] = 0.0f;
    }
  }
  rep.pixels = inc + dec + same;
  if (rep.pixels == 0) throw ValidationError("change support is empty");
  const double n = static_cast<double>(rep.pixels);
  rep.increased_pct = 100.0 * static_cast<double>(inc) / n;
  rep.decreased_pct = 100.0 * static_cast<double>(dec) / n;
  rep.unchanged_pct = 100.0 * static_cast<double>(same) / n;
  const double area = pixel_area_m2.value_or(0.0) / 1e6;
  rep.increased_area_km2 = static_cast<double>(inc) * area;
  rep.decreased_area_km2 = static_cast<double>(dec) * area;
  rep.unchanged_area_km2 = static_cast<double>(same) * area;
  return rep;
}

std::string ChangeReport::to_json() const {
  nlohmann::json j;
  j["increased_pct"] = increased_pct;
  j["decreased_pct"] = decreased_pct;
  j["unchanged_pct"] = unchanged_pct;
  j["increased_area_km2"] = increased_area_km2;
  j["decreased_area_km2"] = decreased_area_km2;
  j["unchanged_area_km2"] = unchanged_area_km2;
  j["epsilon"] = epsilon;
  j["pixels"] = pixels;
  return j.dump(2);
}

EvaluationReport evaluate(const Grid& pred, const Grid& truth, const Grid* mask, const SsimParams& params) {
  EvaluationReport rep;
  rep.mae = mae(pred, truth, mask);
  rep.mse = mse(pred, truth, mask);
  rep.rmse = std::sqrt(rep.mse);
  rep.r2 = r_squared(pred, truth, mask, &rep.warnings);
  rep.ssim = ssim(pred, truth, params, mask, &rep.warnings);
  for (std::size_t i = 0; i < truth.size(); ++i) rep.pixels += on_support(mask, i);
  return rep;
}

std::string EvaluationReport::to_json() const {
  nlohmann::json j;
  j["mae"] = mae;
  j["mse"] = mse;
  j["rmse"] = rmse;
  j["r2"] = r2 ? nlohmann::json(*r2) : nlohmann::json(nullptr);
  j["ssim"] = ssim;
  j["pixels"] = pixels;
  j["warnings"] = warnings;
  return j.dump(2);
}

}  // namespace mswin::metrics
