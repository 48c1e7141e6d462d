#pragma once

// Independent reference implementations used by unit and acceptance tests.
// Deliberately naive: explicit loops, no shared code with src/.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "mswin/raster.hpp"
#include "mswin/rng.hpp"

namespace oracle {

using mswin::Grid;

// --- metrics -------------------------------------------------------------

inline double mae(const Grid& p, const Grid& t) {
  double s = 0;
  int n = 0;
  for (int r = 0; r < t.height; ++r)
    for (int c = 0; c < t.width; ++c) {
      s += std::fabs(static_cast<double>(p(r, c)) - static_cast<double>(t(r, c)));
      ++n;
    }
  return s / n;
}

inline double mse(const Grid& p, const Grid& t) {
  double s = 0;
  int n = 0;
  for (int r = 0; r < t.height; ++r)
    for (int c = 0; c < t.width; ++c) {
      const double d = static_cast<double>(p(r, c)) - static_cast<double>(t(r, c));
      s += d * d;
      ++n;
    }
  return s / n;
}

inline double r2(const Grid& p, const Grid& t) {
  double mean = 0;
  int n = 0;
  for (int r = 0; r < t.height; ++r)
    for (int c = 0; c < t.width; ++c) {
      mean += t(r, c);
      ++n;
    }
  mean /= n;
  double res = 0, tot = 0;
  for (int r = 0; r < t.height; ++r)
    for (int c = 0; c < t.width; ++c) {
      res += (t(r, c) - static_cast<double>(p(r, c))) * (t(r, c) - static_cast<double>(p(r, c)));
      tot += (t(r, c) - mean) * (t(r, c) - mean);
    }
  return 1.0 - res / tot;
}

// SSIM from whole-image statistics, written out term by term.
inline double ssim_global(const Grid& x, const Grid& y, double L = 1.0) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x.values[i];
    my += y.values[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x.values[i] - mx) * (x.values[i] - mx);
    syy += (y.values[i] - my) * (y.values[i] - my);
    sxy += (x.values[i] - mx) * (y.values[i] - my);
  }
  sxx /= n;
  syy /= n;
  sxy /= n;
  const double c1 = (0.01 * L) * (0.01 * L);
  const double c2 = (0.03 * L) * (0.03 * L);
  const double lum = (2 * mx * my + c1) / (mx * mx + my * my + c1);
  const double cs = (2 * sxy + c2) / (sxx + syy + c2);
  return lum * cs;
}

// --- Kendall tau-b by explicit pair enumeration ---------------------------

inline double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  long long conc = 0, disc = 0, tx = 0, ty = 0;
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0 && dy == 0) continue;
      if (dx == 0) {
        ++tx;
      } else if (dy == 0) {
        ++ty;
      } else if ((dx > 0) == (dy > 0)) {
        ++conc;
      } else {
        ++disc;
      }
    }
  const double denom = std::sqrt(static_cast<double>(conc + disc + tx)) * std::sqrt(static_cast<double>(conc + disc + ty));
  return static_cast<double>(conc - disc) / denom;
}

// --- GLCM by explicit pair counting ----------------------------------------

struct GlcmRef {
  double mean, variance, homogeneity, contrast, dissimilarity, entropy, second_moment, correlation;
  double prob_sum;
};

inline int mirror(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

// Full levels x levels count matrix for the window centred on (r, c), then
// every statistic from its definition. Cells are visited row-major.
inline GlcmRef glcm_at(const Grid& g, int r, int c, int levels, int window,
                       const std::vector<std::pair<int, int>>& offsets, bool symmetric) {
  double lo = g.values[0], hi = g.values[0];
  for (float v : g.values) {
    lo = std::min(lo, static_cast<double>(v));
    hi = std::max(hi, static_cast<double>(v));
  }
  auto q = [&](int rr, int cc) {
    if (!(hi > lo)) return 0;
    const int k = static_cast<int>(std::floor((g(mirror(rr, g.height), mirror(cc, g.width)) - lo) / (hi - lo) * levels));
    return std::min(std::max(k, 0), levels - 1);
  };
  std::vector<long long> count(static_cast<std::size_t>(levels * levels), 0);
  const int h = window / 2;
  long long total = 0;
  for (const auto& [dr, dc] : offsets)
    for (int u = -h; u <= h; ++u)
      for (int v = -h; v <= h; ++v) {
        const int u2 = u + dr, v2 = v + dc;
        if (u2 < -h || u2 > h || v2 < -h || v2 > h) continue;
        const int a = q(r + u, c + v), b = q(r + u2, c + v2);
        ++count[static_cast<std::size_t>(a * levels + b)];
        ++total;
        if (symmetric) {
          ++count[static_cast<std::size_t>(b * levels + a)];
          ++total;
        }
      }
  GlcmRef o{};
  double mean_j = 0;
  for (int i = 0; i < levels; ++i)
    for (int j = 0; j < levels; ++j) {
      const double p = static_cast<double>(count[static_cast<std::size_t>(i * levels + j)]) / static_cast<double>(total);
      if (p == 0) continue;
      o.mean += i * p;
      mean_j += j * p;
    }
  double var_j = 0, cov = 0;
  for (int i = 0; i < levels; ++i)
    for (int j = 0; j < levels; ++j) {
      const double p = static_cast<double>(count[static_cast<std::size_t>(i * levels + j)]) / static_cast<double>(total);
      if (p == 0) continue;
      const double di = i - o.mean, dj = j - mean_j, d = i - j;
      o.variance += di * di * p;
      var_j += dj * dj * p;
      cov += di * dj * p;
      o.homogeneity += p / (1.0 + d * d);
      o.contrast += d * d * p;
      o.dissimilarity += std::abs(d) * p;
      o.entropy -= p * std::log(p);
      o.second_moment += p * p;
      o.prob_sum += p;
    }
  const double denom = std::sqrt(o.variance) * std::sqrt(var_j);
  o.correlation = denom == 0.0 ? 0.0 : cov / denom;
  return o;
}

inline std::array<double, 8> as_array(const GlcmRef& g) {
  return {g.mean, g.variance, g.homogeneity, g.contrast, g.dissimilarity, g.entropy, g.second_moment, g.correlation};
}

// --- random grids -----------------------------------------------------------

inline Grid random_grid(mswin::Rng& rng, int h, int w, double lo = 0.0, double hi = 1.0) {
  Grid g(h, w);
  for (auto& v : g.values) v = static_cast<float>(rng.uniform(lo, hi));
  return g;
}

inline Grid random_int_grid(mswin::Rng& rng, int h, int w, int levels) {
  Grid g(h, w);
  for (auto& v : g.values) v = static_cast<float>(rng.below(static_cast<std::uint64_t>(levels)));
  return g;
}

}  // namespace oracle
