#include "mswin/screening.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include <json.hpp>

#include "mswin/errors.hpp"

namespace mswin::screening {

std::string measure_name(Measure m) {
  switch (m) {
    case Measure::Pearson: return "pearson";
    case Measure::Spearman: return "spearman";
    case Measure::Kendall: return "kendall";
    case Measure::Cosine: return "cosine";
    case Measure::Euclidean: return "euclidean";
    case Measure::Manhattan: return "manhattan";
    case Measure::Chebyshev: return "chebyshev";
  }
  return "?";
}

bool is_distance(Measure m) {
  return m == Measure::Euclidean || m == Measure::Manhattan || m == Measure::Chebyshev;
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

namespace {

struct Moments {
  double mean = 0;
  double sd = 0;  // population
};

Moments moments(std::span<const double> x) {
  Moments m;
  for (double v : x) m.mean += v;
  m.mean /= static_cast<double>(x.size());
  double ss = 0;
  for (double v : x) ss += (v - m.mean) * (v - m.mean);
  m.sd = std::sqrt(ss / static_cast<double>(x.size()));
  return m;
}

// Merge sort on y, counting inversions (discordant pairs).
std::uint64_t count_swaps(std::vector<double>& y, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t swaps = count_swaps(y, buf, lo, mid) + count_swaps(y, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (y[j] < y[i]) {
      swaps += mid - i;
      buf[k++] = y[j++];
    } else {
      buf[k++] = y[i++];
    }
  }
  while (i < mid) buf[k++] = y[i++];
  while (j < hi) buf[k++] = y[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            y.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

std::uint64_t tie_pairs_sorted(const std::vector<double>& v) {
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j] == v[i]) ++j;
    const std::uint64_t t = j - i;
    total += t * (t - 1) / 2;
    i = j;
  }
  return total;
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
  const Moments mx = moments(x);
  const Moments my = moments(y);
  if (mx.sd == 0.0 || my.sd == 0.0) return std::nan("");
  double cov = 0;
  for (std::size_t i = 0; i < x.size(); ++i) cov += (x[i] - mx.mean) * (y[i] - my.mean);
  cov /= static_cast<double>(x.size());
  return std::clamp(cov / (mx.sd * my.sd), -1.0, 1.0);
}

double kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });

  std::uint64_t n1 = 0;  // pairs tied in x
  std::uint64_t n3 = 0;  // pairs tied in both
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && x[idx[j]] == x[idx[i]]) ++j;
    const std::uint64_t t = j - i;
    n1 += t * (t - 1) / 2;
    for (std::size_t a = i; a < j;) {
      std::size_t b = a;
      while (b < j && y[idx[b]] == y[idx[a]]) ++b;
      const std::uint64_t u = b - a;
      n3 += u * (u - 1) / 2;
      a = b;
    }
    i = j;
  }

  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[idx[i]];
  std::vector<double> buf(n);
  const std::uint64_t swaps = count_swaps(ys, buf, 0, n);
  const std::uint64_t n2 = tie_pairs_sorted(ys);  // pairs tied in y
  const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;

  const double denom = std::sqrt(static_cast<double>(n0 - n1)) * std::sqrt(static_cast<double>(n0 - n2));
  if (denom == 0.0) return std::nan("");
  // concordant - discordant = n0 - n1 - n2 + n3 - 2 * swaps
  const double s = static_cast<double>(n0) - static_cast<double>(n1) - static_cast<double>(n2) +
                   static_cast<double>(n3) - 2.0 * static_cast<double>(swaps);
  return std::clamp(s / denom, -1.0, 1.0);
}

std::optional<double> score(std::span<const double> x, std::span<const double> y, Measure m) {
  if (x.size() != y.size()) throw ValidationError("score inputs differ in length");
  if (x.size() < 2) throw ValidationError("score needs at least two values");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw ValidationError("score inputs must be finite");

  auto defined = [](double v) -> std::optional<double> {
    if (std::isnan(v)) return std::nullopt;
    return v;
  };

  switch (m) {
    case Measure::Pearson: return defined(pearson(x, y));
    case Measure::Spearman: {
      const auto rx = average_ranks(x);
      const auto ry = average_ranks(y);
      return defined(pearson(rx, ry));
    }
    case Measure::Kendall: return defined(kendall_tau_b(x, y));
    case Measure::Cosine: {
      double xy = 0, xx = 0, yy = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        xy += x[i] * y[i];
        xx += x[i] * x[i];
        yy += y[i] * y[i];
      }
      if (xx == 0.0 || yy == 0.0) return std::nullopt;
      return std::clamp(xy / (std::sqrt(xx) * std::sqrt(yy)), -1.0, 1.0);
    }
    case Measure::Euclidean:
    case Measure::Manhattan:
    case Measure::Chebyshev: {
      const Moments mx = moments(x);
      const Moments my = moments(y);
      if (mx.sd == 0.0 || my.sd == 0.0) return std::nullopt;
      double sq = 0, abs_sum = 0, worst = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = (x[i] - mx.mean) / mx.sd - (y[i] - my.mean) / my.sd;
        sq += d * d;
        abs_sum += std::abs(d);
        worst = std::max(worst, std::abs(d));
      }
      if (m == Measure::Euclidean) return std::sqrt(sq);
      if (m == Measure::Manhattan) return abs_sum;
      return worst;
    }
  }
  return std::nullopt;
}

std::vector<double> rank_scores(std::span<const std::optional<double>> scores, Measure m) {
  const bool distance = is_distance(m);
  std::vector<std::size_t> valid;
  std::vector<double> keys;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!scores[i]) continue;
    valid.push_back(i);
    // Ascending key: distances as-is, correlations by descending |score|.
    keys.push_back(distance ? *scores[i] : -std::abs(*scores[i]));
  }
  std::vector<double> ranks(scores.size());
  const auto valid_ranks = average_ranks(keys);
  for (std::size_t k = 0; k < valid.size(); ++k) ranks[valid[k]] = valid_ranks[k];
  const double n = static_cast<double>(scores.size());
  const double m_valid = static_cast<double>(valid.size());
  const double tail = 0.5 * (m_valid + 1.0 + n);
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!scores[i]) ranks[i] = tail;
  return ranks;
}

ScreeningReport rank_bands(const BandStack& stack, const Grid& target, const Grid* mask, int k,
                           std::optional<float> target_nodata) {
  const std::size_t n_bands = stack.band_count();
  if (k < 1 || static_cast<std::size_t>(k) > n_bands)
    throw ValidationError("k=" + std::to_string(k) + " must be in [1, " + std::to_string(n_bands) + "]");
  if (target.height != stack.height() || target.width != stack.width())
    throw ValidationError("target is not co-registered with the stack");
  if (mask && !mask->same_shape(target)) throw ValidationError("mask is not co-registered with the stack");

  std::size_t selected_pixels = 0;
  for (std::size_t i = 0; i < target.size(); ++i)
    if (!mask || mask->values[i] == 1.0f) ++selected_pixels;
  if (selected_pixels < 2) throw ValidationError("mask selects fewer than 2 pixels");

  ScreeningReport report;
  report.per_band.resize(n_bands);
  std::vector<double> xs, ys;
  for (std::size_t b = 0; b < n_bands; ++b) {
    const auto& band = stack.band(b);
    xs.clear();
    ys.clear();
    for (std::size_t i = 0; i < target.size(); ++i) {
      if (mask && mask->values[i] != 1.0f) continue;
      const float xv = band.grid.values[i];
      const float yv = target.values[i];
      if (stack.is_nodata(xv) || (target_nodata && yv == *target_nodata)) continue;
      if (!std::isfinite(xv) || !std::isfinite(yv)) continue;
      xs.push_back(xv);
      ys.push_back(yv);
    }
    report.per_band[b].band_name = band.name;
    for (std::size_t m = 0; m < kAllMeasures.size(); ++m)
      report.per_band[b].scores[m] = xs.size() >= 2 ? score(xs, ys, kAllMeasures[m]) : std::nullopt;
  }

  for (std::size_t m = 0; m < kAllMeasures.size(); ++m) {
    std::vector<std::optional<double>> col(n_bands);
    for (std::size_t b = 0; b < n_bands; ++b) col[b] = report.per_band[b].scores[m];
    const auto r = rank_scores(col, kAllMeasures[m]);
    for (std::size_t b = 0; b < n_bands; ++b) report.per_band[b].ranks[m] = r[b];
  }
  for (auto& bs : report.per_band)
    bs.composite_rank = std::accumulate(bs.ranks.begin(), bs.ranks.end(), 0.0) / static_cast<double>(bs.ranks.size());

  std::vector<std::size_t> order(n_bands);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return report.per_band[a].composite_rank < report.per_band[b].composite_rank;
  });
  for (int i = 0; i < k; ++i) report.selected.push_back(report.per_band[order[static_cast<std::size_t>(i)]].band_name);
  return report;
}

std::string ScreeningReport::to_json() const {
  nlohmann::json j;
  j["measures"] = nlohmann::json::array();
  for (auto m : kAllMeasures) j["measures"].push_back(measure_name(m));
  j["per_band"] = nlohmann::json::array();
  for (const auto& b : per_band) {
    nlohmann::json row;
    row["band_name"] = b.band_name;
    row["scores"] = nlohmann::json::array();
    for (const auto& s : b.scores) row["scores"].push_back(s ? nlohmann::json(*s) : nlohmann::json(nullptr));
    row["ranks"] = b.ranks;
    row["composite_rank"] = b.composite_rank;
    j["per_band"].push_back(row);
  }
  j["selected"] = selected;
  return j.dump(2);
}

}  // namespace mswin::screening
