#pragma once

// Band screening against measured carbon stock: seven relatedness measures,
// per-measure ranks, composite = mean rank, top-k by composite.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mswin/raster.hpp"

namespace mswin::screening {

enum class Measure { Pearson, Spearman, Kendall, Cosine, Euclidean, Manhattan, Chebyshev };

inline constexpr std::array<Measure, 7> kAllMeasures = {Measure::Pearson,   Measure::Spearman,  Measure::Kendall,
                                                        Measure::Cosine,    Measure::Euclidean, Measure::Manhattan,
                                                        Measure::Chebyshev};

std::string measure_name(Measure m);

// Correlation-type measures rank by |score| descending, distances ascending.
bool is_distance(Measure m);

// Score of x against y. Returns nullopt when the measure is undefined
// (zero variance / zero norm). Distances are taken between z-scored vectors.
std::optional<double> score(std::span<const double> x, std::span<const double> y, Measure m);

// Average (1-based) ranks, ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> v);

double pearson(std::span<const double> x, std::span<const double> y);
// Kendall tau-b in O(n log n) (Knight's algorithm).
double kendall_tau_b(std::span<const double> x, std::span<const double> y);

struct BandScore {
  std::string band_name;
  std::array<std::optional<double>, 7> scores{};
  std::array<double, 7> ranks{};
  double composite_rank = 0.0;
};

struct ScreeningReport {
  std::vector<BandScore> per_band;
  std::vector<std::string> selected;

  std::string to_json() const;
};

// Ranks within one measure. Bands with an undefined score share the average
// of the trailing positions.
std::vector<double> rank_scores(std::span<const std::optional<double>> scores, Measure m);

// Pixels used: mask == 1 (when a mask is given) and neither band nor target
// is nodata. Selected = k smallest composites, ties by band index.
ScreeningReport rank_bands(const BandStack& stack, const Grid& target, const Grid* mask, int k,
                           std::optional<float> target_nodata = std::nullopt);

}  // namespace mswin::screening
