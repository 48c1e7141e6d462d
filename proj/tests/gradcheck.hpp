#pragma once

// Central finite differences in float64 against autograd gradients.

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "mswin/rng.hpp"

namespace gradcheck {

struct Result {
  double max_rel = 0;
  int checked = 0;
};

inline double rel_err(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// `grad` holds the analytic gradient for `leaf64` (same shape). `loss64`
// evaluates the scalar loss with the current contents of leaf64.
inline Result compare(const torch::Tensor& grad, torch::Tensor leaf64, const std::function<double()>& loss64, int n,
                      std::uint64_t seed, double eps = 1e-6,
                      const std::function<bool(std::int64_t)>& usable = {}) {
  Result r;
  const auto g = grad.to(torch::kFloat64).contiguous().view(-1);
  auto* data = leaf64.data_ptr<double>();
  const std::int64_t numel = leaf64.numel();
  mswin::Rng rng(seed);
  std::set<std::int64_t> seen;
  int attempts = 0;
  while (r.checked < n && static_cast<std::int64_t>(seen.size()) < numel && attempts++ < 100 * n) {
    const auto i = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(numel)));
    if (!seen.insert(i).second) continue;
    if (usable && !usable(i)) continue;
    const double keep = data[i];
    data[i] = keep + eps;
    const double fp = loss64();
    data[i] = keep - eps;
    const double fm = loss64();
    data[i] = keep;
    const double numeric = (fp - fm) / (2 * eps);
    r.max_rel = std::max(r.max_rel, rel_err(g[i].item<double>(), numeric));
    ++r.checked;
  }
  return r;
}

}  // namespace gradcheck
