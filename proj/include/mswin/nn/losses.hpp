#pragma once

// Reconstruction and adversarial losses with hand-written backward passes.

#include <torch/torch.h>

#include <optional>

#include <json.hpp>

namespace mswin::nn {

// Means over the support: every element, or the elements where mask == 1
// (mask [B, 1, H, W] broadcasts over channels). An empty support throws
// ValidationError. Gradients flow to both x and g.
torch::Tensor loss_l1(const torch::Tensor& x, const torch::Tensor& g,
                      const std::optional<torch::Tensor>& mask = std::nullopt);
torch::Tensor loss_l2(const torch::Tensor& x, const torch::Tensor& g,
                      const std::optional<torch::Tensor>& mask = std::nullopt);
// 0.5 d^2 for |d| < 1, |d| - 0.5 otherwise.
torch::Tensor loss_smooth_l1(const torch::Tensor& x, const torch::Tensor& g,
                             const std::optional<torch::Tensor>& mask = std::nullopt);

inline constexpr double kLogClamp = 1e-12;

// -mean log d_real - mean log(1 - d_fake)
torch::Tensor loss_d(const torch::Tensor& d_real, const torch::Tensor& d_fake);
// -mean log d_fake
torch::Tensor loss_g(const torch::Tensor& d_fake);

struct CganLosses {
  torch::Tensor loss_d;
  torch::Tensor loss_g;
};
CganLosses loss_cgan(const torch::Tensor& d_real, const torch::Tensor& d_fake);

struct LossSelection {
  bool use_l1 = false;
  bool use_l2 = true;
  bool use_smooth_l1 = true;
  double lambda = 100.0;
  bool pure_cgan = false;  // explicit opt-in for an empty reconstruction set

  void validate() const;
  bool any() const { return use_l1 || use_l2 || use_smooth_l1; }
  std::string label() const;  // e.g. "L2+SmoothL1"
};

nlohmann::json to_json(const LossSelection& s);
LossSelection loss_selection_from_json(const nlohmann::json& j);

struct ReconParts {
  std::optional<torch::Tensor> l1, l2, smooth_l1;
};

ReconParts reconstruction_losses(const LossSelection& sel, const torch::Tensor& x, const torch::Tensor& g,
                                 const std::optional<torch::Tensor>& mask);

// total_G = cgan_g + lambda * (sum of selected parts).
torch::Tensor composite_generator_loss(const LossSelection& sel, const torch::Tensor& cgan_g, const ReconParts& parts);
double composite_generator_loss(const LossSelection& sel, double cgan_g, std::optional<double> l1,
                                std::optional<double> l2, std::optional<double> smooth_l1);

}  // namespace mswin::nn
