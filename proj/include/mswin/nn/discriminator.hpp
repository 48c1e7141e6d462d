#pragma once

#include <torch/torch.h>

#include <vector>

#include <json.hpp>

namespace mswin::nn {

// PatchGAN: 4x4 convs with the given widths and strides, instance norm from
// the second layer on, LeakyReLU, then a stride-1 4x4 head to one channel.
struct DiscriminatorConfig {
  int in_ch = 4;  // condition channels + candidate channels
  std::vector<int> widths{64, 128, 256, 512};
  std::vector<int> strides{2, 2, 2, 1};
  int kernel = 4;
  double slope = 0.2;
  bool norm = true;

  void validate() const;
  // Side of the score map for a side x side input.
  int output_side(int side) const;
};

nlohmann::json to_json(const DiscriminatorConfig& cfg);
DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j);

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorConfig& cfg);

  // Raw scores [B, 1, N, N] for cat(u, candidate).
  torch::Tensor logits(const torch::Tensor& u, const torch::Tensor& candidate);
  // Post-sigmoid probabilities.
  torch::Tensor forward(const torch::Tensor& u, const torch::Tensor& candidate);

  DiscriminatorConfig cfg;
  torch::nn::Sequential body{nullptr};
};
TORCH_MODULE(Discriminator);

}  // namespace mswin::nn
