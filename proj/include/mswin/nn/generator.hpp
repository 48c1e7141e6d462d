#pragma once

#include <torch/torch.h>

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mswin/nn/swin.hpp"

namespace mswin::nn {

enum class OutputActivation { Sigmoid, Tanh };

struct GeneratorConfig {
  int in_ch = 3;
  int out_ch = 1;
  int height = 64;  // the window layout is fixed per input size
  int width = 64;
  int shallow_c = 3;  // 3x3 conv output, i.e. channels seen by patch partition
  int embed_c = 48;
  int window = 8;
  std::array<int, 3> heads{3, 6, 12};
  // Swin pairs for enc1, enc2, enc3, bottleneck, dec3, dec2, dec1.
  std::array<int, 7> depths{1, 1, 1, 1, 1, 1, 1};
  double mlp_ratio = 4.0;
  double drop = 0.5;  // decoder MLPs, active at inference too
  bool use_mask = true;
  int patch = 4;
  OutputActivation activation = OutputActivation::Sigmoid;

  void validate() const;
};

nlohmann::json to_json(const GeneratorConfig& cfg);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);

// (stage name, shape) pairs recorded during a forward pass.
using ShapeTrace = std::vector<std::pair<std::string, std::vector<int64_t>>>;

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorConfig& cfg);

  // input [B, in_ch, H, W]; mask [B, 1, H, W] (required when use_mask).
  // Returns [B, out_ch, H, W].
  torch::Tensor forward(const torch::Tensor& input, const std::optional<torch::Tensor>& mask = std::nullopt,
                        ShapeTrace* trace = nullptr);

  GeneratorConfig cfg;
  torch::nn::Conv2d shallow{nullptr}, head{nullptr};
  PatchEmbed embed{nullptr};
  torch::nn::Sequential enc1{nullptr}, enc2{nullptr}, enc3{nullptr}, bottleneck{nullptr};
  torch::nn::Sequential dec3{nullptr}, dec2{nullptr}, dec1{nullptr};
  PatchMerging merge1{nullptr}, merge2{nullptr};
  torch::nn::Linear fuse3{nullptr}, fuse2{nullptr}, fuse1{nullptr};
  TripleUpsample up3{nullptr}, up2{nullptr}, final1{nullptr}, final2{nullptr};
};
TORCH_MODULE(Generator);

}  // namespace mswin::nn
