#pragma once

// Expected stage shapes of the generator, written out from the level
// arithmetic rather than read back from the model.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mswin/nn/generator.hpp"

inline mswin::nn::ShapeTrace expected_generator_shapes(const mswin::nn::GeneratorConfig& c, int64_t B) {
  const int64_t H = c.height, W = c.width, C = c.embed_c, p = c.patch;
  const int64_t in = c.in_ch + (c.use_mask ? 1 : 0);
  using V = std::vector<int64_t>;
  return {
      {"input", V{B, in, H, W}},
      {"shallow_conv", V{B, c.shallow_c, H, W}},
      {"patch_partition", V{B, H / p, W / p, c.shallow_c * p * p}},
      {"patch_embed", V{B, H / p, W / p, C}},
      {"enc1", V{B, H / p, W / p, C}},
      {"merge1", V{B, H / (2 * p), W / (2 * p), 2 * C}},
      {"enc2", V{B, H / (2 * p), W / (2 * p), 2 * C}},
      {"merge2", V{B, H / (4 * p), W / (4 * p), 4 * C}},
      {"enc3", V{B, H / (4 * p), W / (4 * p), 4 * C}},
      {"bottleneck", V{B, H / (4 * p), W / (4 * p), 4 * C}},
      {"dec3", V{B, H / (4 * p), W / (4 * p), 4 * C}},
      {"up3", V{B, H / (2 * p), W / (2 * p), 2 * C}},
      {"dec2", V{B, H / (2 * p), W / (2 * p), 2 * C}},
      {"up2", V{B, H / p, W / p, C}},
      {"dec1", V{B, H / p, W / p, C}},
      {"final_up1", V{B, H / 2, W / 2, C / 2}},
      {"final_up2", V{B, H, W, C / 4}},
      {"head", V{B, c.out_ch, H, W}},
      {"output", V{B, c.out_ch, H, W}},
  };
}

// PatchGAN score side from the conv arithmetic: out = (in + 2 - k) / s + 1.
inline int64_t expected_patchgan_side(const mswin::nn::DiscriminatorConfig& d, int64_t side) {
  for (std::size_t i = 0; i < d.widths.size(); ++i) side = (side + 2 - d.kernel) / d.strides[i] + 1;
  return (side + 2 - d.kernel) / 1 + 1;
}
