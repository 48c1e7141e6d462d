#pragma once

// Swin building blocks on token grids laid out as [B, h, w, c].

#include <torch/torch.h>

#include <cstdint>

namespace mswin::nn {

// Largest divisor of gcd(h, w) that does not exceed `window`.
int64_t effective_window(int64_t h, int64_t w, int64_t window);

// [B, h, w, c] -> [B * nW, ws * ws, c]
torch::Tensor window_partition(const torch::Tensor& x, int64_t ws);
torch::Tensor window_reverse(const torch::Tensor& windows, int64_t ws, int64_t h, int64_t w);

// Region mask for shifted windows: [nW, N, N], 0 where attention is allowed,
// -inf across regions that are not adjacent before the cyclic shift.
torch::Tensor shifted_window_mask(int64_t h, int64_t w, int64_t ws, int64_t shift);

class WindowAttentionImpl : public torch::nn::Module {
 public:
  WindowAttentionImpl(int64_t dim, int64_t window, int64_t heads, int64_t shift);

  // x: [B, h, w, dim]
  torch::Tensor forward(const torch::Tensor& x);

  int64_t dim, window, heads, shift;
  torch::nn::Linear qkv{nullptr}, proj{nullptr};
  torch::Tensor bias_table;  // [(2w-1)^2, heads]

  // When set, the post-softmax weights of the last call are kept here as
  // [B * nW, heads, N, N].
  bool capture = false;
  torch::Tensor last_attention;

 private:
  torch::Tensor rel_index_;  // [N * N], not a parameter
};
TORCH_MODULE(WindowAttention);

class SwinBlockImpl : public torch::nn::Module {
 public:
  SwinBlockImpl(int64_t dim, int64_t heads, int64_t window, int64_t shift, double mlp_ratio, double drop);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  WindowAttention attn{nullptr};
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
  double drop;
};
TORCH_MODULE(SwinBlock);

// W-MSA block followed by an SW-MSA block. When the window already spans the
// whole grid the second block runs unshifted.
class SwinBlockPairImpl : public torch::nn::Module {
 public:
  SwinBlockPairImpl(int64_t dim, int64_t heads, int64_t window, int64_t h, int64_t w, double mlp_ratio = 4.0,
                    double drop = 0.0);
  torch::Tensor forward(const torch::Tensor& x);

  SwinBlock regular{nullptr}, shifted{nullptr};
  int64_t window;
};
TORCH_MODULE(SwinBlockPair);

// Image [B, C, H, W] -> [B, H/p, W/p, C*p*p], each patch flattened in
// (channel, row, column) order. Throws ValidationError on indivisible dims.
torch::Tensor patch_partition(const torch::Tensor& image, int64_t patch = 4);

class PatchEmbedImpl : public torch::nn::Module {
 public:
  PatchEmbedImpl(int64_t in_ch, int64_t embed_c, int64_t patch = 4);
  torch::Tensor forward(const torch::Tensor& image);

  int64_t patch;
  torch::nn::Linear proj{nullptr};
};
TORCH_MODULE(PatchEmbed);

class PatchMergingImpl : public torch::nn::Module {
 public:
  explicit PatchMergingImpl(int64_t dim);
  torch::Tensor forward(const torch::Tensor& x);  // [B,h,w,c] -> [B,h/2,w/2,2c]

  int64_t dim;
  torch::nn::Linear reduction{nullptr};
};
TORCH_MODULE(PatchMerging);

// Bilinear + 1x1, pixel shuffle of a c -> 2c map, and a 2x2 stride-2
// transposed conv; concatenated and fused to c/2.
class TripleUpsampleImpl : public torch::nn::Module {
 public:
  explicit TripleUpsampleImpl(int64_t dim);
  torch::Tensor forward(const torch::Tensor& x);  // [B,h,w,c] -> [B,2h,2w,c/2]

  int64_t dim;
  torch::nn::Linear bilinear_proj{nullptr}, shuffle_proj{nullptr}, fuse{nullptr};
  torch::nn::ConvTranspose2d deconv{nullptr};
};
TORCH_MODULE(TripleUpsample);

}  // namespace mswin::nn
