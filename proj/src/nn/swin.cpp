#include "mswin/nn/swin.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "mswin/errors.hpp"

namespace mswin::nn {

namespace F = torch::nn::functional;

int64_t effective_window(int64_t h, int64_t w, int64_t window) {
  if (h < 1 || w < 1 || window < 1) throw ValidationError("window and grid sizes must be positive");
  const int64_t g = std::gcd(h, w);
  for (int64_t ws = std::min(window, g); ws > 1; --ws)
    if (g % ws == 0) return ws;
  return 1;
}

torch::Tensor window_partition(const torch::Tensor& x, int64_t ws) {
  const auto B = x.size(0), h = x.size(1), w = x.size(2), c = x.size(3);
  return x.view({B, h / ws, ws, w / ws, ws, c}).permute({0, 1, 3, 2, 4, 5}).reshape({-1, ws * ws, c});
}

torch::Tensor window_reverse(const torch::Tensor& windows, int64_t ws, int64_t h, int64_t w) {
  const auto c = windows.size(-1);
  const auto B = windows.size(0) / ((h / ws) * (w / ws));
  return windows.view({B, h / ws, w / ws, ws, ws, c}).permute({0, 1, 3, 2, 4, 5}).reshape({B, h, w, c});
}

torch::Tensor shifted_window_mask(int64_t h, int64_t w, int64_t ws, int64_t shift) {
  auto region = [&](int64_t i, int64_t n) { return i < n - ws ? 0 : (i < n - shift ? 1 : 2); };
  const int64_t nwh = h / ws, nww = w / ws, n = ws * ws;
  std::vector<float> m(static_cast<std::size_t>(nwh * nww * n * n), 0.0f);
  std::vector<int> label(static_cast<std::size_t>(n));
  std::size_t o = 0;
  for (int64_t wy = 0; wy < nwh; ++wy)
    for (int64_t wx = 0; wx < nww; ++wx) {
      for (int64_t i = 0; i < n; ++i)
        label[static_cast<std::size_t>(i)] = region(wy * ws + i / ws, h) * 3 + region(wx * ws + i % ws, w);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j, ++o)
          if (label[static_cast<std::size_t>(i)] != label[static_cast<std::size_t>(j)])
            m[o] = -std::numeric_limits<float>::infinity();
    }
  return torch::from_blob(m.data(), {nwh * nww, n, n}, torch::kFloat32).clone();
}

WindowAttentionImpl::WindowAttentionImpl(int64_t dim_, int64_t window_, int64_t heads_, int64_t shift_)
    : dim(dim_), window(window_), heads(heads_), shift(shift_) {
  if (heads < 1 || dim % heads != 0) throw ValidationError("channel count must be divisible by the head count");
  if (window < 1 || shift < 0 || shift >= std::max<int64_t>(window, 1) || (window == 1 && shift != 0))
    throw ValidationError("shift must satisfy 0 <= shift < window");
  qkv = register_module("qkv", torch::nn::Linear(dim, 3 * dim));
  proj = register_module("proj", torch::nn::Linear(dim, dim));
  bias_table = register_parameter("bias_table", torch::randn({(2 * window - 1) * (2 * window - 1), heads}) * 0.02);

  const int64_t n = window * window;
  std::vector<int64_t> idx(static_cast<std::size_t>(n * n));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j) {
      const int64_t dy = i / window - j / window + window - 1;
      const int64_t dx = i % window - j % window + window - 1;
      idx[static_cast<std::size_t>(i * n + j)] = dy * (2 * window - 1) + dx;
    }
  rel_index_ = torch::from_blob(idx.data(), {n * n}, torch::kInt64).clone();
}

torch::Tensor WindowAttentionImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(3) != dim) throw ValidationError("window attention expects [B, h, w, dim] tokens");
  const auto B = x.size(0), h = x.size(1), w = x.size(2);
  if (h % window != 0 || w % window != 0)
    throw ValidationError("token grid " + std::to_string(h) + "x" + std::to_string(w) +
                          " is not divisible by window " + std::to_string(window));
  const int64_t n = window * window;
  const int64_t hd = dim / heads;

  const auto xs = shift > 0 ? torch::roll(x, {-shift, -shift}, {1, 2}) : x;
  const auto win = window_partition(xs, window);
  const auto qkv_t = qkv(win).reshape({win.size(0), n, 3, heads, hd}).permute({2, 0, 3, 1, 4});
  const auto q = qkv_t[0] * (1.0 / std::sqrt(static_cast<double>(hd)));
  const auto k = qkv_t[1];
  const auto v = qkv_t[2];

  auto attn = q.matmul(k.transpose(-2, -1));
  const auto bias = bias_table.index_select(0, rel_index_).view({n, n, heads}).permute({2, 0, 1});
  attn = attn + bias.unsqueeze(0);
  if (shift > 0) {
    const auto mask = shifted_window_mask(h, w, window, shift).to(x.dtype());
    const auto nw = mask.size(0);
    attn = (attn.view({B, nw, heads, n, n}) + mask.unsqueeze(1).unsqueeze(0)).view({-1, heads, n, n});
  }
  attn = torch::softmax(attn, -1);
  if (capture) last_attention = attn.detach();

  auto out = proj(attn.matmul(v).transpose(1, 2).reshape({win.size(0), n, dim}));
  out = window_reverse(out, window, h, w);
  return shift > 0 ? torch::roll(out, {shift, shift}, {1, 2}) : out;
}

SwinBlockImpl::SwinBlockImpl(int64_t dim, int64_t heads, int64_t window, int64_t shift, double mlp_ratio,
                             double drop_)
    : drop(drop_) {
  if (!(drop >= 0.0 && drop < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
  const auto hidden = static_cast<int64_t>(std::llround(static_cast<double>(dim) * mlp_ratio));
  if (hidden < 1) throw ValidationError("mlp_ratio too small");
  norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  attn = register_module("attn", WindowAttention(dim, window, heads, shift));
  norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  fc1 = register_module("fc1", torch::nn::Linear(dim, hidden));
  fc2 = register_module("fc2", torch::nn::Linear(hidden, dim));
}

torch::Tensor SwinBlockImpl::forward(const torch::Tensor& x) {
  const auto y = x + attn(norm1(x));
  auto hdn = torch::gelu(fc1(norm2(y)));
  // Dropout stays on at inference as well; it is the generator's noise source.
  if (drop > 0.0) hdn = torch::dropout(hdn, drop, true);
  return y + fc2(hdn);
}

SwinBlockPairImpl::SwinBlockPairImpl(int64_t dim, int64_t heads, int64_t window_, int64_t h, int64_t w,
                                     double mlp_ratio, double drop) {
  window = effective_window(h, w, window_);
  const int64_t shift = window < std::min(h, w) ? window / 2 : 0;
  regular = register_module("regular", SwinBlock(dim, heads, window, 0, mlp_ratio, drop));
  shifted = register_module("shifted", SwinBlock(dim, heads, window, shift, mlp_ratio, drop));
}

torch::Tensor SwinBlockPairImpl::forward(const torch::Tensor& x) { return shifted(regular(x)); }

torch::Tensor patch_partition(const torch::Tensor& image, int64_t patch) {
  if (image.dim() != 4) throw ValidationError("patch partition expects [B, C, H, W]");
  const auto B = image.size(0), C = image.size(1), H = image.size(2), W = image.size(3);
  if (H % patch != 0 || W % patch != 0)
    throw ValidationError("image " + std::to_string(H) + "x" + std::to_string(W) + " is not divisible by patch " +
                          std::to_string(patch));
  return image.reshape({B, C, H / patch, patch, W / patch, patch})
      .permute({0, 2, 4, 1, 3, 5})
      .reshape({B, H / patch, W / patch, C * patch * patch});
}

PatchEmbedImpl::PatchEmbedImpl(int64_t in_ch, int64_t embed_c, int64_t patch_) : patch(patch_) {
  proj = register_module("proj", torch::nn::Linear(in_ch * patch * patch, embed_c));
}

torch::Tensor PatchEmbedImpl::forward(const torch::Tensor& image) { return proj(patch_partition(image, patch)); }

PatchMergingImpl::PatchMergingImpl(int64_t dim_) : dim(dim_) {
  reduction = register_module("reduction", torch::nn::Linear(4 * dim, 2 * dim));
}

torch::Tensor PatchMergingImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(3) != dim) throw ValidationError("patch merging expects [B, h, w, dim] tokens");
  if (x.size(1) % 2 != 0 || x.size(2) % 2 != 0) throw ValidationError("patch merging needs even token dims");
  using torch::indexing::Slice;
  using torch::indexing::None;
  const auto x0 = x.index({Slice(), Slice(0, None, 2), Slice(0, None, 2)});
  const auto x1 = x.index({Slice(), Slice(1, None, 2), Slice(0, None, 2)});
  const auto x2 = x.index({Slice(), Slice(0, None, 2), Slice(1, None, 2)});
  const auto x3 = x.index({Slice(), Slice(1, None, 2), Slice(1, None, 2)});
  return reduction(torch::cat({x0, x1, x2, x3}, -1));
}

TripleUpsampleImpl::TripleUpsampleImpl(int64_t dim_) : dim(dim_) {
  if (dim < 2 || dim % 2 != 0) throw ValidationError("triple up-sample needs an even channel count");
  bilinear_proj = register_module("bilinear_proj", torch::nn::Linear(dim, dim / 2));
  shuffle_proj = register_module("shuffle_proj", torch::nn::Linear(dim, 2 * dim));
  deconv = register_module("deconv",
                           torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(dim, dim / 2, 2).stride(2)));
  fuse = register_module("fuse", torch::nn::Linear(3 * (dim / 2), dim / 2));
}

torch::Tensor TripleUpsampleImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(3) != dim) throw ValidationError("triple up-sample expects [B, h, w, dim] tokens");
  const auto nchw = x.permute({0, 3, 1, 2});
  const auto up = F::interpolate(nchw, F::InterpolateFuncOptions()
                                           .scale_factor(std::vector<double>{2.0, 2.0})
                                           .mode(torch::kBilinear)
                                           .align_corners(false));
  const auto a = bilinear_proj(up.permute({0, 2, 3, 1}));
  const auto b = torch::pixel_shuffle(shuffle_proj(x).permute({0, 3, 1, 2}), 2).permute({0, 2, 3, 1});
  const auto c = deconv(nchw).permute({0, 2, 3, 1});
  return fuse(torch::cat({a, b, c}, -1));
}

}  // namespace mswin::nn
