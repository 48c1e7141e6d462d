#include "mswin/nn/generator.hpp"

#include "mswin/errors.hpp"

namespace mswin::nn {

void GeneratorConfig::validate() const {
  if (in_ch < 1 || out_ch < 1 || shallow_c < 1) throw ValidationError("channel counts must be positive");
  if (patch < 1) throw ValidationError("patch size must be positive");
  const int align = patch * 4;
  if (height < align || width < align || height % align != 0 || width % align != 0)
    throw ValidationError("input " + std::to_string(height) + "x" + std::to_string(width) + " must be divisible by " +
                          std::to_string(align) + " (patch x 2^merges)");
  if (embed_c < 4 || embed_c % 4 != 0) throw ValidationError("embed_c must be a positive multiple of 4");
  for (int i = 0; i < 3; ++i)
    if (heads[static_cast<std::size_t>(i)] < 1 || (embed_c << i) % heads[static_cast<std::size_t>(i)] != 0)
      throw ValidationError("channels at level " + std::to_string(i + 1) + " not divisible by its head count");
  for (int d : depths)
    if (d < 1) throw ValidationError("every level needs at least one Swin pair");
  if (window < 1) throw ValidationError("window must be positive");
  if (!(mlp_ratio > 0)) throw ValidationError("mlp_ratio must be positive");
  if (!(drop >= 0 && drop < 1)) throw ValidationError("drop must lie in [0, 1)");
}

nlohmann::json to_json(const GeneratorConfig& c) {
  return {{"in_ch", c.in_ch},
          {"out_ch", c.out_ch},
          {"height", c.height},
          {"width", c.width},
          {"shallow_c", c.shallow_c},
          {"embed_c", c.embed_c},
          {"window", c.window},
          {"heads", c.heads},
          {"depths", c.depths},
          {"mlp_ratio", c.mlp_ratio},
          {"drop", c.drop},
          {"use_mask", c.use_mask},
          {"patch", c.patch},
          {"activation", c.activation == OutputActivation::Sigmoid ? "sigmoid" : "tanh"}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  try {
    c.in_ch = j.value("in_ch", c.in_ch);
    c.out_ch = j.value("out_ch", c.out_ch);
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.shallow_c = j.value("shallow_c", c.shallow_c);
    c.embed_c = j.value("embed_c", c.embed_c);
    c.window = j.value("window", c.window);
    c.heads = j.value("heads", c.heads);
    c.depths = j.value("depths", c.depths);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.drop = j.value("drop", c.drop);
    c.use_mask = j.value("use_mask", c.use_mask);
    c.patch = j.value("patch", c.patch);
    const auto act = j.value("activation", std::string("sigmoid"));
    if (act == "sigmoid")
      c.activation = OutputActivation::Sigmoid;
    else if (act == "tanh")
      c.activation = OutputActivation::Tanh;
    else
      throw ValidationError("unknown activation '" + act + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad generator config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

torch::nn::Sequential pairs(int n, int64_t dim, int64_t heads, int64_t window, int64_t h, int64_t w, double ratio,
                            double drop) {
  torch::nn::Sequential s;
  for (int i = 0; i < n; ++i) s->push_back(SwinBlockPair(dim, heads, window, h, w, ratio, drop));
  return s;
}

void record(ShapeTrace* trace, const char* name, const torch::Tensor& t) {
  if (trace) trace->emplace_back(name, t.sizes().vec());
}

}  // namespace

GeneratorImpl::GeneratorImpl(const GeneratorConfig& c) : cfg(c) {
  cfg.validate();
  const int64_t C = cfg.embed_c;
  const int64_t h1 = cfg.height / cfg.patch, w1 = cfg.width / cfg.patch;
  const auto& d = cfg.depths;
  const auto& hd = cfg.heads;
  const int64_t in = cfg.in_ch + (cfg.use_mask ? 1 : 0);

  shallow = register_module("shallow", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, cfg.shallow_c, 3).padding(1)));
  embed = register_module("embed", PatchEmbed(cfg.shallow_c, C, cfg.patch));
  enc1 = register_module("enc1", pairs(d[0], C, hd[0], cfg.window, h1, w1, cfg.mlp_ratio, 0.0));
  merge1 = register_module("merge1", PatchMerging(C));
  enc2 = register_module("enc2", pairs(d[1], 2 * C, hd[1], cfg.window, h1 / 2, w1 / 2, cfg.mlp_ratio, 0.0));
  merge2 = register_module("merge2", PatchMerging(2 * C));
  enc3 = register_module("enc3", pairs(d[2], 4 * C, hd[2], cfg.window, h1 / 4, w1 / 4, cfg.mlp_ratio, 0.0));
  bottleneck = register_module("bottleneck", pairs(d[3], 4 * C, hd[2], cfg.window, h1 / 4, w1 / 4, cfg.mlp_ratio, 0.0));
  fuse3 = register_module("fuse3", torch::nn::Linear(8 * C, 4 * C));
  dec3 = register_module("dec3", pairs(d[4], 4 * C, hd[2], cfg.window, h1 / 4, w1 / 4, cfg.mlp_ratio, cfg.drop));
  up3 = register_module("up3", TripleUpsample(4 * C));
  fuse2 = register_module("fuse2", torch::nn::Linear(4 * C, 2 * C));
  dec2 = register_module("dec2", pairs(d[5], 2 * C, hd[1], cfg.window, h1 / 2, w1 / 2, cfg.mlp_ratio, cfg.drop));
  up2 = register_module("up2", TripleUpsample(2 * C));
  fuse1 = register_module("fuse1", torch::nn::Linear(2 * C, C));
  dec1 = register_module("dec1", pairs(d[6], C, hd[0], cfg.window, h1, w1, cfg.mlp_ratio, cfg.drop));
  final1 = register_module("final1", TripleUpsample(C));
  final2 = register_module("final2", TripleUpsample(C / 2));
  head = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(C / 4, cfg.out_ch, 3).padding(1)));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& input, const std::optional<torch::Tensor>& mask,
                                     ShapeTrace* trace) {
  if (input.dim() != 4 || input.size(1) != cfg.in_ch)
    throw ValidationError("generator expects [B, " + std::to_string(cfg.in_ch) + ", H, W] input");
  if (input.size(2) != cfg.height || input.size(3) != cfg.width)
    throw ValidationError("generator was built for " + std::to_string(cfg.height) + "x" + std::to_string(cfg.width) +
                          " inputs, got " + std::to_string(input.size(2)) + "x" + std::to_string(input.size(3)));
  torch::Tensor x = input;
  if (cfg.use_mask) {
    if (!mask) throw ValidationError("generator configured with use_mask needs a mask");
    if (mask->dim() != 4 || mask->size(0) != input.size(0) || mask->size(1) != 1 || mask->size(2) != input.size(2) ||
        mask->size(3) != input.size(3))
      throw ValidationError("mask is not co-registered with the input");
    x = torch::cat({x, mask->to(input.dtype())}, 1);
  }
  record(trace, "input", x);
  x = shallow(x);
  record(trace, "shallow_conv", x);
  record(trace, "patch_partition", patch_partition(x, cfg.patch));
  auto t = embed(x);
  record(trace, "patch_embed", t);

  const auto s1 = enc1->forward(t);
  record(trace, "enc1", s1);
  t = merge1(s1);
  record(trace, "merge1", t);
  const auto s2 = enc2->forward(t);
  record(trace, "enc2", s2);
  t = merge2(s2);
  record(trace, "merge2", t);
  const auto s3 = enc3->forward(t);
  record(trace, "enc3", s3);
  t = bottleneck->forward(s3);
  record(trace, "bottleneck", t);

  t = dec3->forward(fuse3(torch::cat({t, s3}, -1)));
  record(trace, "dec3", t);
  t = up3(t);
  record(trace, "up3", t);
  t = dec2->forward(fuse2(torch::cat({t, s2}, -1)));
  record(trace, "dec2", t);
  t = up2(t);
  record(trace, "up2", t);
  t = dec1->forward(fuse1(torch::cat({t, s1}, -1)));
  record(trace, "dec1", t);
  t = final1(t);
  record(trace, "final_up1", t);
  t = final2(t);
  record(trace, "final_up2", t);

  auto y = head(t.permute({0, 3, 1, 2}));
  record(trace, "head", y);
  y = cfg.activation == OutputActivation::Sigmoid ? torch::sigmoid(y) : torch::tanh(y);
  if (cfg.use_mask) y = y * mask->to(y.dtype());
  record(trace, "output", y);
  return y;
}

}  // namespace mswin::nn
