#include "mswin/nn/discriminator.hpp"

#include "mswin/errors.hpp"

namespace mswin::nn {

void DiscriminatorConfig::validate() const {
  if (in_ch < 2) throw ValidationError("discriminator needs condition and candidate channels");
  if (widths.empty() || widths.size() != strides.size())
    throw ValidationError("discriminator widths and strides must be non-empty and of equal length");
  for (int w : widths)
    if (w < 1) throw ValidationError("discriminator widths must be positive");
  for (int s : strides)
    if (s < 1) throw ValidationError("discriminator strides must be positive");
  if (kernel < 1) throw ValidationError("discriminator kernel must be positive");
}

int DiscriminatorConfig::output_side(int side) const {
  const int pad = 1;
  for (int s : strides) side = (side + 2 * pad - kernel) / s + 1;
  return (side + 2 * pad - kernel) + 1;
}

nlohmann::json to_json(const DiscriminatorConfig& c) {
  return {{"in_ch", c.in_ch}, {"widths", c.widths}, {"strides", c.strides},
          {"kernel", c.kernel}, {"slope", c.slope},   {"norm", c.norm}};
}

DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j) {
  DiscriminatorConfig c;
  try {
    c.in_ch = j.value("in_ch", c.in_ch);
    c.widths = j.value("widths", c.widths);
    c.strides = j.value("strides", c.strides);
    c.kernel = j.value("kernel", c.kernel);
    c.slope = j.value("slope", c.slope);
    c.norm = j.value("norm", c.norm);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad discriminator config: ") + e.what());
  }
  c.validate();
  return c;
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorConfig& c) : cfg(c) {
  cfg.validate();
  body = torch::nn::Sequential();
  int64_t in = cfg.in_ch;
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
    const int64_t out = cfg.widths[i];
    body->push_back(torch::nn::Conv2d(
        torch::nn::Conv2dOptions(in, out, cfg.kernel).stride(cfg.strides[i]).padding(1).bias(i == 0 || !cfg.norm)));
    if (i > 0 && cfg.norm) body->push_back(torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(out).affine(true)));
    body->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(cfg.slope)));
    in = out;
  }
  body->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, 1, cfg.kernel).stride(1).padding(1)));
  register_module("body", body);
}

torch::Tensor DiscriminatorImpl::logits(const torch::Tensor& u, const torch::Tensor& candidate) {
  if (u.dim() != 4 || candidate.dim() != 4 || u.size(0) != candidate.size(0) || u.size(2) != candidate.size(2) ||
      u.size(3) != candidate.size(3))
    throw ValidationError("discriminator inputs are not co-registered");
  if (u.size(1) + candidate.size(1) != cfg.in_ch)
    throw ValidationError("discriminator expects " + std::to_string(cfg.in_ch) + " input channels");
  return body->forward(torch::cat({u, candidate}, 1));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& u, const torch::Tensor& candidate) {
  return torch::sigmoid(logits(u, candidate));
}

}  // namespace mswin::nn
