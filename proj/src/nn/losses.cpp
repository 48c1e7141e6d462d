#include "mswin/nn/losses.hpp"

#include "mswin/errors.hpp"

namespace mswin::nn {

namespace {

using torch::autograd::AutogradContext;
using torch::autograd::variable_list;

enum Kind : int64_t { kL1 = 0, kL2 = 1, kSmooth = 2 };

struct ReconFn : torch::autograd::Function<ReconFn> {
  static torch::Tensor forward(AutogradContext* ctx, const torch::Tensor& x, const torch::Tensor& g,
                               const torch::Tensor& w, int64_t kind) {
    const auto d = g - x;
    const auto a = d.abs();
    torch::Tensor e;
    if (kind == kL1)
      e = a;
    else if (kind == kL2)
      e = d * d;
    else
      e = torch::where(a < 1.0, 0.5 * d * d, a - 0.5);
    const double n = w.sum().item<double>();
    ctx->save_for_backward({d, w});
    ctx->saved_data["kind"] = kind;
    ctx->saved_data["n"] = n;
    return (e * w).sum() / n;
  }

  static variable_list backward(AutogradContext* ctx, variable_list grad_out) {
    const auto saved = ctx->get_saved_variables();
    const auto& d = saved[0];
    const auto& w = saved[1];
    const auto kind = ctx->saved_data["kind"].toInt();
    const double n = ctx->saved_data["n"].toDouble();
    torch::Tensor de;
    if (kind == kL1)
      de = torch::sign(d);
    else if (kind == kL2)
      de = 2.0 * d;
    else
      de = torch::where(d.abs() < 1.0, d, torch::sign(d));
    const auto gg = grad_out[0] * de * w / n;
    return {-gg, gg, torch::Tensor(), torch::Tensor()};
  }
};

torch::Tensor recon(const torch::Tensor& x, const torch::Tensor& g, const std::optional<torch::Tensor>& mask,
                    int64_t kind) {
  if (!x.sizes().equals(g.sizes())) throw ValidationError("loss operands are not co-registered");
  torch::Tensor w;
  if (mask) {
    if (mask->dim() != x.dim() || mask->size(0) != x.size(0) || mask->size(-1) != x.size(-1) ||
        mask->size(-2) != x.size(-2))
      throw ValidationError("loss mask is not co-registered");
    w = (*mask == 1).to(x.dtype()).expand_as(x).contiguous();
  } else {
    w = torch::ones_like(x);
  }
  if (w.sum().item<double>() == 0.0) throw ValidationError("loss support is empty (mask has no vegetation pixels)");
  return ReconFn::apply(x, g, w, kind);
}

struct LossDFn : torch::autograd::Function<LossDFn> {
  static torch::Tensor forward(AutogradContext* ctx, const torch::Tensor& real, const torch::Tensor& fake) {
    ctx->save_for_backward({real, fake});
    return -torch::log(real.clamp_min(kLogClamp)).mean() - torch::log((1.0 - fake).clamp_min(kLogClamp)).mean();
  }

  static variable_list backward(AutogradContext* ctx, variable_list grad_out) {
    const auto saved = ctx->get_saved_variables();
    const auto& real = saved[0];
    const auto& fake = saved[1];
    const double nr = static_cast<double>(real.numel());
    const double nf = static_cast<double>(fake.numel());
    const auto one_minus = 1.0 - fake;
    const auto gr = torch::where(real > kLogClamp, -1.0 / (nr * real), torch::zeros_like(real));
    const auto gf = torch::where(one_minus > kLogClamp, 1.0 / (nf * one_minus), torch::zeros_like(fake));
    return {grad_out[0] * gr, grad_out[0] * gf};
  }
};

struct LossGFn : torch::autograd::Function<LossGFn> {
  static torch::Tensor forward(AutogradContext* ctx, const torch::Tensor& fake) {
    ctx->save_for_backward({fake});
    return -torch::log(fake.clamp_min(kLogClamp)).mean();
  }

  static variable_list backward(AutogradContext* ctx, variable_list grad_out) {
    const auto fake = ctx->get_saved_variables()[0];
    const double n = static_cast<double>(fake.numel());
    return {grad_out[0] * torch::where(fake > kLogClamp, -1.0 / (n * fake), torch::zeros_like(fake))};
  }
};

}  // namespace

torch::Tensor loss_l1(const torch::Tensor& x, const torch::Tensor& g, const std::optional<torch::Tensor>& mask) {
  return recon(x, g, mask, kL1);
}

torch::Tensor loss_l2(const torch::Tensor& x, const torch::Tensor& g, const std::optional<torch::Tensor>& mask) {
  return recon(x, g, mask, kL2);
}

torch::Tensor loss_smooth_l1(const torch::Tensor& x, const torch::Tensor& g,
                             const std::optional<torch::Tensor>& mask) {
  return recon(x, g, mask, kSmooth);
}

torch::Tensor loss_d(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  if (!d_real.sizes().equals(d_fake.sizes())) throw ValidationError("score maps differ in shape");
  return LossDFn::apply(d_real, d_fake);
}

torch::Tensor loss_g(const torch::Tensor& d_fake) { return LossGFn::apply(d_fake); }

CganLosses loss_cgan(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  return {loss_d(d_real, d_fake), loss_g(d_fake)};
}

void LossSelection::validate() const {
  if (!(lambda >= 0)) throw ValidationError("lambda must be >= 0");
  if (!any() && !pure_cgan)
    throw ValidationError("no reconstruction loss selected; set pure_cgan to train with the adversarial term alone");
}

std::string LossSelection::label() const {
  std::string s;
  auto add = [&](const char* p) { s += s.empty() ? p : std::string("+") + p; };
  if (use_l1) add("L1");
  if (use_l2) add("L2");
  if (use_smooth_l1) add("SmoothL1");
  return s.empty() ? "cGAN" : s;
}

nlohmann::json to_json(const LossSelection& s) {
  return {{"use_l1", s.use_l1},
          {"use_l2", s.use_l2},
          {"use_smooth_l1", s.use_smooth_l1},
          {"lambda", s.lambda},
          {"pure_cgan", s.pure_cgan}};
}

LossSelection loss_selection_from_json(const nlohmann::json& j) {
  LossSelection s;
  try {
    s.use_l1 = j.value("use_l1", s.use_l1);
    s.use_l2 = j.value("use_l2", s.use_l2);
    s.use_smooth_l1 = j.value("use_smooth_l1", s.use_smooth_l1);
    s.lambda = j.value("lambda", s.lambda);
    s.pure_cgan = j.value("pure_cgan", s.pure_cgan);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad loss selection: ") + e.what());
  }
  s.validate();
  return s;
}

ReconParts reconstruction_losses(const LossSelection& sel, const torch::Tensor& x, const torch::Tensor& g,
                                 const std::optional<torch::Tensor>& mask) {
  ReconParts p;
  if (sel.use_l1) p.l1 = loss_l1(x, g, mask);
  if (sel.use_l2) p.l2 = loss_l2(x, g, mask);
  if (sel.use_smooth_l1) p.smooth_l1 = loss_smooth_l1(x, g, mask);
  return p;
}

torch::Tensor composite_generator_loss(const LossSelection& sel, const torch::Tensor& cgan_g, const ReconParts& p) {
  sel.validate();
  auto total = cgan_g;
  if (sel.use_l1) total = total + sel.lambda * p.l1.value();
  if (sel.use_l2) total = total + sel.lambda * p.l2.value();
  if (sel.use_smooth_l1) total = total + sel.lambda * p.smooth_l1.value();
  return total;
}

double composite_generator_loss(const LossSelection& sel, double cgan_g, std::optional<double> l1,
                                std::optional<double> l2, std::optional<double> smooth_l1) {
  sel.validate();
  double total = cgan_g;
  if (sel.use_l1) total += sel.lambda * l1.value();
  if (sel.use_l2) total += sel.lambda * l2.value();
  if (sel.use_smooth_l1) total += sel.lambda * smooth_l1.value();
  return total;
}

}  // namespace mswin::nn
