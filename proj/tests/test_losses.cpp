#include "torch_doctest.hpp"

#include <cmath>

#include "gradcheck.hpp"
#include "mswin/errors.hpp"
#include "mswin/nn/discriminator.hpp"
#include "mswin/nn/losses.hpp"

using namespace mswin;
using namespace mswin::nn;

namespace {

double val(const torch::Tensor& t) { return t.item<double>(); }

using LossFn = torch::Tensor (*)(const torch::Tensor&, const torch::Tensor&, const std::optional<torch::Tensor>&);

}  // namespace

TEST_CASE("reconstruction loss examples") {
  const auto x = torch::rand({2, 1, 8, 8});
  CHECK(val(loss_l1(x, x)) == 0.0);
  CHECK(val(loss_l2(x, x)) == 0.0);
  CHECK(val(loss_smooth_l1(x, x)) == 0.0);
  const auto g1 = x + 1.0;
  CHECK(val(loss_l1(x, g1)) == doctest::Approx(1.0));
  CHECK(val(loss_l2(x, g1)) == doctest::Approx(1.0));
  CHECK(val(loss_smooth_l1(x, g1)) == doctest::Approx(0.5));
  const auto g2 = x + 2.0;
  CHECK(val(loss_l1(x, g2)) == doctest::Approx(2.0));
  CHECK(val(loss_l2(x, g2)) == doctest::Approx(4.0));
  CHECK(val(loss_smooth_l1(x, g2)) == doctest::Approx(1.5));
}

TEST_CASE("masked losses use only mask pixels") {
  auto x = torch::zeros({1, 2, 2, 2});
  auto g = torch::tensor({1.0f, 5.0f, 1.0f, 5.0f, 1.0f, 5.0f, 1.0f, 5.0f}).view({1, 2, 2, 2});
  auto m = torch::tensor({1.0f, 0.0f, 1.0f, 0.0f}).view({1, 1, 2, 2});
  CHECK(val(loss_l1(x, g, m)) == doctest::Approx(1.0));
  CHECK_THROWS_AS(loss_l1(x, g, torch::zeros({1, 1, 2, 2})), ValidationError);
  CHECK_THROWS_AS(loss_l1(x, torch::zeros({1, 2, 2, 3})), ValidationError);
}

TEST_CASE("adversarial loss examples") {
  CHECK(val(loss_d(torch::ones({1, 1, 6, 6}), torch::zeros({1, 1, 6, 6}))) == doctest::Approx(0.0));
  const auto half = torch::full({2, 1, 6, 6}, 0.5);
  CHECK(val(loss_d(half, half)) == doctest::Approx(2.0 * std::log(2.0)));
  CHECK(val(loss_g(half)) == doctest::Approx(std::log(2.0)));
  const auto both = loss_cgan(half, half);
  CHECK(val(both.loss_g) == doctest::Approx(std::log(2.0)));
  // clamped logs stay finite at the extremes
  CHECK(std::isfinite(val(loss_d(torch::zeros({1, 1, 2, 2}), torch::ones({1, 1, 2, 2})))));
  CHECK(std::isfinite(val(loss_g(torch::zeros({1, 1, 2, 2})))));
}

TEST_CASE("generator loss gradient is -1/(N d_fake)") {
  torch::manual_seed(1);
  const auto d = (torch::rand({1, 1, 6, 6}) * 0.8 + 0.1).requires_grad_();
  loss_g(d).backward();
  const auto expect = -1.0 / (36.0 * d.detach());
  CHECK(torch::allclose(d.grad(), expect, 1e-5, 1e-7));
  auto d64 = d.detach().to(torch::kFloat64).clone();
  const auto r = gradcheck::compare(d.grad(), d64, [&] { return val(-torch::log(d64).mean()); }, 36, 2);
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("composite loss arithmetic") {
  LossSelection l1;
  l1.use_l1 = true;
  l1.use_l2 = l1.use_smooth_l1 = false;
  CHECK(composite_generator_loss(l1, 0.7, 0.1, std::nullopt, std::nullopt) == doctest::Approx(10.7));
  LossSelection pair;
  CHECK(composite_generator_loss(pair, 0.7, std::nullopt, 0.04, 0.02) == doctest::Approx(6.7));
  pair.lambda = 0;
  CHECK(composite_generator_loss(pair, 0.7, std::nullopt, 0.04, 0.02) == doctest::Approx(0.7));
  LossSelection none;
  none.use_l2 = none.use_smooth_l1 = false;
  CHECK_THROWS_AS(none.validate(), ValidationError);
  none.pure_cgan = true;
  CHECK_NOTHROW(none.validate());
  CHECK(composite_generator_loss(none, 0.7, std::nullopt, std::nullopt, std::nullopt) == doctest::Approx(0.7));

  const auto x = torch::rand({1, 1, 4, 4});
  const auto g = torch::rand({1, 1, 4, 4});
  const auto parts = reconstruction_losses(LossSelection{}, x, g, std::nullopt);
  CHECK(!parts.l1);
  const auto total = composite_generator_loss(LossSelection{}, torch::tensor(0.5), parts);
  CHECK(val(total) == doctest::Approx(0.5 + 100.0 * (val(*parts.l2) + val(*parts.smooth_l1))));
  CHECK(LossSelection{}.label() == "L2+SmoothL1");
}

TEST_CASE("reconstruction gradients match finite differences") {
  const LossFn fns[3] = {&loss_l1, &loss_l2, &loss_smooth_l1};
  const char* names[3] = {"L1", "L2", "SmoothL1"};
  for (int k = 0; k < 3; ++k) {
    for (bool masked : {false, true}) {
      torch::manual_seed(10 + k);
      const auto x = (torch::randn({2, 2, 8, 8}) * 1.5).requires_grad_();
      const auto g = (torch::randn({2, 2, 8, 8}) * 1.5).requires_grad_();
      const auto m = (torch::rand({2, 1, 8, 8}) > 0.4).to(torch::kFloat32);
      const std::optional<torch::Tensor> mask = masked ? std::optional<torch::Tensor>(m) : std::nullopt;
      fns[k](x, g, mask).backward();
      auto x64 = x.detach().to(torch::kFloat64).clone();
      auto g64 = g.detach().to(torch::kFloat64).clone();
      const auto m64 = m.to(torch::kFloat64);
      const std::optional<torch::Tensor> mask64 = masked ? std::optional<torch::Tensor>(m64) : std::nullopt;
      auto loss64 = [&] { return val(fns[k](x64, g64, mask64)); };
      // L1 and the linear SmoothL1 branch have kinks at d = 0 and |d| = 1
      auto smooth_here = [&](std::int64_t i) {
        const double d = (g64.view(-1)[i] - x64.view(-1)[i]).item<double>();
        return std::abs(d) > 1e-3 && std::abs(std::abs(d) - 1.0) > 1e-3;
      };
      const auto rx = gradcheck::compare(x.grad(), x64, loss64, 100, 20 + k, 1e-6, smooth_here);
      const auto rg = gradcheck::compare(g.grad(), g64, loss64, 100, 30 + k, 1e-6, smooth_here);
      INFO(std::string(names[k]) << (masked ? " masked" : ""));
      CHECK(rx.checked == 100);
      CHECK(rx.max_rel < 1e-3);
      CHECK(rg.max_rel < 1e-3);
    }
  }
}

TEST_CASE("adversarial gradients match finite differences") {
  torch::manual_seed(40);
  const auto real = (torch::rand({2, 1, 6, 6}) * 0.9 + 0.05).requires_grad_();
  const auto fake = (torch::rand({2, 1, 6, 6}) * 0.9 + 0.05).requires_grad_();
  loss_d(real, fake).backward();
  auto r64 = real.detach().to(torch::kFloat64).clone();
  auto f64 = fake.detach().to(torch::kFloat64).clone();
  auto ld = [&] { return val(loss_d(r64, f64)); };
  CHECK(gradcheck::compare(real.grad(), r64, ld, 72, 41).max_rel < 1e-3);
  CHECK(gradcheck::compare(fake.grad(), f64, ld, 72, 42).max_rel < 1e-3);

  const auto fake2 = (torch::rand({4, 1, 5, 5}) * 0.9 + 0.05).requires_grad_();
  loss_g(fake2).backward();
  auto f2 = fake2.detach().to(torch::kFloat64).clone();
  const auto r = gradcheck::compare(fake2.grad(), f2, [&] { return val(loss_g(f2)); }, 100, 43);
  CHECK(r.checked == 100);
  CHECK(r.max_rel < 1e-3);
}

TEST_CASE("loss invariants over random batches (property)") {
  torch::manual_seed(50);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = torch::randn({2, 1, 6, 6}, torch::kFloat64) * (1 + trial % 5);
    const auto g = torch::randn({2, 1, 6, 6}, torch::kFloat64) * (1 + trial % 3);
    auto m = (torch::rand({2, 1, 6, 6}, torch::kFloat64) > 0.5).to(torch::kFloat64);
    m.view(-1)[0] = 1.0;
    const double l1 = val(loss_l1(x, g, m));
    const double l2 = val(loss_l2(x, g, m));
    const double sm = val(loss_smooth_l1(x, g, m));
    REQUIRE(l1 > 0);
    REQUIRE(l2 > 0);
    REQUIRE(sm > 0);
    REQUIRE(l1 <= std::sqrt(l2) + 1e-12);
    // equal on the support gives zero, whatever happens outside it
    const auto same = torch::where(m == 1, x, g);
    REQUIRE(val(loss_l1(x, same, m)) == 0.0);
    REQUIRE(val(loss_l2(x, same, m)) == 0.0);
    REQUIRE(val(loss_smooth_l1(x, same, m)) == 0.0);
  }
}

TEST_CASE("SmoothL1 is continuous and once differentiable at |d| = 1") {
  const double h = 1e-6;
  for (double s : {1.0, -1.0}) {
    auto at = [&](double d) {
      const auto x = torch::zeros({1}, torch::kFloat64);
      return val(loss_smooth_l1(x, torch::full({1}, d, torch::kFloat64)));
    };
    const double v = at(s);
    CHECK(std::abs(at(s - h * s) - v) < 1e-5);
    CHECK(std::abs(at(s + h * s) - v) < 1e-5);
    const double left = (v - at(s - h)) / h;
    const double right = (at(s + h) - v) / h;
    CHECK(std::abs(left - right) < 1e-4);
  }
}

TEST_CASE("a D step at the optimum does not increase loss_D") {
  torch::manual_seed(60);
  DiscriminatorConfig cfg;
  cfg.widths = {8, 16, 32, 64};
  Discriminator d(cfg);
  const auto u = torch::randn({2, 3, 32, 32});
  const auto real = torch::randn({2, 1, 32, 32});
  const auto fake = torch::randn({2, 1, 32, 32});
  // push the head so that D is saturated: real -> 1, fake -> 0
  torch::optim::Adam opt(d->parameters(), torch::optim::AdamOptions(1e-3));
  for (int i = 0; i < 200; ++i) {
    opt.zero_grad();
    const auto l = loss_d(d->forward(u, real), d->forward(u, fake));
    l.backward();
    opt.step();
  }
  const double before = val(loss_d(d->forward(u, real), d->forward(u, fake)));
  CHECK(before < 0.05);
  torch::optim::SGD sgd(d->parameters(), torch::optim::SGDOptions(1e-4));
  sgd.zero_grad();
  loss_d(d->forward(u, real), d->forward(u, fake)).backward();
  sgd.step();
  const double after = val(loss_d(d->forward(u, real), d->forward(u, fake)));
  CHECK(after <= before);
}
