#include "torch_doctest.hpp"

#include <set>

#include "mswin/errors.hpp"
#include "mswin/nn/checkpoint.hpp"
#include "mswin/nn/training.hpp"

using namespace mswin;
using namespace mswin::nn;

namespace {

synth::Dataset tiny_dataset(int n_scenes, synth::DatasetMode mode = synth::DatasetMode::Estimation) {
  synth::DatasetOptions o;
  o.n_scenes = n_scenes;
  o.scene.height = o.scene.width = 32;
  o.scene.n_blocks = 6;
  o.scene.seed = 9;
  o.tile = o.stride = 32;
  o.mode = mode;
  return synth::build_dataset(o);
}

GeneratorConfig tiny_gen() {
  GeneratorConfig g;
  g.embed_c = 16;
  g.heads = {1, 2, 4};
  g.window = 4;
  return g;
}

DiscriminatorConfig tiny_disc() {
  DiscriminatorConfig d;
  d.widths = {8, 16, 32, 64};
  return d;
}

std::vector<const TrainSample*> ptrs(const std::vector<TrainSample>& v) {
  std::vector<const TrainSample*> out;
  for (const auto& s : v) out.push_back(&s);
  return out;
}

}  // namespace

TEST_CASE("same seed gives bit-identical traces and weights") {
  const auto ds = tiny_dataset(3);
  TrainOptions o;
  o.steps = 6;
  o.batch_size = 2;
  o.seed = 4;
  auto a = train(ptrs(ds.samples), {}, tiny_gen(), tiny_disc(), AblationConfig{}, o);
  auto b = train(ptrs(ds.samples), {}, tiny_gen(), tiny_disc(), AblationConfig{}, o);
  REQUIRE(a.trace.size() == 6);
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].loss_d == b.trace[i].loss_d);
    CHECK(a.trace[i].total_g == b.trace[i].total_g);
  }
  CHECK(flatten_parameters(*a.generator) == flatten_parameters(*b.generator));
  o.seed = 5;
  const auto c = train(ptrs(ds.samples), {}, tiny_gen(), tiny_disc(), AblationConfig{}, o);
  CHECK(c.trace[0].total_g != a.trace[0].total_g);
}

TEST_CASE("zero steps leaves the initialization") {
  const auto ds = tiny_dataset(2);
  TrainOptions o;
  o.steps = 0;
  o.seed = 11;
  auto r = train(ptrs(ds.samples), {}, tiny_gen(), tiny_disc(), AblationConfig{}, o);
  CHECK(r.trace.empty());
  torch::manual_seed(11);
  Generator fresh(r.generator_cfg);
  CHECK(flatten_parameters(*fresh) == flatten_parameters(*r.generator));
}

TEST_CASE("training reduces the reconstruction loss") {
  const auto ds = tiny_dataset(2);
  TrainOptions o;
  o.steps = 40;
  o.batch_size = 2;
  AblationConfig a;
  a.losses.use_l1 = true;
  a.losses.use_l2 = a.losses.use_smooth_l1 = false;
  auto r = train(ptrs(ds.samples), {}, tiny_gen(), tiny_disc(), a, o);
  CHECK(r.trace.back().recon < r.trace.front().recon);
}

TEST_CASE("style mode trains L1 without a mask") {
  AblationConfig a;
  a.mode = synth::DatasetMode::StyleTransfer;
  const auto n = a.normalized();
  CHECK(!n.use_mask);
  CHECK(n.losses.use_l1);
  CHECK(!n.losses.use_l2);
  CHECK(!n.losses.use_smooth_l1);
  const auto ds = tiny_dataset(2, synth::DatasetMode::StyleTransfer);
  TrainOptions o;
  o.steps = 2;
  o.batch_size = 2;
  auto r = train(ptrs(ds.samples), {}, tiny_gen(), tiny_disc(), a, o);
  CHECK(!r.generator_cfg.use_mask);
  CHECK(r.generator_cfg.activation == OutputActivation::Tanh);
  CHECK(r.generator_cfg.out_ch == 3);
  const auto m = evaluate_samples(r.generator, ptrs(ds.samples), a, o);
  CHECK(m.pixels == 2u * 3u * 32u * 32u);
}

TEST_CASE("fold partition is a disjoint cover") {
  const auto f = fold_assignment(25, 5);
  std::vector<int> count(5, 0);
  for (int v : f) ++count[static_cast<std::size_t>(v)];
  for (int c : count) CHECK(c == 5);
  CHECK_THROWS_AS(fold_assignment(3, 5), ValidationError);
  CHECK(fold_hash(f) == fold_hash(fold_assignment(25, 5)));
  CHECK(fold_hash(f) != fold_hash(fold_assignment(25, 4)));

  std::vector<TrainSample> samples(25);
  for (int fold = 0; fold < 5; ++fold) {
    const auto s = split_fold(samples, f, fold);
    CHECK(s.test.size() == 5);
    CHECK(s.val.size() == 4);
    CHECK(s.train.size() == 16);
    std::set<const TrainSample*> all;
    for (const auto* v : {&s.train, &s.val, &s.test})
      for (const auto* p : *v) CHECK(all.insert(p).second);
    CHECK(all.size() == 25);
  }
}

TEST_CASE("fold partition over random sizes (property)") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(6));
    const auto n = static_cast<std::size_t>(k) + rng.below(60);
    const auto f = fold_assignment(n, k);
    REQUIRE(f.size() == n);
    for (std::size_t i = 1; i < n; ++i) REQUIRE(f[i] >= f[i - 1]);  // contiguous blocks
    std::set<int> seen(f.begin(), f.end());
    REQUIRE(seen.size() == static_cast<std::size_t>(k));
  }
}

TEST_CASE("scores are invariant to sample order") {
  const auto ds = tiny_dataset(4);
  std::vector<std::vector<Grid>> preds;
  Rng rng(1);
  for (const auto& s : ds.samples) {
    Grid g = s.x.grid(0);
    for (auto& v : g.values) v += static_cast<float>(rng.normal(0, 0.05));
    preds.push_back({g});
  }
  auto p = ptrs(ds.samples);
  const auto a = score(preds, p, synth::DatasetMode::Estimation);
  std::reverse(preds.begin(), preds.end());
  std::reverse(p.begin(), p.end());
  const auto b = score(preds, p, synth::DatasetMode::Estimation);
  CHECK(a.mae == doctest::Approx(b.mae).epsilon(1e-12));
  CHECK(a.ssim == doctest::Approx(b.ssim).epsilon(1e-12));
  CHECK(*a.r2 == doctest::Approx(*b.r2).epsilon(1e-12));
}

TEST_CASE("tiny ablation emits the full 11-row table") {
  const auto ds = tiny_dataset(5);
  TrainOptions o;
  o.steps = 1;
  o.batch_size = 2;
  CvOptions cv;
  cv.k = 5;
  cv.max_folds = 1;
  const auto t = run_ablation(ds.samples, default_ablation_grid(), cv, tiny_gen(), tiny_disc(), o);
  REQUIRE(t.rows.size() == 11);
  CHECK(t.trainings == 8);
  for (const auto& r : t.rows) CHECK(r.result.fold_hash == t.fold_hash);
  CHECK(t.best_mask_filter_row.has_value());
  CHECK(t.best_loss_row.has_value());
  CHECK(*t.best_mask_filter_row < 4);
  CHECK(*t.best_loss_row >= 4);
  const auto j = t.to_json();
  CHECK(j["rows"].size() == 11);
  CHECK(j.contains("loss_winner_matches_reference"));
  // cells that differ only in the filter share weights: mask off, filter off/on
  CHECK(t.rows[0].result.folds[0].n_train == t.rows[1].result.folds[0].n_train);
}

TEST_CASE("options and ablation configs survive JSON") {
  TrainOptions o;
  o.steps = 17;
  o.seed = 99;
  o.optimizer.lr = 1e-3;
  const auto back = train_options_from_json(to_json(o));
  CHECK(back.steps == 17);
  CHECK(back.seed == 99u);
  CHECK(back.optimizer.lr == 1e-3);
  CHECK_THROWS_AS(train_options_from_json({{"steps", -1}}), ValidationError);
  AblationConfig a;
  a.use_mask = false;
  a.losses.use_l1 = true;
  CHECK(to_json(ablation_config_from_json(to_json(a))) == to_json(a));
}
