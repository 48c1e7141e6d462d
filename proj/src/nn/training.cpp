#include "mswin/nn/training.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "mswin/errors.hpp"
#include "mswin/metrics.hpp"
#include "mswin/rng.hpp"

namespace mswin::nn {

using nlohmann::json;

AblationConfig AblationConfig::normalized() const {
  AblationConfig a = *this;
  if (a.mode == DatasetMode::StyleTransfer) {
    a.use_mask = false;
    a.losses.use_l1 = true;
    a.losses.use_l2 = false;
    a.losses.use_smooth_l1 = false;
    a.losses.pure_cgan = false;
  }
  return a;
}

std::string AblationConfig::label() const {
  return std::string("mask=") + (use_mask ? "on" : "off") + " filter=" + (use_median_filter ? "on" : "off") +
         " loss=" + losses.label() + "+cGAN";
}

json to_json(const AblationConfig& a) {
  return {{"use_mask", a.use_mask},
          {"use_median_filter", a.use_median_filter},
          {"losses", to_json(a.losses)},
          {"mode", synth::to_string(a.mode)}};
}

AblationConfig ablation_config_from_json(const json& j) {
  AblationConfig a;
  try {
    a.use_mask = j.value("use_mask", a.use_mask);
    a.use_median_filter = j.value("use_median_filter", a.use_median_filter);
    if (j.contains("mode")) a.mode = synth::dataset_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("losses")) a.losses = loss_selection_from_json(j.at("losses"));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad ablation config: ") + e.what());
  }
  return a.normalized();
}

json to_json(const TrainOptions& o) {
  return {{"steps", o.steps},
          {"batch_size", o.batch_size},
          {"seed", o.seed},
          {"optimizer", {{"lr", o.optimizer.lr}, {"beta1", o.optimizer.beta1}, {"beta2", o.optimizer.beta2}}},
          {"log_every", o.log_every},
          {"val_every", o.val_every},
          {"median_threshold", o.median_threshold},
          {"median_kernel", o.median_kernel},
          {"mc_samples", o.mc_samples}};
}

TrainOptions train_options_from_json(const json& j, TrainOptions o) {
  try {
    o.steps = j.value("steps", o.steps);
    o.batch_size = j.value("batch_size", o.batch_size);
    o.seed = j.value("seed", o.seed);
    if (j.contains("optimizer")) {
      const auto& op = j.at("optimizer");
      o.optimizer.lr = op.value("lr", o.optimizer.lr);
      o.optimizer.beta1 = op.value("beta1", o.optimizer.beta1);
      o.optimizer.beta2 = op.value("beta2", o.optimizer.beta2);
    }
    o.log_every = j.value("log_every", o.log_every);
    o.val_every = j.value("val_every", o.val_every);
    o.median_threshold = j.value("median_threshold", o.median_threshold);
    o.median_kernel = j.value("median_kernel", o.median_kernel);
    o.mc_samples = j.value("mc_samples", o.mc_samples);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad training options: ") + e.what());
  }
  if (o.steps < 0) throw ValidationError("steps must be >= 0");
  if (o.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (o.mc_samples < 1) throw ValidationError("mc_samples must be >= 1");
  if (!(o.optimizer.lr > 0)) throw ValidationError("learning rate must be positive");
  return o;
}

json to_json(const Metrics& m) {
  return {{"mae", m.mae},
          {"rmse", m.rmse},
          {"r2", m.r2 ? json(*m.r2) : json(nullptr)},
          {"ssim", m.ssim},
          {"pixels", m.pixels},
          {"warnings", m.warnings}};
}

namespace {

void copy_stack(const BandStack& s, float* dst) {
  for (const auto& b : s.bands()) {
    std::copy(b.grid.values.begin(), b.grid.values.end(), dst);
    dst += b.grid.size();
  }
}

}  // namespace

Batch make_batch(const std::vector<const TrainSample*>& samples) {
  if (samples.empty()) throw ValidationError("empty batch");
  const auto& s0 = *samples.front();
  const int64_t B = static_cast<int64_t>(samples.size());
  const int64_t H = s0.u.height(), W = s0.u.width();
  const int64_t cu = static_cast<int64_t>(s0.u.band_count());
  const int64_t cx = static_cast<int64_t>(s0.x.band_count());
  Batch b{torch::empty({B, cu, H, W}), torch::empty({B, cx, H, W}), torch::empty({B, 1, H, W})};
  for (int64_t i = 0; i < B; ++i) {
    const auto& s = *samples[static_cast<std::size_t>(i)];
    if (s.u.height() != H || s.u.width() != W || static_cast<int64_t>(s.u.band_count()) != cu ||
        static_cast<int64_t>(s.x.band_count()) != cx || s.x.height() != H || s.x.width() != W ||
        s.mask.height != H || s.mask.width != W)
      throw ValidationError("training samples are not co-registered");
    copy_stack(s.u, b.u[i].data_ptr<float>());
    copy_stack(s.x, b.x[i].data_ptr<float>());
    std::copy(s.mask.values.begin(), s.mask.values.end(), b.mask[i].data_ptr<float>());
  }
  return b;
}

void configure(GeneratorConfig& g, DiscriminatorConfig& d, const AblationConfig& abl, const TrainSample& s) {
  g.in_ch = static_cast<int>(s.u.band_count());
  g.out_ch = static_cast<int>(s.x.band_count());
  g.height = s.u.height();
  g.width = s.u.width();
  g.use_mask = abl.use_mask;
  g.activation = abl.mode == DatasetMode::Estimation ? OutputActivation::Sigmoid : OutputActivation::Tanh;
  d.in_ch = g.in_ch + g.out_ch;
  g.validate();
  d.validate();
}

TrainResult train(const std::vector<const TrainSample*>& train_set, const std::vector<const TrainSample*>& val_set,
                  GeneratorConfig gen_cfg, DiscriminatorConfig disc_cfg, const AblationConfig& abl_in,
                  const TrainOptions& opts, const StepCallback& on_step) {
  if (train_set.empty()) throw ValidationError("training set is empty");
  const AblationConfig abl = abl_in.normalized();
  abl.losses.validate();
  configure(gen_cfg, disc_cfg, abl, *train_set.front());

  torch::manual_seed(opts.seed);
  TrainResult res;
  res.generator_cfg = gen_cfg;
  res.discriminator_cfg = disc_cfg;
  res.generator = Generator(gen_cfg);
  res.discriminator = Discriminator(disc_cfg);
  auto& G = res.generator;
  auto& D = res.discriminator;

  const auto adam = torch::optim::AdamOptions(opts.optimizer.lr).betas({opts.optimizer.beta1, opts.optimizer.beta2});
  torch::optim::Adam opt_g(G->parameters(), adam);
  torch::optim::Adam opt_d(D->parameters(), adam);

  const Batch all = make_batch(train_set);
  const bool restrict = abl.mode == DatasetMode::Estimation && abl.use_mask;
  const auto n = static_cast<std::size_t>(all.u.size(0));

  Rng rng(Rng::mix(opts.seed, 0xBA7Cu));
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t pos = n;

  for (int step = 1; step <= opts.steps; ++step) {
    std::vector<int64_t> pick;
    for (int k = 0; k < std::min<int>(opts.batch_size, static_cast<int>(n)); ++k) {
      if (pos == n) {
        for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
        pos = 0;
      }
      pick.push_back(order[pos++]);
    }
    const auto idx = torch::tensor(pick, torch::kInt64);
    const auto u = all.u.index_select(0, idx);
    const auto x = all.x.index_select(0, idx);
    const auto m = all.mask.index_select(0, idx);
    const std::optional<torch::Tensor> gmask = gen_cfg.use_mask ? std::optional<torch::Tensor>(m) : std::nullopt;

    const auto fake = G->forward(u, gmask);

    const auto ld = loss_d(D->forward(u, x), D->forward(u, fake.detach()));
    opt_d.zero_grad();
    ld.backward();
    opt_d.step();

    const auto lg = loss_g(D->forward(u, fake));
    const auto parts = reconstruction_losses(abl.losses, x, fake, restrict ? gmask : std::nullopt);
    const auto total = composite_generator_loss(abl.losses, lg, parts);
    opt_g.zero_grad();
    total.backward();
    opt_g.step();

    StepRecord rec;
    rec.step = step;
    rec.loss_d = ld.item<double>();
    rec.loss_g = lg.item<double>();
    for (const auto* p : {&parts.l1, &parts.l2, &parts.smooth_l1})
      if (*p) rec.recon += (*p)->item<double>();
    rec.total_g = total.item<double>();
    if (!std::isfinite(rec.loss_d) || !std::isfinite(rec.total_g)) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "training diverged at step %d: loss_D=%g loss_G=%g total_G=%g", step, rec.loss_d,
                    rec.loss_g, rec.total_g);
      throw DivergenceError(buf);
    }
    res.trace.push_back(rec);
    if (on_step) on_step(rec);
    if (opts.val_every > 0 && step % opts.val_every == 0 && !val_set.empty())
      res.validation.emplace_back(step, evaluate_samples(G, val_set, abl, opts));
  }
  return res;
}

torch::Tensor predict(Generator& gen, const torch::Tensor& u, const torch::Tensor& mask, int mc_samples) {
  torch::NoGradGuard guard;
  const std::optional<torch::Tensor> m = gen->cfg.use_mask ? std::optional<torch::Tensor>(mask) : std::nullopt;
  auto out = gen->forward(u, m);
  for (int i = 1; i < mc_samples; ++i) out = out + gen->forward(u, m);
  return mc_samples > 1 ? out / static_cast<double>(mc_samples) : out;
}

Grid postprocess(const Grid& pred, OutputActivation act, float threshold, int kernel) {
  const double lo = act == OutputActivation::Sigmoid ? 0.0 : -1.0;
  const Grid intensity = metrics::to_intensity(pred, lo, 1.0);
  return metrics::from_intensity(metrics::selective_median_filter(intensity, threshold, kernel), lo, 1.0);
}

Metrics score(const std::vector<std::vector<Grid>>& preds, const std::vector<const TrainSample*>& samples,
              DatasetMode mode) {
  if (preds.size() != samples.size() || samples.empty()) throw ValidationError("prediction / sample count mismatch");
  // Style outputs live in [-1, 1]; score them on [0, 1].
  const bool style = mode == DatasetMode::StyleTransfer;
  auto unit = [&](float v) { return style ? 0.5f * (v + 1.0f) : v; };
  std::vector<float> pv, tv;
  Metrics m;
  double ssim_sum = 0;
  std::size_t ssim_n = 0;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& smp = *samples[s];
    if (preds[s].size() != smp.x.band_count()) throw ValidationError("prediction channel count mismatch");
    const Grid* support = style ? nullptr : &smp.mask;
    for (std::size_t c = 0; c < preds[s].size(); ++c) {
      Grid p = preds[s][c];
      Grid t = smp.x.grid(c);
      if (!p.same_shape(t)) throw ValidationError("prediction shape mismatch");
      for (auto& v : p.values) v = unit(v);
      for (auto& v : t.values) v = unit(v);
      for (std::size_t i = 0; i < t.size(); ++i)
        if (!support || support->values[i] == 1.0f) {
          pv.push_back(p.values[i]);
          tv.push_back(t.values[i]);
        }
      if (support && std::find(support->values.begin(), support->values.end(), 1.0f) == support->values.end())
        continue;
      ssim_sum += metrics::ssim(p, t, {}, support, &m.warnings);
      ++ssim_n;
    }
  }
  if (pv.empty()) throw ValidationError("evaluation support is empty");
  const int count = static_cast<int>(pv.size());
  const Grid pg(1, count, std::move(pv));
  const Grid tg(1, count, std::move(tv));
  m.mae = metrics::mae(pg, tg);
  m.rmse = metrics::rmse(pg, tg);
  m.r2 = metrics::r_squared(pg, tg, nullptr, &m.warnings);
  m.ssim = ssim_n ? ssim_sum / static_cast<double>(ssim_n) : 0.0;
  m.pixels = tg.size();
  return m;
}

Metrics evaluate_samples(Generator& gen, const std::vector<const TrainSample*>& samples, const AblationConfig& abl_in,
                         const TrainOptions& opts) {
  const AblationConfig abl = abl_in.normalized();
  std::vector<std::vector<Grid>> preds;
  constexpr std::size_t kChunk = 8;
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    const std::vector<const TrainSample*> part(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                               samples.begin() +
                                                   static_cast<std::ptrdiff_t>(std::min(samples.size(), start + kChunk)));
    const Batch b = make_batch(part);
    const auto out = predict(gen, b.u, b.mask, opts.mc_samples).contiguous();
    const int H = static_cast<int>(out.size(2)), W = static_cast<int>(out.size(3));
    for (int64_t i = 0; i < out.size(0); ++i) {
      std::vector<Grid> chans;
      for (int64_t c = 0; c < out.size(1); ++c) {
        const float* p = out[i][c].data_ptr<float>();
        Grid g(H, W, std::vector<float>(p, p + static_cast<std::ptrdiff_t>(H) * W));
        if (abl.use_median_filter) g = postprocess(g, gen->cfg.activation, opts.median_threshold, opts.median_kernel);
        chans.push_back(std::move(g));
      }
      preds.push_back(std::move(chans));
    }
  }
  return score(preds, samples, abl.mode);
}

std::vector<int> fold_assignment(std::size_t n_tiles, int k) {
  if (k < 2) throw ValidationError("cross-validation needs k >= 2");
  if (n_tiles < static_cast<std::size_t>(k))
    throw ValidationError("fewer tiles (" + std::to_string(n_tiles) + ") than folds (" + std::to_string(k) + ")");
  return synth::assign_folds(n_tiles, k);
}

std::string fold_hash(const std::vector<int>& folds) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (int f : folds) {
    for (int b = 0; b < 4; ++b) {
      h ^= static_cast<std::uint64_t>((static_cast<unsigned>(f) >> (8 * b)) & 0xffu);
      h *= 1099511628211ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

FoldSplit split_fold(const std::vector<TrainSample>& samples, const std::vector<int>& folds, int fold) {
  if (folds.size() != samples.size()) throw ValidationError("fold assignment does not cover the samples");
  FoldSplit s;
  std::vector<const TrainSample*> rest;
  for (std::size_t i = 0; i < samples.size(); ++i) (folds[i] == fold ? s.test : rest).push_back(&samples[i]);
  const auto n_val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(rest.size())));
  s.train.assign(rest.begin(), rest.end() - static_cast<std::ptrdiff_t>(n_val));
  s.val.assign(rest.end() - static_cast<std::ptrdiff_t>(n_val), rest.end());
  if (s.test.empty() || s.train.empty()) throw ValidationError("fold " + std::to_string(fold) + " is degenerate");
  return s;
}

namespace {

struct TrainedFold {
  int fold;
  FoldSplit split;
  Generator gen{nullptr};
};

std::vector<TrainedFold> train_folds(const std::vector<TrainSample>& samples, const std::vector<int>& folds,
                                     const CvOptions& cv, const GeneratorConfig& gcfg,
                                     const DiscriminatorConfig& dcfg, const AblationConfig& abl,
                                     const TrainOptions& opts) {
  const int run = cv.max_folds > 0 ? std::min(cv.max_folds, cv.k) : cv.k;
  std::vector<TrainedFold> out;
  for (int f = 0; f < run; ++f) {
    TrainedFold tf{f, split_fold(samples, folds, f)};
    TrainOptions o = opts;
    o.seed = Rng::mix(opts.seed, static_cast<std::uint64_t>(f));
    tf.gen = train(tf.split.train, tf.split.val, gcfg, dcfg, abl, o).generator;
    out.push_back(std::move(tf));
  }
  return out;
}

CvResult evaluate_folds(std::vector<TrainedFold>& trained, const std::vector<int>& folds, const AblationConfig& abl,
                        const TrainOptions& opts) {
  CvResult r;
  r.fold_hash = fold_hash(folds);
  for (auto& tf : trained) {
    torch::manual_seed(Rng::mix(opts.seed, 0xE7A1u + static_cast<std::uint64_t>(tf.fold)));
    FoldResult fr;
    fr.fold = tf.fold;
    fr.n_train = tf.split.train.size();
    fr.n_val = tf.split.val.size();
    fr.n_test = tf.split.test.size();
    fr.test = evaluate_samples(tf.gen, tf.split.test, abl, opts);
    r.folds.push_back(std::move(fr));
  }
  const double n = static_cast<double>(r.folds.size());
  auto moments = [&](auto get, double& mean, double& sd) {
    double s = 0, ss = 0;
    for (const auto& f : r.folds) s += get(f.test);
    mean = s / n;
    for (const auto& f : r.folds) ss += (get(f.test) - mean) * (get(f.test) - mean);
    sd = std::sqrt(ss / n);
  };
  moments([](const Metrics& m) { return m.mae; }, r.mean.mae, r.stddev.mae);
  moments([](const Metrics& m) { return m.rmse; }, r.mean.rmse, r.stddev.rmse);
  moments([](const Metrics& m) { return m.ssim; }, r.mean.ssim, r.stddev.ssim);
  std::vector<double> r2s;
  for (const auto& f : r.folds) {
    r.mean.pixels += f.test.pixels;
    if (f.test.r2) r2s.push_back(*f.test.r2);
  }
  if (!r2s.empty()) {
    const double m = std::accumulate(r2s.begin(), r2s.end(), 0.0) / static_cast<double>(r2s.size());
    double ss = 0;
    for (double v : r2s) ss += (v - m) * (v - m);
    r.mean.r2 = m;
    r.stddev.r2 = std::sqrt(ss / static_cast<double>(r2s.size()));
  }
  return r;
}

}  // namespace

json to_json(const CvResult& r) {
  json folds = json::array();
  for (const auto& f : r.folds)
    folds.push_back(
        {{"fold", f.fold}, {"n_train", f.n_train}, {"n_val", f.n_val}, {"n_test", f.n_test}, {"test", to_json(f.test)}});
  return {{"folds", folds}, {"mean", to_json(r.mean)}, {"std", to_json(r.stddev)}, {"fold_hash", r.fold_hash}};
}

CvResult cross_validate(const std::vector<TrainSample>& samples, const CvOptions& cv, const GeneratorConfig& gcfg,
                        const DiscriminatorConfig& dcfg, const AblationConfig& abl, const TrainOptions& opts) {
  const auto folds = fold_assignment(samples.size(), cv.k);
  auto trained = train_folds(samples, folds, cv, gcfg, dcfg, abl, opts);
  return evaluate_folds(trained, folds, abl, opts);
}

std::vector<std::pair<std::string, AblationConfig>> default_ablation_grid() {
  std::vector<std::pair<std::string, AblationConfig>> grid;
  for (bool mask : {false, true})
    for (bool filter : {false, true}) {
      AblationConfig a;
      a.use_mask = mask;
      a.use_median_filter = filter;
      grid.emplace_back("mask_filter", a);
    }
  const bool combos[7][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1}};
  for (const auto& c : combos) {
    AblationConfig a;
    a.losses.use_l1 = c[0];
    a.losses.use_l2 = c[1];
    a.losses.use_smooth_l1 = c[2];
    grid.emplace_back("loss", a);
  }
  return grid;
}

AblationTable run_ablation(const std::vector<TrainSample>& samples,
                           const std::vector<std::pair<std::string, AblationConfig>>& grid, const CvOptions& cv,
                           const GeneratorConfig& gcfg, const DiscriminatorConfig& dcfg, const TrainOptions& opts) {
  if (grid.empty()) throw ValidationError("ablation grid is empty");
  const auto folds = fold_assignment(samples.size(), cv.k);
  AblationTable table;
  table.fold_hash = fold_hash(folds);
  // The median filter is post-processing only, so cells differing just in
  // the filter share one set of trained generators.
  std::map<std::string, std::vector<TrainedFold>> cache;
  for (const auto& [group, cfg_in] : grid) {
    const AblationConfig cfg = cfg_in.normalized();
    cfg.losses.validate();
    AblationConfig key_cfg = cfg;
    key_cfg.use_median_filter = false;
    const auto key = to_json(key_cfg).dump();
    auto it = cache.find(key);
    if (it == cache.end()) {
      it = cache.emplace(key, train_folds(samples, folds, cv, gcfg, dcfg, cfg, opts)).first;
      ++table.trainings;
    }
    table.rows.push_back({group, cfg, evaluate_folds(it->second, folds, cfg, opts)});
  }

  auto best_in = [&](const std::string& group) -> std::optional<std::size_t> {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < table.rows.size(); ++i)
      if (table.rows[i].group == group && (!best || table.rows[i].result.mean.mae < table.rows[*best].result.mean.mae))
        best = i;
    return best;
  };
  table.best_mask_filter_row = best_in("mask_filter");
  table.best_loss_row = best_in("loss");
  if (table.best_mask_filter_row) {
    const auto& c = table.rows[*table.best_mask_filter_row].config;
    table.mask_filter_winner_matches_reference = c.use_mask && c.use_median_filter;
  }
  if (table.best_loss_row) {
    const auto& l = table.rows[*table.best_loss_row].config.losses;
    table.loss_winner_matches_reference = !l.use_l1 && l.use_l2 && l.use_smooth_l1;
  }
  return table;
}

json AblationTable::to_json() const {
  json rows_j = json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    json row = nn::to_json(r.config);
    row["row"] = i;
    row["group"] = r.group;
    row["label"] = r.config.label();
    row["mae"] = r.result.mean.mae;
    row["rmse"] = r.result.mean.rmse;
    row["r2"] = r.result.mean.r2 ? json(*r.result.mean.r2) : json(nullptr);
    row["ssim"] = r.result.mean.ssim;
    row["cv"] = nn::to_json(r.result);
    rows_j.push_back(row);
  }
  auto opt = [](const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); };
  return {{"rows", rows_j},
          {"fold_hash", fold_hash},
          {"distinct_trainings", trainings},
          {"best_mask_filter_row", opt(best_mask_filter_row)},
          {"best_loss_row", opt(best_loss_row)},
          {"reference_best_mask_filter", "mask=on filter=on"},
          {"reference_best_loss", "L2+SmoothL1"},
          {"mask_filter_winner_matches_reference", mask_filter_winner_matches_reference},
          {"loss_winner_matches_reference", loss_winner_matches_reference}};
}

}  // namespace mswin::nn
