#include <torch/torch.h>
#include <torch/version.h>

#include <map>
#include <optional>

#include "cli_support.hpp"
#include "mswin/errors.hpp"
#include "mswin/metrics.hpp"
#include "mswin/nn/checkpoint.hpp"
#include "mswin/nn/training.hpp"

namespace mswin::cli {

namespace {

// Options shared by train and ablate. Unset optionals leave the value from
// the config sections (or the library default) alone.
struct ModelArgs {
  std::string data;
  std::optional<int> steps, batch, mc_samples, log_every;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  std::optional<std::string> losses, mask, filter;
  json sections = json::object();  // generator / discriminator / ablation / training
};

void add_model_options(CLI::App* sc, ModelArgs& a) {
  sc->add_option("--data", a.data, "dataset directory written by synth")->required()->check(CLI::ExistingDirectory);
  sc->add_option("--steps", a.steps);
  sc->add_option("--batch", a.batch);
  sc->add_option("--seed", a.seed);
  sc->add_option("--lr", a.lr);
  sc->add_option("--mc-samples", a.mc_samples, "stochastic passes averaged at evaluation");
  sc->add_option("--log-every", a.log_every);
  sc->add_option("--losses", a.losses, "e.g. l2+smooth_l1, l1, none");
  sc->add_option("--mask", a.mask)->check(CLI::IsMember({"on", "off"}));
  sc->add_option("--filter", a.filter, "selective median filter")->check(CLI::IsMember({"on", "off"}));
}

nn::LossSelection parse_losses(const std::string& text, nn::LossSelection base) {
  base.use_l1 = base.use_l2 = base.use_smooth_l1 = false;
  base.pure_cgan = text == "none";
  if (base.pure_cgan) return base;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find('+', start), text.size());
    const auto tok = text.substr(start, end - start);
    if (tok == "l1")
      base.use_l1 = true;
    else if (tok == "l2")
      base.use_l2 = true;
    else if (tok == "smooth_l1" || tok == "smoothl1")
      base.use_smooth_l1 = true;
    else
      throw ValidationError("unknown loss term '" + tok + "'");
    start = end + 1;
  }
  base.validate();
  return base;
}

struct Resolved {
  nn::GeneratorConfig gen;
  nn::DiscriminatorConfig disc;
  nn::AblationConfig abl;
  nn::TrainOptions opts;
};

Resolved resolve(const ModelArgs& a, const synth::Dataset& ds) {
  const auto& s = a.sections;
  Resolved r;
  if (s.contains("generator")) r.gen = nn::generator_config_from_json(s["generator"]);
  if (s.contains("discriminator")) r.disc = nn::discriminator_config_from_json(s["discriminator"]);
  if (s.contains("ablation")) r.abl = nn::ablation_config_from_json(s["ablation"]);
  if (s.contains("training")) r.opts = nn::train_options_from_json(s["training"]);
  r.abl.mode = ds.mode;
  if (a.losses) r.abl.losses = parse_losses(*a.losses, r.abl.losses);
  if (a.mask) r.abl.use_mask = *a.mask == "on";
  if (a.filter) r.abl.use_median_filter = *a.filter == "on";
  r.abl = r.abl.normalized();
  json o = nn::to_json(r.opts);
  if (a.steps) o["steps"] = *a.steps;
  if (a.batch) o["batch_size"] = *a.batch;
  if (a.seed) o["seed"] = *a.seed;
  if (a.lr) o["optimizer"]["lr"] = *a.lr;
  if (a.mc_samples) o["mc_samples"] = *a.mc_samples;
  if (a.log_every) o["log_every"] = *a.log_every;
  r.opts = nn::train_options_from_json(o);
  return r;
}

json resolved_json(const Resolved& r) {
  return {{"generator", nn::to_json(r.gen)},
          {"discriminator", nn::to_json(r.disc)},
          {"ablation", nn::to_json(r.abl)},
          {"training", nn::to_json(r.opts)}};
}

struct TrainArgs : ModelArgs {
  std::string out;
  int fold = -1;
};

void run_train(TrainArgs& a, RunRecord& rec) {
  if (rec.config_file.is_object()) a.sections = rec.config_file;
  const auto ds = synth::load_dataset(a.data);
  Resolved r = resolve(a, ds);
  std::vector<const synth::TrainSample*> train, test;
  for (const auto& s : ds.samples) (s.fold_id == a.fold ? test : train).push_back(&s);
  if (train.empty()) throw ValidationError("no training samples left after holding out fold " + std::to_string(a.fold));
  log_info(strf("training on %zu tiles (%zu held out), %d steps, %s", train.size(), test.size(), r.opts.steps,
                r.abl.label().c_str()));

  json trace = json::array();
  const int every = r.opts.log_every > 0 ? r.opts.log_every : std::max(1, r.opts.steps / 10);
  auto res = nn::train(train, {}, r.gen, r.disc, r.abl, r.opts, [&](const nn::StepRecord& s) {
    trace.push_back({{"step", s.step}, {"loss_d", s.loss_d}, {"loss_g", s.loss_g}, {"recon", s.recon},
                     {"total_g", s.total_g}});
    if (s.step % every == 0)
      log_info(strf("step %5d  loss_D %.4f  loss_G %.4f  recon %.5f", s.step, s.loss_d, s.loss_g, s.recon));
  });
  r.gen = res.generator_cfg;
  r.disc = res.discriminator_cfg;

  const fs::path out = a.out;
  fs::create_directories(out);
  json meta = resolved_json(r);
  meta["dataset"] = a.data;
  meta["held_out_fold"] = a.fold;
  meta["input_bands"] = ds.input_bands;
  meta["target_bands"] = ds.target_bands;
  meta["target_normalization"] = json::parse(normalization_to_json(ds.target_norm));
  nn::save_checkpoint(out / "generator.ckpt", res.generator, meta);
  write_json(out / "trace.json", trace);

  torch::manual_seed(Rng::mix(r.opts.seed, 0xE7A1u));
  json metrics;
  metrics["train"] = nn::to_json(nn::evaluate_samples(res.generator, train, r.abl, r.opts));
  if (!test.empty()) metrics["test"] = nn::to_json(nn::evaluate_samples(res.generator, test, r.abl, r.opts));
  write_json(out / "metrics.json", metrics);
  log_info(strf("train MAE %.4f", metrics["train"]["mae"].get<double>()) +
           (test.empty() ? "" : strf(", test MAE %.4f", metrics["test"]["mae"].get<double>())));

  rec.run_dir = out;
  rec.inputs["data"] = a.data;
  rec.seeds["train"] = r.opts.seed;
  rec.outputs = {{"checkpoint", (out / "generator.ckpt").string()}, {"metrics", metrics}};
  rec.extra["resolved"] = resolved_json(r);
}

struct InferArgs {
  std::string checkpoint, data, out;
  int mc_samples = 1;
  std::uint64_t seed = 0;
  std::string filter = "on";
};

std::string scene_dir(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%03d", i);
  return buf;
}

void run_infer(const InferArgs& a, RunRecord& rec) {
  auto ck = nn::load_checkpoint(a.checkpoint);
  const auto ds = synth::load_dataset(a.data);
  torch::manual_seed(a.seed);
  const auto& cfg = ck.generator->cfg;
  const auto& mode = ds.mode;
  std::map<int, BandStack> mosaics;
  std::map<int, std::pair<int, int>> extent;
  for (const auto& s : ds.samples) {
    auto& e = extent[s.scene];
    e.first = std::max(e.first, s.row + s.u.height());
    e.second = std::max(e.second, s.col + s.u.width());
  }
  std::map<int, std::vector<Grid>> planes;
  for (const auto& [scene, e] : extent) planes[scene].assign(ds.target_bands.size(), Grid(e.first, e.second, 0.0f));

  for (const auto& s : ds.samples) {
    const auto b = nn::make_batch({&s});
    const auto y = nn::predict(ck.generator, b.u, b.mask, a.mc_samples).contiguous();
    for (std::size_t c = 0; c < ds.target_bands.size(); ++c) {
      const float* p = y[0][static_cast<int64_t>(c)].data_ptr<float>();
      Grid g(s.u.height(), s.u.width(), std::vector<float>(p, p + s.u.height() * s.u.width()));
      if (a.filter == "on") g = nn::postprocess(g, cfg.activation, 240.0f, 3);
      auto& dst = planes[s.scene][c];
      for (int r = 0; r < g.height; ++r)
        for (int col = 0; col < g.width; ++col) dst(s.row + r, s.col + col) = g(r, col);
    }
  }
  for (auto& [scene, chans] : planes) {
    BandStack st(chans.front().height, chans.front().width);
    for (std::size_t c = 0; c < chans.size(); ++c) st.add_band(ds.target_bands[c], chans[c]);
    BandStack phys = denormalize(st, ds.target_norm);
    const fs::path dir = fs::path(a.out) / scene_dir(scene);
    save_stack(phys, dir / "pred");
    log_info(strf("%s: %dx%d %s", scene_dir(scene).c_str(), st.height(), st.width(),
                  mode == synth::DatasetMode::Estimation ? "carbon (Mg/ha)" : "rgb"));
  }
  rec.run_dir = a.out;
  rec.inputs = {{"checkpoint", a.checkpoint}, {"data", a.data}};
  rec.seeds["dropout"] = a.seed;
  rec.outputs["scenes"] = planes.size();
}

struct AblateArgs : ModelArgs {
  std::string grid, out;
  int k = 5;
  int max_folds = 0;
};

void run_ablate(AblateArgs& a, RunRecord& rec) {
  if (rec.config_file.is_object()) a.sections = rec.config_file;
  const auto ds = synth::load_dataset(a.data);
  const Resolved r = resolve(a, ds);
  auto grid = nn::default_ablation_grid();
  if (!a.grid.empty()) {
    grid.clear();
    for (const auto& row : read_json(a.grid)) {
      json cfg = row.at("config");
      grid.emplace_back(row.value("group", std::string("custom")), nn::ablation_config_from_json(cfg));
    }
  }
  for (auto& [group, cfg] : grid) cfg.mode = ds.mode;
  nn::CvOptions cv;
  cv.k = a.k;
  cv.max_folds = a.max_folds;
  log_info(strf("ablation: %zu rows, k=%d (%d fold(s) run), %d steps each", grid.size(), cv.k,
                cv.max_folds > 0 ? cv.max_folds : cv.k, r.opts.steps));
  const auto table = nn::run_ablation(ds.samples, grid, cv, r.gen, r.disc, r.opts);
  const json j = table.to_json();
  write_json(a.out, j);
  for (const auto& row : j["rows"])
    log_info(strf("%2d %-12s %-40s MAE %.4f", row["row"].get<int>(), row["group"].get<std::string>().c_str(),
                  row["label"].get<std::string>().c_str(), row["mae"].get<double>()));
  rec.run_dir = fs::path(a.out).parent_path();
  if (rec.run_dir.empty()) rec.run_dir = ".";
  rec.inputs["data"] = a.data;
  rec.seeds["train"] = r.opts.seed;
  rec.outputs = {{"table", a.out}, {"fold_hash", table.fold_hash}, {"distinct_trainings", table.trainings}};
  rec.extra["resolved"] = resolved_json(r);
}

}  // namespace

void torch_setup() { torch::set_num_threads(1); }
std::string torch_version() { return TORCH_VERSION; }

void add_model_commands(CLI::App& app, std::vector<Command>& out) {
  {
    auto a = std::make_shared<TrainArgs>();
    auto* sc = app.add_subcommand("train", "Train the generator/discriminator pair");
    add_model_options(sc, *a);
    sc->add_option("--fold", a->fold, "fold held out for testing (-1: none)");
    sc->add_option("--out", a->out, "run directory (generator.ckpt, trace.json, metrics.json)")->required();
    out.push_back({sc, [a](RunRecord& r) { run_train(*a, r); }});
  }
  {
    auto a = std::make_shared<InferArgs>();
    auto* sc = app.add_subcommand("infer", "Predict every scene of a dataset with a checkpoint");
    sc->add_option("--checkpoint", a->checkpoint)->required()->check(CLI::ExistingFile);
    sc->add_option("--data", a->data)->required()->check(CLI::ExistingDirectory);
    sc->add_option("--out", a->out)->required();
    sc->add_option("--mc-samples", a->mc_samples);
    sc->add_option("--seed", a->seed, "dropout seed");
    sc->add_option("--filter", a->filter)->check(CLI::IsMember({"on", "off"}));
    out.push_back({sc, [a](RunRecord& r) { run_infer(*a, r); }});
  }
  {
    auto a = std::make_shared<AblateArgs>();
    auto* sc = app.add_subcommand("ablate", "Mask x filter and loss ablation under cross-validation");
    add_model_options(sc, *a);
    sc->add_option("--grid", a->grid, "JSON list of {group, config} rows (default: full grid)")
        ->check(CLI::ExistingFile);
    sc->add_option("--k", a->k, "folds");
    sc->add_option("--max-folds", a->max_folds, "run only the first N folds (0: all)");
    sc->add_option("--out", a->out, "table JSON")->required();
    out.push_back({sc, [a](RunRecord& r) { run_ablate(*a, r); }});
  }
}

}  // namespace mswin::cli
