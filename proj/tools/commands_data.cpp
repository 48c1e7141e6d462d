#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include <cmath>

#include "cli_support.hpp"
#include "mswin/errors.hpp"
#include "mswin/features.hpp"
#include "mswin/screening.hpp"
#include "mswin/synthetic.hpp"
#include "mswin/vegetation_mask.hpp"

namespace mswin::cli {

namespace {

struct SynthArgs {
  int n = 4;
  int size = 64;
  int tile = 0;    // 0: size
  int stride = 0;  // 0: tile
  std::uint64_t seed = 0;
  std::string mode = "estimation";
  int folds = 5;
  int top_k = 3;
  int blocks = 24;
  double forest_fraction = 0.7;
  double noise = 0.002;
  double c_max = 500.0;
  double cloud_coverage = 0.2;
  double cloud_opacity = 0.8;
  std::string out;
};

void run_synth(const SynthArgs& a, RunRecord& rec) {
  synth::DatasetOptions o;
  o.n_scenes = a.n;
  o.scene.seed = a.seed;
  o.scene.height = o.scene.width = a.size;
  o.scene.n_blocks = a.blocks;
  o.scene.forest_fraction = a.forest_fraction;
  o.scene.noise_sd = a.noise;
  o.tile = a.tile > 0 ? a.tile : a.size;
  o.stride = a.stride > 0 ? a.stride : o.tile;
  o.folds = a.folds;
  o.mode = synth::dataset_mode_from_string(a.mode);
  o.top_k = a.top_k;
  o.c_max = a.c_max;
  o.cloud_coverage = a.cloud_coverage;
  o.cloud_opacity = a.cloud_opacity;
  spdlog::info("generating {} scene(s) of {}x{} ({})", a.n, a.size, a.size, a.mode);
  const auto ds = synth::build_dataset(o);
  synth::save_dataset(ds, a.out);
  spdlog::info("wrote {} samples to {}", ds.samples.size(), a.out);
  if (!ds.input_bands.empty()) spdlog::info("input bands: {}", fmt::join(ds.input_bands, ", "));
  rec.run_dir = a.out;
  rec.seeds["scene"] = a.seed;
  rec.outputs["dataset"] = a.out;
  rec.outputs["samples"] = ds.samples.size();
}

struct FeatureArgs {
  std::string stack, dem, out;
  int glcm_window = 7;
  int glcm_levels = 32;
  double pixel_size = 0;  // 0: from the stack's pixel area
};

void run_features(const FeatureArgs& a, RunRecord& rec) {
  const BandStack stack = load_stack(a.stack);
  const Grid dem = load_grid(a.dem);
  double cell = a.pixel_size;
  if (cell <= 0) cell = stack.pixel_area ? std::sqrt(*stack.pixel_area) : 1.0;
  features::GlcmSpec spec;
  spec.window = a.glcm_window;
  spec.levels = a.glcm_levels;
  std::vector<std::string> warnings;
  BandStack feats = features::assemble_feature_stack(features::spectral_from_stack(stack), dem, spec, cell, &warnings);
  feats.geo = stack.geo;
  feats.pixel_area = stack.pixel_area;
  for (const auto& w : warnings) spdlog::warn("{}", w);
  save_stack(feats, a.out);
  spdlog::info("wrote {} feature bands to {}", feats.band_count(), a.out);
  rec.run_dir = a.out;
  rec.inputs = {{"stack", a.stack}, {"dem", a.dem}};
  rec.outputs["bands"] = feats.band_count();
  rec.extra["warnings"] = warnings;
}

struct ScreenArgs {
  std::string stack, target, mask, report;
  int k = 3;
};

void run_screen(const ScreenArgs& a, RunRecord& rec) {
  const BandStack stack = load_stack(a.stack);
  const BandStack target = load_stack(a.target);
  std::optional<Grid> mask;
  if (!a.mask.empty()) mask = load_grid(a.mask);
  const auto rep =
      screening::rank_bands(stack, target.grid(0), mask ? &*mask : nullptr, a.k, target.nodata);
  write_json(a.report, json::parse(rep.to_json()));
  spdlog::info("selected: {}", fmt::join(rep.selected, ", "));
  rec.run_dir = fs::path(a.report).parent_path();
  rec.inputs = {{"stack", a.stack}, {"target", a.target}, {"mask", a.mask}};
  rec.outputs["report"] = a.report;
}

struct MaskArgs {
  std::string ndvi, out, band = "NDVI";
};

void run_mask(const MaskArgs& a, RunRecord& rec) {
  const BandStack s = load_stack(a.ndvi);
  const Grid& ndvi = s.find(a.band) ? s.grid(a.band) : s.grid(0);
  const auto m = mask::derive_mask(ndvi, s.nodata ? s.nodata : std::optional<float>(kNoData));
  BandStack out = single_band("mask", m.grid);
  out.geo = s.geo;
  out.pixel_area = s.pixel_area;
  save_stack(out, a.out);
  const json report = {{"threshold", m.threshold}, {"mean", m.mean}, {"stddev", m.stddev},
                       {"coverage", mask::coverage(m.grid)}};
  write_json(fs::path(a.out) / "mask_report.json", report);
  spdlog::info("threshold {:.4f} (mean {:.4f}, sd {:.4f}), coverage {:.1f}%", m.threshold, m.mean, m.stddev,
               100.0 * mask::coverage(m.grid));
  rec.run_dir = a.out;
  rec.inputs["ndvi"] = a.ndvi;
  rec.outputs = report;
}

}  // namespace

void add_data_commands(CLI::App& app, std::vector<Command>& out) {
  {
    auto a = std::make_shared<SynthArgs>();
    auto* sc = app.add_subcommand("synth", "Generate a synthetic paired dataset");
    sc->add_option("--n", a->n, "number of scenes")->check(CLI::PositiveNumber);
    sc->add_option("--size", a->size, "scene side in pixels")->check(CLI::PositiveNumber);
    sc->add_option("--tile", a->tile, "tile side (default: scene side)");
    sc->add_option("--stride", a->stride, "tile stride (default: tile side)");
    sc->add_option("--seed", a->seed);
    sc->add_option("--mode", a->mode)->check(CLI::IsMember({"estimation", "style_transfer"}));
    sc->add_option("--folds", a->folds);
    sc->add_option("--top-k", a->top_k, "screened bands kept as generator input");
    sc->add_option("--blocks", a->blocks, "carbon blocks per scene");
    sc->add_option("--forest-fraction", a->forest_fraction);
    sc->add_option("--noise", a->noise, "reflectance noise sd");
    sc->add_option("--c-max", a->c_max, "carbon (Mg/ha) mapped to 1.0");
    sc->add_option("--cloud-coverage", a->cloud_coverage);
    sc->add_option("--cloud-opacity", a->cloud_opacity);
    sc->add_option("--out", a->out, "output directory")->required();
    out.push_back({sc, [a](RunRecord& r) { run_synth(*a, r); }});
  }
  {
    auto a = std::make_shared<FeatureArgs>();
    auto* sc = app.add_subcommand("features", "Build the 50-band feature stack");
    sc->add_option("--stack", a->stack, "blue/green/red/nir container")->required()->check(CLI::ExistingDirectory);
    sc->add_option("--dem", a->dem, "elevation container")->required()->check(CLI::ExistingDirectory);
    sc->add_option("--out", a->out)->required();
    sc->add_option("--glcm-window", a->glcm_window);
    sc->add_option("--glcm-levels", a->glcm_levels);
    sc->add_option("--pixel-size", a->pixel_size, "metres (default: from the stack)");
    out.push_back({sc, [a](RunRecord& r) { run_features(*a, r); }});
  }
  {
    auto a = std::make_shared<ScreenArgs>();
    auto* sc = app.add_subcommand("screen", "Rank bands against a carbon map");
    sc->add_option("--stack", a->stack)->required()->check(CLI::ExistingDirectory);
    sc->add_option("--target", a->target)->required()->check(CLI::ExistingDirectory);
    sc->add_option("--mask", a->mask)->check(CLI::ExistingDirectory);
    sc->add_option("-k,--top-k", a->k);
    sc->add_option("--report", a->report)->required();
    out.push_back({sc, [a](RunRecord& r) { run_screen(*a, r); }});
  }
  {
    auto a = std::make_shared<MaskArgs>();
    auto* sc = app.add_subcommand("mask", "Forest mask from NDVI (mean - 2 sd)");
    sc->add_option("--ndvi", a->ndvi, "container holding an NDVI band")->required()->check(CLI::ExistingDirectory);
    sc->add_option("--band", a->band, "band name (falls back to the first band)");
    sc->add_option("--out", a->out)->required();
    out.push_back({sc, [a](RunRecord& r) { run_mask(*a, r); }});
  }
}

}  // namespace mswin::cli
