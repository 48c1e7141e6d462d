#include <png.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <memory>

#include "cli_support.hpp"
#include "mswin/errors.hpp"
#include "mswin/metrics.hpp"

namespace mswin::cli {

namespace {

using Rgb = std::array<std::uint8_t, 3>;

struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
  void set(int r, int c, Rgb v) { std::copy(v.begin(), v.end(), rgb.begin() + (std::size_t(r) * width + c) * 3); }
};

void write_png(const fs::path& file, const Image& img) {
  if (!file.parent_path().empty()) fs::create_directories(file.parent_path());
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(file.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError("cannot open " + file.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + file.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < img.height; ++r)
    png_write_row(png, const_cast<png_bytep>(img.rgb.data() + std::size_t(r) * img.width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Piecewise-linear dark blue -> green -> yellow ramp.
Rgb ramp(double t) {
  static constexpr std::array<std::array<double, 3>, 4> stops{
      {{0.07, 0.05, 0.30}, {0.10, 0.45, 0.55}, {0.35, 0.75, 0.30}, {0.99, 0.90, 0.15}}};
  t = std::clamp(t, 0.0, 1.0) * 3.0;
  const int i = std::min(2, static_cast<int>(t));
  const double f = t - i;
  Rgb out;
  for (int c = 0; c < 3; ++c)
    out[c] = static_cast<std::uint8_t>(std::lround(255.0 * (stops[i][c] * (1 - f) + stops[i + 1][c] * f)));
  return out;
}

// Side-by-side panels sharing one colour scale; nodata / off-mask is grey.
Image panels(const std::vector<Grid>& grids, const std::vector<std::pair<double, double>>& scales, const Grid* mask) {
  constexpr int gap = 4;
  Image img;
  img.height = grids.front().height;
  img.width = static_cast<int>(grids.size()) * (grids.front().width + gap) - gap;
  img.rgb.assign(std::size_t(img.height) * img.width * 3, 255);
  for (std::size_t k = 0; k < grids.size(); ++k) {
    const auto& g = grids[k];
    const auto [lo, hi] = scales[k];
    const int x0 = static_cast<int>(k) * (g.width + gap);
    for (int r = 0; r < g.height; ++r)
      for (int c = 0; c < g.width; ++c) {
        const float v = g(r, c);
        const bool off = v == kNoData || !std::isfinite(v) || (mask && (*mask)(r, c) != 1.0f);
        img.set(r, x0 + c, off ? Rgb{128, 128, 128} : ramp(hi > lo ? (v - lo) / (hi - lo) : 0.5));
      }
  }
  return img;
}

Image change_image(const Grid& classes) {
  Image img{classes.height, classes.width, {}};
  img.rgb.assign(std::size_t(img.height) * img.width * 3, 0);
  for (int r = 0; r < classes.height; ++r)
    for (int c = 0; c < classes.width; ++c) {
      const float v = classes(r, c);
      img.set(r, c, v == 1.0f ? Rgb{40, 170, 60} : v == -1.0f ? Rgb{200, 50, 40} : v == 0.0f ? Rgb{235, 225, 170}
                                                                                              : Rgb{128, 128, 128});
    }
  return img;
}

std::pair<double, double> value_range(const std::vector<const Grid*>& gs, const Grid* mask) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto* g : gs)
    for (std::size_t i = 0; i < g->size(); ++i) {
      const float v = g->values[i];
      if (v == kNoData || !std::isfinite(v) || (mask && mask->values[i] != 1.0f)) continue;
      lo = std::min<double>(lo, v);
      hi = std::max<double>(hi, v);
    }
  if (!(lo <= hi)) return {0.0, 1.0};
  return {lo, hi};
}

struct EvalArgs {
  std::string pred, truth, mask, report, band;
  double range = 500.0;
};

void run_evaluate(const EvalArgs& a, RunRecord& rec) {
  const BandStack pred = load_stack(a.pred);
  const BandStack truth = load_stack(a.truth);
  std::optional<Grid> mask;
  if (!a.mask.empty()) mask = load_grid(a.mask);
  std::vector<std::string> names;
  if (!a.band.empty())
    names = {a.band};
  else
    for (const auto& n : pred.names())
      if (truth.find(n)) names.push_back(n);
  if (names.empty() && pred.band_count() == 1 && truth.band_count() == 1) names = {""};
  if (names.empty()) throw ValidationError("prediction and truth share no band names");

  metrics::SsimParams sp;
  sp.dynamic_range = a.range;
  json per_band = json::object();
  for (const auto& n : names) {
    const Grid& p = n.empty() ? pred.grid(0) : pred.grid(n);
    const Grid& t = n.empty() ? truth.grid(0) : truth.grid(n);
    if (!p.same_shape(t)) throw ValidationError("shape mismatch for band '" + n + "'");
    const auto rep = metrics::evaluate(p, t, mask ? &*mask : nullptr, sp);
    per_band[n.empty() ? pred.band(0).name : n] = json::parse(rep.to_json());
    for (const auto& w : rep.warnings) spdlog::warn("{}: {}", n, w);
    spdlog::info("{:<10} MAE {:.4f}  RMSE {:.4f}  R2 {}  SSIM {:.4f}  ({} px)", n.empty() ? pred.band(0).name : n,
                 rep.mae, rep.rmse, rep.r2 ? fmt::format("{:.4f}", *rep.r2) : "n/a", rep.ssim, rep.pixels);
  }
  json report = {{"bands", per_band}, {"ssim_dynamic_range", a.range}, {"masked", mask.has_value()}};
  if (per_band.size() == 1) report.update(per_band.begin().value());
  if (!a.report.empty()) {
    write_json(a.report, report);
    rec.run_dir = fs::path(a.report).parent_path();
    if (rec.run_dir.empty()) rec.run_dir = ".";
  }
  rec.inputs = {{"pred", a.pred}, {"truth", a.truth}, {"mask", a.mask}};
  rec.outputs = report;
}

struct ChangeArgs {
  std::string t0, t1, mask, report, classes;
  double epsilon = 5.0;
};

void run_changes(const ChangeArgs& a, RunRecord& rec) {
  const BandStack s0 = load_stack(a.t0);
  const Grid g0 = s0.grid(0);
  const Grid g1 = load_grid(a.t1);
  std::optional<Grid> mask;
  if (!a.mask.empty()) mask = load_grid(a.mask);
  const auto rep = metrics::change_stats(g0, g1, mask ? &*mask : nullptr, a.epsilon, s0.pixel_area);
  spdlog::info("increased {:.2f}%  decreased {:.2f}%  unchanged {:.2f}%  ({} px, eps {})", rep.increased_pct,
               rep.decreased_pct, rep.unchanged_pct, rep.pixels, rep.epsilon);
  if (s0.pixel_area)
    spdlog::info("area km2: +{:.4f}  -{:.4f}  ={:.4f}", rep.increased_area_km2, rep.decreased_area_km2,
                 rep.unchanged_area_km2);
  json report = json::parse(rep.to_json());
  if (!a.report.empty()) {
    write_json(a.report, report);
    rec.run_dir = fs::path(a.report).parent_path();
    if (rec.run_dir.empty()) rec.run_dir = ".";
  }
  if (!a.classes.empty()) {
    BandStack out = single_band("change", rep.classes, kNoData);
    out.geo = s0.geo;
    out.pixel_area = s0.pixel_area;
    save_stack(out, a.classes);
  }
  rec.inputs = {{"t0", a.t0}, {"t1", a.t1}, {"mask", a.mask}};
  rec.outputs = report;
}

struct PlotArgs {
  std::string pred, truth, mask, changes, out, band;
};

void run_plot(const PlotArgs& a, RunRecord& rec) {
  if (a.pred.empty() && a.changes.empty()) throw ValidationError("plot needs --pred and/or --changes");
  const fs::path out = a.out;
  fs::create_directories(out);
  std::optional<Grid> mask;
  if (!a.mask.empty()) mask = load_grid(a.mask);
  json written = json::array();
  if (!a.pred.empty()) {
    const Grid p = load_grid(a.pred, a.band);
    std::vector<Grid> grids{p};
    std::vector<const Grid*> shared{&p};
    if (!a.truth.empty()) {
      grids.push_back(load_grid(a.truth, a.band));
      if (!grids[1].same_shape(p)) throw ValidationError("prediction and truth differ in shape");
      shared.push_back(&grids[1]);
    }
    const auto scale = value_range(shared, mask ? &*mask : nullptr);
    std::vector<std::pair<double, double>> scales(grids.size(), scale);
    if (grids.size() == 2) {
      Grid diff(p.height, p.width, kNoData);
      for (std::size_t i = 0; i < p.size(); ++i)
        if (p.values[i] != kNoData && grids[1].values[i] != kNoData)
          diff.values[i] = std::abs(p.values[i] - grids[1].values[i]);
      grids.push_back(diff);
      scales.emplace_back(0.0, std::max(1e-9, (scale.second - scale.first) * 0.25));
    }
    write_png(out / "panels.png", panels(grids, scales, mask ? &*mask : nullptr));
    written.push_back((out / "panels.png").string());
  }
  if (!a.changes.empty()) {
    write_png(out / "changes.png", change_image(load_grid(a.changes)));
    written.push_back((out / "changes.png").string());
  }
  for (const auto& f : written) spdlog::info("wrote {}", f.get<std::string>());
  rec.run_dir = out;
  rec.inputs = {{"pred", a.pred}, {"truth", a.truth}, {"changes", a.changes}};
  rec.outputs["files"] = written;
}

}  // namespace

void add_eval_commands(CLI::App& app, std::vector<Command>& out) {
  {
    auto a = std::make_shared<EvalArgs>();
    auto* sc = app.add_subcommand("evaluate", "MAE / RMSE / R2 / SSIM of a prediction against truth");
    sc->add_option("--pred", a->pred)->required()->check(CLI::ExistingDirectory);
    sc->add_option("--truth", a->truth)->required()->check(CLI::ExistingDirectory);
    sc->add_option("--mask", a->mask, "score only mask == 1 pixels")->check(CLI::ExistingDirectory);
    sc->add_option("--band", a->band, "evaluate one band (default: all shared bands)");
    sc->add_option("--range", a->range, "SSIM dynamic range L in data units");
    sc->add_option("--report", a->report, "JSON report path");
    out.push_back({sc, [a](RunRecord& r) { run_evaluate(*a, r); }});
  }
  {
    auto a = std::make_shared<ChangeArgs>();
    auto* sc = app.add_subcommand("changes", "Increase / decrease / unchanged accounting between two carbon maps");
    sc->add_option("--t0", a->t0)->required()->check(CLI::ExistingDirectory);
    sc->add_option("--t1", a->t1)->required()->check(CLI::ExistingDirectory);
    sc->add_option("--mask", a->mask)->check(CLI::ExistingDirectory);
    sc->add_option("--epsilon", a->epsilon, "unchanged band half-width (Mg/ha)")->check(CLI::NonNegativeNumber);
    sc->add_option("--report", a->report, "JSON report path");
    sc->add_option("--classes", a->classes, "write the class map container here");
    out.push_back({sc, [a](RunRecord& r) { run_changes(*a, r); }});
  }
  {
    auto a = std::make_shared<PlotArgs>();
    auto* sc = app.add_subcommand("plot", "PNG panels: prediction | truth | abs error, and change maps");
    sc->add_option("--pred", a->pred)->check(CLI::ExistingDirectory);
    sc->add_option("--truth", a->truth)->check(CLI::ExistingDirectory);
    sc->add_option("--mask", a->mask)->check(CLI::ExistingDirectory);
    sc->add_option("--band", a->band);
    sc->add_option("--changes", a->changes, "class map written by 'changes --classes'")
        ->check(CLI::ExistingDirectory);
    sc->add_option("--out", a->out, "output directory")->required();
    out.push_back({sc, [a](RunRecord& r) { run_plot(*a, r); }});
  }
}

}  // namespace mswin::cli
