#include "mswin/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "mswin/errors.hpp"
#include "mswin/screening.hpp"

namespace mswin::synth {

namespace fs = std::filesystem;
using nlohmann::json;

void SceneSpec::validate() const {
  if (height < 8 || width < 8) throw ValidationError("scene must be at least 8x8");
  if (n_blocks < 1) throw ValidationError("scene needs at least one carbon block");
  if (!(forest_fraction >= 0.0 && forest_fraction <= 1.0)) throw ValidationError("forest_fraction must lie in [0, 1]");
  if (!(carbon_min >= 0.0) || !(carbon_max >= carbon_min)) throw ValidationError("carbon range must satisfy 0 <= min <= max");
  if (!(pixel_size > 0.0)) throw ValidationError("pixel size must be positive");
  if (!(noise_sd >= 0.0)) throw ValidationError("noise_sd must be >= 0");
}

Grid smooth_field(int height, int width, double spacing, int octaves, Rng& rng) {
  Grid out(height, width, 0.0f);
  std::vector<double> acc(out.size(), 0.0);
  double amp = 1.0;
  double amp_total = 0.0;
  for (int o = 0; o < octaves; ++o) {
    const double sp = std::max(1.0, spacing / std::pow(2.0, o));
    const int gh = static_cast<int>(std::ceil(height / sp)) + 2;
    const int gw = static_cast<int>(std::ceil(width / sp)) + 2;
    std::vector<double> lattice(static_cast<std::size_t>(gh) * gw);
    for (auto& v : lattice) v = rng.uniform();
    for (int r = 0; r < height; ++r) {
      const double fy = r / sp;
      const int y0 = static_cast<int>(fy);
      double ty = fy - y0;
      ty = ty * ty * (3.0 - 2.0 * ty);
      for (int c = 0; c < width; ++c) {
        const double fx = c / sp;
        const int x0 = static_cast<int>(fx);
        double tx = fx - x0;
        tx = tx * tx * (3.0 - 2.0 * tx);
        auto at = [&](int y, int x) { return lattice[static_cast<std::size_t>(y) * gw + x]; };
        const double top = at(y0, x0) * (1 - tx) + at(y0, x0 + 1) * tx;
        const double bot = at(y0 + 1, x0) * (1 - tx) + at(y0 + 1, x0 + 1) * tx;
        acc[static_cast<std::size_t>(r) * width + c] += amp * (top * (1 - ty) + bot * ty);
      }
    }
    amp_total += amp;
    amp *= 0.5;
  }
  for (std::size_t i = 0; i < acc.size(); ++i) out.values[i] = static_cast<float>(acc[i] / amp_total);
  return out;
}

Grid box_blur(const Grid& g, int radius) {
  if (radius <= 0) return g;
  Grid out(g.height, g.width);
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      double s = 0;
      int n = 0;
      for (int u = -radius; u <= radius; ++u) {
        const int rr = std::clamp(r + u, 0, g.height - 1);
        for (int v = -radius; v <= radius; ++v) {
          s += g(rr, std::clamp(c + v, 0, g.width - 1));
          ++n;
        }
      }
      out(r, c) = static_cast<float>(s / n);
    }
  }
  return out;
}

namespace {

// Indices of the `count` largest values (ties by lower index).
std::vector<std::size_t> top_indices(const Grid& field, std::size_t count) {
  std::vector<std::size_t> idx(field.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return field.values[a] > field.values[b]; });
  idx.resize(std::min(count, idx.size()));
  return idx;
}

constexpr const char* kSpectralNames[4] = {"blue", "green", "red", "nir"};

BandStack apply_style(const std::array<Grid, 4>& bands, const SensorStyle& style, const BandStack& like) {
  BandStack out(like.height(), like.width());
  out.pixel_area = like.pixel_area;
  out.geo = like.geo;
  for (int k = 0; k < 4; ++k) {
    Grid g = bands[static_cast<std::size_t>(k)];
    for (float& v : g.values) v = static_cast<float>(style.gain[static_cast<std::size_t>(k)] * v + style.bias[static_cast<std::size_t>(k)]);
    out.add_band(kSpectralNames[k], box_blur(g, style.blur_radius));
  }
  return out;
}

}  // namespace

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  const int h = spec.height;
  const int w = spec.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  Rng rng(spec.seed);

  Grid dem = smooth_field(h, w, std::max(h, w) / 2.0, 3, rng);
  for (float& v : dem.values) v = 1200.0f + 1200.0f * v;

  const Grid forest_field = smooth_field(h, w, std::max(h, w) / 3.0, 2, rng);
  const auto forest_count = static_cast<std::size_t>(std::llround(spec.forest_fraction * static_cast<double>(n)));
  const auto forest_idx = top_indices(forest_field, forest_count);
  Grid forest(h, w, 0.0f);
  for (auto i : forest_idx) forest.values[i] = 1.0f;

  // Voronoi blocks with one carbon density each.
  std::vector<std::pair<double, double>> seeds(static_cast<std::size_t>(spec.n_blocks));
  std::vector<double> block_carbon(seeds.size());
  for (std::size_t b = 0; b < seeds.size(); ++b) {
    seeds[b] = {rng.uniform(0, h), rng.uniform(0, w)};
    block_carbon[b] = rng.uniform(spec.carbon_min, spec.carbon_max);
  }
  Grid carbon(h, w, 0.0f);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (forest(r, c) == 0.0f) continue;
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t b = 0; b < seeds.size(); ++b) {
        const double dy = seeds[b].first - r;
        const double dx = seeds[b].second - c;
        const double d = dy * dy + dx * dx;
        if (d < best_d) {
          best_d = d;
          best = b;
        }
      }
      carbon(r, c) = static_cast<float>(block_carbon[best]);
    }
  }

  const BandStack topo = features::compute_topographic(dem, spec.pixel_size);
  const Grid& shade = topo.grid("Shaded_Relief");

  // Reflectance model: bare ground vs canopy whose NIR rises and visible
  // bands fall with carbon density, modulated by terrain illumination.
  std::array<Grid, 4> refl;
  for (auto& g : refl) g = Grid(h, w);
  const double span = spec.carbon_max > 0 ? spec.carbon_max : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double illum = std::clamp(1.0 + 0.25 * (shade.values[i] - 0.7071), 0.6, 1.2);
    double b, g, r, nir;
    if (forest.values[i] != 0.0f) {
      const double cn = carbon.values[i] / span;
      b = 0.050 - 0.015 * cn;
      g = 0.080 - 0.010 * cn;
      r = 0.045 - 0.020 * cn;
      nir = 0.300 + 0.200 * cn;
    } else {
      b = 0.10;
      g = 0.12;
      r = 0.15;
      nir = 0.22;
    }
    const double vals[4] = {b, g, r, nir};
    for (int k = 0; k < 4; ++k)
      refl[static_cast<std::size_t>(k)].values[i] = static_cast<float>(vals[k] * illum + rng.normal(0.0, spec.noise_sd));
  }

  Scene scene;
  BandStack like(h, w);
  like.pixel_area = spec.pixel_size * spec.pixel_size;
  like.geo = GeoTransform{{0.0, spec.pixel_size, 0.0, 0.0, 0.0, -spec.pixel_size}, "LOCAL_SYNTHETIC"};
  scene.stack_a = apply_style(refl, spec.sensor_a, like);
  std::array<Grid, 4> a_bands;
  for (int k = 0; k < 4; ++k) a_bands[static_cast<std::size_t>(k)] = scene.stack_a.grid(static_cast<std::size_t>(k));
  scene.stack_b = apply_style(a_bands, spec.sensor_b, like);

  scene.dem = BandStack(h, w);
  scene.dem.pixel_area = like.pixel_area;
  scene.dem.geo = like.geo;
  scene.dem.add_band("elevation", dem);
  scene.carbon = carbon;
  scene.mask.grid = forest;
  // Synthetic masks come from the forest field, not an NDVI threshold.
  scene.mask.threshold = forest_idx.empty() ? std::nan("") : forest_field.values[forest_idx.back()];
  scene.mask.mean = std::nan("");
  scene.mask.stddev = std::nan("");
  return scene;
}

CloudResult add_clouds(const BandStack& stack, double coverage, double opacity, std::uint64_t seed, float cloud_value) {
  if (!(coverage >= 0.0 && coverage <= 1.0)) throw ValidationError("cloud coverage must lie in [0, 1]");
  if (!(opacity >= 0.0 && opacity <= 1.0)) throw ValidationError("cloud opacity must lie in [0, 1]");
  const int h = stack.height();
  const int w = stack.width();
  CloudResult res{stack, Grid(h, w, 0.0f)};
  const auto n = static_cast<std::size_t>(h) * w;
  const auto count = static_cast<std::size_t>(std::llround(coverage * static_cast<double>(n)));
  if (count == 0) return res;

  Rng rng(seed);
  const Grid field = smooth_field(h, w, std::max(4.0, std::max(h, w) / 4.0), 3, rng);
  for (auto i : top_indices(field, count)) res.cloud_mask.values[i] = 1.0f;

  BandStack out(h, w);
  out.nodata = stack.nodata;
  out.geo = stack.geo;
  out.pixel_area = stack.pixel_area;
  for (const auto& b : stack.bands()) {
    Grid g = b.grid;
    for (std::size_t i = 0; i < n; ++i) {
      if (res.cloud_mask.values[i] == 0.0f || stack.is_nodata(g.values[i])) continue;
      g.values[i] = opacity == 1.0 ? cloud_value
                                   : static_cast<float>((1.0 - opacity) * g.values[i] + opacity * cloud_value);
    }
    out.add_band(b.name, std::move(g));
  }
  res.stack = std::move(out);
  return res;
}

std::string to_string(DatasetMode m) { return m == DatasetMode::Estimation ? "estimation" : "style_transfer"; }

DatasetMode dataset_mode_from_string(const std::string& s) {
  if (s == "estimation") return DatasetMode::Estimation;
  if (s == "style_transfer") return DatasetMode::StyleTransfer;
  throw ValidationError("unknown dataset mode '" + s + "'");
}

std::vector<int> assign_folds(std::size_t n_tiles, int k) {
  if (k < 1) throw ValidationError("number of folds must be >= 1");
  std::vector<int> folds(n_tiles);
  for (std::size_t i = 0; i < n_tiles; ++i)
    folds[i] = static_cast<int>(i * static_cast<std::size_t>(k) / std::max<std::size_t>(n_tiles, 1));
  return folds;
}

namespace {

// Vertical mosaic of equally wide stacks with identical band names.
BandStack vstack(const std::vector<BandStack>& parts) {
  int h = 0;
  for (const auto& p : parts) h += p.height();
  const int w = parts.front().width();
  BandStack out(h, w);
  out.nodata = parts.front().nodata;
  for (std::size_t b = 0; b < parts.front().band_count(); ++b) {
    Grid g(h, w);
    std::size_t off = 0;
    for (const auto& p : parts) {
      const auto& src = p.grid(b).values;
      std::copy(src.begin(), src.end(), g.values.begin() + static_cast<std::ptrdiff_t>(off));
      off += src.size();
    }
    out.add_band(parts.front().band(b).name, std::move(g));
  }
  return out;
}

BandStack fill_nodata(const BandStack& s, float fill) {
  BandStack out(s.height(), s.width());
  out.geo = s.geo;
  out.pixel_area = s.pixel_area;
  for (const auto& b : s.bands()) {
    Grid g = b.grid;
    for (float& v : g.values)
      if (s.is_nodata(v) || !std::isfinite(v)) v = fill;
    out.add_band(b.name, std::move(g));
  }
  return out;
}

bool tiles_have_vegetation(const Grid& mask, int tile, int stride) {
  for (int r : tile_origins(mask.height, tile, stride))
    for (int c : tile_origins(mask.width, tile, stride)) {
      bool any = false;
      for (int u = 0; u < tile && !any; ++u)
        for (int v = 0; v < tile && !any; ++v) any = mask(r + u, c + v) != 0.0f;
      if (!any) return false;
    }
  return true;
}

}  // namespace

Dataset build_dataset(const DatasetOptions& opts) {
  if (opts.n_scenes < 1) throw ValidationError("dataset needs at least one scene");
  if (opts.tile > opts.scene.height || opts.tile > opts.scene.width)
    throw ValidationError("tile size exceeds the scene size");
  Dataset ds;
  ds.mode = opts.mode;
  ds.folds = opts.folds;

  for (int i = 0; i < opts.n_scenes; ++i) {
    SceneSpec spec = opts.scene;
    spec.seed = Rng::mix(opts.scene.seed, static_cast<std::uint64_t>(i));
    Scene scene = generate_scene(spec);
    // Redraw scenes that would yield a tile without vegetation.
    for (int attempt = 0; !tiles_have_vegetation(scene.mask.grid, opts.tile, opts.stride); ++attempt) {
      if (attempt >= 64) throw ValidationError("could not draw a scene with vegetation in every tile");
      spec.seed = Rng::mix(spec.seed, 1000 + static_cast<std::uint64_t>(attempt));
      scene = generate_scene(spec);
    }
    ds.scenes.push_back(std::move(scene));
  }

  std::vector<BandStack> inputs;
  std::vector<BandStack> targets;
  std::vector<Grid> clouds;
  if (opts.mode == DatasetMode::Estimation) {
    std::vector<BandStack> feats;
    for (const auto& s : ds.scenes)
      feats.push_back(features::assemble_feature_stack(features::spectral_from_stack(s.stack_a), s.dem.grid(0),
                                                       opts.glcm, opts.scene.pixel_size));
    std::vector<BandStack> carbon_parts;
    std::vector<BandStack> mask_parts;
    for (const auto& s : ds.scenes) {
      carbon_parts.push_back(single_band("carbon", s.carbon));
      mask_parts.push_back(single_band("mask", s.mask.grid));
    }
    const BandStack mosaic = vstack(feats);
    const auto report = screening::rank_bands(mosaic, vstack(carbon_parts).grid(0), &vstack(mask_parts).grid(0),
                                              opts.top_k, std::nullopt);
    ds.screening_json = report.to_json();
    ds.input_bands = report.selected;
    ds.target_bands = {"carbon"};

    std::vector<BandStack> selected;
    for (const auto& f : feats) selected.push_back(f.select(ds.input_bands));
    ds.input_norm = fit_normalization(vstack(selected), NormMode::MinMaxSymmetric);
    ds.target_norm = fixed_scale(opts.c_max);
    for (std::size_t i = 0; i < selected.size(); ++i) {
      inputs.push_back(fill_nodata(normalize(selected[i], ds.input_norm), 0.0f));
      BandStack t = single_band("carbon", ds.scenes[i].carbon);
      targets.push_back(normalize(t, ds.target_norm));
    }
  } else {
    const std::vector<std::string> rgb = {"red", "green", "blue"};
    ds.input_bands = rgb;
    ds.target_bands = rgb;
    std::vector<BandStack> clouded;
    std::vector<BandStack> clean;
    for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
      const auto seed = Rng::mix(opts.scene.seed ^ 0xC10D5ULL, i);
      auto cr = add_clouds(ds.scenes[i].stack_b, opts.cloud_coverage, opts.cloud_opacity, seed);
      clouded.push_back(cr.stack.select(rgb));
      clouds.push_back(std::move(cr.cloud_mask));
      clean.push_back(ds.scenes[i].stack_a.select(rgb));
    }
    ds.input_norm = fit_normalization(vstack(clouded), NormMode::MinMaxSymmetric);
    ds.target_norm = fit_normalization(vstack(clean), NormMode::MinMaxSymmetric);
    for (std::size_t i = 0; i < clouded.size(); ++i) {
      inputs.push_back(normalize(clouded[i], ds.input_norm));
      targets.push_back(normalize(clean[i], ds.target_norm));
    }
  }

  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    const auto& mask = ds.scenes[i].mask.grid;
    for (int r : tile_origins(mask.height, opts.tile, opts.stride))
      for (int c : tile_origins(mask.width, opts.tile, opts.stride)) {
        TrainSample s;
        s.u = crop(inputs[i], r, c, opts.tile, opts.tile);
        s.x = crop(targets[i], r, c, opts.tile, opts.tile);
        s.mask = crop(mask, r, c, opts.tile, opts.tile);
        if (!clouds.empty()) s.cloud = crop(clouds[i], r, c, opts.tile, opts.tile);
        s.scene = static_cast<int>(i);
        s.row = r;
        s.col = c;
        ds.samples.push_back(std::move(s));
      }
  }
  const auto folds = assign_folds(ds.samples.size(), opts.folds);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) ds.samples[i].fold_id = folds[i];
  return ds;
}

namespace {

std::string numbered(const char* prefix, std::size_t i, int width) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
  return buf;
}

}  // namespace

void save_dataset(const Dataset& ds, const fs::path& dir) {
  json j;
  j["mode"] = to_string(ds.mode);
  j["folds"] = ds.folds;
  j["input_bands"] = ds.input_bands;
  j["target_bands"] = ds.target_bands;
  j["input_normalization"] = json::parse(normalization_to_json(ds.input_norm));
  j["target_normalization"] = json::parse(normalization_to_json(ds.target_norm));
  j["screening"] = ds.screening_json ? json::parse(*ds.screening_json) : json(nullptr);
  j["samples"] = json::array();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    const auto id = numbered("sample_", i, 5);
    const auto base = dir / "samples" / id;
    save_stack(s.u, base / "u");
    save_stack(s.x, base / "x");
    save_stack(single_band("mask", s.mask), base / "mask");
    if (s.cloud) save_stack(single_band("cloud", *s.cloud), base / "cloud");
    j["samples"].push_back({{"id", id}, {"fold", s.fold_id}, {"scene", s.scene}, {"row", s.row}, {"col", s.col}});
  }
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    const auto& sc = ds.scenes[i];
    const auto base = dir / "scenes" / numbered("scene_", i, 3);
    save_stack(sc.stack_a, base / "stack_a");
    save_stack(sc.stack_b, base / "stack_b");
    save_stack(sc.dem, base / "dem");
    BandStack carbon = single_band("carbon", sc.carbon);
    carbon.pixel_area = sc.stack_a.pixel_area;
    carbon.geo = sc.stack_a.geo;
    save_stack(carbon, base / "carbon");
    BandStack m = single_band("mask", sc.mask.grid);
    m.pixel_area = sc.stack_a.pixel_area;
    m.geo = sc.stack_a.geo;
    save_stack(m, base / "mask");
  }
  std::ofstream out(dir / "dataset.json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "dataset.json").string());
  out << j.dump(2) << '\n';
}

Dataset load_dataset(const fs::path& dir) {
  std::ifstream in(dir / "dataset.json");
  if (!in) throw IoError("cannot open " + (dir / "dataset.json").string());
  json j;
  try {
    in >> j;
    Dataset ds;
    ds.mode = dataset_mode_from_string(j.at("mode").get<std::string>());
    ds.folds = j.at("folds").get<int>();
    ds.input_bands = j.at("input_bands").get<std::vector<std::string>>();
    ds.target_bands = j.at("target_bands").get<std::vector<std::string>>();
    ds.input_norm = normalization_from_json(j.at("input_normalization").dump());
    ds.target_norm = normalization_from_json(j.at("target_normalization").dump());
    if (j.contains("screening") && !j["screening"].is_null()) ds.screening_json = j["screening"].dump(2);
    for (const auto& e : j.at("samples")) {
      const auto base = dir / "samples" / e.at("id").get<std::string>();
      TrainSample s;
      s.u = load_stack(base / "u");
      s.x = load_stack(base / "x");
      s.mask = load_stack(base / "mask").grid(0);
      if (fs::exists(base / "cloud")) s.cloud = load_stack(base / "cloud").grid(0);
      s.fold_id = e.at("fold").get<int>();
      s.scene = e.at("scene").get<int>();
      s.row = e.at("row").get<int>();
      s.col = e.at("col").get<int>();
      ds.samples.push_back(std::move(s));
    }
    return ds;
  } catch (const json::exception& e) {
    throw CorruptionError("invalid dataset.json in " + dir.string() + ": " + e.what());
  }
}

}  // namespace mswin::synth
