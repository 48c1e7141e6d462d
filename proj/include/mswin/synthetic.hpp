#pragma once

// Deterministic desk-scale scenes: terrain, block-wise carbon, correlated
// spectral bands, a style-shifted second sensor and synthetic clouds. Every
// output is a pure function of the spec (seeds included); randomness comes
// from mswin::Rng only.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mswin/features.hpp"
#include "mswin/raster.hpp"
#include "mswin/rng.hpp"
#include "mswin/vegetation_mask.hpp"

namespace mswin::synth {

struct SensorStyle {
  std::array<double, 4> gain{1.0, 1.0, 1.0, 1.0};  // blue, green, red, nir
  std::array<double, 4> bias{0.0, 0.0, 0.0, 0.0};
  int blur_radius = 0;  // box blur half-width in pixels
};

struct CloudSpec {
  double coverage = 0.0;
  double opacity = 0.0;
  std::uint64_t seed = 0;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int height = 64;
  int width = 64;
  int n_blocks = 24;
  double carbon_min = 20.0;  // Mg/ha
  double carbon_max = 200.0;
  double forest_fraction = 0.7;
  double pixel_size = 16.0;  // metres
  double noise_sd = 0.002;   // reflectance units
  SensorStyle sensor_a{};
  SensorStyle sensor_b{{0.80, 0.85, 0.90, 1.15}, {0.030, 0.025, 0.020, -0.010}, 1};
  CloudSpec cloud{};

  void validate() const;
};

struct Scene {
  BandStack stack_a;  // blue, green, red, nir
  BandStack stack_b;  // same scene through sensor_b
  BandStack dem;      // "elevation"
  Grid carbon;        // Mg/ha, zero outside forest
  mask::ForestMask mask;
};

Scene generate_scene(const SceneSpec& spec);

// Smooth value-noise field in [0, 1): bilinear-smoothstep interpolation of a
// random lattice with the given spacing, summed over octaves.
Grid smooth_field(int height, int width, double spacing, int octaves, Rng& rng);

struct CloudResult {
  BandStack stack;
  Grid cloud_mask;  // 1 where clouded
};

// Exactly round(coverage * pixels) pixels are clouded: the highest values of
// a smooth random field. Clouded pixels blend towards cloud_value.
CloudResult add_clouds(const BandStack& stack, double coverage, double opacity, std::uint64_t seed,
                       float cloud_value = 0.9f);

Grid box_blur(const Grid& g, int radius);

enum class DatasetMode { Estimation, StyleTransfer };

std::string to_string(DatasetMode m);
DatasetMode dataset_mode_from_string(const std::string& s);

struct DatasetOptions {
  int n_scenes = 4;
  SceneSpec scene{};  // seed of scene i is Rng::mix(scene.seed, i)
  int tile = 64;
  int stride = 64;
  int folds = 5;
  DatasetMode mode = DatasetMode::Estimation;
  int top_k = 3;
  features::GlcmSpec glcm{};
  double c_max = 500.0;  // Mg/ha mapped to 1.0
  // Style-transfer mode: clouds laid over the sensor_b input.
  double cloud_coverage = 0.2;
  double cloud_opacity = 0.8;
};

struct TrainSample {
  BandStack u;               // normalized condition stack
  BandStack x;               // normalized target
  Grid mask;                 // forest mask, 0/1
  std::optional<Grid> cloud; // cloud mask (style-transfer datasets)
  int fold_id = 0;
  int scene = 0;
  int row = 0;
  int col = 0;
};

struct Dataset {
  DatasetMode mode = DatasetMode::Estimation;
  int folds = 5;
  std::vector<std::string> input_bands;
  std::vector<std::string> target_bands;
  NormalizationSpec input_norm;
  NormalizationSpec target_norm;
  std::optional<std::string> screening_json;
  std::vector<TrainSample> samples;
  std::vector<Scene> scenes;  // not persisted with samples; see save_dataset
};

// Contiguous spatial blocks: tile index i of n goes to fold i * k / n.
std::vector<int> assign_folds(std::size_t n_tiles, int k);

Dataset build_dataset(const DatasetOptions& opts);

// <dir>/dataset.json, <dir>/samples/<id>/{u,x,mask[,cloud]},
// <dir>/scenes/scene_NNN/{stack_a,stack_b,dem,carbon,mask} when scenes exist.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace mswin::synth
