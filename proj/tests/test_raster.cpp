#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "mswin/errors.hpp"
#include "mswin/raster.hpp"
#include "mswin/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mswin;
namespace fs = std::filesystem;

TEST_CASE("band files are raw row-major float32") {
  TempDir tmp;
  save_stack(single_band("b", Grid(2, 2, {1, 2, 3, 4})), tmp / "s");
  const auto bytes = slurp(tmp / "s" / "b.f32");
  REQUIRE(bytes.size() == 16);
  float v[4];
  std::memcpy(v, bytes.data(), 16);
  CHECK(v[0] == 1.0f);
  CHECK(v[1] == 2.0f);
  CHECK(v[2] == 3.0f);
  CHECK(v[3] == 4.0f);
}

TEST_CASE("save/load round trip is bit exact over random stacks") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    TempDir tmp;
    const int h = 1 + static_cast<int>(rng.below(9));
    const int w = 1 + static_cast<int>(rng.below(9));
    BandStack s(h, w);
    const int nb = 1 + static_cast<int>(rng.below(4));
    for (int b = 0; b < nb; ++b) {
      Grid g(h, w);
      for (auto& v : g.values) {
        // arbitrary finite bit patterns, subnormals included
        std::uint32_t bits;
        do {
          bits = static_cast<std::uint32_t>(rng.next());
          std::memcpy(&v, &bits, 4);
        } while (!std::isfinite(v));
      }
      s.add_band("band" + std::to_string(b), g);
    }
    if (trial % 2) s.nodata = -1.5f;
    if (trial % 3 == 0) s.geo = GeoTransform{{1, 2, 0, 3, 0, -2}, "EPSG:32650"};
    if (trial % 5 == 0) s.pixel_area = 256.0;
    save_stack(s, tmp / "s");
    const auto back = load_stack(tmp / "s");
    REQUIRE(back.band_count() == s.band_count());
    for (std::size_t b = 0; b < s.band_count(); ++b)
      CHECK(std::memcmp(back.grid(b).values.data(), s.grid(b).values.data(), s.grid(b).size() * 4) == 0);
    CHECK(back.nodata == s.nodata);
    CHECK(back.geo == s.geo);
    CHECK(back.pixel_area == s.pixel_area);
    CHECK(back.names() == s.names());
  }
}

TEST_CASE("50-band stack writes 50 files of 16384 bytes") {
  TempDir tmp;
  BandStack s(64, 64);
  for (int b = 0; b < 50; ++b) s.add_band("b" + std::to_string(b), Grid(64, 64, static_cast<float>(b)));
  save_stack(s, tmp / "s");
  int files = 0;
  for (const auto& e : fs::directory_iterator(tmp / "s")) {
    if (e.path().extension() == ".f32") {
      ++files;
      CHECK(fs::file_size(e.path()) == 16384);
    }
  }
  CHECK(files == 50);
  CHECK(slurp(tmp / "s" / "meta.json").find("\"f32le\"") != std::string::npos);
}

TEST_CASE("corrupted containers are rejected") {
  TempDir tmp;
  BandStack s(4, 4);
  s.add_band("red", Grid(4, 4, 1.0f));
  s.add_band("nir", Grid(4, 4, 2.0f));
  save_stack(s, tmp / "s");

  SUBCASE("truncated band names the band") {
    fs::resize_file(tmp / "s" / "nir.f32", 60);
    try {
      load_stack(tmp / "s");
      FAIL("expected CorruptionError");
    } catch (const CorruptionError& e) {
      CHECK(std::string(e.what()).find("nir") != std::string::npos);
    }
  }
  SUBCASE("missing band file") {
    fs::remove(tmp / "s" / "red.f32");
    CHECK_THROWS_AS(load_stack(tmp / "s"), CorruptionError);
  }
  SUBCASE("unknown dtype") {
    auto meta = slurp(tmp / "s" / "meta.json");
    meta.replace(meta.find("f32le"), 5, "f64le");
    std::ofstream(tmp / "s" / "meta.json") << meta;
    CHECK_THROWS_AS(load_stack(tmp / "s"), UnsupportedFormatError);
  }
}

TEST_CASE("band stack invariants") {
  BandStack s(3, 3);
  s.add_band("a", Grid(3, 3));
  CHECK_THROWS_AS(s.add_band("a", Grid(3, 3)), ValidationError);
  CHECK_THROWS_AS(s.add_band("b", Grid(3, 4)), ValidationError);
}

TEST_CASE("tile origins follow the snap-back rule") {
  BandStack s64(64, 64);
  s64.add_band("x", Grid(64, 64));
  auto t = tile_stack(s64, 32, 32, 32, 32);
  REQUIRE(t.size() == 4);
  CHECK(t[1].row == 0);
  CHECK(t[1].col == 32);
  CHECK(t[2].row == 32);
  CHECK(t[2].col == 0);

  BandStack s70(70, 70);
  s70.add_band("x", Grid(70, 70));
  t = tile_stack(s70, 32, 32, 32, 32);
  CHECK(t.size() == 9);
  CHECK(t[2].col == 38);
  CHECK(t[8].row == 38);

  CHECK(tile_stack(s64, 32, 32, 16, 16).size() == 9);
  CHECK_THROWS_AS(tile_stack(s64, 65, 32, 32, 32), ValidationError);
}

TEST_CASE("tiles cover every pixel and stay in bounds (property)") {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const int extent = 1 + static_cast<int>(rng.below(80));
    const int size = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(extent)));
    const int stride = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(size)));
    const auto o = tile_origins(extent, size, stride);
    CHECK(o == tile_origins(extent, size, stride));
    std::vector<int> hit(static_cast<std::size_t>(extent), 0);
    for (int p : o) {
      REQUIRE(p >= 0);
      REQUIRE(p + size <= extent);
      for (int i = p; i < p + size; ++i) hit[static_cast<std::size_t>(i)] = 1;
    }
    CHECK(std::count(hit.begin(), hit.end(), 0) == 0);
    CHECK(o.back() + size == extent);
  }
}

TEST_CASE("normalization maps and inverts") {
  BandStack s(1, 3);
  s.add_band("b", Grid(1, 3, {0.0f, 50.0f, 100.0f}));
  const auto unit = fit_normalization(s, NormMode::MinMaxUnit);
  const auto n = normalize(s, unit);
  CHECK(n.grid(0)(0, 1) == doctest::Approx(0.5));
  CHECK(n.grid(0)(0, 2) == doctest::Approx(1.0));

  BandStack c(2, 2);
  c.add_band("c", Grid(2, 2, 7.0f));
  std::vector<std::string> warnings;
  const auto sym = fit_normalization(c, NormMode::MinMaxSymmetric);
  const auto nc = normalize(c, sym, &warnings);
  for (float v : nc.grid(0).values) CHECK(v == 0.0f);
  CHECK(!warnings.empty());
  CHECK(denormalize(nc, sym).grid(0).values == c.grid(0).values);

  const auto fixed = fixed_scale(500.0);
  BandStack carbon(1, 2);
  carbon.add_band("carbon", Grid(1, 2, {250.0f, 500.0f}));
  CHECK(normalize(carbon, fixed).grid(0)(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("nodata passes through normalization") {
  BandStack s(1, 3);
  s.nodata = kNoData;
  s.add_band("b", Grid(1, 3, {kNoData, 1.0f, 3.0f}));
  const auto spec = fit_normalization(s, NormMode::MinMaxSymmetric);
  const auto n = normalize(s, spec);
  CHECK(n.grid(0)(0, 0) == kNoData);
  CHECK(n.grid(0)(0, 1) == doctest::Approx(-1.0));
  CHECK(n.grid(0)(0, 2) == doctest::Approx(1.0));
}

TEST_CASE("normalize then denormalize is identity within 1e-5 (property)") {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const NormMode mode = trial % 3 == 0 ? NormMode::MinMaxUnit
                          : trial % 3 == 1 ? NormMode::MinMaxSymmetric
                                           : NormMode::FixedScale;
    const double lo = rng.uniform(-1000, 1000);
    const double span = rng.uniform(1e-2, 1000);
    BandStack s(4, 5);
    s.add_band("b", oracle::random_grid(rng, 4, 5, lo, lo + span));
    const auto spec = fit_normalization(s, mode, rng.uniform(1, 2000));
    const auto back = denormalize(normalize(s, spec), spec);
    for (std::size_t i = 0; i < s.grid(0).size(); ++i) {
      const double x = s.grid(0).values[i];
      const double scale = std::max({std::abs(x), span, 1e-3});
      REQUIRE(std::abs(back.grid(0).values[i] - x) / scale < 1e-5);
    }
  }
}

TEST_CASE("normalization spec survives JSON") {
  BandStack s(1, 2);
  s.add_band("b", Grid(1, 2, {-3.0f, 9.0f}));
  const auto spec = fit_normalization(s, NormMode::MinMaxSymmetric);
  const auto back = normalization_from_json(normalization_to_json(spec));
  CHECK(back.mode == spec.mode);
  REQUIRE(back.per_band.size() == 1);
  CHECK(back.per_band[0].min == -3.0f);
  CHECK(back.per_band[0].max == 9.0f);
}
