#include <doctest.h>

#include <filesystem>
#include <random>

#include "faid/errors.hpp"
#include "faid/grid_io.hpp"

using namespace faid;
namespace fs = std::filesystem;

namespace {

DensityGrid random_grid(unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DensityGrid d = DensityGrid::zeros({ 13, 9, 0.02, -0.37, -0.09 });
  for (auto &v : d.values) v = u(rng);
  d.values[0] = 0.0;
  d.values[1] = 1.0;
  d.values[2] = 1e-300;
  return d;
}

fs::path scratch(const std::string &name) {
  const fs::path dir = fs::temp_directory_path() / "faid_grid_io_test";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("text and binary grids round-trip bit for bit") {
  const DensityGrid d = random_grid(7);
  for (auto enc : { GridEncoding::Text, GridEncoding::Binary }) {
    const DensityGrid back = decode_density_grid(encode_density_grid(d, enc));
    CHECK(back.grid == d.grid);
    CHECK((back.values == d.values).all());
  }
  const fs::path p = scratch("grid.bin");
  save_density_grid(p, d, GridEncoding::Binary);
  CHECK((load_density_grid(p).values == d.values).all());
  CHECK(!fs::exists(p.string() + ".tmp"));
}

TEST_CASE("malformed grids report the byte offset") {
  try {
    decode_density_grid("2 2 0.1 0 0\n0.5 0.5\n0.5 abc\n");
    FAIL("expected FormatError");
  } catch (const FormatError &e) {
    CHECK(e.offset() == 24);
    CHECK(std::string(e.what()).find("byte 24") != std::string::npos);
  }
  CHECK_THROWS_AS(decode_density_grid("2 2 0.1 0 0\n0.5 0.5\n0.5\n"), FormatError);
  CHECK_THROWS_WITH_AS(decode_density_grid("2 1 0.1 0 0\n0.5 1.5\n"), doctest::Contains("outside"),
                       FormatError);
  CHECK_THROWS_AS(decode_density_grid("2 1 -0.1 0 0\n0.5 0.5\n"), FormatError);
  std::string bin = encode_density_grid(random_grid(1), GridEncoding::Binary);
  bin.resize(bin.size() - 3);
  CHECK_THROWS_WITH_AS(decode_density_grid(bin), doctest::Contains("truncated"), FormatError);
  CHECK_THROWS_AS(decode_density_grid(""), FormatError);
}

TEST_CASE("polygon text round-trips") {
  PolygonSet s;
  s.add({ { 0.0, 0.0 }, { 1.0, 0.0 }, { 0.5, 0.75 } }, PolygonRole::Fixed);
  s.add({ { 2.0, 2.0 }, { 3.0, 2.0 }, { 3.0, 3.1 }, { 2.0, 3.0 } }, PolygonRole::Design);
  const PolygonSet back = decode_polygons(encode_polygons(s, "test"));
  REQUIRE(back.polygons.size() == 2);
  CHECK(back.polygons[0].vertices == s.polygons[0].vertices);
  CHECK(back.polygons[1].vertices == s.polygons[1].vertices);
  CHECK_THROWS_AS(decode_polygons("# x\n0 0\n1 zz\n"), FormatError);
}

TEST_CASE("contour of a filled rectangle encloses its area") {
  const GridSpec g{ 30, 30, 0.1, 0.0, 0.0 };
  PolygonSet s;
  s.add({ { 0.8, 1.0 }, { 2.2, 1.0 }, { 2.2, 2.0 }, { 0.8, 2.0 } }, PolygonRole::Fixed);
  const DensityGrid d = rasterize(s, g);
  const PolygonSet c = contour_polygons(d, 0.5);
  REQUIRE(c.polygons.size() == 1);
  CHECK(std::abs(signed_area(c.polygons[0].vertices)) == doctest::Approx(1.4).epsilon(0.02));
}

TEST_CASE("complex grid dumps carry re/im pairs") {
  const GridSpec g{ 2, 1, 0.5, 0.0, 0.0 };
  Eigen::VectorXcd v(2);
  v << std::complex<double>(1.5, -2.0), std::complex<double>(0.0, 0.25);
  CHECK(encode_complex_grid(g, v) == "2 1 0.5 0 0\n1.5 -2 0 0.25\n");
}
