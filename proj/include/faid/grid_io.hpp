#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "faid/geometry.hpp"
#include "faid/grid.hpp"

namespace faid {

// DensityGrid files.
//
// Text: first line "nx ny dx x0 y0", then ny lines of nx values (row j holds
// cells (0..nx-1, j), rows in increasing j). Numbers use the shortest
// representation that round-trips, so text files are lossless.
//
// Binary: magic "FDG1", uint32 nx, uint32 ny, float64 dx, x0, y0, then nx*ny
// float64 values in the same order. All little-endian.
//
// Complex field dumps use the text layout with "re im" pairs per cell.

enum class GridEncoding { Text, Binary };

std::string encode_density_grid(const DensityGrid &grid,
                                GridEncoding encoding = GridEncoding::Text);
/// Auto-detects the encoding. Throws FormatError with the byte offset of the
/// first problem, including values outside [0, 1].
DensityGrid decode_density_grid(std::string_view bytes);

void save_density_grid(const std::filesystem::path &path, const DensityGrid &grid,
                       GridEncoding encoding = GridEncoding::Text);
DensityGrid load_density_grid(const std::filesystem::path &path);

std::string encode_complex_grid(const GridSpec &grid, const Eigen::VectorXcd &values);

/// Polygon text: a "# ..." header line, then one block per polygon of
/// "x y" lines in um, blocks separated by a blank line.
std::string encode_polygons(const PolygonSet &poly, std::string_view header);
PolygonSet decode_polygons(std::string_view text);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path &path, std::string_view contents);
std::string read_file(const std::filesystem::path &path);

/// Closed iso-contours of a density grid (marching squares on cell centres).
/// Loops that reach the grid edge are closed along the boundary cells.
PolygonSet contour_polygons(const DensityGrid &grid, double level = 0.5);

}  // namespace faid
