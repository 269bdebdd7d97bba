#pragma once

#include <cstddef>

#include <Eigen/Core>

namespace faid {

/// Uniform square-cell grid. Cell (i, j) covers
/// [x0 + i*dx, x0 + (i+1)*dx] x [y0 + j*dx, y0 + (j+1)*dx]; storage is
/// row-major with x fastest, i.e. index = j*nx + i.
struct GridSpec {
  int nx = 0;
  int ny = 0;
  double dx = 0.0;
  double x0 = 0.0;
  double y0 = 0.0;

  std::size_t size() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
  }
  Eigen::Index index(int i, int j) const {
    return static_cast<Eigen::Index>(j) * nx + i;
  }
  double x_center(int i) const { return x0 + (i + 0.5) * dx; }
  double y_center(int j) const { return y0 + (j + 0.5) * dx; }
  double x_max() const { return x0 + nx * dx; }
  double y_max() const { return y0 + ny * dx; }

  /// Column whose extent contains x (clamped to the grid).
  int column_at(double x) const;
  int row_at(double y) const;

  /// Throws ValidationError unless nx, ny >= 8 and dx > 0.
  void validate() const;

  bool operator==(const GridSpec &) const = default;
};

/// Material density in [0, 1]; both drawn masks and predicted geometry.
struct DensityGrid {
  GridSpec grid;
  Eigen::ArrayXd values;

  static DensityGrid zeros(const GridSpec &grid);
  static DensityGrid filled(const GridSpec &grid, double value);

  double &at(int i, int j) { return values[grid.index(i, j)]; }
  double at(int i, int j) const { return values[grid.index(i, j)]; }

  void validate() const;
};

/// Unconstrained real-valued grid: cotangents, sensitivities, Jacobian
/// columns.
struct ScalarField {
  GridSpec grid;
  Eigen::ArrayXd values;

  static ScalarField zeros(const GridSpec &grid);

  double &at(int i, int j) { return values[grid.index(i, j)]; }
  double at(int i, int j) const { return values[grid.index(i, j)]; }
};

}  // namespace faid
