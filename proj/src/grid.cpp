#include "faid/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "faid/errors.hpp"

namespace faid {

int GridSpec::column_at(double x) const {
  const int i = static_cast<int>(std::floor((x - x0) / dx));
  return std::clamp(i, 0, nx - 1);
}

int GridSpec::row_at(double y) const {
  const int j = static_cast<int>(std::floor((y - y0) / dx));
  return std::clamp(j, 0, ny - 1);
}

void GridSpec::validate() const {
  if (nx < 8 || ny < 8)
    throw ValidationError("grid must be at least 8x8 cells, got "
                          + std::to_string(nx) + "x" + std::to_string(ny));
  if (!(dx > 0.0) || !std::isfinite(dx))
    throw ValidationError("grid cell size must be positive");
  if (!std::isfinite(x0) || !std::isfinite(y0))
    throw ValidationError("grid origin must be finite");
}

DensityGrid DensityGrid::zeros(const GridSpec &grid) {
  return filled(grid, 0.0);
}

DensityGrid DensityGrid::filled(const GridSpec &grid, double value) {
  return { grid, Eigen::ArrayXd::Constant(
                     static_cast<Eigen::Index>(grid.size()), value) };
}

void DensityGrid::validate() const {
  grid.validate();
  if (static_cast<std::size_t>(values.size()) != grid.size())
    throw ValidationError("density grid has " + std::to_string(values.size())
                          + " values, expected "
                          + std::to_string(grid.size()));
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    const double v = values[k];
    if (!(v >= 0.0 && v <= 1.0))
      throw ValidationError("density value " + std::to_string(v)
                            + " outside [0, 1] at cell "
                            + std::to_string(k));
  }
}

ScalarField ScalarField::zeros(const GridSpec &grid) {
  return { grid,
           Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(grid.size())) };
}

}  // namespace faid
