#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "faid/errors.hpp"
#include "faid/geometry.hpp"

namespace faid {
namespace {

// Accumulates -sum(dx * (y - y_row)) per cell for one directed edge,
// splitting it at every grid line it crosses. `below` collects the
// full-height strips that apply to every row under the touched one.
void accumulate_edge(const GridSpec &grid, Vec2 a, Vec2 b, double sign,
                     Eigen::ArrayXd &direct, Eigen::ArrayXd &below) {
  const double ddx = b.x - a.x;
  if (ddx == 0.0)  // NOLINT(clang-diagnostic-float-equal)
    return;
  const double ddy = b.y - a.y;
  const double h = grid.dx;

  std::vector<double> ts{ 0.0, 1.0 };
  {
    const double lo = std::min(a.x, b.x), hi = std::max(a.x, b.x);
    const auto k0 = static_cast<long>(std::ceil((lo - grid.x0) / h));
    const auto k1 = static_cast<long>(std::floor((hi - grid.x0) / h));
    for (long k = k0; k <= k1; ++k) {
      const double t = (grid.x0 + k * h - a.x) / ddx;
      if (t > 0.0 && t < 1.0)
        ts.push_back(t);
    }
  }
  if (ddy != 0.0) {  // NOLINT(clang-diagnostic-float-equal)
    const double lo = std::min(a.y, b.y), hi = std::max(a.y, b.y);
    const auto k0 = static_cast<long>(std::ceil((lo - grid.y0) / h));
    const auto k1 = static_cast<long>(std::floor((hi - grid.y0) / h));
    for (long k = k0; k <= k1; ++k) {
      const double t = (grid.y0 + k * h - a.y) / ddy;
      if (t > 0.0 && t < 1.0)
        ts.push_back(t);
    }
  }
  std::sort(ts.begin(), ts.end());

  for (std::size_t s = 0; s + 1 < ts.size(); ++s) {
    const double t0 = ts[s], t1 = ts[s + 1];
    if (!(t1 > t0))
      continue;
    const double xa = a.x + t0 * ddx, xb = a.x + t1 * ddx;
    const double ya = a.y + t0 * ddy, yb = a.y + t1 * ddy;
    const double xm = 0.5 * (xa + xb), ym = 0.5 * (ya + yb);
    const int i = std::clamp(static_cast<int>(std::floor((xm - grid.x0) / h)),
                             0, grid.nx - 1);
    const int j = std::clamp(static_cast<int>(std::floor((ym - grid.y0) / h)),
                             0, grid.ny - 1);
    const double w = (xb - xa) * sign;
    const double row_base = grid.y0 + j * h;
    direct[grid.index(i, j)] -= w * (ym - row_base);
    below[grid.index(i, j)] -= w * h;
  }
}

}  // namespace

DensityGrid rasterize(const PolygonSet &poly, const GridSpec &grid) {
  grid.validate();
  poly.validate();

  const double tol = 1e-9 * std::max({ 1.0, std::abs(grid.x0),
                                       std::abs(grid.y0), grid.nx * grid.dx,
                                       grid.ny * grid.dx });
  for (std::size_t p = 0; p < poly.polygons.size(); ++p) {
    const auto &verts = poly.polygons[p].vertices;
    for (std::size_t v = 0; v < verts.size(); ++v) {
      const Vec2 q = verts[v];
      if (q.x < grid.x0 - tol || q.x > grid.x_max() + tol
          || q.y < grid.y0 - tol || q.y > grid.y_max() + tol) {
        std::ostringstream os;
        os << "polygon " << p << " vertex " << v << " at (" << q.x << ", "
           << q.y << ") lies outside the grid [" << grid.x0 << ", "
           << grid.x_max() << "] x [" << grid.y0 << ", " << grid.y_max()
           << "]";
        throw ValidationError(os.str());
      }
    }
  }

  const auto n = static_cast<Eigen::Index>(grid.size());
  Eigen::ArrayXd direct = Eigen::ArrayXd::Zero(n);
  Eigen::ArrayXd below = Eigen::ArrayXd::Zero(n);

  for (const auto &polygon : poly.polygons) {
    const auto &verts = polygon.vertices;
    const double sign = signed_area(verts) >= 0.0 ? 1.0 : -1.0;
    for (std::size_t v = 0; v < verts.size(); ++v)
      accumulate_edge(grid, verts[v], verts[(v + 1) % verts.size()], sign,
                      direct, below);
  }

  DensityGrid out = DensityGrid::zeros(grid);
  const double inv_area = 1.0 / (grid.dx * grid.dx);
  for (int i = 0; i < grid.nx; ++i) {
    double running = 0.0;
    for (int j = grid.ny - 1; j >= 0; --j) {
      const auto k = grid.index(i, j);
      // Overlapping inputs or round-off can leave the unit interval.
      out.values[k] = std::clamp((direct[k] + running) * inv_area, 0.0, 1.0);
      running += below[k];
    }
  }
  return out;
}

}  // namespace faid
