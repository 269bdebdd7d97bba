#include "faid/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "faid/errors.hpp"
#include "faid/spline.hpp"

namespace faid {
namespace {

// Boundary sampling pitch in um. Fixed (not tied to dx) so vertex positions
// vary smoothly with the parameters.
constexpr double kSamplePitch = 0.005;

std::vector<double> sample_positions(double a, double b,
                                     std::span<const double> extra = {}) {
  // Global lattice points, so moving one end does not shift interior vertices.
  constexpr double eps = 1e-9;
  std::vector<double> xs;
  const auto k0 = static_cast<long>(std::floor(a / kSamplePitch));
  const auto k1 = static_cast<long>(std::ceil(b / kSamplePitch));
  for (long k = k0; k <= k1; ++k)
    xs.push_back(k * kSamplePitch);
  xs.insert(xs.end(), extra.begin(), extra.end());
  std::erase_if(xs, [&](double x) { return x <= a + eps || x >= b - eps; });
  xs.push_back(a);
  xs.push_back(b);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  return xs;
}

// Region x in [x_a, x_b], |y| <= half(x), traced top edge first.
template <class F>
std::vector<Vec2> symmetric_loop(const std::vector<double> &xs, F &&half) {
  std::vector<Vec2> loop;
  loop.reserve(2 * xs.size());
  for (double x : xs)
    loop.push_back({ x, half(x) });
  for (auto it = xs.rbegin(); it != xs.rend(); ++it)
    loop.push_back({ *it, -half(*it) });
  return loop;
}

std::vector<Vec2> rect(double x0, double y0, double x1, double y1) {
  return { { x0, y0 }, { x1, y0 }, { x1, y1 }, { x0, y1 } };
}

void check_count(const DeviceSpec &spec, const DesignParams &p) {
  if (p.size() != spec.parameter_count()) {
    std::ostringstream os;
    os << to_string(spec.kind) << " expects " << spec.parameter_count()
       << " parameters, got " << p.size();
    throw ValidationError(os.str());
  }
  for (std::size_t i = 0; i < p.size(); ++i)
    if (!std::isfinite(p.values[i]))
      throw ValidationError("parameter " + std::to_string(i) + " is not finite");
}

std::vector<double> uniform_knots(double a, double b, int n) {
  std::vector<double> k(n);
  for (int i = 0; i < n; ++i)
    k[i] = a + (b - a) * i / (n - 1);
  return k;
}

GridSpec grid_around(Rect &interior, double dx, int pml) {
  GridSpec g;
  g.dx = dx;
  const int inx = static_cast<int>(std::ceil((interior.x_max - interior.x_min) / dx - 1e-9));
  int iny = static_cast<int>(std::ceil((interior.y_max - interior.y_min) / dx - 1e-9));
  iny += iny % 2;  // keep y = 0 on a cell boundary
  g.nx = inx + 2 * pml;
  g.ny = iny + 2 * pml;
  g.x0 = interior.x_min - pml * dx;
  g.y0 = -0.5 * iny * dx - pml * dx;
  interior.x_max = interior.x_min + inx * dx;
  interior.y_min = g.y0 + pml * dx;
  interior.y_max = -interior.y_min;
  return g;
}

// --- Y-branch ------------------------------------------------------------

double ybranch_baseline(const DeviceOptions &o, double x) {
  return 0.5 * o.strip_width
         + 0.5 * (o.junction_width - o.strip_width) * x / o.taper_length;
}

DeviceSpec make_ybranch(const DeviceOptions &o, double dx, int pml) {
  if (o.ybranch_controls < 2)
    throw ValidationError("Y-branch needs at least two control points");
  DeviceSpec s;
  s.kind = DeviceKind::YBranch;
  s.options = o;
  const double half_pitch = 0.5 * o.arm_pitch;
  const double ymax = half_pitch + 0.5 * o.strip_width + o.clearance;
  s.interior = { -o.lead_length, -ymax,
                 o.taper_length + o.sbend_length + o.lead_length, ymax };
  s.grid = grid_around(s.interior, dx, pml);
  s.pml_cells = pml;
  const double dh = 0.5 * o.junction_width + 2.0 * o.boundary_bound;
  s.design_region = { 0.0, -dh, o.taper_length, dh };

  const double slice = 0.5 * o.strip_width + o.clearance - 0.05;
  const double xout = o.taper_length + o.sbend_length + 0.5 * o.lead_length;
  s.ports = { { "in", -0.5 * o.lead_length, 0.0, slice, +1 },
              { "out_upper", xout, half_pitch, half_pitch, -1 },
              { "out_lower", xout, -half_pitch, half_pitch, -1 } };
  // the output slices stop at the symmetry axis
  s.ports[1].half_extent = std::min(half_pitch, slice);
  s.ports[2].half_extent = std::min(half_pitch, slice);

  const double hw = 0.5 * o.strip_width;
  s.fixed.push_back({ rect(s.grid.x0, -hw, 0.0, hw), PolygonRole::Fixed });

  // S-bend arms: centre line rises from the junction to half_pitch with a
  // raised-cosine profile, then runs straight to the grid edge. Edges are
  // offset along the local normal so the arm keeps its width in the bend.
  const double c0 = 0.5 * (o.arm_gap + o.strip_width);
  const double x_a = o.taper_length, x_b = o.taper_length + o.sbend_length;
  std::vector<Vec2> outer, inner;
  const int nb = 160;
  for (int k = 0; k <= nb; ++k) {
    const double t = static_cast<double>(k) / nb;
    const double x = x_a + t * o.sbend_length;
    const double c = c0 + (half_pitch - c0) * 0.5 * (1.0 - std::cos(std::numbers::pi * t));
    const double dc = (half_pitch - c0) * 0.5 * std::numbers::pi
                      * std::sin(std::numbers::pi * t) / o.sbend_length;
    const double norm = std::sqrt(1.0 + dc * dc);
    const double nx = -dc / norm, ny = 1.0 / norm;
    outer.push_back({ x + hw * nx, c + hw * ny });
    inner.push_back({ x - hw * nx, c - hw * ny });
  }
  outer.front().x = inner.front().x = x_a;
  outer.back().x = inner.back().x = x_b;
  std::vector<Vec2> upper = outer;
  upper.push_back({ s.grid.x_max(), half_pitch + hw });
  upper.push_back({ s.grid.x_max(), half_pitch - hw });
  for (auto it = inner.rbegin(); it != inner.rend(); ++it)
    upper.push_back(*it);
  std::vector<Vec2> lower;
  for (auto it = upper.rbegin(); it != upper.rend(); ++it)
    lower.push_back({ it->x, -it->y });
  s.fixed.push_back({ std::move(upper), PolygonRole::Fixed });
  s.fixed.push_back({ std::move(lower), PolygonRole::Fixed });

  const auto n = static_cast<std::size_t>(o.ybranch_controls);
  s.initial.values.assign(n, 0.0);
  s.initial.lower.assign(n, -o.boundary_bound);
  s.initial.upper.assign(n, o.boundary_bound);
  for (std::size_t i = 0; i < n; ++i)
    s.parameter_names.push_back("boundary_" + std::to_string(i));
  return s;
}

// --- SWG-to-strip converter pair -----------------------------------------

double swg_design_length(const DeviceOptions &o) {
  return o.swg_teeth * o.swg_period;
}

DeviceSpec make_swg(const DeviceOptions &o, double dx, int pml) {
  if (o.swg_teeth < 1 || o.swg_bridge_controls < 3)
    throw ValidationError("SWG converter needs >= 1 tooth and >= 3 bridge points");
  DeviceSpec s;
  s.kind = DeviceKind::SwgConverter;
  s.options = o;
  const double length = swg_design_length(o);
  const double ymax = 0.5 * o.tooth_width_max + o.clearance;
  s.interior = { -o.lead_length, -ymax, length + o.lead_length, ymax };
  s.grid = grid_around(s.interior, dx, pml);
  s.pml_cells = pml;
  s.design_region = { 0.0, -0.5 * o.tooth_width_max, length,
                      0.5 * o.tooth_width_max };

  const double hw = 0.5 * o.strip_width;
  const double slice = hw + o.clearance - 0.05;
  s.ports = { { "in", -0.5 * o.lead_length, 0.0, slice, +1 },
              { "out", length + 0.5 * o.lead_length, 0.0, slice, -1 } };
  s.fixed.push_back({ rect(s.grid.x0, -hw, 0.0, hw), PolygonRole::Fixed });
  s.fixed.push_back({ rect(length, -hw, s.grid.x_max(), hw), PolygonRole::Fixed });

  const auto k = static_cast<std::size_t>(o.swg_teeth);
  const auto m = static_cast<std::size_t>(o.swg_bridge_controls);
  auto &p = s.initial;
  for (std::size_t i = 0; i < k; ++i) {
    p.lower.push_back(o.tooth_width_min);
    p.upper.push_back(o.tooth_width_max);
    s.parameter_names.push_back("tooth_width_" + std::to_string(i));
  }
  for (std::size_t i = 0; i < k; ++i) {
    p.lower.push_back(o.tooth_length_min);
    p.upper.push_back(o.tooth_length_max);
    s.parameter_names.push_back("tooth_length_" + std::to_string(i));
  }
  for (std::size_t i = 0; i < m; ++i) {
    p.lower.push_back(-o.bridge_bound);
    p.upper.push_back(o.bridge_bound);
    s.parameter_names.push_back("bridge_" + std::to_string(i));
  }
  for (std::size_t i = 0; i < p.lower.size(); ++i)
    p.values.push_back(0.5 * (p.lower[i] + p.upper[i]));
  return s;
}

// --- straight waveguide ----------------------------------------------------

DeviceSpec make_straight(const DeviceOptions &o, double dx, int pml) {
  DeviceSpec s;
  s.kind = DeviceKind::Straight;
  s.options = o;
  const double hw = 0.5 * o.strip_width;
  const double ymax = hw + o.straight_bound + o.clearance;
  s.interior = { -o.lead_length, -ymax, o.straight_section + o.lead_length, ymax };
  s.grid = grid_around(s.interior, dx, pml);
  s.pml_cells = pml;
  s.design_region = { 0.0, -(hw + o.straight_bound), o.straight_section,
                      hw + o.straight_bound };
  const double slice = hw + o.clearance - 0.05;
  s.ports = { { "in", -0.5 * o.lead_length, 0.0, slice, +1 },
              { "out", o.straight_section + 0.5 * o.lead_length, 0.0, slice, -1 } };
  s.fixed.push_back({ rect(s.grid.x0, -hw, 0.0, hw), PolygonRole::Fixed });
  s.fixed.push_back({ rect(o.straight_section, -hw, s.grid.x_max(), hw),
                      PolygonRole::Fixed });
  s.initial = { { 0.0 }, { -o.straight_bound }, { o.straight_bound } };
  s.parameter_names = { "half_width_offset" };
  return s;
}

PolygonSet with_fixed(const DeviceSpec &spec) {
  PolygonSet out;
  out.polygons = spec.fixed;
  return out;
}

}  // namespace

// --- PolygonSet / DesignParams -------------------------------------------

void PolygonSet::add(std::vector<Vec2> vertices, PolygonRole role) {
  polygons.push_back({ std::move(vertices), role });
}

std::size_t PolygonSet::count(PolygonRole role) const {
  return static_cast<std::size_t>(
      std::count_if(polygons.begin(), polygons.end(),
                    [role](const Polygon &p) { return p.role == role; }));
}

double PolygonSet::area() const {
  double a = 0.0;
  for (const auto &p : polygons)
    a += std::abs(signed_area(p.vertices));
  return a;
}

void PolygonSet::validate() const {
  for (std::size_t p = 0; p < polygons.size(); ++p) {
    const auto &v = polygons[p].vertices;
    if (v.size() < 3)
      throw ValidationError("polygon " + std::to_string(p)
                            + " has fewer than 3 vertices");
    for (const auto &q : v)
      if (!std::isfinite(q.x) || !std::isfinite(q.y))
        throw ValidationError("polygon " + std::to_string(p)
                              + " has a non-finite vertex");
  }
}

double signed_area(const std::vector<Vec2> &loop) {
  double a = 0.0;
  for (std::size_t i = 0, n = loop.size(); i < n; ++i) {
    const Vec2 &p = loop[i], &q = loop[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

DesignParams DesignParams::with_values(std::vector<double> v) const {
  return { std::move(v), lower, upper };
}

void DesignParams::validate() const {
  if (lower.size() != values.size() || upper.size() != values.size())
    throw ValidationError("parameter values and bounds differ in length");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]))
      throw ValidationError("parameter " + std::to_string(i) + " is not finite");
    if (!(lower[i] <= values[i] && values[i] <= upper[i])) {
      std::ostringstream os;
      os << "parameter " << i << " = " << values[i] << " outside ["
         << lower[i] << ", " << upper[i] << "]";
      throw ValidationError(os.str());
    }
  }
}

std::string to_string(DeviceKind kind) {
  switch (kind) {
  case DeviceKind::YBranch:
    return "ybranch";
  case DeviceKind::SwgConverter:
    return "swg_converter";
  case DeviceKind::Straight:
    return "straight";
  }
  return "unknown";
}

DeviceKind device_kind_from_string(const std::string &name) {
  if (name == "ybranch")
    return DeviceKind::YBranch;
  if (name == "swg_converter")
    return DeviceKind::SwgConverter;
  if (name == "straight")
    return DeviceKind::Straight;
  throw ConfigError("device.kind", "unknown device kind '" + name
                                       + "' (ybranch, swg_converter, straight)");
}

void DeviceSpec::validate() const {
  grid.validate();
  const double pml_w = pml_cells * grid.dx;
  const Rect pml_free{ grid.x0 + pml_w, grid.y0 + pml_w, grid.x_max() - pml_w,
                       grid.y_max() - pml_w };
  if (!(design_region.x_min > pml_free.x_min && design_region.x_max < pml_free.x_max
        && design_region.y_min > pml_free.y_min
        && design_region.y_max < pml_free.y_max))
    throw ValidationError("design region must lie strictly inside the PML-free interior");
  if (ports.size() < 2)
    throw ValidationError("device needs an input and at least one output port");
  for (const auto &port : ports) {
    if (!pml_free.contains(port.x, port.y_center - port.half_extent)
        || !pml_free.contains(port.x + grid.dx, port.y_center + port.half_extent))
      throw ValidationError("port '" + port.name + "' is not inside the PML-free interior");
    if (port.x + grid.dx >= design_region.x_min && port.x <= design_region.x_max)
      throw ValidationError("port '" + port.name + "' overlaps the design region");
  }
}

DeviceSpec make_device(DeviceKind kind, const DeviceOptions &options, double dx,
                       int pml_cells) {
  if (!(dx > 0.0))
    throw ConfigError("grid.dx_nm", "cell size must be positive");
  if (pml_cells < 0)
    throw ConfigError("grid.pml_cells", "must be non-negative");
  DeviceSpec s;
  switch (kind) {
  case DeviceKind::YBranch:
    s = make_ybranch(options, dx, pml_cells);
    break;
  case DeviceKind::SwgConverter:
    s = make_swg(options, dx, pml_cells);
    break;
  case DeviceKind::Straight:
    s = make_straight(options, dx, pml_cells);
    break;
  }
  s.validate();
  return s;
}

// --- polygon builders -----------------------------------------------------

PolygonSet ybranch_polygons(const DeviceSpec &spec, const DesignParams &p) {
  if (spec.kind != DeviceKind::YBranch)
    throw ValidationError("ybranch_polygons called for " + to_string(spec.kind));
  check_count(spec, p);
  const auto &o = spec.options;

  const auto knots = uniform_knots(0.0, o.taper_length, o.ybranch_controls);
  const NaturalCubicSpline offset(knots, p.values);
  const auto xs = sample_positions(0.0, o.taper_length, knots);
  auto top = [&](double x) { return ybranch_baseline(o, x) + offset(x); };

  for (double x : xs) {
    const double y = top(x);
    if (!(y > 0.0)) {
      std::ostringstream os;
      os << "Y-branch boundary crosses the symmetry axis at x = " << x
         << " um (half-width " << y << " um)";
      throw ValidationError(os.str());
    }
    if (y >= spec.design_region.y_max) {
      std::ostringstream os;
      os << "Y-branch boundary leaves the design region at x = " << x << " um";
      throw ValidationError(os.str());
    }
  }

  PolygonSet out = with_fixed(spec);
  out.add(symmetric_loop(xs, top), PolygonRole::Design);
  return out;
}

PolygonSet swg_converter_polygons(const DeviceSpec &spec, const DesignParams &p) {
  if (spec.kind != DeviceKind::SwgConverter)
    throw ValidationError("swg_converter_polygons called for " + to_string(spec.kind));
  check_count(spec, p);
  const auto &o = spec.options;
  const auto k = static_cast<std::size_t>(o.swg_teeth);
  const auto m = static_cast<std::size_t>(o.swg_bridge_controls);
  const double length = swg_design_length(o);
  const double period = o.swg_period;
  const double minf = o.min_feature;
  const auto width = [&](std::size_t i) { return p.values[i]; };
  const auto tooth = [&](std::size_t i) { return p.values[k + i]; };

  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    total += tooth(i);
  if (total > length) {
    std::ostringstream os;
    os << "tooth lengths sum to " << total << " um, exceeding the "
       << length << " um design region";
    throw ValidationError(os.str());
  }
  for (std::size_t i = 0; i < k; ++i) {
    std::ostringstream os;
    if (width(i) < minf)
      os << "tooth " << i << " width " << width(i);
    else if (tooth(i) < minf)
      os << "tooth " << i << " length " << tooth(i);
    else if (tooth(i) >= period)
      throw ValidationError("tooth " + std::to_string(i)
                            + " overlaps its neighbour (length >= period)");
    else if (period - tooth(i) < minf)
      os << "gap after tooth " << i << " of " << period - tooth(i);
    else
      continue;
    os << " um is below the minimum feature size " << minf << " um";
    throw ValidationError(os.str());
  }

  // Bridge half-width: V-shaped baseline plus a spline through the offsets;
  // the end points are pinned so the bridge meets the strips.
  const auto knots = uniform_knots(0.0, length, static_cast<int>(m));
  std::vector<double> offs(m);
  for (std::size_t j = 1; j + 1 < m; ++j)
    offs[j] = p.values[2 * k + j];
  const NaturalCubicSpline offset(knots, offs);
  const double hend = 0.5 * o.strip_width, hc = o.bridge_center_half_width;
  auto bridge = [&](double x) {
    const double base = hc + (hend - hc) * std::abs(2.0 * x / length - 1.0);
    return std::max(0.0, base + offset(x));
  };

  PolygonSet out = with_fixed(spec);
  for (std::size_t i = 0; i < k; ++i) {
    const double xa = i * period, xb = xa + tooth(i), xc = (i + 1) * period;
    const double hw = 0.5 * width(i);
    const double mid[] = { 0.5 * length };
    out.add(symmetric_loop(sample_positions(xa, xb, mid),
                           [&](double x) { return std::max(hw, bridge(x)); }),
            PolygonRole::Tooth);
    const auto gap = sample_positions(xb, xc, mid);
    if (std::any_of(gap.begin(), gap.end(), [&](double x) { return bridge(x) > 0.0; }))
      out.add(symmetric_loop(gap, bridge), PolygonRole::Bridge);
  }
  return out;
}

PolygonSet straight_polygons(const DeviceSpec &spec, const DesignParams &p) {
  if (spec.kind != DeviceKind::Straight)
    throw ValidationError("straight_polygons called for " + to_string(spec.kind));
  check_count(spec, p);
  const double hw = 0.5 * spec.options.strip_width + p.values[0];
  if (!(hw > 0.0))
    throw ValidationError("straight section half-width must be positive");
  PolygonSet out = with_fixed(spec);
  out.add(rect(0.0, -hw, spec.options.straight_section, hw), PolygonRole::Design);
  return out;
}

PolygonSet device_polygons(const DeviceSpec &spec, const DesignParams &p) {
  switch (spec.kind) {
  case DeviceKind::YBranch:
    return ybranch_polygons(spec, p);
  case DeviceKind::SwgConverter:
    return swg_converter_polygons(spec, p);
  case DeviceKind::Straight:
    return straight_polygons(spec, p);
  }
  throw ValidationError("unknown device kind");
}

ScalarField mask_jacobian_column(const DeviceSpec &spec, const DesignParams &p,
                                 std::size_t i, double h) {
  if (i >= p.size())
    throw ValidationError("parameter index " + std::to_string(i) + " out of range");
  if (!(h > 0.0))
    throw ValidationError("finite-difference step must be positive");

  auto shifted = p.values;
  double step = h;
  if (!p.upper.empty() && shifted[i] + h > p.upper[i])
    step = -h;
  shifted[i] += step;

  const DensityGrid base = rasterize(device_polygons(spec, p), spec.grid);
  const DensityGrid moved =
      rasterize(device_polygons(spec, p.with_values(std::move(shifted))), spec.grid);
  return { spec.grid, (moved.values - base.values) / step };
}

SparseColumn to_sparse(const ScalarField &column) {
  SparseColumn out;
  for (Eigen::Index k = 0; k < column.values.size(); ++k) {
    if (column.values[k] != 0.0) {  // NOLINT(clang-diagnostic-float-equal)
      out.cells.push_back(k);
      out.values.push_back(column.values[k]);
    }
  }
  return out;
}

std::uint64_t parameter_hash(const std::vector<double> &values) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace faid
