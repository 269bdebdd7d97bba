#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "faid/grid.hpp"

namespace faid {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Vec2 &) const = default;
};

enum class PolygonRole { Fixed, Design, Tooth, Bridge };

struct Polygon {
  std::vector<Vec2> vertices;
  PolygonRole role = PolygonRole::Fixed;
};

/// Closed loops in um. Interiors of distinct polygons must not overlap;
/// shared edges are fine.
struct PolygonSet {
  std::vector<Polygon> polygons;

  void add(std::vector<Vec2> vertices, PolygonRole role);
  std::size_t count(PolygonRole role) const;
  double area() const;
  /// Throws ValidationError on a loop with < 3 vertices or a non-finite
  /// coordinate.
  void validate() const;
};

/// Signed shoelace area; positive for counter-clockwise loops.
double signed_area(const std::vector<Vec2> &loop);

/// Design vector with box bounds.
struct DesignParams {
  std::vector<double> values;
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t size() const { return values.size(); }
  /// Same bounds, new values.
  DesignParams with_values(std::vector<double> v) const;
  void validate() const;
};

enum class DeviceKind { YBranch, SwgConverter, Straight };

std::string to_string(DeviceKind kind);
DeviceKind device_kind_from_string(const std::string &name);

struct Rect {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;

  bool contains(double x, double y) const {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }
};

/// Modal port on a vertical slice. The source and the outgoing-wave
/// measurement both use columns `column` and `column + 1`.
struct Port {
  std::string name;
  double x = 0.0;         // um; the port occupies the cell column holding x
  double y_center = 0.0;  // um
  double half_extent = 0.0;
  int inward = +1;  // +1 when the device lies toward larger x
};

/// Knobs shared by the device builders. Lengths in um.
struct DeviceOptions {
  double min_feature = 0.060;
  double lead_length = 0.8;
  double clearance = 0.54;
  double strip_width = 0.5;

  // Y-branch
  int ybranch_controls = 10;
  double taper_length = 2.0;
  double junction_width = 1.2;
  double arm_gap = 0.2;
  double sbend_length = 1.6;
  double arm_pitch = 1.6;  // centre-to-centre at the output ports
  double boundary_bound = 0.15;

  // SWG-to-strip converter pair
  int swg_teeth = 15;
  int swg_bridge_controls = 8;
  double swg_period = 0.240;
  double tooth_width_min = 0.40;
  double tooth_width_max = 0.80;
  double tooth_length_min = 0.060;
  double tooth_length_max = 0.180;
  double bridge_center_half_width = 0.0;
  double bridge_bound = 0.10;

  // Straight test waveguide
  double straight_section = 1.0;
  double straight_bound = 0.05;
};

/// A device together with the simulation grid it lives on.
struct DeviceSpec {
  DeviceKind kind = DeviceKind::Straight;
  DeviceOptions options;
  GridSpec grid;
  int pml_cells = 0;
  Rect interior;       // PML-free region
  Rect design_region;  // the only region parameters can change
  std::vector<Port> ports;  // ports[0] is the input
  std::vector<Polygon> fixed;
  DesignParams initial;  // p0 = mid-bounds
  std::vector<std::string> parameter_names;

  std::size_t parameter_count() const { return initial.size(); }
  /// Checks the port / design-region / PML layout rules.
  void validate() const;
};

/// Builds the device with square cells of size dx and `pml_cells` absorbing
/// cells on every side.
DeviceSpec make_device(DeviceKind kind, const DeviceOptions &options, double dx,
                       int pml_cells);

PolygonSet ybranch_polygons(const DeviceSpec &spec, const DesignParams &p);
PolygonSet swg_converter_polygons(const DeviceSpec &spec, const DesignParams &p);
PolygonSet straight_polygons(const DeviceSpec &spec, const DesignParams &p);
/// Dispatches on spec.kind.
PolygonSet device_polygons(const DeviceSpec &spec, const DesignParams &p);

/// Exact area-weighted coverage of the polygons on the grid.
DensityGrid rasterize(const PolygonSet &poly, const GridSpec &grid);

/// Forward difference of the rasterized mask with respect to parameter i.
/// Falls back to a backward difference when p_i + h would leave the box.
ScalarField mask_jacobian_column(const DeviceSpec &spec, const DesignParams &p,
                                 std::size_t i, double h);

/// Sparse form used by the gradient code: (cell index, d mask / d p_i).
struct SparseColumn {
  std::vector<Eigen::Index> cells;
  std::vector<double> values;
};

SparseColumn to_sparse(const ScalarField &column);

/// FNV-1a over the raw bytes of the values; used to tag exported geometry.
std::uint64_t parameter_hash(const std::vector<double> &values);

}  // namespace faid
