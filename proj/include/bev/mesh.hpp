#pragma once

#include <Eigen/Core>
#include <array>
#include <string>
#include <vector>

#include "bev/envelope.hpp"

namespace bev {

/// Triangle mesh with named sub-objects and embedded polylines, writable
/// as Wavefront OBJ.
struct TriMesh {
  struct Object {
    std::string name;
    std::size_t face_begin = 0;
    std::size_t face_end = 0;  // exclusive
  };
  struct Polyline {
    std::string name;
    std::vector<Eigen::Vector3d> points;
    bool closed = true;
  };

  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> faces;  // zero-based indices
  std::vector<Object> objects;
  std::vector<Polyline> polylines;

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t face_count() const { return faces.size(); }

  // Every edge of the object shared by exactly two of its faces.
  bool watertight(const Object& obj) const;
  bool all_objects_watertight() const;
  int euler_characteristic(const Object& obj) const;

  void save_obj(const std::string& path, double scale_mm = 1.0) const;
};

// Ear-clipping triangulation of a simple closed polygon, either winding.
std::vector<std::array<int, 3>> triangulate_polygon(const Eigen::MatrixXd& pts);

// Watertight loft of the envelope: the nominal profile extruded over
// `span`, inner/outer surfaces at the band's lower/upper offsets, and one
// closed iso-contour polyline pair per requested displacement level.
// Levels are fractions of the per-node band bounds; with levels_absolute
// they are displacements clamped into the band (so contours never cross
// where the profile is thin). A degenerate band (upper == lower == 0)
// emits the nominal tube only.
TriMesh export_envelope_mesh(const EnvelopeBand& band, double span,
                             const std::vector<double>& contour_levels,
                             bool levels_absolute = false);

}  // namespace bev
