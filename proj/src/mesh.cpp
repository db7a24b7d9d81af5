#include "bev/mesh.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <utility>

#include "bev/oracle.hpp"

namespace bev {

bool TriMesh::watertight(const Object& obj) const {
  std::map<std::pair<int, int>, int> edge_count;
  for (std::size_t f = obj.face_begin; f < obj.face_end; ++f) {
    const auto& tri = faces[f];
    for (int e = 0; e < 3; ++e) {
      int a = tri[e], b = tri[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      ++edge_count[{a, b}];
    }
  }
  for (const auto& [edge, count] : edge_count) {
    if (count != 2) return false;
  }
  return !edge_count.empty();
}

bool TriMesh::all_objects_watertight() const {
  for (const auto& obj : objects) {
    if (!watertight(obj)) return false;
  }
  return !objects.empty();
}

int TriMesh::euler_characteristic(const Object& obj) const {
  std::map<std::pair<int, int>, int> edges;
  std::map<int, int> verts;
  for (std::size_t f = obj.face_begin; f < obj.face_end; ++f) {
    const auto& tri = faces[f];
    for (int e = 0; e < 3; ++e) {
      int a = tri[e], b = tri[(e + 1) % 3];
      verts[a] = 1;
      if (a > b) std::swap(a, b);
      edges[{a, b}] = 1;
    }
  }
  const auto n_faces = static_cast<int>(obj.face_end - obj.face_begin);
  return static_cast<int>(verts.size()) - static_cast<int>(edges.size()) +
         n_faces;
}

void TriMesh::save_obj(const std::string& path, double scale_mm) const {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write OBJ: " + path);
  out.precision(17);
  out << "# blade envelope loft, units: millimeters, scale " << scale_mm
      << "\n";
  for (const auto& v : vertices) {
    out << "v " << v.x() * scale_mm << " " << v.y() * scale_mm << " "
        << v.z() * scale_mm << "\n";
  }
  for (const auto& obj : objects) {
    out << "o " << obj.name << "\n";
    for (std::size_t f = obj.face_begin; f < obj.face_end; ++f) {
      out << "f " << faces[f][0] + 1 << " " << faces[f][1] + 1 << " "
          << faces[f][2] + 1 << "\n";
    }
  }
  std::size_t base = vertices.size();
  for (const auto& line : polylines) {
    out << "o " << line.name << "\n";
    for (const auto& p : line.points) {
      out << "v " << p.x() * scale_mm << " " << p.y() * scale_mm << " "
          << p.z() * scale_mm << "\n";
    }
    out << "l";
    for (std::size_t i = 0; i < line.points.size(); ++i) {
      out << " " << base + i + 1;
    }
    if (line.closed) out << " " << base + 1;
    out << "\n";
    base += line.points.size();
  }
}

std::vector<std::array<int, 3>> triangulate_polygon(const Eigen::MatrixXd& pts) {
  const int n = static_cast<int>(pts.rows());
  if (n < 3) throw numeric_error("polygon needs at least 3 vertices");
  double area2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto p = pts.row(i);
    const auto q = pts.row((i + 1) % n);
    area2 += p.x() * q.y() - q.x() * p.y();
  }
  const double orient = area2 >= 0.0 ? 1.0 : -1.0;

  std::vector<int> ring(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ring[static_cast<std::size_t>(i)] = i;
  std::vector<std::array<int, 3>> tris;

  auto cross = [&](int a, int b, int c) {
    const double abx = pts(b, 0) - pts(a, 0), aby = pts(b, 1) - pts(a, 1);
    const double acx = pts(c, 0) - pts(a, 0), acy = pts(c, 1) - pts(a, 1);
    return abx * acy - aby * acx;
  };
  auto inside = [&](int a, int b, int c, int p) {
    const double d1 = cross(a, b, p) * orient;
    const double d2 = cross(b, c, p) * orient;
    const double d3 = cross(c, a, p) * orient;
    return d1 >= -1e-14 && d2 >= -1e-14 && d3 >= -1e-14;
  };

  int guard = 0;
  while (ring.size() > 3) {
    bool clipped = false;
    for (std::size_t i = 0; i < ring.size(); ++i) {
      const int a = ring[(i + ring.size() - 1) % ring.size()];
      const int b = ring[i];
      const int c = ring[(i + 1) % ring.size()];
      if (cross(a, b, c) * orient <= 1e-16) continue;  // reflex or flat
      bool ear = true;
      for (int p : ring) {
        if (p == a || p == b || p == c) continue;
        if (inside(a, b, c, p)) {
          ear = false;
          break;
        }
      }
      if (ear) {
        tris.push_back({a, b, c});
        ring.erase(ring.begin() + static_cast<std::ptrdiff_t>(i));
        clipped = true;
        break;
      }
    }
    if (!clipped) {
      if (++guard > n) throw numeric_error("ear clipping failed: bad polygon");
      // Fall back to clipping the sharpest convex corner even if another
      // vertex touches it numerically.
      double best = -1.0;
      std::size_t best_i = 0;
      for (std::size_t i = 0; i < ring.size(); ++i) {
        const int a = ring[(i + ring.size() - 1) % ring.size()];
        const int b = ring[i];
        const int c = ring[(i + 1) % ring.size()];
        const double cr = cross(a, b, c) * orient;
        if (cr > best) {
          best = cr;
          best_i = i;
        }
      }
      const std::size_t i = best_i;
      tris.push_back({ring[(i + ring.size() - 1) % ring.size()], ring[i],
                      ring[(i + 1) % ring.size()]});
      ring.erase(ring.begin() + static_cast<std::ptrdiff_t>(i));
    }
  }
  tris.push_back({ring[0], ring[1], ring[2]});
  return tris;
}

namespace {

// Closed tube over the profile: two rings, quad sides split into
// triangles, ear-clipped caps.
void append_tube(TriMesh* mesh, const std::string& name,
                 const Eigen::MatrixXd& profile2d, double span) {
  const int n = static_cast<int>(profile2d.rows());
  const int base = static_cast<int>(mesh->vertices.size());
  for (int ring = 0; ring < 2; ++ring) {
    const double z = ring == 0 ? 0.0 : span;
    for (int i = 0; i < n; ++i) {
      mesh->vertices.emplace_back(profile2d(i, 0), profile2d(i, 1), z);
    }
  }
  TriMesh::Object obj;
  obj.name = name;
  obj.face_begin = mesh->faces.size();
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    mesh->faces.push_back({base + i, base + j, base + n + i});
    mesh->faces.push_back({base + j, base + n + j, base + n + i});
  }
  const auto cap = triangulate_polygon(profile2d);
  for (const auto& t : cap) {
    mesh->faces.push_back({base + t[0], base + t[2], base + t[1]});
    mesh->faces.push_back({base + n + t[0], base + n + t[1], base + n + t[2]});
  }
  obj.face_end = mesh->faces.size();
  mesh->objects.push_back(obj);
}

}  // namespace

TriMesh export_envelope_mesh(const EnvelopeBand& band, double span,
                             const std::vector<double>& contour_levels,
                             bool levels_absolute) {
  if (span <= 0.0) throw config_error("span must be positive");
  band.validate();
  const Eigen::Index n = band.nominal.n_nodes();
  const Eigen::MatrixXd normals = profile_normals(band.nominal);

  TriMesh mesh;
  append_tube(&mesh, "nominal", band.nominal.nodes, span);

  const double max_disp =
      std::max(band.upper.maxCoeff(), band.lower.cwiseAbs().maxCoeff());
  if (max_disp <= 0.0) {
    std::cerr << "warning: degenerate band (upper == lower == 0); emitting "
                 "nominal-only mesh\n";
    return mesh;
  }

  Eigen::MatrixXd outer(n, 2), inner(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    outer.row(i) = band.nominal.nodes.row(i) + band.upper[i] * normals.row(i);
    inner.row(i) = band.nominal.nodes.row(i) + band.lower[i] * normals.row(i);
  }
  append_tube(&mesh, "outer", outer, span);
  append_tube(&mesh, "inner", inner, span);

  for (double level : contour_levels) {
    for (int side = 0; side < 2; ++side) {
      TriMesh::Polyline line;
      line.name = "contour_" + std::to_string(level) +
                  (side == 0 ? "_outer" : "_inner");
      line.closed = true;
      for (Eigen::Index i = 0; i < n; ++i) {
        // Offsets are clamped inside the band so contours stay simple even
        // where the profile is thin and constant offsets would cross.
        double offset;
        if (levels_absolute) {
          offset = side == 0 ? std::min(level, band.upper[i])
                             : std::max(-level, band.lower[i]);
        } else {
          offset = side == 0 ? level * band.upper[i] : level * band.lower[i];
        }
        const Eigen::Vector2d p = band.nominal.nodes.row(i).transpose() +
                                  offset * normals.row(i).transpose();
        line.points.emplace_back(p.x(), p.y(), 0.5 * span);
      }
      mesh.polylines.push_back(std::move(line));
    }
  }
  return mesh;
}

}  // namespace bev
