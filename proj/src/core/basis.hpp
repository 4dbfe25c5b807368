#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "geometry.hpp"

namespace hybem {

// Continuous piecewise-linear vertex functions on a triangle surface.
class PyramidBasis {
 public:
  explicit PyramidBasis(const TriangleSurface& s);

  const TriangleSurface& surface() const { return *surface_; }
  int dof_count() const { return static_cast<int>(surface_->vertices.size()); }

  // Hat value of vertex_dof at a point on the surface; the point must lie on
  // a triangle touching the vertex.
  double eval(int vertex_dof, const Eigen::Vector3d& r) const;

  const std::vector<int>& triangles_of_vertex(int v) const { return vert_tris_[v]; }

 private:
  const TriangleSurface* surface_;
  std::vector<std::vector<int>> vert_tris_;
};

// Face-based divergence-conforming functions on a tet region, one DoF per
// face including boundary faces (half functions). Normalized to unit flux
// through the defining face, oriented from the face's first tet to its
// second (outward on the boundary).
class SwgBasis {
 public:
  explicit SwgBasis(const TetRegion& region);

  const TetRegion& region() const { return *region_; }
  int dof_count() const { return static_cast<int>(region_->faces.size()); }

  struct TetDof {
    int dof = -1;       // face index
    double sign = 0.0;  // +1 when this tet is the face's first tet
    int opposite = -1;  // global index of the tet vertex off the face
  };

  // The (up to 4) DoFs supported on tet t, one per face of the tet.
  const std::array<TetDof, 4>& dofs_of_tet(int t) const { return tet_dofs_[t]; }

  // Value of the basis function inside tet t: sign/(3V) * (r - v_opposite).
  Eigen::Vector3d value_in_tet(int t, const TetDof& d, const Eigen::Vector3d& r) const;

  Eigen::Vector3d eval(int dof, const Eigen::Vector3d& r) const;  // fails outside support
  double divergence(int dof, int tet) const;                      // fails outside support

  double face_area(int dof) const { return face_area_[dof]; }

 private:
  const TetRegion* region_;
  std::vector<std::array<TetDof, 4>> tet_dofs_;
  std::vector<double> face_area_;

  bool tet_contains(int t, const Eigen::Vector3d& r) const;
};

// Piecewise-linear hats over fiber arclength, one DoF per interior node.
// No endpoint DoFs: the carried current vanishes at fiber tips.
class WireHatBasis {
 public:
  explicit WireHatBasis(const WireBundle& bundle);

  const WireBundle& bundle() const { return *bundle_; }
  int dof_count() const { return static_cast<int>(dofs_.size()); }

  struct Dof {
    int fiber = -1;
    int node = -1;  // interior node index within the fiber
  };
  const std::vector<Dof>& dofs() const { return dofs_; }

  struct Segment {
    int fiber = -1, index = -1;
    double length = 0.0;
    int dof_a = -1, dof_b = -1;  // hats of the two end nodes, -1 at fiber tips
  };
  const std::vector<Segment>& segments() const { return segments_; }

  double node_arclength(int fiber, int node) const { return arcs_[fiber][node]; }

  // Hat value at an arclength position along the DoF's own fiber.
  double eval(int dof, double arclength) const;

 private:
  const WireBundle* bundle_;
  std::vector<Dof> dofs_;
  std::vector<Segment> segments_;
  std::vector<std::vector<double>> arcs_;  // cumulative node arclengths per fiber
};

}  // namespace hybem
