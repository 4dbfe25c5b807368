#include "basis.hpp"

#include <cmath>

#include "common.hpp"

namespace hybem {

PyramidBasis::PyramidBasis(const TriangleSurface& s) : surface_(&s) {
  vert_tris_.resize(s.vertices.size());
  for (size_t t = 0; t < s.triangles.size(); ++t)
    for (int k = 0; k < 3; ++k) vert_tris_[s.triangles[t][k]].push_back(static_cast<int>(t));
}

double PyramidBasis::eval(int vertex_dof, const Eigen::Vector3d& r) const {
  const auto& s = *surface_;
  for (int t : vert_tris_[vertex_dof]) {
    const Eigen::Vector3d a = s.tri_vertex(t, 0), b = s.tri_vertex(t, 1), c = s.tri_vertex(t, 2);
    const Eigen::Vector3d n = s.tri_normal[t];
    const double diam = s.diameter(t);
    if (std::abs(n.dot(r - a)) > 1e-9 * diam) continue;
    // In-plane barycentric coordinates.
    const double two_area = 2.0 * s.tri_area[t];
    const double wa = n.dot((b - r).cross(c - r)) / two_area;
    const double wb = n.dot((c - r).cross(a - r)) / two_area;
    const double wc = 1.0 - wa - wb;
    const double tol = 1e-9;
    if (wa < -tol || wb < -tol || wc < -tol) continue;
    for (int k = 0; k < 3; ++k)
      if (s.triangles[t][k] == vertex_dof) return k == 0 ? wa : (k == 1 ? wb : wc);
  }
  fail(ErrorCode::invalid, "point outside the support of the vertex function");
}

SwgBasis::SwgBasis(const TetRegion& region) : region_(&region) {
  tet_dofs_.resize(region.tets.size());
  std::vector<int> filled(region.tets.size(), 0);
  face_area_.resize(region.faces.size());
  for (size_t f = 0; f < region.faces.size(); ++f) {
    const auto& face = region.faces[f];
    const Eigen::Vector3d a = region.vertices[face.v[0]], b = region.vertices[face.v[1]],
                          c = region.vertices[face.v[2]];
    face_area_[f] = 0.5 * (b - a).cross(c - a).norm();
    for (int side = 0; side < 2; ++side) {
      const int t = side == 0 ? face.t0 : face.t1;
      if (t < 0) continue;
      int opposite = -1;
      for (int k = 0; k < 4; ++k) {
        const int v = region.tets[t][k];
        if (v != face.v[0] && v != face.v[1] && v != face.v[2]) opposite = v;
      }
      TetDof d;
      d.dof = static_cast<int>(f);
      d.sign = side == 0 ? 1.0 : -1.0;
      d.opposite = opposite;
      tet_dofs_[t][filled[t]++] = d;
    }
  }
}

Eigen::Vector3d SwgBasis::value_in_tet(int t, const TetDof& d, const Eigen::Vector3d& r) const {
  return d.sign / (3.0 * region_->volume[t]) * (r - region_->vertices[d.opposite]);
}

bool SwgBasis::tet_contains(int t, const Eigen::Vector3d& r) const {
  const auto& k = region_->tets[t];
  const Eigen::Vector3d v0 = region_->vertices[k[0]];
  Eigen::Matrix3d m;
  m.col(0) = region_->vertices[k[1]] - v0;
  m.col(1) = region_->vertices[k[2]] - v0;
  m.col(2) = region_->vertices[k[3]] - v0;
  const Eigen::Vector3d x = m.partialPivLu().solve(r - v0);
  const double tol = 1e-10;
  return x[0] >= -tol && x[1] >= -tol && x[2] >= -tol && x.sum() <= 1.0 + tol;
}

Eigen::Vector3d SwgBasis::eval(int dof, const Eigen::Vector3d& r) const {
  const auto& face = region_->faces[dof];
  for (int t : {face.t0, face.t1}) {
    if (t < 0 || !tet_contains(t, r)) continue;
    for (const auto& d : tet_dofs_[t])
      if (d.dof == dof) return value_in_tet(t, d, r);
  }
  fail(ErrorCode::invalid, "point outside the support of the face function");
}

double SwgBasis::divergence(int dof, int tet) const {
  for (const auto& d : tet_dofs_[tet])
    if (d.dof == dof) return d.sign / region_->volume[tet];
  fail(ErrorCode::invalid, "tet outside the support of the face function");
}

WireHatBasis::WireHatBasis(const WireBundle& bundle) : bundle_(&bundle) {
  arcs_.resize(bundle.fibers.size());
  for (size_t f = 0; f < bundle.fibers.size(); ++f) {
    const auto& fiber = bundle.fibers[f];
    const int nn = static_cast<int>(fiber.nodes.size());
    arcs_[f].resize(nn);
    arcs_[f][0] = 0.0;
    for (int k = 1; k < nn; ++k)
      arcs_[f][k] = arcs_[f][k - 1] + (fiber.nodes[k] - fiber.nodes[k - 1]).norm();

    const int dof_base = static_cast<int>(dofs_.size());
    for (int k = 1; k + 1 < nn; ++k) dofs_.push_back({static_cast<int>(f), k});
    for (int k = 0; k + 1 < nn; ++k) {
      Segment seg;
      seg.fiber = static_cast<int>(f);
      seg.index = k;
      seg.length = arcs_[f][k + 1] - arcs_[f][k];
      seg.dof_a = k >= 1 ? dof_base + (k - 1) : -1;
      seg.dof_b = k + 2 < nn ? dof_base + k : -1;
      segments_.push_back(seg);
    }
  }
}

double WireHatBasis::eval(int dof, double arclength) const {
  const Dof& d = dofs_[dof];
  const auto& arc = arcs_[d.fiber];
  const double lo = arc[d.node - 1], mid = arc[d.node], hi = arc[d.node + 1];
  const double tol = 1e-12 * arc.back();
  if (arclength < lo - tol || arclength > hi + tol)
    fail(ErrorCode::invalid, "arclength outside the support of the node function");
  if (arclength <= mid) return std::max(0.0, (arclength - lo) / (mid - lo));
  return std::max(0.0, (hi - arclength) / (hi - mid));
}

}  // namespace hybem
