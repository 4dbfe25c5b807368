#include "core/operators.hpp"

#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "core/common.hpp"
#include "core/kernels.hpp"
#include "core/quadrature.hpp"

namespace hybem {

using Eigen::Matrix3Xd;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

namespace {

constexpr double kFourPi = 4.0 * kPi;

// Elements closer than twice their own diameter to the observation point use
// the closed-form integrals, everything else the fixed product rules.
double near_radius2(double diameter) { return 4.0 * diameter * diameter; }

// Test and trial elements whose centroids are closer than this form a nearly
// singular pair; their Galerkin entries use a graded outer subdivision with
// the closed-form inner integrals instead of the shared point rows.
bool pair_near(const Vector3d& ct, double dt, const Vector3d& cs, double ds) {
  const double lim = dt + 2.0 * ds;
  return (ct - cs).squaredNorm() <= lim * lim;
}

// Closest-point distances drive the graded subdivision, so cells stop
// splitting as soon as they are separated from the trial element itself
// rather than from its bounding sphere.
double point_seg_dist2(const Vector3d& a, const Vector3d& b, const Vector3d& p) {
  const Vector3d ab = b - a;
  const double den = ab.squaredNorm();
  const double t = den > 0.0 ? std::clamp(ab.dot(p - a) / den, 0.0, 1.0) : 0.0;
  return (p - a - t * ab).squaredNorm();
}

double point_tri_dist2(const Vector3d& a, const Vector3d& b, const Vector3d& c,
                       const Vector3d& p) {
  const Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return ap.squaredNorm();
  const Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return bp.squaredNorm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return (ap - v * ab).squaredNorm();
  }
  const Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return cp.squaredNorm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return (ap - w * ac).squaredNorm();
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (bp - w * (c - b)).squaredNorm();
  }
  const double den = va + vb + vc;
  const double v = vb / den, w = vc / den;
  return (ap - v * ab - w * ac).squaredNorm();
}

struct TriQuad {
  Vector3d x;
  double wl[3];  // rule weight * vertex hat * two_area
};

struct SurfaceGeom {
  struct Tri {
    Vector3d a, b, c, centroid, nhat;
    std::array<int, 3> verts;
    double near2 = 0.0, two_area = 0.0, diam = 0.0;
  };
  std::vector<Tri> tris;
  std::vector<std::vector<TriQuad>> far_pts;
};

struct OuterPt {
  Vector3d x;
  double w = 0.0;    // includes the physical jacobian
  double l[3] = {};  // hats of the parent triangle
};

// Outer quadrature for a nearly singular pair: cells are split until they are
// farther from the trial element than their own size, so the grading follows
// the strength of the singularity. dist2 maps a point to its squared distance
// from the nonsmooth feature of the trial kernel.
template <typename Dist2Fn>
void graded_outer_pts(const Vector3d& a, const Vector3d& b, const Vector3d& c,
                      const Dist2Fn& dist2, double u0, double v0, double u1,
                      double v1, double u2, double v2, int depth, std::vector<OuterPt>& out) {
  const auto corner = [&](double u, double v) { return Vector3d(a + u * (b - a) + v * (c - a)); };
  const Vector3d p0 = corner(u0, v0), p1 = corner(u1, v1), p2 = corner(u2, v2);
  const Vector3d pc = (p0 + p1 + p2) / 3.0;
  const double h = std::max({(p1 - p0).norm(), (p2 - p1).norm(), (p0 - p2).norm()});
  const double d2 = std::min(std::min(dist2(p0), dist2(p1)), std::min(dist2(p2), dist2(pc)));
  if (depth == 0 || d2 >= h * h) {
    const QuadratureRule& rule = tri_quadrature(4);
    const double two_area_uv = std::abs((u1 - u0) * (v2 - v0) - (u2 - u0) * (v1 - v0));
    const double two_area = (b - a).cross(c - a).norm();
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const double px = rule.points[q].x(), py = rule.points[q].y();
      OuterPt p;
      const double u = u0 + px * (u1 - u0) + py * (u2 - u0);
      const double v = v0 + px * (v1 - v0) + py * (v2 - v0);
      p.x = corner(u, v);
      p.w = rule.weights[q] * two_area_uv * two_area;
      p.l[0] = 1.0 - u - v;
      p.l[1] = u;
      p.l[2] = v;
      out.push_back(p);
    }
    return;
  }
  const double um0 = 0.5 * (u0 + u1), vm0 = 0.5 * (v0 + v1);
  const double um1 = 0.5 * (u1 + u2), vm1 = 0.5 * (v1 + v2);
  const double um2 = 0.5 * (u2 + u0), vm2 = 0.5 * (v2 + v0);
  graded_outer_pts(a, b, c, dist2, u0, v0, um0, vm0, um2, vm2, depth - 1, out);
  graded_outer_pts(a, b, c, dist2, um0, vm0, u1, v1, um1, vm1, depth - 1, out);
  graded_outer_pts(a, b, c, dist2, um2, vm2, um1, vm1, u2, v2, depth - 1, out);
  graded_outer_pts(a, b, c, dist2, um0, vm0, um1, vm1, um2, vm2, depth - 1, out);
}

constexpr int kGradedDepth = 7;

SurfaceGeom make_surface_geom(const PyramidBasis& basis) {
  const TriangleSurface& s = basis.surface();
  const QuadratureRule& rule = tri_quadrature(4);
  SurfaceGeom g;
  g.tris.resize(s.triangles.size());
  g.far_pts.resize(s.triangles.size());
  for (size_t t = 0; t < s.triangles.size(); ++t) {
    auto& tri = g.tris[t];
    tri.a = s.tri_vertex(t, 0);
    tri.b = s.tri_vertex(t, 1);
    tri.c = s.tri_vertex(t, 2);
    tri.centroid = (tri.a + tri.b + tri.c) / 3.0;
    tri.nhat = s.tri_normal[t];
    tri.verts = s.triangles[t];
    tri.diam = s.diameter(t);
    tri.near2 = near_radius2(tri.diam);
    tri.two_area = 2.0 * s.tri_area[t];
    auto& pts = g.far_pts[t];
    pts.resize(rule.points.size());
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const double u = rule.points[q].x(), v = rule.points[q].y();
      pts[q].x = tri.a + u * (tri.b - tri.a) + v * (tri.c - tri.a);
      const double l[3] = {1.0 - u - v, u, v};
      for (int k = 0; k < 3; ++k) pts[q].wl[k] = rule.weights[q] * l[k] * tri.two_area;
    }
  }
  return g;
}

void add_single_layer_row(const SurfaceGeom& g, const Vector3d& x, double w, RowVectorXd& out) {
  const double c = w / kFourPi;
  for (size_t t = 0; t < g.tris.size(); ++t) {
    const auto& tri = g.tris[t];
    if ((x - tri.centroid).squaredNorm() <= tri.near2) {
      const TriangleIntegrals ti(tri.a, tri.b, tri.c, x);
      for (int k = 0; k < 3; ++k)
        out[tri.verts[k]] += c * ti.inv_r_affine(Vector3d::Unit(k));
    } else {
      for (const auto& qp : g.far_pts[t]) {
        const double invr = 1.0 / (x - qp.x).norm();
        for (int k = 0; k < 3; ++k) out[tri.verts[k]] += c * qp.wl[k] * invr;
      }
    }
  }
}

void add_single_layer_grad_proj_row(const SurfaceGeom& g, const Vector3d& x, const Vector3d& proj,
                                    double w, RowVectorXd& out,
                                    const unsigned char* skip = nullptr) {
  const double c = w / kFourPi;
  for (size_t t = 0; t < g.tris.size(); ++t) {
    if (skip && skip[t]) continue;
    const auto& tri = g.tris[t];
    if ((x - tri.centroid).squaredNorm() <= tri.near2) {
      const TriangleIntegrals ti(tri.a, tri.b, tri.c, x);
      for (int k = 0; k < 3; ++k)
        out[tri.verts[k]] += c * proj.dot(ti.grad_inv_r_affine(Vector3d::Unit(k)));
    } else {
      for (const auto& qp : g.far_pts[t]) {
        const Vector3d d = x - qp.x;
        const double r2 = d.squaredNorm();
        const double kern = -proj.dot(d) / (r2 * std::sqrt(r2));
        for (int k = 0; k < 3; ++k) out[tri.verts[k]] += c * qp.wl[k] * kern;
      }
    }
  }
}

void add_single_layer_grad_row(const SurfaceGeom& g, const Vector3d& x, double w, Matrix3Xd& out) {
  const double c = w / kFourPi;
  for (size_t t = 0; t < g.tris.size(); ++t) {
    const auto& tri = g.tris[t];
    if ((x - tri.centroid).squaredNorm() <= tri.near2) {
      const TriangleIntegrals ti(tri.a, tri.b, tri.c, x);
      for (int k = 0; k < 3; ++k)
        out.col(tri.verts[k]) += c * ti.grad_inv_r_affine(Vector3d::Unit(k));
    } else {
      for (const auto& qp : g.far_pts[t]) {
        const Vector3d d = x - qp.x;
        const double r2 = d.squaredNorm();
        const Vector3d kern = -d / (r2 * std::sqrt(r2));
        for (int k = 0; k < 3; ++k) out.col(tri.verts[k]) += (c * qp.wl[k]) * kern;
      }
    }
  }
}

// The volume radiation is assembled from its charge representation: a Newton
// potential of the constant divergence in each tet plus a single layer of the
// normal trace on region boundary faces. Interior faces carry no layer since
// the normal component of the basis is continuous there.
struct RegionGeom {
  struct Tet {
    std::array<Vector3d, 4> v;
    Vector3d centroid;
    double near2 = 0.0, vol = 0.0, diam = 0.0;
    std::array<SwgBasis::TetDof, 4> dofs;
  };
  std::vector<Tet> tets;
  std::vector<std::vector<std::pair<Vector3d, double>>> tet_pts;  // weight includes 6V
  struct BFace {
    int dof = -1;
    Vector3d a, b, c, centroid;
    double near2 = 0.0, area = 0.0, diam = 0.0;
    std::vector<std::pair<Vector3d, double>> pts;  // weight includes 2A
  };
  std::vector<BFace> bfaces;
};

RegionGeom make_region_geom(const SwgBasis& basis) {
  const TetRegion& r = basis.region();
  RegionGeom g;
  g.tets.resize(r.tets.size());
  g.tet_pts.resize(r.tets.size());
  const QuadratureRule& vrule = tet_quadrature(3);
  for (size_t t = 0; t < r.tets.size(); ++t) {
    auto& tet = g.tets[t];
    for (int k = 0; k < 4; ++k) tet.v[k] = r.vertices[r.tets[t][k]];
    tet.centroid = r.tet_centroid(static_cast<int>(t));
    tet.diam = r.tet_diameter(static_cast<int>(t));
    tet.near2 = near_radius2(tet.diam);
    tet.vol = r.volume[t];
    tet.dofs = basis.dofs_of_tet(static_cast<int>(t));
    auto& pts = g.tet_pts[t];
    pts.resize(vrule.points.size());
    for (size_t q = 0; q < vrule.points.size(); ++q) {
      const Vector3d& p = vrule.points[q];
      pts[q].first = tet.v[0] + p.x() * (tet.v[1] - tet.v[0]) + p.y() * (tet.v[2] - tet.v[0]) +
                     p.z() * (tet.v[3] - tet.v[0]);
      pts[q].second = vrule.weights[q] * 6.0 * tet.vol;
    }
  }
  const QuadratureRule& srule = tri_quadrature(4);
  for (size_t f = 0; f < r.faces.size(); ++f) {
    if (r.faces[f].t1 >= 0) continue;
    RegionGeom::BFace bf;
    bf.dof = static_cast<int>(f);
    bf.a = r.vertices[r.faces[f].v[0]];
    bf.b = r.vertices[r.faces[f].v[1]];
    bf.c = r.vertices[r.faces[f].v[2]];
    bf.centroid = (bf.a + bf.b + bf.c) / 3.0;
    const double two_area = (bf.b - bf.a).cross(bf.c - bf.a).norm();
    bf.area = 0.5 * two_area;
    bf.diam = std::max({(bf.b - bf.a).norm(), (bf.c - bf.b).norm(), (bf.a - bf.c).norm()});
    bf.near2 = near_radius2(bf.diam);
    bf.pts.resize(srule.points.size());
    for (size_t q = 0; q < srule.points.size(); ++q) {
      const double u = srule.points[q].x(), v = srule.points[q].y();
      bf.pts[q].first = bf.a + u * (bf.b - bf.a) + v * (bf.c - bf.a);
      bf.pts[q].second = srule.weights[q] * two_area;
    }
    g.bfaces.push_back(std::move(bf));
  }
  return g;
}

void add_volume_row(const RegionGeom& g, const Vector3d& x, double w, RowVectorXd& out) {
  const double c = w / kFourPi;
  for (size_t t = 0; t < g.tets.size(); ++t) {
    const auto& tet = g.tets[t];
    double newton = 0.0;
    if ((x - tet.centroid).squaredNorm() <= tet.near2) {
      newton = TetIntegrals(tet.v, x).newton();
    } else {
      for (const auto& qp : g.tet_pts[t]) newton += qp.second / (x - qp.first).norm();
    }
    for (const auto& d : tet.dofs) out[d.dof] += c * d.sign / tet.vol * newton;
  }
  for (const auto& f : g.bfaces) {
    double layer = 0.0;
    if ((x - f.centroid).squaredNorm() <= f.near2) {
      layer = TriangleIntegrals(f.a, f.b, f.c, x).inv_r();
    } else {
      for (const auto& qp : f.pts) layer += qp.second / (x - qp.first).norm();
    }
    out[f.dof] -= c / f.area * layer;
  }
}

void add_volume_grad_proj_row(const RegionGeom& g, const Vector3d& x, const Vector3d& proj,
                              double w, RowVectorXd& out, const unsigned char* skip_tet = nullptr,
                              const unsigned char* skip_face = nullptr) {
  const double c = w / kFourPi;
  for (size_t t = 0; t < g.tets.size(); ++t) {
    if (skip_tet && skip_tet[t]) continue;
    const auto& tet = g.tets[t];
    double newton = 0.0;
    if ((x - tet.centroid).squaredNorm() <= tet.near2) {
      newton = proj.dot(TetIntegrals(tet.v, x).grad_newton());
    } else {
      for (const auto& qp : g.tet_pts[t]) {
        const Vector3d d = x - qp.first;
        const double r2 = d.squaredNorm();
        newton -= qp.second * proj.dot(d) / (r2 * std::sqrt(r2));
      }
    }
    for (const auto& d : tet.dofs) out[d.dof] += c * d.sign / tet.vol * newton;
  }
  for (size_t fi = 0; fi < g.bfaces.size(); ++fi) {
    if (skip_face && skip_face[fi]) continue;
    const auto& f = g.bfaces[fi];
    double layer = 0.0;
    if ((x - f.centroid).squaredNorm() <= f.near2) {
      layer = proj.dot(TriangleIntegrals(f.a, f.b, f.c, x).grad_inv_r());
    } else {
      for (const auto& qp : f.pts) {
        const Vector3d d = x - qp.first;
        const double r2 = d.squaredNorm();
        layer -= qp.second * proj.dot(d) / (r2 * std::sqrt(r2));
      }
    }
    out[f.dof] -= c / f.area * layer;
  }
}

void add_volume_grad_row(const RegionGeom& g, const Vector3d& x, double w, Matrix3Xd& out) {
  const double c = w / kFourPi;
  for (size_t t = 0; t < g.tets.size(); ++t) {
    const auto& tet = g.tets[t];
    Vector3d newton = Vector3d::Zero();
    if ((x - tet.centroid).squaredNorm() <= tet.near2) {
      newton = TetIntegrals(tet.v, x).grad_newton();
    } else {
      for (const auto& qp : g.tet_pts[t]) {
        const Vector3d d = x - qp.first;
        const double r2 = d.squaredNorm();
        newton -= qp.second / (r2 * std::sqrt(r2)) * d;
      }
    }
    for (const auto& d : tet.dofs) out.col(d.dof) += c * d.sign / tet.vol * newton;
  }
  for (const auto& f : g.bfaces) {
    Vector3d layer = Vector3d::Zero();
    if ((x - f.centroid).squaredNorm() <= f.near2) {
      layer = TriangleIntegrals(f.a, f.b, f.c, x).grad_inv_r();
    } else {
      for (const auto& qp : f.pts) {
        const Vector3d d = x - qp.first;
        const double r2 = d.squaredNorm();
        layer -= qp.second / (r2 * std::sqrt(r2)) * d;
      }
    }
    out.col(f.dof) -= c / f.area * layer;
  }
}

// The wire radiates as the line charge density given by the hat slopes (the
// current is integrated by parts along the fiber; tips carry no charge since
// hats vanish there).
struct WireGeom {
  struct Seg {
    Vector3d a, b, centroid;
    double len = 0.0, near2 = 0.0, rad2 = 0.0;
    int fiber = -1, dof_a = -1, dof_b = -1;
  };
  std::vector<Seg> segs;
};

WireGeom make_wire_geom(const WireHatBasis& basis) {
  WireGeom g;
  const WireBundle& bundle = basis.bundle();
  for (const auto& s : basis.segments()) {
    WireGeom::Seg seg;
    const Fiber& f = bundle.fibers[s.fiber];
    seg.a = f.nodes[s.index];
    seg.b = f.nodes[s.index + 1];
    seg.centroid = 0.5 * (seg.a + seg.b);
    seg.len = s.length;
    seg.near2 = near_radius2(s.length);
    seg.rad2 = f.radius * f.radius;
    seg.fiber = s.fiber;
    seg.dof_a = s.dof_a;
    seg.dof_b = s.dof_b;
    g.segs.push_back(seg);
  }
  return g;
}

const std::vector<std::pair<double, double>>& segment_gauss3() {
  static const std::vector<std::pair<double, double>> pts = [] {
    std::vector<double> x, w;
    gauss_legendre_01(3, x, w);
    std::vector<std::pair<double, double>> out;
    for (size_t i = 0; i < x.size(); ++i) out.emplace_back(x[i], w[i]);
    return out;
  }();
  return pts;
}

void add_wire_row(const WireGeom& g, const Vector3d& x, int x_fiber, double w, RowVectorXd& out) {
  const double c = w / kFourPi;
  for (const auto& seg : g.segs) {
    const double off2 = seg.fiber == x_fiber ? seg.rad2 : 0.0;
    double integral = 0.0;
    if ((x - seg.centroid).squaredNorm() <= seg.near2) {
      integral = SegmentIntegrals(seg.a, seg.b, x, off2).inv_r();
    } else {
      for (const auto& [u, wu] : segment_gauss3()) {
        const Vector3d y = seg.a + u * (seg.b - seg.a);
        integral += wu * seg.len / std::sqrt((x - y).squaredNorm() + off2);
      }
    }
    const double v = c * integral / seg.len;
    if (seg.dof_b >= 0) out[seg.dof_b] += v;
    if (seg.dof_a >= 0) out[seg.dof_a] -= v;
  }
}

void add_wire_grad_proj_row(const WireGeom& g, const Vector3d& x, const Vector3d& proj, double w,
                            RowVectorXd& out, const unsigned char* skip = nullptr) {
  const double c = w / kFourPi;
  for (size_t si = 0; si < g.segs.size(); ++si) {
    if (skip && skip[si]) continue;
    const auto& seg = g.segs[si];
    double integral = 0.0;
    if ((x - seg.centroid).squaredNorm() <= seg.near2) {
      integral = proj.dot(SegmentIntegrals(seg.a, seg.b, x, 0.0).grad_inv_r());
    } else {
      for (const auto& [u, wu] : segment_gauss3()) {
        const Vector3d d = x - (seg.a + u * (seg.b - seg.a));
        const double r2 = d.squaredNorm();
        integral -= wu * seg.len * proj.dot(d) / (r2 * std::sqrt(r2));
      }
    }
    const double v = c * integral / seg.len;
    if (seg.dof_b >= 0) out[seg.dof_b] += v;
    if (seg.dof_a >= 0) out[seg.dof_a] -= v;
  }
}

void add_wire_grad_row(const WireGeom& g, const Vector3d& x, double w, Matrix3Xd& out) {
  const double c = w / kFourPi;
  for (const auto& seg : g.segs) {
    Vector3d integral = Vector3d::Zero();
    if ((x - seg.centroid).squaredNorm() <= seg.near2) {
      integral = SegmentIntegrals(seg.a, seg.b, x, 0.0).grad_inv_r();
    } else {
      for (const auto& [u, wu] : segment_gauss3()) {
        const Vector3d d = x - (seg.a + u * (seg.b - seg.a));
        const double r2 = d.squaredNorm();
        integral -= wu * seg.len / (r2 * std::sqrt(r2)) * d;
      }
    }
    const Vector3d v = c / seg.len * integral;
    if (seg.dof_b >= 0) out.col(seg.dof_b) += v;
    if (seg.dof_a >= 0) out.col(seg.dof_a) -= v;
  }
}

}  // namespace

MatrixXd mass_matrix(const PyramidBasis& basis) {
  const TriangleSurface& s = basis.surface();
  MatrixXd out = MatrixXd::Zero(basis.dof_count(), basis.dof_count());
  for (size_t t = 0; t < s.triangles.size(); ++t) {
    const double a12 = s.tri_area[t] / 12.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        out(s.triangles[t][i], s.triangles[t][j]) += a12 * (i == j ? 2.0 : 1.0);
  }
  return out;
}

MatrixXd adjoint_double_layer_block(const PyramidBasis& test, const PyramidBasis& trial) {
  const SurfaceGeom gt = make_surface_geom(test);
  const SurfaceGeom gs = make_surface_geom(trial);
  MatrixXd out = MatrixXd::Zero(test.dof_count(), trial.dof_count());
  RowVectorXd row(trial.dof_count());
  const QuadratureRule& rule = tri_quadrature(6);
  std::vector<unsigned char> skip(gs.tris.size());
  std::vector<OuterPt> pts;
  const bool same_basis = &test == &trial;
  for (size_t t = 0; t < gt.tris.size(); ++t) {
    const auto& tri = gt.tris[t];
    bool any_near = false;
    for (size_t s = 0; s < gs.tris.size(); ++s) {
      skip[s] = pair_near(tri.centroid, tri.diam, gs.tris[s].centroid, gs.tris[s].diam) ? 1 : 0;
      any_near |= skip[s] != 0;
    }
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const double u = rule.points[q].x(), v = rule.points[q].y();
      const Vector3d x = tri.a + u * (tri.b - tri.a) + v * (tri.c - tri.a);
      row.setZero();
      add_single_layer_grad_proj_row(gs, x, tri.nhat, rule.weights[q] * tri.two_area, row,
                                     any_near ? skip.data() : nullptr);
      const double l[3] = {1.0 - u - v, u, v};
      for (int k = 0; k < 3; ++k) out.row(tri.verts[k]) += l[k] * row;
    }
    if (!any_near) continue;
    for (size_t s = 0; s < gs.tris.size(); ++s) {
      if (!skip[s]) continue;
      // On the pair of a triangle with itself x - y lies in the triangle
      // plane, so the normal projection of the kernel vanishes identically.
      if (same_basis && s == t) continue;
      const auto& st = gs.tris[s];
      pts.clear();
      const auto dist2 = [&st](const Vector3d& p) {
        return point_tri_dist2(st.a, st.b, st.c, p);
      };
      graded_outer_pts(tri.a, tri.b, tri.c, dist2, 0, 0, 1, 0, 0, 1, kGradedDepth, pts);
      for (const auto& p : pts) {
        const TriangleIntegrals ti(st.a, st.b, st.c, p.x);
        for (int j = 0; j < 3; ++j) {
          const double kern = tri.nhat.dot(ti.grad_inv_r_affine(Vector3d::Unit(j))) / kFourPi;
          for (int i = 0; i < 3; ++i) out(tri.verts[i], st.verts[j]) += p.w * p.l[i] * kern;
        }
      }
    }
  }
  return out;
}

MatrixXd volume_normal_grad_block(const PyramidBasis& test, const SwgBasis& trial) {
  const SurfaceGeom gt = make_surface_geom(test);
  const RegionGeom gs = make_region_geom(trial);
  MatrixXd out = MatrixXd::Zero(test.dof_count(), trial.dof_count());
  RowVectorXd row(trial.dof_count());
  const QuadratureRule& rule = tri_quadrature(4);
  std::vector<unsigned char> skip_tet(gs.tets.size());
  std::vector<unsigned char> skip_face(gs.bfaces.size());
  std::vector<OuterPt> pts;
  for (const auto& tri : gt.tris) {
    bool any_near = false;
    for (size_t t = 0; t < gs.tets.size(); ++t) {
      skip_tet[t] = pair_near(tri.centroid, tri.diam, gs.tets[t].centroid, gs.tets[t].diam) ? 1 : 0;
      any_near |= skip_tet[t] != 0;
    }
    for (size_t f = 0; f < gs.bfaces.size(); ++f) {
      skip_face[f] =
          pair_near(tri.centroid, tri.diam, gs.bfaces[f].centroid, gs.bfaces[f].diam) ? 1 : 0;
      any_near |= skip_face[f] != 0;
    }
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const double u = rule.points[q].x(), v = rule.points[q].y();
      const Vector3d x = tri.a + u * (tri.b - tri.a) + v * (tri.c - tri.a);
      row.setZero();
      add_volume_grad_proj_row(gs, x, tri.nhat, rule.weights[q] * tri.two_area, row,
                               any_near ? skip_tet.data() : nullptr,
                               any_near ? skip_face.data() : nullptr);
      const double l[3] = {1.0 - u - v, u, v};
      for (int k = 0; k < 3; ++k) out.row(tri.verts[k]) += l[k] * row;
    }
    if (!any_near) continue;
    for (size_t t = 0; t < gs.tets.size(); ++t) {
      if (!skip_tet[t]) continue;
      const auto& tet = gs.tets[t];
      pts.clear();
      // The gradient of the cell Newton potential is smooth away from the
      // edges of the tetrahedron, including across coincident faces, so the
      // grading targets the edge skeleton.
      const auto dist2 = [&tet](const Vector3d& p) {
        static const int e[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
        double d = std::numeric_limits<double>::max();
        for (const auto& ij : e)
          d = std::min(d, point_seg_dist2(tet.v[ij[0]], tet.v[ij[1]], p));
        return d;
      };
      graded_outer_pts(tri.a, tri.b, tri.c, dist2, 0, 0, 1, 0, 0, 1, kGradedDepth, pts);
      for (const auto& p : pts) {
        const double kern = tri.nhat.dot(TetIntegrals(tet.v, p.x).grad_newton()) / kFourPi;
        for (const auto& d : tet.dofs) {
          const double val = kern * d.sign / tet.vol;
          for (int i = 0; i < 3; ++i) out(tri.verts[i], d.dof) += p.w * p.l[i] * val;
        }
      }
    }
    for (size_t f = 0; f < gs.bfaces.size(); ++f) {
      if (!skip_face[f]) continue;
      const auto& bf = gs.bfaces[f];
      // A boundary face lying in the plane of the test triangle contributes
      // nothing to the normal projection, coincident faces included.
      const double ctol = 1e-9 * (tri.diam + bf.diam);
      if (std::abs(tri.nhat.dot(bf.a - tri.a)) < ctol &&
          std::abs(tri.nhat.dot(bf.b - tri.a)) < ctol &&
          std::abs(tri.nhat.dot(bf.c - tri.a)) < ctol)
        continue;
      pts.clear();
      const auto dist2 = [&bf](const Vector3d& p) {
        return point_tri_dist2(bf.a, bf.b, bf.c, p);
      };
      graded_outer_pts(tri.a, tri.b, tri.c, dist2, 0, 0, 1, 0, 0, 1, kGradedDepth, pts);
      for (const auto& p : pts) {
        const double kern =
            tri.nhat.dot(TriangleIntegrals(bf.a, bf.b, bf.c, p.x).grad_inv_r()) / kFourPi;
        for (int i = 0; i < 3; ++i) out(tri.verts[i], bf.dof) -= p.w * p.l[i] * kern / bf.area;
      }
    }
  }
  return out;
}

MatrixXd boundary_overlap_block(const PyramidBasis& test, const SwgBasis& trial) {
  const TriangleSurface& s = test.surface();
  const TetRegion& r = trial.region();
  MatrixXd out = MatrixXd::Zero(test.dof_count(), trial.dof_count());

  const double quantum = 1e-9 * std::max(s.max_edge, 1e-12);
  const auto key_of = [&](const Vector3d& p) {
    return std::array<long long, 3>{llround(p.x() / quantum), llround(p.y() / quantum),
                                    llround(p.z() / quantum)};
  };
  const auto tri_key = [&](const Vector3d& a, const Vector3d& b, const Vector3d& c) {
    std::array<std::array<long long, 3>, 3> k = {key_of(a), key_of(b), key_of(c)};
    std::sort(k.begin(), k.end());
    return k;
  };
  std::map<std::array<std::array<long long, 3>, 3>, int> tri_of;
  for (size_t t = 0; t < s.triangles.size(); ++t)
    tri_of[tri_key(s.tri_vertex(t, 0), s.tri_vertex(t, 1), s.tri_vertex(t, 2))] =
        static_cast<int>(t);

  for (size_t f = 0; f < r.faces.size(); ++f) {
    if (r.faces[f].t1 >= 0) continue;
    const Vector3d a = r.vertices[r.faces[f].v[0]];
    const Vector3d b = r.vertices[r.faces[f].v[1]];
    const Vector3d c = r.vertices[r.faces[f].v[2]];
    const auto it = tri_of.find(tri_key(a, b, c));
    if (it == tri_of.end()) continue;
    const int t = it->second;
    const Vector3d face_n = (b - a).cross(c - a).normalized();
    const double orient = face_n.dot(s.tri_normal[t]) > 0.0 ? 1.0 : -1.0;
    for (int k = 0; k < 3; ++k) out(s.triangles[t][k], f) += orient / 3.0;
  }
  return out;
}

MatrixXd volume_from_surface_block(const SwgBasis& test, const PyramidBasis& trial) {
  const RegionGeom gt = make_region_geom(test);
  const SurfaceGeom gs = make_surface_geom(trial);
  MatrixXd out = MatrixXd::Zero(test.dof_count(), trial.dof_count());
  Matrix3Xd grad(3, trial.dof_count());
  const QuadratureRule& rule = tet_quadrature(3);
  for (size_t t = 0; t < gt.tets.size(); ++t) {
    const auto& tet = gt.tets[t];
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const Vector3d& p = rule.points[q];
      const Vector3d x = tet.v[0] + p.x() * (tet.v[1] - tet.v[0]) +
                         p.y() * (tet.v[2] - tet.v[0]) + p.z() * (tet.v[3] - tet.v[0]);
      grad.setZero();
      add_single_layer_grad_row(gs, x, rule.weights[q] * 6.0 * tet.vol, grad);
      for (const auto& d : tet.dofs)
        out.row(d.dof) += test.value_in_tet(static_cast<int>(t), d, x).transpose() * grad;
    }
  }
  return out;
}

MatrixXd volume_from_volume_block(const SwgBasis& test, const SwgBasis& trial) {
  const RegionGeom gt = make_region_geom(test);
  const RegionGeom gs = make_region_geom(trial);
  MatrixXd out = MatrixXd::Zero(test.dof_count(), trial.dof_count());
  Matrix3Xd grad(3, trial.dof_count());
  const QuadratureRule& rule = tet_quadrature(3);
  for (size_t t = 0; t < gt.tets.size(); ++t) {
    const auto& tet = gt.tets[t];
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const Vector3d& p = rule.points[q];
      const Vector3d x = tet.v[0] + p.x() * (tet.v[1] - tet.v[0]) +
                         p.y() * (tet.v[2] - tet.v[0]) + p.z() * (tet.v[3] - tet.v[0]);
      grad.setZero();
      add_volume_grad_row(gs, x, rule.weights[q] * 6.0 * tet.vol, grad);
      for (const auto& d : tet.dofs)
        out.row(d.dof) += test.value_in_tet(static_cast<int>(t), d, x).transpose() * grad;
    }
  }
  return out;
}

MatrixXd volume_from_wire_block(const SwgBasis& test, const WireHatBasis& trial) {
  const RegionGeom gt = make_region_geom(test);
  const WireGeom gs = make_wire_geom(trial);
  MatrixXd out = MatrixXd::Zero(test.dof_count(), trial.dof_count());
  Matrix3Xd grad(3, trial.dof_count());
  const QuadratureRule& rule = tet_quadrature(3);
  for (size_t t = 0; t < gt.tets.size(); ++t) {
    const auto& tet = gt.tets[t];
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const Vector3d& p = rule.points[q];
      const Vector3d x = tet.v[0] + p.x() * (tet.v[1] - tet.v[0]) +
                         p.y() * (tet.v[2] - tet.v[0]) + p.z() * (tet.v[3] - tet.v[0]);
      grad.setZero();
      add_wire_grad_row(gs, x, rule.weights[q] * 6.0 * tet.vol, grad);
      for (const auto& d : tet.dofs)
        out.row(d.dof) += test.value_in_tet(static_cast<int>(t), d, x).transpose() * grad;
    }
  }
  return out;
}

MatrixXd surface_from_wire_block(const PyramidBasis& test, const WireHatBasis& trial) {
  const SurfaceGeom gt = make_surface_geom(test);
  const WireGeom gs = make_wire_geom(trial);
  MatrixXd out = MatrixXd::Zero(test.dof_count(), trial.dof_count());
  RowVectorXd row(trial.dof_count());
  const QuadratureRule& rule = tri_quadrature(4);
  std::vector<unsigned char> skip(gs.segs.size());
  std::vector<OuterPt> pts;
  for (const auto& tri : gt.tris) {
    bool any_near = false;
    for (size_t s = 0; s < gs.segs.size(); ++s) {
      skip[s] = pair_near(tri.centroid, tri.diam, gs.segs[s].centroid, gs.segs[s].len) ? 1 : 0;
      any_near |= skip[s] != 0;
    }
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const double u = rule.points[q].x(), v = rule.points[q].y();
      const Vector3d x = tri.a + u * (tri.b - tri.a) + v * (tri.c - tri.a);
      row.setZero();
      add_wire_grad_proj_row(gs, x, tri.nhat, rule.weights[q] * tri.two_area, row,
                             any_near ? skip.data() : nullptr);
      const double l[3] = {1.0 - u - v, u, v};
      for (int k = 0; k < 3; ++k) out.row(tri.verts[k]) += l[k] * row;
    }
    if (!any_near) continue;
    for (size_t s = 0; s < gs.segs.size(); ++s) {
      if (!skip[s]) continue;
      const auto& seg = gs.segs[s];
      pts.clear();
      const auto dist2 = [&seg](const Vector3d& p) { return point_seg_dist2(seg.a, seg.b, p); };
      graded_outer_pts(tri.a, tri.b, tri.c, dist2, 0, 0, 1, 0, 0, 1, kGradedDepth, pts);
      for (const auto& p : pts) {
        const double kern =
            tri.nhat.dot(SegmentIntegrals(seg.a, seg.b, p.x, 0.0).grad_inv_r()) / kFourPi;
        const double val = kern / seg.len;
        for (int i = 0; i < 3; ++i) {
          if (seg.dof_b >= 0) out(tri.verts[i], seg.dof_b) += p.w * p.l[i] * val;
          if (seg.dof_a >= 0) out(tri.verts[i], seg.dof_a) -= p.w * p.l[i] * val;
        }
      }
    }
  }
  return out;
}

namespace {

// Applies the by-parts wire test to per-point potential rows: minus the hat
// slopes weight the segment averages of the trial potential.
template <typename RowFn>
MatrixXd wire_test_block(const WireHatBasis& test, int trial_dofs, RowFn&& row_fn) {
  const WireGeom gt = make_wire_geom(test);
  MatrixXd out = MatrixXd::Zero(test.dof_count(), trial_dofs);
  RowVectorXd row(trial_dofs);
  RowVectorXd seg_row(trial_dofs);
  for (const auto& seg : gt.segs) {
    seg_row.setZero();
    for (const auto& [u, wu] : segment_gauss3()) {
      const Vector3d x = seg.a + u * (seg.b - seg.a);
      row.setZero();
      row_fn(x, seg.fiber, wu * seg.len, row);
      seg_row += row;
    }
    if (seg.dof_a >= 0) out.row(seg.dof_a) += seg_row / seg.len;
    if (seg.dof_b >= 0) out.row(seg.dof_b) -= seg_row / seg.len;
  }
  return out;
}

}  // namespace

MatrixXd wire_from_surface_block(const WireHatBasis& test, const PyramidBasis& trial) {
  const SurfaceGeom gs = make_surface_geom(trial);
  return wire_test_block(test, trial.dof_count(),
                         [&](const Vector3d& x, int, double w, RowVectorXd& row) {
                           add_single_layer_row(gs, x, w, row);
                         });
}

MatrixXd wire_from_volume_block(const WireHatBasis& test, const SwgBasis& trial) {
  const RegionGeom gs = make_region_geom(trial);
  return wire_test_block(test, trial.dof_count(),
                         [&](const Vector3d& x, int, double w, RowVectorXd& row) {
                           add_volume_row(gs, x, w, row);
                         });
}

MatrixXd wire_from_wire_block(const WireHatBasis& test, const WireHatBasis& trial) {
  const WireGeom gs = make_wire_geom(trial);
  const bool same = &test == &trial;
  return wire_test_block(test, trial.dof_count(),
                         [&](const Vector3d& x, int fiber, double w, RowVectorXd& row) {
                           add_wire_row(gs, x, same ? fiber : -1, w, row);
                         });
}

VectorXd eval_single_layer(const PyramidBasis& basis, const VectorXd& density,
                           const std::vector<Vector3d>& points) {
  if (density.size() != basis.dof_count())
    fail(ErrorCode::invalid, "coefficient count does not match the basis");
  const SurfaceGeom g = make_surface_geom(basis);
  VectorXd out(points.size());
  RowVectorXd row(basis.dof_count());
  for (size_t i = 0; i < points.size(); ++i) {
    row.setZero();
    add_single_layer_row(g, points[i], 1.0, row);
    out[i] = row.dot(density);
  }
  return out;
}

VectorXd eval_volume_radiation(const SwgBasis& basis, const VectorXd& coeffs,
                               const std::vector<Vector3d>& points) {
  if (coeffs.size() != basis.dof_count())
    fail(ErrorCode::invalid, "coefficient count does not match the basis");
  const RegionGeom g = make_region_geom(basis);
  VectorXd out(points.size());
  RowVectorXd row(basis.dof_count());
  for (size_t i = 0; i < points.size(); ++i) {
    row.setZero();
    add_volume_row(g, points[i], 1.0, row);
    out[i] = row.dot(coeffs);
  }
  return out;
}

VectorXd eval_wire_radiation(const WireHatBasis& basis, const VectorXd& coeffs,
                             const std::vector<Vector3d>& points) {
  if (coeffs.size() != basis.dof_count())
    fail(ErrorCode::invalid, "coefficient count does not match the basis");
  const WireGeom g = make_wire_geom(basis);
  VectorXd out(points.size());
  RowVectorXd row(basis.dof_count());
  for (size_t i = 0; i < points.size(); ++i) {
    row.setZero();
    add_wire_row(g, points[i], -1, 1.0, row);
    out[i] = row.dot(coeffs);
  }
  return out;
}

MatrixXd swg_material_block(const SwgBasis& basis, const std::vector<Eigen::Matrix3d>& tensor_per_tet) {
  const TetRegion& r = basis.region();
  if (tensor_per_tet.size() != r.tets.size())
    fail(ErrorCode::invalid, "tensor count does not match the region");
  MatrixXd out = MatrixXd::Zero(basis.dof_count(), basis.dof_count());
  const QuadratureRule& rule = tet_quadrature(3);
  for (size_t t = 0; t < r.tets.size(); ++t) {
    const auto dofs = basis.dofs_of_tet(static_cast<int>(t));
    const Eigen::Matrix3d& tensor = tensor_per_tet[t];
    const Vector3d v0 = r.vertices[r.tets[t][0]];
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const Vector3d& p = rule.points[q];
      const Vector3d x = v0 + p.x() * (r.vertices[r.tets[t][1]] - v0) +
                         p.y() * (r.vertices[r.tets[t][2]] - v0) +
                         p.z() * (r.vertices[r.tets[t][3]] - v0);
      const double w = rule.weights[q] * 6.0 * r.volume[t];
      std::array<Vector3d, 4> vals;
      for (int k = 0; k < 4; ++k)
        vals[k] = basis.value_in_tet(static_cast<int>(t), dofs[k], x);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          out(dofs[i].dof, dofs[j].dof) += w * vals[i].dot(tensor * vals[j]);
    }
  }
  return out;
}

MatrixXd wire_mass_matrix(const WireHatBasis& basis) {
  MatrixXd out = MatrixXd::Zero(basis.dof_count(), basis.dof_count());
  for (const auto& s : basis.segments()) {
    const double third = s.length / 3.0, sixth = s.length / 6.0;
    if (s.dof_a >= 0) out(s.dof_a, s.dof_a) += third;
    if (s.dof_b >= 0) out(s.dof_b, s.dof_b) += third;
    if (s.dof_a >= 0 && s.dof_b >= 0) {
      out(s.dof_a, s.dof_b) += sixth;
      out(s.dof_b, s.dof_a) += sixth;
    }
  }
  return out;
}

}  // namespace hybem
