#include "formulation.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "analytic.hpp"
#include "common.hpp"
#include "operators.hpp"
#include "quadrature.hpp"

namespace hybem {

using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

namespace {

constexpr double kActiveContrast = 1e-10;
// Relative spectral floor for inverting the contrast tensor. Rank-deficient
// contrast (wire-equivalent cylinders) needs slack here: the div-conforming
// space cannot represent a varying current profile with the null directions
// pinned hard, so the floor is a soft penalty, not a constraint.
constexpr double kInverseFloor = 1e-1;

void validate_model(const ConductionModel& model) {
  const size_t n = model.head.surfaces.size();
  if (n == 0) {
    if (model.head.sigma.empty())
      fail(ErrorCode::invalid, "homogeneous model needs one background conductivity");
  } else if (model.head.sigma.size() != n) {
    fail(ErrorCode::invalid, "conductivity count does not match surface count");
  }
  const int layers = std::max<int>(1, static_cast<int>(n));
  for (const auto& r : model.regions)
    if (r.host_layer < 0 || r.host_layer >= layers)
      fail(ErrorCode::invalid, "region host layer out of range");
  for (const auto& b : model.bundles)
    if (b.host_layer < 0 || b.host_layer >= layers)
      fail(ErrorCode::invalid, "bundle host layer out of range");
}

Matrix3d floored_inverse(const Matrix3d& m) {
  const Eigen::SelfAdjointEigenSolver<Matrix3d> es(m);
  const Vector3d lam = es.eigenvalues();
  const double floor = kInverseFloor * lam.cwiseAbs().maxCoeff();
  Vector3d inv;
  for (int i = 0; i < 3; ++i)
    inv[i] = std::abs(lam[i]) <= floor ? 1.0 / floor : 1.0 / lam[i];
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

ContrastField::Region pack_region(const TetRegion& region, double sigma_host) {
  ContrastField::Region out;
  std::vector<int> active;
  for (size_t t = 0; t < region.tets.size(); ++t) {
    const Matrix3d chi =
        (sigma_host * Matrix3d::Identity() - region.sigma[t]) * region.sigma[t].inverse();
    if (chi.norm() > kActiveContrast) active.push_back(static_cast<int>(t));
  }
  out.mesh.host_layer = region.host_layer;
  if (active.empty()) return out;
  std::vector<int> vmap(region.vertices.size(), -1);
  for (int t : active) {
    std::array<int, 4> tet;
    for (int k = 0; k < 4; ++k) {
      int& slot = vmap[region.tets[t][k]];
      if (slot < 0) {
        slot = static_cast<int>(out.mesh.vertices.size());
        out.mesh.vertices.push_back(region.vertices[region.tets[t][k]]);
      }
      tet[k] = slot;
    }
    out.mesh.tets.push_back(tet);
    out.mesh.sigma.push_back(region.sigma[t]);
    const Matrix3d diff = sigma_host * Matrix3d::Identity() - region.sigma[t];
    out.chi.push_back(diff * region.sigma[t].inverse());
    out.inverse.push_back(floored_inverse(diff));
  }
  out.mesh.finalize();
  return out;
}

ContrastField::Bundle pack_bundle(const WireBundle& bundle, double sigma_host) {
  ContrastField::Bundle out;
  out.wires.host_layer = bundle.host_layer;
  for (const auto& f : bundle.fibers) {
    const double factor = sigma_host - f.sigma_l;
    if (std::abs(factor) <= kActiveContrast * std::max(1.0, sigma_host)) continue;
    if (f.radius <= 0.0) fail(ErrorCode::invalid, "fiber radius must be positive");
    out.wires.fibers.push_back(f);
    out.factor.push_back(factor);
  }
  return out;
}

// Bases are rebuilt on demand from the packed contrast meshes; construction is
// pure bookkeeping, so rebuilding keeps the call-site lifetimes simple.
struct Bases {
  std::vector<std::unique_ptr<PyramidBasis>> pyr;
  std::vector<std::unique_ptr<SwgBasis>> swg;
  std::vector<std::unique_ptr<WireHatBasis>> hat;
};

Bases make_bases(const ConductionModel& model, const ContrastField& contrast) {
  Bases b;
  for (const auto& s : model.head.surfaces) b.pyr.push_back(std::make_unique<PyramidBasis>(s));
  for (const auto& r : contrast.regions)
    b.swg.push_back(r.active() ? std::make_unique<SwgBasis>(r.mesh) : nullptr);
  for (const auto& w : contrast.bundles)
    b.hat.push_back(w.active() ? std::make_unique<WireHatBasis>(w.wires) : nullptr);
  return b;
}

DofLayout make_layout(const Bases& bases) {
  DofLayout layout;
  int offset = 0;
  for (const auto& p : bases.pyr) {
    layout.surface.push_back({offset, p->dof_count()});
    offset += p->dof_count();
  }
  for (const auto& s : bases.swg) {
    const int count = s ? s->dof_count() : 0;
    layout.region.push_back({offset, count});
    offset += count;
  }
  for (const auto& h : bases.hat) {
    const int count = h ? h->dof_count() : 0;
    layout.bundle.push_back({offset, count});
    offset += count;
  }
  layout.total = offset;
  return layout;
}

double sigma_outside(const NestedHeadModel& head, size_t i) {
  return i + 1 < head.sigma.size() ? head.sigma[i + 1] : 0.0;
}

}  // namespace

DofLayout dof_layout(const ConductionModel& model, const ContrastField& contrast) {
  return make_layout(make_bases(model, contrast));
}

namespace {

// Integral of hat_k * (nhat . grad phi_inf) over one triangle, graded toward
// the dipole so strongly eccentric sources keep full accuracy.
// Smallest supported rule order strictly above the requested one, so the
// surface flux integrand (one order less smooth than the volume terms) keeps
// a margin; saturates at the top rule.
int surface_leaf_order(int order) {
  if (order <= 1) return 2;
  if (order == 2) return 3;
  if (order == 3) return 4;
  return 6;
}

void dipole_flux_on_triangle(const Vector3d& a, const Vector3d& b, const Vector3d& c,
                             const Vector3d& nhat, const Dipole& src, double sigma_s,
                             double u0, double v0, double u1, double v1, double u2, double v2,
                             int leaf_order, int depth, double out[3]) {
  const auto corner = [&](double u, double v) { return Vector3d(a + u * (b - a) + v * (c - a)); };
  const Vector3d p0 = corner(u0, v0), p1 = corner(u1, v1), p2 = corner(u2, v2);
  const Vector3d pc = (p0 + p1 + p2) / 3.0;
  const double h2 = std::max({(p1 - p0).squaredNorm(), (p2 - p1).squaredNorm(),
                              (p0 - p2).squaredNorm()});
  const double d2 = std::min(std::min((p0 - src.position).squaredNorm(),
                                      (p1 - src.position).squaredNorm()),
                             std::min((p2 - src.position).squaredNorm(),
                                      (pc - src.position).squaredNorm()));
  if (depth == 0 || d2 >= h2) {
    const QuadratureRule& rule = tri_quadrature(leaf_order);
    const double two_area_uv = std::abs((u1 - u0) * (v2 - v0) - (u2 - u0) * (v1 - v0));
    const double two_area = (b - a).cross(c - a).norm();
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const double px = rule.points[q].x(), py = rule.points[q].y();
      const double u = u0 + px * (u1 - u0) + py * (u2 - u0);
      const double v = v0 + px * (v1 - v0) + py * (v2 - v0);
      const Vector3d x = corner(u, v);
      const double w = rule.weights[q] * two_area_uv * two_area;
      const double val =
          w * nhat.dot(dipole_infinite_gradient(x, src.position, src.moment, sigma_s));
      out[0] += (1.0 - u - v) * val;
      out[1] += u * val;
      out[2] += v * val;
    }
    return;
  }
  const double um0 = 0.5 * (u0 + u1), vm0 = 0.5 * (v0 + v1);
  const double um1 = 0.5 * (u1 + u2), vm1 = 0.5 * (v1 + v2);
  const double um2 = 0.5 * (u2 + u0), vm2 = 0.5 * (v2 + v0);
  dipole_flux_on_triangle(a, b, c, nhat, src, sigma_s, u0, v0, um0, vm0, um2, vm2, leaf_order,
                          depth - 1, out);
  dipole_flux_on_triangle(a, b, c, nhat, src, sigma_s, um0, vm0, u1, v1, um1, vm1, leaf_order,
                          depth - 1, out);
  dipole_flux_on_triangle(a, b, c, nhat, src, sigma_s, um2, vm2, um1, vm1, u2, v2, leaf_order,
                          depth - 1, out);
  dipole_flux_on_triangle(a, b, c, nhat, src, sigma_s, um0, vm0, um1, vm1, um2, vm2, leaf_order,
                          depth - 1, out);
}

bool tet_contains(const TetRegion& region, int t, const Vector3d& p) {
  const Vector3d v0 = region.vertices[region.tets[t][0]];
  const Vector3d v1 = region.vertices[region.tets[t][1]];
  const Vector3d v2 = region.vertices[region.tets[t][2]];
  const Vector3d v3 = region.vertices[region.tets[t][3]];
  Eigen::Matrix3d m;
  m.col(0) = v1 - v0;
  m.col(1) = v2 - v0;
  m.col(2) = v3 - v0;
  const Vector3d lam = m.partialPivLu().solve(p - v0);
  const double eps = -1e-12;
  return lam.minCoeff() >= eps && 1.0 - lam.sum() >= eps;
}

int dipole_host(const ConductionModel& model, const Dipole& src) {
  if (model.head.surfaces.empty()) return 0;
  // Proximity first: point location is ill-conditioned exactly on a surface.
  for (size_t i = 0; i < model.head.surfaces.size(); ++i) {
    const TriangleSurface& s = model.head.surfaces[i];
    const double tol = 1e-9 * s.max_edge;
    if (surface_distance2(s, src.position) < tol * tol)
      fail(ErrorCode::invalid, "dipole lies on interface " + std::to_string(i + 1));
  }
  const int host = model.head.locate_layer(src.position);
  if (host < 0) fail(ErrorCode::invalid, "dipole outside the model");
  return host;
}

VectorXd gmres_solve(const MatrixXd& A, const VectorXd& b, const SolverOptions& opt) {
  VectorXd x = VectorXd::Zero(b.size());
  const double bnorm = b.norm();
  if (bnorm == 0.0) return x;
  int iters = 0;
  while (true) {
    const VectorXd r = b - A * x;
    const double beta = r.norm();
    if (beta <= opt.tolerance * bnorm) return x;
    if (iters >= opt.max_iterations)
      fail(ErrorCode::solver, "iterative solve did not converge");
    const int m = std::min(opt.restart, opt.max_iterations - iters);
    MatrixXd V(b.size(), m + 1);
    MatrixXd H = MatrixXd::Zero(m + 1, m);
    VectorXd cs = VectorXd::Zero(m), sn = VectorXd::Zero(m), g = VectorXd::Zero(m + 1);
    V.col(0) = r / beta;
    g[0] = beta;
    int k = 0;
    bool done = false;
    while (k < m && !done) {
      VectorXd w = A * V.col(k);
      for (int j = 0; j <= k; ++j) {
        H(j, k) = V.col(j).dot(w);
        w -= H(j, k) * V.col(j);
      }
      H(k + 1, k) = w.norm();
      const bool breakdown = H(k + 1, k) <= 1e-14 * bnorm;
      if (!breakdown) V.col(k + 1) = w / H(k + 1, k);
      for (int j = 0; j < k; ++j) {
        const double t = cs[j] * H(j, k) + sn[j] * H(j + 1, k);
        H(j + 1, k) = -sn[j] * H(j, k) + cs[j] * H(j + 1, k);
        H(j, k) = t;
      }
      const double denom = std::hypot(H(k, k), H(k + 1, k));
      cs[k] = H(k, k) / denom;
      sn[k] = H(k + 1, k) / denom;
      H(k, k) = denom;
      H(k + 1, k) = 0.0;
      g[k + 1] = -sn[k] * g[k];
      g[k] = cs[k] * g[k];
      ++iters;
      ++k;
      done = breakdown || std::abs(g[k]) <= opt.tolerance * bnorm;
    }
    const VectorXd y =
        H.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    x += V.leftCols(k) * y;
  }
}

}  // namespace

bool ContrastField::any_active() const {
  for (const auto& r : regions)
    if (r.active()) return true;
  for (const auto& b : bundles)
    if (b.active()) return true;
  return false;
}

ContrastField compute_contrast(const ConductionModel& model) {
  validate_model(model);
  ContrastField out;
  for (const auto& r : model.regions)
    out.regions.push_back(pack_region(r, model.head.sigma[r.host_layer]));
  for (const auto& b : model.bundles)
    out.bundles.push_back(pack_bundle(b, model.head.sigma[b.host_layer]));
  return out;
}

BlockSystem build_system(const ConductionModel& model, const ContrastField& contrast) {
  validate_model(model);
  const NestedHeadModel& head = model.head;
  const size_t ns = head.surfaces.size();
  for (size_t i = 0; i < ns; ++i) {
    const double s_in = head.sigma[i], s_out = sigma_outside(head, i);
    if (std::abs(s_out - s_in) <= 1e-12 * std::max({s_in, std::abs(s_out), 1e-300}))
      fail(ErrorCode::invalid, "degenerate interface " + std::to_string(i + 1));
  }
  for (size_t w = 0; w < contrast.bundles.size(); ++w) {
    if (!contrast.bundles[w].active()) continue;
    for (const auto& f : contrast.bundles[w].wires.fibers)
      for (size_t n = 0; n + 1 < f.nodes.size(); ++n)
        for (const Vector3d& x : {f.nodes[n], Vector3d(0.5 * (f.nodes[n] + f.nodes[n + 1]))})
          for (size_t i = 0; i < ns; ++i)
            if (surface_distance2(head.surfaces[i], x) <= f.radius * f.radius)
              fail(ErrorCode::invalid, "fiber touches interface " + std::to_string(i + 1));
  }

  const Bases bases = make_bases(model, contrast);
  BlockSystem sys;
  sys.layout = make_layout(bases);
  sys.matrix = MatrixXd::Zero(sys.layout.total, sys.layout.total);
  sys.deflation = VectorXd::Zero(sys.layout.total);
  MatrixXd& A = sys.matrix;

  for (size_t i = 0; i < ns; ++i) {
    const auto row = sys.layout.surface[i];
    const double s_in = head.sigma[i], s_out = sigma_outside(head, i);
    const MatrixXd mass = mass_matrix(*bases.pyr[i]);
    const double c = (s_in + s_out) / (2.0 * (s_out - s_in));
    A.block(row.offset, row.offset, row.count, row.count) += c * mass;
    if (i + 1 == ns) sys.deflation.segment(row.offset, row.count) = mass * VectorXd::Ones(row.count);
    for (size_t j = 0; j < ns; ++j) {
      const auto col = sys.layout.surface[j];
      A.block(row.offset, col.offset, row.count, col.count) -=
          adjoint_double_layer_block(*bases.pyr[i], *bases.pyr[j]);
    }
    for (size_t k = 0; k < contrast.regions.size(); ++k) {
      if (!contrast.regions[k].active()) continue;
      const auto col = sys.layout.region[k];
      const double s_host = head.sigma[contrast.regions[k].mesh.host_layer];
      A.block(row.offset, col.offset, row.count, col.count) +=
          (volume_normal_grad_block(*bases.pyr[i], *bases.swg[k]) +
           0.5 * boundary_overlap_block(*bases.pyr[i], *bases.swg[k])) /
          s_host;
    }
    for (size_t w = 0; w < contrast.bundles.size(); ++w) {
      if (!contrast.bundles[w].active()) continue;
      const auto col = sys.layout.bundle[w];
      const double s_host = head.sigma[contrast.bundles[w].wires.host_layer];
      A.block(row.offset, col.offset, row.count, col.count) +=
          surface_from_wire_block(*bases.pyr[i], *bases.hat[w]) / s_host;
    }
  }

  for (size_t k = 0; k < contrast.regions.size(); ++k) {
    if (!contrast.regions[k].active()) continue;
    const auto row = sys.layout.region[k];
    A.block(row.offset, row.offset, row.count, row.count) -=
        swg_material_block(*bases.swg[k], contrast.regions[k].inverse);
    for (size_t j = 0; j < ns; ++j) {
      const auto col = sys.layout.surface[j];
      A.block(row.offset, col.offset, row.count, col.count) +=
          volume_from_surface_block(*bases.swg[k], *bases.pyr[j]);
    }
    for (size_t l = 0; l < contrast.regions.size(); ++l) {
      if (!contrast.regions[l].active()) continue;
      const auto col = sys.layout.region[l];
      const double s_host = head.sigma[contrast.regions[l].mesh.host_layer];
      A.block(row.offset, col.offset, row.count, col.count) -=
          volume_from_volume_block(*bases.swg[k], *bases.swg[l]) / s_host;
    }
    for (size_t w = 0; w < contrast.bundles.size(); ++w) {
      if (!contrast.bundles[w].active()) continue;
      const auto col = sys.layout.bundle[w];
      const double s_host = head.sigma[contrast.bundles[w].wires.host_layer];
      A.block(row.offset, col.offset, row.count, col.count) -=
          volume_from_wire_block(*bases.swg[k], *bases.hat[w]) / s_host;
    }
  }

  for (size_t w = 0; w < contrast.bundles.size(); ++w) {
    if (!contrast.bundles[w].active()) continue;
    const auto row = sys.layout.bundle[w];
    const WireHatBasis& hat = *bases.hat[w];
    const MatrixXd mass = wire_mass_matrix(hat);
    for (int m = 0; m < row.count; ++m) {
      const int fib = hat.dofs()[m].fiber;
      const double area = kPi * contrast.bundles[w].wires.fibers[fib].radius *
                          contrast.bundles[w].wires.fibers[fib].radius;
      const double factor = area * contrast.bundles[w].factor[fib];
      for (int n = 0; n < row.count; ++n)
        if (mass(m, n) != 0.0) A(row.offset + m, row.offset + n) -= mass(m, n) / factor;
    }
    for (size_t j = 0; j < ns; ++j) {
      const auto col = sys.layout.surface[j];
      A.block(row.offset, col.offset, row.count, col.count) +=
          wire_from_surface_block(hat, *bases.pyr[j]);
    }
    for (size_t l = 0; l < contrast.regions.size(); ++l) {
      if (!contrast.regions[l].active()) continue;
      const auto col = sys.layout.region[l];
      const double s_host = head.sigma[contrast.regions[l].mesh.host_layer];
      A.block(row.offset, col.offset, row.count, col.count) -=
          wire_from_volume_block(hat, *bases.swg[l]) / s_host;
    }
    for (size_t u = 0; u < contrast.bundles.size(); ++u) {
      if (!contrast.bundles[u].active()) continue;
      const auto col = sys.layout.bundle[u];
      const double s_host = head.sigma[contrast.bundles[u].wires.host_layer];
      A.block(row.offset, col.offset, row.count, col.count) -=
          wire_from_wire_block(hat, *bases.hat[u]) / s_host;
    }
  }
  return sys;
}

void deflate(BlockSystem& system) {
  if (system.alpha != 0.0) return;
  const double wtw = system.deflation.squaredNorm();
  if (wtw == 0.0) return;
  const auto outer = system.layout.surface.back();
  const double mean_diag = system.matrix.diagonal()
                               .segment(outer.offset, outer.count)
                               .cwiseAbs()
                               .mean();
  system.alpha = mean_diag / wtw;
  const VectorXd w = system.deflation.segment(outer.offset, outer.count);
  system.matrix.block(outer.offset, outer.offset, outer.count, outer.count) +=
      system.alpha * w * w.transpose();
}

VectorXd build_rhs(const ConductionModel& model, const ContrastField& contrast,
                   const DofLayout& layout, const Dipole& source, int quadrature_order) {
  const int host = dipole_host(model, source);
  const double sigma_s = model.head.sigma[host];
  VectorXd rhs = VectorXd::Zero(layout.total);
  const int leaf = surface_leaf_order(quadrature_order);

  for (size_t i = 0; i < model.head.surfaces.size(); ++i) {
    const TriangleSurface& s = model.head.surfaces[i];
    const auto range = layout.surface[i];
    for (size_t t = 0; t < s.triangles.size(); ++t) {
      double acc[3] = {0.0, 0.0, 0.0};
      dipole_flux_on_triangle(s.tri_vertex(t, 0), s.tri_vertex(t, 1), s.tri_vertex(t, 2),
                              s.tri_normal[t], source, sigma_s, 0, 0, 1, 0, 0, 1, leaf, 12, acc);
      for (int k = 0; k < 3; ++k) rhs[range.offset + s.triangles[t][k]] += acc[k];
    }
  }

  for (size_t k = 0; k < contrast.regions.size(); ++k) {
    if (!contrast.regions[k].active()) continue;
    const TetRegion& mesh = contrast.regions[k].mesh;
    const SwgBasis swg(mesh);
    const auto range = layout.region[k];
    const QuadratureRule& rule = tet_quadrature(quadrature_order);
    for (size_t t = 0; t < mesh.tets.size(); ++t) {
      const Vector3d v0 = mesh.vertices[mesh.tets[t][0]];
      const Vector3d v1 = mesh.vertices[mesh.tets[t][1]];
      const Vector3d v2 = mesh.vertices[mesh.tets[t][2]];
      const Vector3d v3 = mesh.vertices[mesh.tets[t][3]];
      if ((source.position - mesh.tet_centroid(static_cast<int>(t))).norm() <=
              mesh.tet_diameter(static_cast<int>(t)) &&
          tet_contains(mesh, static_cast<int>(t), source.position))
        fail(ErrorCode::invalid, "dipole lies inside a contrast region");
      for (size_t q = 0; q < rule.points.size(); ++q) {
        const Vector3d& p = rule.points[q];
        const Vector3d x = v0 + p.x() * (v1 - v0) + p.y() * (v2 - v0) + p.z() * (v3 - v0);
        const double w = rule.weights[q] * 6.0 * mesh.volume[t];
        const Vector3d g = dipole_infinite_gradient(x, source.position, source.moment, sigma_s);
        for (const auto& d : swg.dofs_of_tet(static_cast<int>(t)))
          rhs[range.offset + d.dof] -= w * swg.value_in_tet(static_cast<int>(t), d, x).dot(g);
      }
    }
  }

  for (size_t w = 0; w < contrast.bundles.size(); ++w) {
    if (!contrast.bundles[w].active()) continue;
    const WireHatBasis hat(contrast.bundles[w].wires);
    const auto range = layout.bundle[w];
    const QuadratureRule& rule = segment_quadrature(quadrature_order);
    for (const auto& seg : hat.segments()) {
      const Fiber& f = contrast.bundles[w].wires.fibers[seg.fiber];
      const Vector3d a = f.nodes[seg.index], b = f.nodes[seg.index + 1];
      double mean = 0.0;
      for (size_t q = 0; q < rule.points.size(); ++q) {
        const Vector3d x = a + rule.points[q].x() * (b - a);
        mean += rule.weights[q] *
                dipole_infinite_potential(x, source.position, source.moment, sigma_s);
      }
      if (seg.dof_a >= 0) rhs[range.offset + seg.dof_a] -= mean;
      if (seg.dof_b >= 0) rhs[range.offset + seg.dof_b] += mean;
    }
  }
  return rhs;
}

ForwardSolution solve(const BlockSystem& system, const VectorXd& rhs, const Dipole& source,
                      const SolverOptions& options) {
  ForwardSolution out;
  out.source = source;
  if (system.layout.total == 0) {
    out.coefficients = VectorXd();
    return out;
  }
  if (options.method == SolverOptions::Method::direct) {
    out.coefficients = system.matrix.partialPivLu().solve(rhs);
    if (!out.coefficients.allFinite())
      fail(ErrorCode::solver, "direct factorization produced non-finite coefficients");
  } else {
    out.coefficients = gmres_solve(system.matrix, rhs, options);
  }
  return out;
}

VectorXd eval_potential(const ConductionModel& model, const ContrastField& contrast,
                        const DofLayout& layout, const ForwardSolution& solution,
                        const std::vector<Vector3d>& points) {
  const int host = dipole_host(model, solution.source);
  const double sigma_s = model.head.sigma[host];
  VectorXd phi(points.size());
  for (size_t p = 0; p < points.size(); ++p)
    phi[p] = dipole_infinite_potential(points[p], solution.source.position,
                                       solution.source.moment, sigma_s);
  if (layout.total == 0) return phi;

  for (size_t i = 0; i < model.head.surfaces.size(); ++i) {
    const PyramidBasis pyr(model.head.surfaces[i]);
    const auto range = layout.surface[i];
    phi += eval_single_layer(pyr, solution.coefficients.segment(range.offset, range.count),
                             points);
  }
  for (size_t k = 0; k < contrast.regions.size(); ++k) {
    if (!contrast.regions[k].active()) continue;
    const SwgBasis swg(contrast.regions[k].mesh);
    const auto range = layout.region[k];
    const double s_host = model.head.sigma[contrast.regions[k].mesh.host_layer];
    phi -= eval_volume_radiation(swg, solution.coefficients.segment(range.offset, range.count),
                                 points) /
           s_host;
  }
  for (size_t w = 0; w < contrast.bundles.size(); ++w) {
    if (!contrast.bundles[w].active()) continue;
    const WireHatBasis hat(contrast.bundles[w].wires);
    const auto range = layout.bundle[w];
    const double s_host = model.head.sigma[contrast.bundles[w].wires.host_layer];
    phi -= eval_wire_radiation(hat, solution.coefficients.segment(range.offset, range.count),
                               points) /
           s_host;
  }
  return phi;
}

VectorXd mean_referenced(const VectorXd& v) {
  if (v.size() == 0) return v;
  return v.array() - v.mean();
}

ForwardSolver::ForwardSolver(const ConductionModel& model, SolverOptions options)
    : model_(&model), options_(options), contrast_(compute_contrast(model)),
      system_(build_system(model, contrast_)) {
  deflate(system_);
  if (system_.layout.total > 0 && options_.method == SolverOptions::Method::direct)
    lu_.compute(system_.matrix);
}

ForwardSolution ForwardSolver::solve_source(const Dipole& source) const {
  ForwardSolution out;
  out.source = source;
  if (system_.layout.total == 0) {
    dipole_host(*model_, source);
    out.coefficients = VectorXd();
    return out;
  }
  const VectorXd rhs = build_rhs(*model_, contrast_, system_.layout, source,
                                 options_.quadrature_order);
  if (options_.method == SolverOptions::Method::direct) {
    out.coefficients = lu_.solve(rhs);
    if (!out.coefficients.allFinite())
      fail(ErrorCode::solver, "direct factorization produced non-finite coefficients");
  } else {
    out.coefficients = gmres_solve(system_.matrix, rhs, options_);
  }
  return out;
}

VectorXd ForwardSolver::potentials(const Dipole& source,
                                   const std::vector<Vector3d>& points) const {
  return eval_potential(*model_, contrast_, system_.layout, solve_source(source), points);
}

MatrixXd ForwardSolver::leadfield(const std::vector<Vector3d>& positions,
                                  const std::vector<Vector3d>& electrodes) const {
  MatrixXd out(electrodes.size(), 3 * positions.size());
  for (size_t d = 0; d < positions.size(); ++d)
    for (int axis = 0; axis < 3; ++axis) {
      Dipole src;
      src.position = positions[d];
      src.moment = Vector3d::Unit(axis);
      out.col(3 * d + axis) = mean_referenced(potentials(src, electrodes));
    }
  return out;
}

}  // namespace hybem
