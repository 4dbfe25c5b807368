#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "core/common.hpp"
#include "core/kernels.hpp"
#include "core/quadrature.hpp"

using namespace hybem;
using Eigen::Vector3d;

namespace {

// Plain product-rule integration of fn(r') over a physical triangle.
template <typename Fn>
double quad_triangle(const Vector3d& a, const Vector3d& b, const Vector3d& c, int order, Fn&& fn) {
  const auto& rule = tri_quadrature(order);
  const double jac = (b - a).cross(c - a).norm();  // 2*area; ref weights sum to 1/2
  double sum = 0.0;
  for (size_t i = 0; i < rule.points.size(); ++i) {
    const Vector3d p = a + rule.points[i].x() * (b - a) + rule.points[i].y() * (c - a);
    sum += rule.weights[i] * fn(p);
  }
  return sum * jac;
}

// Singularity-chasing refinement: subdivide while the observation point is
// within a few diameters of the patch, then fall back to a fixed rule.
template <typename Fn>
double adaptive_triangle(const Vector3d& a, const Vector3d& b, const Vector3d& c, const Vector3d& r,
                         int depth, Fn&& fn) {
  const double diam2 =
      std::max({(b - a).squaredNorm(), (c - b).squaredNorm(), (a - c).squaredNorm()});
  const Vector3d centroid = (a + b + c) / 3.0;
  if (depth == 0 || (r - centroid).squaredNorm() > 9.0 * diam2)
    return quad_triangle(a, b, c, 6, fn);
  const Vector3d ab = 0.5 * (a + b), bc = 0.5 * (b + c), ca = 0.5 * (c + a);
  return adaptive_triangle(a, ab, ca, r, depth - 1, fn) +
         adaptive_triangle(ab, b, bc, r, depth - 1, fn) +
         adaptive_triangle(ca, bc, c, r, depth - 1, fn) +
         adaptive_triangle(ab, bc, ca, r, depth - 1, fn);
}

double oracle_inv_r(const Vector3d& a, const Vector3d& b, const Vector3d& c, const Vector3d& r) {
  return adaptive_triangle(a, b, c, r, 26, [&](const Vector3d& p) {
    const double dist = (r - p).norm();
    return dist < 1e-13 ? 0.0 : 1.0 / dist;
  });
}

// Signed solid angle of triangle (a,b,c) at r, by the two-argument arctangent
// formula; magnitude is the subtended solid angle.
double oracle_solid_angle(const Vector3d& a, const Vector3d& b, const Vector3d& c,
                          const Vector3d& r) {
  const Vector3d u = a - r, v = b - r, w = c - r;
  const double lu = u.norm(), lv = v.norm(), lw = w.norm();
  const double num = u.dot(v.cross(w));
  const double den = lu * lv * lw + u.dot(v) * lw + v.dot(w) * lu + w.dot(u) * lv;
  return 2.0 * std::atan2(num, den);
}

Vector3d random_point(std::mt19937& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return Vector3d(u(rng), u(rng), u(rng));
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("green kernel values and singularity") {
  const Vector3d z(0, 0, 1);
  CHECK(green(z, Vector3d::Zero()) == doctest::Approx(1.0 / (4.0 * kPi)).epsilon(1e-14));
  CHECK(green(Vector3d(2, 0, 0), Vector3d::Zero()) ==
        doctest::Approx(1.0 / (8.0 * kPi)).epsilon(1e-14));
  CHECK_THROWS_WITH_AS(green(z, z), doctest::Contains("coincident"), Error);
  CHECK_THROWS_AS(grad_green(z, z), Error);
}

TEST_CASE("green gradient: axis value, antisymmetry, finite differences") {
  const Vector3d g = grad_green(Vector3d(0, 0, 1), Vector3d::Zero());
  CHECK(g.x() == doctest::Approx(0.0));
  CHECK(g.z() == doctest::Approx(-1.0 / (4.0 * kPi)).epsilon(1e-14));

  std::mt19937 rng(11);
  for (int k = 0; k < 20; ++k) {
    const Vector3d r = random_point(rng, -1, 1), rp = random_point(rng, 2, 3);
    const Vector3d ga = grad_green(r, rp), gb = grad_green(rp, r);

    CHECK((ga + gb).norm() < 1e-12 * ga.norm());

    const double h = 1e-5;
    for (int ax = 0; ax < 3; ++ax) {
      Vector3d dp = Vector3d::Zero();
      dp[ax] = h;
      const double fd = (green(r + dp, rp) - green(r - dp, rp)) / (2.0 * h);
      CHECK(ga[ax] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("triangle 1/R: far field approaches area over distance") {
  const Vector3d a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
  const Vector3d r(40, 70, 50);  // |r| = 100 within rounding of the setup
  const double dist = (r - (a + b + c) / 3.0).norm();
  const TriangleIntegrals t(a, b, c, r);
  CHECK(t.inv_r() == doctest::Approx(0.5 / dist).epsilon(1e-4));
}

TEST_CASE("triangle 1/R at the centroid matches the refinement oracle") {
  const Vector3d a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
  const Vector3d centroid = (a + b + c) / 3.0;
  const TriangleIntegrals t(a, b, c, centroid);
  CHECK(t.inv_r() == doctest::Approx(oracle_inv_r(a, b, c, centroid)).epsilon(1e-6));
}

TEST_CASE("triangle 1/R at a vertex has the exact corner value") {
  // Right isosceles unit triangle observed at the right-angle corner:
  // closed form sqrt(2) * ln(1 + sqrt(2)).
  const TriangleIntegrals t(Vector3d(0, 0, 0), Vector3d(1, 0, 0), Vector3d(0, 1, 0),
                            Vector3d(0, 0, 0));
  CHECK(t.inv_r() ==
        doctest::Approx(std::sqrt(2.0) * std::log(1.0 + std::sqrt(2.0))).epsilon(1e-13));
}

TEST_CASE("triangle 1/R against the oracle at random observation points") {
  std::mt19937 rng(23);
  for (int k = 0; k < 12; ++k) {
    const Vector3d a = random_point(rng, -1, 1), b = random_point(rng, -1, 1),
                   c = random_point(rng, -1, 1);
    if ((b - a).cross(c - a).norm() < 0.1) continue;
    const Vector3d r = random_point(rng, -1.5, 1.5);
    const TriangleIntegrals t(a, b, c, r);
    CHECK(t.inv_r() == doctest::Approx(oracle_inv_r(a, b, c, r)).epsilon(2e-6));
  }
}

TEST_CASE("triangle 1/R is translation invariant") {
  std::mt19937 rng(31);
  const Vector3d a(0.1, 0, 0), b(1, 0.2, 0), c(0, 1, 0.3), r(0.4, 0.2, 0.9);
  const double base = TriangleIntegrals(a, b, c, r).inv_r();
  for (int k = 0; k < 5; ++k) {
    const Vector3d shift = random_point(rng, -100, 100);
    const double moved = TriangleIntegrals(a + shift, b + shift, c + shift, r + shift).inv_r();
    CHECK(moved == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("degenerate triangle is rejected") {
  CHECK_THROWS_WITH_AS(
      TriangleIntegrals(Vector3d(0, 0, 0), Vector3d(1, 0, 0), Vector3d(2, 0, 0), Vector3d(0, 0, 1)),
      doctest::Contains("degenerate"), Error);
}

TEST_CASE("triangle solid angle matches the arctangent oracle") {
  std::mt19937 rng(37);
  for (int k = 0; k < 20; ++k) {
    const Vector3d a = random_point(rng, -1, 1), b = random_point(rng, -1, 1),
                   c = random_point(rng, -1, 1);
    if ((b - a).cross(c - a).norm() < 0.1) continue;
    const Vector3d r = random_point(rng, -2, 2);
    const TriangleIntegrals t(a, b, c, r);
    if (std::abs(t.signed_height()) < 1e-3) continue;
    CHECK(t.solid_angle_abs() ==
          doctest::Approx(std::abs(oracle_solid_angle(a, b, c, r))).epsilon(1e-10));
  }
}

TEST_CASE("triangle affine density: consistency and oracle agreement") {
  std::mt19937 rng(41);
  const Vector3d a(0, 0, 0), b(1.2, 0.1, 0), c(0.2, 0.9, 0.4);
  for (int k = 0; k < 8; ++k) {
    const Vector3d r = random_point(rng, -1, 2);
    const TriangleIntegrals t(a, b, c, r);

    CHECK(t.inv_r_affine(Vector3d(1, 1, 1)) == doctest::Approx(t.inv_r()).epsilon(1e-13));

    // Affine interpolation of vertex values via barycentric coordinates.
    const Vector3d vals(0.3, -1.1, 0.7);
    auto affine = [&](const Vector3d& p) {
      Eigen::Matrix3d m;
      m.col(0) = b - a;
      m.col(1) = c - a;
      m.col(2) = (b - a).cross(c - a);
      const Vector3d x = m.colPivHouseholderQr().solve(p - a);
      return vals[0] * (1.0 - x[0] - x[1]) + vals[1] * x[0] + vals[2] * x[1];
    };
    const double oracle = adaptive_triangle(a, b, c, r, 26, [&](const Vector3d& p) {
      const double dist = (r - p).norm();
      return dist < 1e-13 ? 0.0 : affine(p) / dist;
    });
    CHECK(t.inv_r_affine(vals) == doctest::Approx(oracle).epsilon(4e-6));
  }
}

TEST_CASE("triangle integral of R against quadrature") {
  std::mt19937 rng(43);
  const Vector3d a(0, 0, 0), b(1, 0, 0), c(0.3, 0.8, 0);
  for (int k = 0; k < 6; ++k) {
    Vector3d r = random_point(rng, -1, 1);
    r.z() += (r.z() >= 0 ? 0.3 : -0.3);  // keep away from the plane, R stays smooth
    const TriangleIntegrals t(a, b, c, r);
    const double oracle = adaptive_triangle(a, b, c, r, 8,
                                            [&](const Vector3d& p) { return (r - p).norm(); });
    CHECK(t.r_integral() == doctest::Approx(oracle).epsilon(1e-9));
  }
}

TEST_CASE("triangle gradients match finite differences off the plane") {
  std::mt19937 rng(47);
  const Vector3d a(0, 0, 0), b(1, 0.1, 0), c(0.2, 1, 0.2);
  const Vector3d vals(1.0, -0.4, 2.2);
  for (int k = 0; k < 6; ++k) {
    Vector3d r = random_point(rng, -0.8, 1.4);
    const TriangleIntegrals probe(a, b, c, r);
    if (std::abs(probe.signed_height()) < 0.2) continue;
    const Vector3d g = probe.grad_inv_r();
    const Vector3d ga = probe.grad_inv_r_affine(vals);
    const double h = 1e-6;
    for (int ax = 0; ax < 3; ++ax) {
      Vector3d dp = Vector3d::Zero();
      dp[ax] = h;
      const TriangleIntegrals tp(a, b, c, r + dp), tm(a, b, c, r - dp);
      CHECK(g[ax] == doctest::Approx((tp.inv_r() - tm.inv_r()) / (2 * h)).epsilon(2e-6));
      CHECK(ga[ax] ==
            doctest::Approx((tp.inv_r_affine(vals) - tm.inv_r_affine(vals)) / (2 * h))
                .epsilon(2e-6));
    }
  }
}

TEST_CASE("in-plane gradient is the two-sided principal value") {
  const Vector3d a(0, 0, 0), b(1, 0, 0), c(0.2, 0.9, 0);
  const Vector3d vals(0.8, 1.7, -0.5);
  // Observation strictly inside the triangle, exactly in its plane.
  const Vector3d r = (a + b + c) / 3.0 + Vector3d(0.05, 0.02, 0);
  const Vector3d n(0, 0, 1);
  const double eps = 1e-7;
  const TriangleIntegrals mid(a, b, c, r), up(a, b, c, r + eps * n), dn(a, b, c, r - eps * n);
  const Vector3d avg = 0.5 * (up.grad_inv_r() + dn.grad_inv_r());
  CHECK((mid.grad_inv_r() - avg).norm() < 1e-4);
  const Vector3d avg_affine = 0.5 * (up.grad_inv_r_affine(vals) + dn.grad_inv_r_affine(vals));
  CHECK((mid.grad_inv_r_affine(vals) - avg_affine).norm() < 1e-4);
  // The two one-sided normal components differ by the full 4*pi jump of a
  // unit-density layer (scaled by the local density for the affine case).
  const double jump = up.grad_inv_r().z() - dn.grad_inv_r().z();
  CHECK(jump == doctest::Approx(-4.0 * kPi).epsilon(1e-4));
}

TEST_CASE("segment integrals match the arcsinh form and quadrature") {
  const Vector3d a(0, 0, 0), b(0.01, 0, 0);
  std::mt19937 rng(53);
  for (int k = 0; k < 10; ++k) {
    const Vector3d r = random_point(rng, -0.005, 0.015);
    const double rho = std::sqrt(r.y() * r.y() + r.z() * r.z());
    if (rho < 1e-4) continue;
    const SegmentIntegrals s(a, b, r);
    const double sa = -r.x(), sb = 0.01 - r.x();
    const double oracle = std::asinh(sb / rho) - std::asinh(sa / rho);
    CHECK(s.inv_r() == doctest::Approx(oracle).epsilon(1e-11));
  }

  // Dense Gauss-Legendre oracle, observation off the segment.
  const Vector3d r(0.004, 0.002, 0.001);
  std::vector<double> x, w;
  gauss_legendre_01(60, x, w);
  double dense = 0.0;
  for (size_t i = 0; i < x.size(); ++i)
    dense += w[i] * 0.01 / ((r - Vector3d(0.01 * x[i], 0, 0)).norm());
  CHECK(SegmentIntegrals(a, b, r).inv_r() == doctest::Approx(dense).epsilon(1e-8));
}

TEST_CASE("thin-wire offset regularizes on-axis observation") {
  const Vector3d a(0, 0, 0), b(0.01, 0, 0);
  const double wire_a = 5e-4;
  const Vector3d on_axis(0.003, 0, 0);
  const SegmentIntegrals s(a, b, on_axis, wire_a * wire_a);
  const double sa = -0.003, sb = 0.007;
  const double oracle = std::asinh(sb / wire_a) - std::asinh(sa / wire_a);
  CHECK(s.inv_r() == doctest::Approx(oracle).epsilon(1e-11));

  CHECK_THROWS_WITH_AS(SegmentIntegrals(a, b, on_axis), doctest::Contains("on source segment"),
                       Error);
}

TEST_CASE("segment gradient matches finite differences") {
  const Vector3d a(0, 0, 0), b(0.01, 0.002, -0.001);
  std::mt19937 rng(59);
  for (int k = 0; k < 8; ++k) {
    const Vector3d r = random_point(rng, -0.004, 0.012);
    if ((r - a).norm() < 2e-3 || (r - b).norm() < 2e-3) continue;
    const SegmentIntegrals s(a, b, r, k % 2 ? 1e-6 : 0.0);
    if (k % 2 == 0) {
      const SegmentIntegrals probe(a, b, r);
      if (probe.inv_r() > 8) continue;  // too close to the segment for clean differences
    }
    const double off2 = k % 2 ? 1e-6 : 0.0;
    const Vector3d g = s.grad_inv_r();
    const double h = 1e-7;
    for (int ax = 0; ax < 3; ++ax) {
      Vector3d dp = Vector3d::Zero();
      dp[ax] = h;
      const double fd =
          (SegmentIntegrals(a, b, r + dp, off2).inv_r() - SegmentIntegrals(a, b, r - dp, off2).inv_r()) /
          (2 * h);
      CHECK(g[ax] == doctest::Approx(fd).epsilon(5e-6));
    }
  }
}

TEST_CASE("axial observation beyond the segment end") {
  const Vector3d a(0, 0, 0), b(0.01, 0, 0);
  const Vector3d r(0.02, 0, 0);  // on the axis, past b
  const SegmentIntegrals s(a, b, r);
  CHECK(s.inv_r() == doctest::Approx(std::log(2.0)).epsilon(1e-12));  // ln(0.02/0.01)
}

TEST_CASE("tet Newton potential: far field and face continuity") {
  const std::array<Vector3d, 4> v = {Vector3d(0, 0, 0), Vector3d(1, 0, 0), Vector3d(0, 1, 0),
                                     Vector3d(0, 0, 1)};
  const double volume = 1.0 / 6.0;
  const Vector3d far(30, 40, 50);
  const Vector3d center = (v[0] + v[1] + v[2] + v[3]) / 4.0;
  CHECK(TetIntegrals(v, far).newton() ==
        doctest::Approx(volume / (far - center).norm()).epsilon(1e-4));

  // Continuity across a face: approach the slanted face centroid from both sides.
  const Vector3d fc = (v[1] + v[2] + v[3]) / 3.0;
  const Vector3d n = Vector3d(1, 1, 1).normalized();
  const double eps = 1e-8;
  const double inner = TetIntegrals(v, fc - eps * n).newton();
  const double outer = TetIntegrals(v, fc + eps * n).newton();
  CHECK(inner == doctest::Approx(outer).epsilon(1e-6));
  CHECK(TetIntegrals(v, fc).newton() == doctest::Approx(inner).epsilon(1e-6));
}

TEST_CASE("tet Newton potential at interior points against quadrature oracles") {
  const std::array<Vector3d, 4> v = {Vector3d(0, 0, 0), Vector3d(1, 0, 0), Vector3d(0, 1, 0),
                                     Vector3d(0, 0, 1)};
  static const int faces[4][3] = {{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}};
  std::mt19937 rng(61);
  std::uniform_real_distribution<double> u(0.05, 0.4);
  for (int k = 0; k < 4; ++k) {
    Vector3d bary(u(rng), u(rng), u(rng));
    const Vector3d obs = v[0] + bary[0] * (v[1] - v[0]) + bary[1] * (v[2] - v[0]) +
                         bary[2] * (v[3] - v[0]);

    // Divergence-theorem oracle: the volume integral of 1/R equals a sum of
    // face integrals whose integrands stay smooth for interior observations;
    // those are integrated numerically, independent of the closed forms.
    double face_oracle = 0.0;
    for (const auto& f : faces) {
      const Vector3d e0 = v[f[0]], e1 = v[f[1]], e2 = v[f[2]];
      const Vector3d outward = (e1 - e0).cross(e2 - e0).normalized();
      face_oracle += adaptive_triangle(e0, e1, e2, obs, 14, [&](const Vector3d& p) {
        return 0.5 * outward.dot(p - obs) / (obs - p).norm();
      });
    }
    CHECK(TetIntegrals(v, obs).newton() == doctest::Approx(face_oracle).epsilon(1e-8));

    // Coarse direct volume quadrature: sub-tets collapsed at the singular
    // vertex; converges slowly, so this only pins the overall magnitude.
    const auto& rule = tet_quadrature(6);
    double volume_oracle = 0.0;
    for (const auto& f : faces) {
      const Vector3d e0 = v[f[0]], e1 = v[f[1]], e2 = v[f[2]];
      const double vol6 = std::abs((e1 - e0).cross(e2 - e0).dot(obs - e0));
      for (size_t i = 0; i < rule.points.size(); ++i) {
        const auto& p = rule.points[i];
        const Vector3d phys = e0 + p.x() * (e1 - e0) + p.y() * (e2 - e0) + p.z() * (obs - e0);
        volume_oracle += rule.weights[i] * vol6 / (obs - phys).norm();
      }
    }
    CHECK(TetIntegrals(v, obs).newton() == doctest::Approx(volume_oracle).epsilon(0.03));
  }
}

TEST_CASE("tet Newton gradient matches finite differences") {
  const std::array<Vector3d, 4> v = {Vector3d(0, 0, 0), Vector3d(1, 0, 0), Vector3d(0, 1, 0),
                                     Vector3d(0, 0, 1)};
  std::mt19937 rng(67);
  for (int k = 0; k < 6; ++k) {
    const Vector3d r = random_point(rng, -0.8, 1.6);
    bool near = false;
    for (const auto& vv : v) near = near || (r - vv).norm() < 0.3;
    if (near || TetIntegrals(v, r).newton() > 0.5) continue;
    const Vector3d g = TetIntegrals(v, r).grad_newton();
    const double h = 1e-6;
    for (int ax = 0; ax < 3; ++ax) {
      Vector3d dp = Vector3d::Zero();
      dp[ax] = h;
      const double fd =
          (TetIntegrals(v, r + dp).newton() - TetIntegrals(v, r - dp).newton()) / (2 * h);
      CHECK(g[ax] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("inverted tet is rejected") {
  const std::array<Vector3d, 4> v = {Vector3d(0, 0, 0), Vector3d(0, 1, 0), Vector3d(1, 0, 0),
                                     Vector3d(0, 0, 1)};
  CHECK_THROWS_WITH_AS(TetIntegrals(v, Vector3d(3, 3, 3)), doctest::Contains("inverted"), Error);
}

}  // TEST_SUITE
