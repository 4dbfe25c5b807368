#include "quadrature.hpp"

#include <cmath>
#include <map>

#include "common.hpp"

namespace hybem {

namespace {

// Golub-Welsch: nodes/weights of the n-point Gauss rule for the Jacobi weight
// (1-x)^alpha on [-1,1] (beta = 0), from the symmetric tridiagonal recurrence
// matrix of the monic orthogonal polynomials.
void gauss_jacobi(int n, double alpha, std::vector<double>& x, std::vector<double>& w) {
  const double beta = 0.0;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    double ak;
    if (k == 0) {
      ak = (beta - alpha) / (alpha + beta + 2.0);
    } else {
      const double q = 2.0 * k + alpha + beta;
      ak = (beta * beta - alpha * alpha) / (q * (q + 2.0));
    }
    J(k, k) = ak;
    if (k >= 1) {
      const double q = 2.0 * k + alpha + beta;
      const double bk = 4.0 * k * (k + alpha) * (k + beta) * (k + alpha + beta) /
                        (q * q * (q + 1.0) * (q - 1.0));
      J(k, k - 1) = J(k - 1, k) = std::sqrt(bk);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  const double mu0 = std::pow(2.0, alpha + beta + 1.0) / (alpha + 1.0);  // beta = 0
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    x[i] = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    w[i] = mu0 * v0 * v0;
  }
}

// Same rule shifted to [0,1] with weight (1-t)^alpha.
void gauss_jacobi_01(int n, double alpha, std::vector<double>& t, std::vector<double>& w) {
  gauss_jacobi(n, alpha, t, w);
  const double scale = std::pow(2.0, alpha + 1.0);
  for (int i = 0; i < n; ++i) {
    t[i] = 0.5 * (t[i] + 1.0);
    w[i] /= scale;
  }
}

int points_for_order(int order) {
  switch (order) {
    case 1: return 1;
    case 2:
    case 3: return 2;
    case 4: return 3;
    case 6: return 4;
    default: fail(ErrorCode::invalid, "unsupported quadrature order " + std::to_string(order));
  }
}

QuadratureRule make_segment(int order) {
  QuadratureRule r{ElementKind::segment, order, {}, {}};
  std::vector<double> x, w;
  gauss_legendre_01(points_for_order(order), x, w);
  for (size_t i = 0; i < x.size(); ++i) {
    r.points.emplace_back(x[i], 0.0, 0.0);
    r.weights.push_back(w[i]);
  }
  return r;
}

// Conical (collapsed) product rule on the reference triangle:
// x = u (1-v), y = v with Jacobian (1-v). Positive weights at any order.
QuadratureRule make_triangle(int order) {
  QuadratureRule r{ElementKind::triangle, order, {}, {}};
  const int n = points_for_order(order);
  std::vector<double> u, wu, v, wv;
  gauss_legendre_01(n, u, wu);
  gauss_jacobi_01(n, 1.0, v, wv);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      r.points.emplace_back(u[i] * (1.0 - v[j]), v[j], 0.0);
      r.weights.push_back(wu[i] * wv[j]);
    }
  return r;
}

// x = u (1-v)(1-w), y = v (1-w), z = w with Jacobian (1-v)(1-w)^2.
QuadratureRule make_tetrahedron(int order) {
  QuadratureRule r{ElementKind::tetrahedron, order, {}, {}};
  const int n = points_for_order(order);
  std::vector<double> u, wu, v, wv, t, wt;
  gauss_legendre_01(n, u, wu);
  gauss_jacobi_01(n, 1.0, v, wv);
  gauss_jacobi_01(n, 2.0, t, wt);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const double z = t[k];
        const double y = v[j] * (1.0 - z);
        const double x = u[i] * (1.0 - v[j]) * (1.0 - z);
        r.points.emplace_back(x, y, z);
        r.weights.push_back(wu[i] * wv[j] * wt[k]);
      }
  return r;
}

template <typename Maker>
const QuadratureRule& cached(std::map<int, QuadratureRule>& cache, int order, Maker maker) {
  auto it = cache.find(order);
  if (it == cache.end()) {
    points_for_order(order);  // rejects unsupported orders before inserting
    it = cache.emplace(order, maker(order)).first;
  }
  return it->second;
}

}  // namespace

void gauss_legendre_01(int n, std::vector<double>& x, std::vector<double>& w) {
  gauss_jacobi(n, 0.0, x, w);
  for (int i = 0; i < n; ++i) {
    x[i] = 0.5 * (x[i] + 1.0);
    w[i] *= 0.5;
  }
}

const QuadratureRule& segment_quadrature(int order) {
  static std::map<int, QuadratureRule> cache = [] {
    std::map<int, QuadratureRule> c;
    for (int o : {1, 2, 3, 4, 6}) c.emplace(o, make_segment(o));
    return c;
  }();
  return cached(cache, order, make_segment);
}

const QuadratureRule& tri_quadrature(int order) {
  static std::map<int, QuadratureRule> cache = [] {
    std::map<int, QuadratureRule> c;
    for (int o : {1, 2, 3, 4, 6}) c.emplace(o, make_triangle(o));
    return c;
  }();
  return cached(cache, order, make_triangle);
}

const QuadratureRule& tet_quadrature(int order) {
  static std::map<int, QuadratureRule> cache = [] {
    std::map<int, QuadratureRule> c;
    for (int o : {1, 2, 3, 4, 6}) c.emplace(o, make_tetrahedron(o));
    return c;
  }();
  return cached(cache, order, make_tetrahedron);
}

}  // namespace hybem
