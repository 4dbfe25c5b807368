#pragma once

#include <Eigen/Dense>
#include <vector>

namespace hybem {

enum class ElementKind { segment, triangle, tetrahedron };

// Reference-element rule. Coordinates live on the unit simplex of the element
// dimension (segment: x in [0,1]; triangle: x,y >= 0, x+y <= 1; tetrahedron:
// x,y,z >= 0, x+y+z <= 1); unused components are zero. Weights are strictly
// positive and sum to the reference measure (1, 1/2, 1/6).
struct QuadratureRule {
  ElementKind kind;
  int order;  // exact for polynomials of total degree <= order
  std::vector<Eigen::Vector3d> points;
  std::vector<double> weights;
};

// Supported orders: 1, 2, 3, 4, 6. Anything else throws ErrorCode::invalid.
const QuadratureRule& segment_quadrature(int order);
const QuadratureRule& tri_quadrature(int order);
const QuadratureRule& tet_quadrature(int order);

// Gauss-Legendre on [0,1], n points (exact to degree 2n-1). Exposed for the
// 1-D integrals in the wire handling and for tests.
void gauss_legendre_01(int n, std::vector<double>& x, std::vector<double>& w);

}  // namespace hybem
