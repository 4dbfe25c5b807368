#pragma once

#include <Eigen/Dense>
#include <array>

namespace hybem {

// Free-space Laplace kernel 1/(4*pi*|r - rp|) and its observation gradient.
double green(const Eigen::Vector3d& r, const Eigen::Vector3d& rp);
Eigen::Vector3d grad_green(const Eigen::Vector3d& r, const Eigen::Vector3d& rp);

// Closed-form integrals of 1/R, affine/R, and R over one flat triangle for a
// fixed observation point, valid at any distance including on the triangle
// itself. Values are raw (no 1/(4*pi) factor). Gradients taken on the
// triangle plane are principal values; edge contributions are finite parts
// when the observation sits exactly on an edge line.
class TriangleIntegrals {
 public:
  TriangleIntegrals(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                    const Eigen::Vector3d& r);

  // integral of 1/R over the triangle
  double inv_r() const { return i1_; }
  // integral of lambda/R with lambda affine, given by its three vertex values
  double inv_r_affine(const Eigen::Vector3d& vertex_values) const;
  // integral of R
  double r_integral() const { return (sum_t_f3_ + d_ * d_ * i1_) / 3.0; }
  // observation gradient of inv_r
  Eigen::Vector3d grad_inv_r() const;
  // observation gradient of inv_r_affine
  Eigen::Vector3d grad_inv_r_affine(const Eigen::Vector3d& vertex_values) const;

  // magnitude of the solid angle subtended by the triangle at the observation
  double solid_angle_abs() const { return beta_sum_; }
  // signed height of the observation above the triangle plane (along the normal)
  double signed_height() const { return d_; }
  const Eigen::Vector3d& unit_normal() const { return n_; }

 private:
  struct Edge {
    Eigen::Vector3d shat, mhat;  // tangent and in-plane outward normal
    double t = 0.0;              // signed in-plane distance of the edge line
    double f2 = 0.0;             // edge integral of 1/R
    double rdiff = 0.0;          // edge integral of s/R
  };

  Eigen::Vector3d corner_[3];
  Eigen::Vector3d n_, rho_;
  Eigen::Vector3d bary_grad_[3];  // in-plane gradients of the vertex hats
  Edge edge_[3];
  double d_ = 0.0;
  double i1_ = 0.0;
  double beta_sum_ = 0.0;
  double sum_t_f3_ = 0.0;
  Eigen::Vector3d sum_m_f2_ = Eigen::Vector3d::Zero();
  Eigen::Vector3d sum_m_f3_ = Eigen::Vector3d::Zero();
};

// Closed-form integrals of 1/sqrt(|r - r'|^2 + offset2) over a straight
// segment; offset2 = a*a gives the thin-wire regularized kernel. Raw values.
class SegmentIntegrals {
 public:
  SegmentIntegrals(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& r,
                   double offset2 = 0.0);

  double inv_r() const;
  Eigen::Vector3d grad_inv_r() const;

 private:
  Eigen::Vector3d shat_, perp_;
  double sa_ = 0.0, sb_ = 0.0, ra_ = 0.0, rb_ = 0.0, rho2_ = 0.0;
};

// Face-reduced integrals of 1/R over a positively oriented tetrahedron. Raw.
class TetIntegrals {
 public:
  TetIntegrals(const std::array<Eigen::Vector3d, 4>& v, const Eigen::Vector3d& r);

  double newton() const;               // integral of 1/R over the tet
  Eigen::Vector3d grad_newton() const; // observation gradient of newton()

  // Outward-oriented face opposite vertex k, with its precomputed integrals.
  const TriangleIntegrals& face(int k) const { return faces_[k]; }

 private:
  std::array<TriangleIntegrals, 4> faces_;
};

}  // namespace hybem
