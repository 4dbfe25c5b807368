#include "kernels.hpp"

#include <cmath>

#include "common.hpp"

namespace hybem {

namespace {

double sgn(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

double green(const Eigen::Vector3d& r, const Eigen::Vector3d& rp) {
  const double dist = (r - rp).norm();
  if (dist == 0.0) fail(ErrorCode::invalid, "kernel evaluated at coincident points");
  return 1.0 / (4.0 * kPi * dist);
}

Eigen::Vector3d grad_green(const Eigen::Vector3d& r, const Eigen::Vector3d& rp) {
  const Eigen::Vector3d diff = r - rp;
  const double dist = diff.norm();
  if (dist == 0.0) fail(ErrorCode::invalid, "kernel evaluated at coincident points");
  return -diff / (4.0 * kPi * dist * dist * dist);
}

TriangleIntegrals::TriangleIntegrals(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                                     const Eigen::Vector3d& c, const Eigen::Vector3d& r) {
  corner_[0] = a;
  corner_[1] = b;
  corner_[2] = c;
  const Eigen::Vector3d cross = (b - a).cross(c - a);
  const double two_area = cross.norm();
  const double lmax =
      std::sqrt(std::max({(b - a).squaredNorm(), (c - b).squaredNorm(), (a - c).squaredNorm()}));
  if (two_area <= 1e-14 * lmax * lmax) fail(ErrorCode::invalid, "degenerate triangle");
  n_ = cross / two_area;
  d_ = n_.dot(r - a);
  rho_ = r - d_ * n_;

  bary_grad_[0] = n_.cross(c - b) / two_area;
  bary_grad_[1] = n_.cross(a - c) / two_area;
  bary_grad_[2] = n_.cross(b - a) / two_area;

  const double ad = std::abs(d_);
  for (int j = 0; j < 3; ++j) {
    const Eigen::Vector3d& va = corner_[j];
    const Eigen::Vector3d& vb = corner_[(j + 1) % 3];
    Edge& e = edge_[j];
    const double len = (vb - va).norm();
    e.shat = (vb - va) / len;
    e.mhat = e.shat.cross(n_);
    const double sa = e.shat.dot(va - rho_);
    const double sb = sa + len;
    e.t = e.mhat.dot(va - rho_);
    const double ra = (r - va).norm();
    const double rb = (r - vb).norm();
    const double r02 = e.t * e.t + d_ * d_;

    // Observation on the closed segment: the 1/R edge integral diverges but
    // every weighted use of it vanishes in the limit, so store 0.
    const bool on_segment = ra + rb <= len * (1.0 + 1e-12);
    if (on_segment)
      e.f2 = 0.0;
    else if (sa + sb >= 0.0)
      e.f2 = std::log((rb + sb) / (ra + sa));
    else
      e.f2 = std::log((ra - sa) / (rb - sb));

    double beta = 0.0;
    const double tol = 1e-14 * (len + ra + rb);
    if (r02 > tol * tol)
      beta = std::atan(e.t * sb / (r02 + ad * rb)) - std::atan(e.t * sa / (r02 + ad * ra));
    e.rdiff = rb - ra;
    const double f3 = 0.5 * (sb * rb - sa * ra + r02 * e.f2);

    i1_ += e.t * e.f2;
    beta_sum_ += beta;
    sum_t_f3_ += e.t * f3;
    sum_m_f2_ += e.mhat * e.f2;
    sum_m_f3_ += e.mhat * f3;
  }
  i1_ -= ad * beta_sum_;
}

double TriangleIntegrals::inv_r_affine(const Eigen::Vector3d& vertex_values) const {
  Eigen::Vector3d beta = Eigen::Vector3d::Zero();
  for (int i = 0; i < 3; ++i) beta += vertex_values[i] * bary_grad_[i];
  const double at_rho = vertex_values[0] + beta.dot(rho_ - corner_[0]);
  return at_rho * i1_ + beta.dot(sum_m_f3_);
}

Eigen::Vector3d TriangleIntegrals::grad_inv_r() const {
  return -sum_m_f2_ - n_ * (sgn(d_) * beta_sum_);
}

Eigen::Vector3d TriangleIntegrals::grad_inv_r_affine(const Eigen::Vector3d& vertex_values) const {
  Eigen::Vector3d beta = Eigen::Vector3d::Zero();
  for (int i = 0; i < 3; ++i) beta += vertex_values[i] * bary_grad_[i];
  const double at_rho = vertex_values[0] + beta.dot(rho_ - corner_[0]);
  Eigen::Vector3d res =
      beta * i1_ - n_ * (at_rho * sgn(d_) * beta_sum_ - d_ * beta.dot(sum_m_f2_));
  for (const Edge& e : edge_) {
    const double at_foot = at_rho + e.t * beta.dot(e.mhat);
    res -= e.mhat * (at_foot * e.f2 + beta.dot(e.shat) * e.rdiff);
  }
  return res;
}

SegmentIntegrals::SegmentIntegrals(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                                   const Eigen::Vector3d& r, double offset2) {
  const double len = (b - a).norm();
  if (len == 0.0) fail(ErrorCode::invalid, "zero-length segment");
  shat_ = (b - a) / len;
  const double sproj = shat_.dot(r - a);
  sa_ = -sproj;
  sb_ = len - sproj;
  perp_ = (r - a) - sproj * shat_;
  rho2_ = perp_.squaredNorm() + offset2;
  ra_ = std::sqrt(sa_ * sa_ + rho2_);
  rb_ = std::sqrt(sb_ * sb_ + rho2_);
  if (rho2_ <= 1e-28 * len * len && sa_ < 0.0 && sb_ > 0.0)
    fail(ErrorCode::invalid, "observation on source segment");
}

double SegmentIntegrals::inv_r() const {
  if (sa_ + sb_ >= 0.0) return std::log((rb_ + sb_) / (ra_ + sa_));
  return std::log((ra_ - sa_) / (rb_ - sb_));
}

Eigen::Vector3d SegmentIntegrals::grad_inv_r() const {
  // integral of (r - r')/R^3 along the segment, negated
  double axial = 0.0;
  if (sa_ * sb_ <= 0.0)
    axial = sb_ / rb_ - sa_ / ra_;
  else
    axial = rho2_ * (sb_ * sb_ - sa_ * sa_) / (ra_ * rb_ * (sb_ * ra_ + sa_ * rb_));
  const Eigen::Vector3d field = perp_ * (axial / rho2_) + shat_ * (1.0 / rb_ - 1.0 / ra_);
  return -field;
}

namespace {

// Outward face opposite vertex k of a positively oriented tet.
constexpr int kFaceOf[4][3] = {{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}};

TriangleIntegrals make_face(const std::array<Eigen::Vector3d, 4>& v, int k,
                            const Eigen::Vector3d& r) {
  return TriangleIntegrals(v[kFaceOf[k][0]], v[kFaceOf[k][1]], v[kFaceOf[k][2]], r);
}

}  // namespace

TetIntegrals::TetIntegrals(const std::array<Eigen::Vector3d, 4>& v, const Eigen::Vector3d& r)
    : faces_{make_face(v, 0, r), make_face(v, 1, r), make_face(v, 2, r), make_face(v, 3, r)} {
  const double vol6 = (v[1] - v[0]).cross(v[2] - v[0]).dot(v[3] - v[0]);
  if (vol6 <= 0.0) fail(ErrorCode::invalid, "inverted tetrahedron");
}

double TetIntegrals::newton() const {
  double sum = 0.0;
  for (const auto& f : faces_) sum += f.signed_height() * f.inv_r();
  return -0.5 * sum;
}

Eigen::Vector3d TetIntegrals::grad_newton() const {
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (const auto& f : faces_) sum += f.unit_normal() * f.inv_r();
  return -sum;
}

}  // namespace hybem
