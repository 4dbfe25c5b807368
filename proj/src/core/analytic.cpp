#include "core/analytic.hpp"

#include <cmath>

#include "core/common.hpp"

namespace hybem {

using Eigen::Vector3d;
using Eigen::VectorXd;

double dipole_infinite_potential(const Vector3d& r, const Vector3d& position,
                                 const Vector3d& moment, double sigma) {
  const Vector3d d = r - position;
  const double dist = d.norm();
  if (dist == 0.0) fail(ErrorCode::invalid, "dipole potential evaluated at the source");
  return moment.dot(d) / (4.0 * kPi * sigma * dist * dist * dist);
}

Vector3d dipole_infinite_gradient(const Vector3d& r, const Vector3d& position,
                                  const Vector3d& moment, double sigma) {
  const Vector3d d = r - position;
  const double dist = d.norm();
  if (dist == 0.0) fail(ErrorCode::invalid, "dipole potential evaluated at the source");
  const double d3 = dist * dist * dist;
  return (moment - 3.0 * moment.dot(d) / (dist * dist) * d) / (4.0 * kPi * sigma * d3);
}

namespace {

void validate_sphere_model(const LayeredSphere& model) {
  if (model.radii.empty()) fail(ErrorCode::invalid, "sphere model has no layers");
  if (model.radii.size() != model.sigma.size())
    fail(ErrorCode::invalid, "sphere model needs one conductivity per layer");
  double prev = 0.0;
  for (double r : model.radii) {
    if (!(r > prev)) fail(ErrorCode::invalid, "sphere radii must be strictly increasing");
    prev = r;
  }
  for (double s : model.sigma)
    if (!(s > 0.0)) fail(ErrorCode::invalid, "sphere conductivities must be positive");
}

// One spherical-harmonic degree of the radial transmission problem. Layer i
// (1-based) uses the scaled basis (r/r_i)^n and (r_{i-1}/r)^{n+1} so every
// matrix entry stays O(n) regardless of degree.
struct RadialMode {
  int n = 0;
  int source_layer = 0;  // 1-based
  double b = 0.0;        // source radius
  const LayeredSphere* model = nullptr;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;

  // Primary-field terms for the branch outside (r > b) and inside (r < b) the
  // source radius; c carries the moment and 1/(4 pi sigma) factors.
  double prim_out(double r, double c) const { return c * std::pow(b / r, n - 1) / (r * r); }
  double prim_in(double r, double c) const { return c * std::pow(r / b, n) / (b * b); }

  double inner_radius(int layer) const { return layer >= 2 ? model->radii[layer - 2] : 0.0; }
  double outer_radius(int layer) const { return model->radii[layer - 1]; }

  static int col_a(int layer, int /*num*/) { return layer == 1 ? 0 : 2 * layer - 3; }
  static int col_b(int layer) { return 2 * layer - 2; }

  void factor() {
    const int num = static_cast<int>(model->radii.size());
    const int dim = 2 * num - 1;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim, dim);
    int row = 0;
    for (int k = 1; k < num; ++k) {
      const double rk = outer_radius(k);
      const double ratio_below = std::pow(inner_radius(k) / rk, n + 1);
      const double ratio_above = std::pow(rk / outer_radius(k + 1), n);
      // Potential continuity.
      m(row, col_a(k, num)) += 1.0;
      if (k >= 2) m(row, col_b(k)) += ratio_below;
      m(row, col_a(k + 1, num)) -= ratio_above;
      m(row, col_b(k + 1)) -= 1.0;
      ++row;
      // Radial current continuity, multiplied by rk.
      const double sk = model->sigma[k - 1];
      const double sk1 = model->sigma[k];
      m(row, col_a(k, num)) += sk * n;
      if (k >= 2) m(row, col_b(k)) -= sk * (n + 1) * ratio_below;
      m(row, col_a(k + 1, num)) -= sk1 * n * ratio_above;
      m(row, col_b(k + 1)) += sk1 * (n + 1);
      ++row;
    }
    // Insulating exterior: zero radial current at the outermost radius.
    m(row, col_a(num, num)) += n;
    if (num >= 2) m(row, col_b(num)) -= (n + 1) * std::pow(inner_radius(num) / outer_radius(num), n + 1);
    lu.compute(m);
  }

  VectorXd solve(double c_out, double c_in) const {
    const int num = static_cast<int>(model->radii.size());
    const int dim = 2 * num - 1;
    VectorXd rhs = VectorXd::Zero(dim);
    int row = 0;
    for (int k = 1; k < num; ++k) {
      const double rk = outer_radius(k);
      double phi_rhs = 0.0, flux_rhs = 0.0;
      if (source_layer == k) {
        phi_rhs -= prim_out(rk, c_out);
        flux_rhs += model->sigma[k - 1] * (n + 1) * prim_out(rk, c_out);
      }
      if (source_layer == k + 1) {
        phi_rhs += prim_in(rk, c_in);
        flux_rhs += model->sigma[k] * n * prim_in(rk, c_in);
      }
      rhs[row++] = phi_rhs;
      rhs[row++] = flux_rhs;
    }
    rhs[row] = source_layer == num ? (n + 1) * prim_out(outer_radius(num), c_out) : 0.0;
    return lu.solve(rhs);
  }

  double evaluate(const VectorXd& coeff, int layer, double r, double c_out, double c_in) const {
    const int num = static_cast<int>(model->radii.size());
    double val = coeff[col_a(layer, num)] * std::pow(r / outer_radius(layer), n);
    if (layer >= 2) val += coeff[col_b(layer)] * std::pow(inner_radius(layer) / r, n + 1);
    if (layer == source_layer) val += r >= b ? prim_out(r, c_out) : prim_in(r, c_in);
    return val;
  }
};

int layer_of_radius(const LayeredSphere& model, double r) {
  for (size_t i = 0; i < model.radii.size(); ++i)
    if (r <= model.radii[i] * (1.0 + 1e-12)) return static_cast<int>(i) + 1;
  fail(ErrorCode::invalid, "observation point outside the sphere model");
}

VectorXd referenced(const VectorXd& v) { return v.array() - v.mean(); }

}  // namespace

VectorXd layered_sphere_potential(const LayeredSphere& model, const Vector3d& position,
                                  const Vector3d& moment,
                                  const std::vector<Vector3d>& points, int max_modes) {
  validate_sphere_model(model);
  if (points.empty()) fail(ErrorCode::invalid, "no observation points given");
  const double b = position.norm();
  if (!(b < model.radii.back() * (1.0 - 1e-9)))
    fail(ErrorCode::invalid, "dipole must lie strictly inside the outermost sphere");

  const int npts = static_cast<int>(points.size());
  VectorXd phi = VectorXd::Zero(npts);
  if (moment.norm() == 0.0) return phi;

  // Axis through the source; for a central dipole any axis containing the
  // moment works and leaves a single tangential-free channel.
  const Vector3d zhat = b > 1e-14 * model.radii.back() ? (position / b).eval()
                                                       : moment.normalized().eval();
  const double pr = moment.dot(zhat);
  const Vector3d pt_vec = moment - pr * zhat;
  const double pt = pt_vec.norm();
  const Vector3d xhat = pt > 0.0 ? (pt_vec / pt).eval() : Vector3d::Zero().eval();

  int source_layer = 1;
  for (size_t i = 0; i < model.radii.size(); ++i)
    if (b >= model.radii[i]) source_layer = static_cast<int>(i) + 2;
  const double sigma_s = model.sigma[source_layer - 1];

  struct PointState {
    int layer;
    double r, u, w;     // radius, cos(theta), sin(theta)cos(phi)
    double p_prev, p_cur;    // Legendre P_{n-1}, P_n
    double dp_prev, dp_cur;  // their derivatives
  };
  std::vector<PointState> st(points.size());
  for (int j = 0; j < npts; ++j) {
    const double r = points[j].norm();
    st[j].layer = layer_of_radius(model, r);
    st[j].r = r;
    if (r > 0.0) {
      const Vector3d rhat = points[j] / r;
      st[j].u = rhat.dot(zhat);
      st[j].w = rhat.dot(xhat);
    } else {
      st[j].u = 1.0;
      st[j].w = 0.0;
    }
    st[j].p_prev = 1.0;
    st[j].p_cur = st[j].u;
    st[j].dp_prev = 0.0;
    st[j].dp_cur = 1.0;
  }

  RadialMode mode;
  mode.source_layer = source_layer;
  mode.b = b;
  mode.model = &model;

  double running_max = 0.0;
  int quiet = 0;
  const double inv = 1.0 / (4.0 * kPi * sigma_s);
  const bool have_radial = pr != 0.0;
  const bool have_tangential = pt != 0.0;
  for (int n = 1; n <= max_modes && (have_radial || have_tangential); ++n) {
    mode.n = n;
    mode.factor();

    const double cr_out = pr * n * inv, cr_in = -pr * (n + 1) * inv;
    const double ct_out = pt * inv, ct_in = pt * inv;
    VectorXd coeff_radial, coeff_tangential;
    if (have_radial) coeff_radial = mode.solve(cr_out, cr_in);
    if (have_tangential) coeff_tangential = mode.solve(ct_out, ct_in);

    double inc_max = 0.0;
    for (int j = 0; j < npts; ++j) {
      double inc = 0.0;
      if (have_radial)
        inc += mode.evaluate(coeff_radial, st[j].layer, st[j].r, cr_out, cr_in) * st[j].p_cur;
      if (have_tangential)
        inc += mode.evaluate(coeff_tangential, st[j].layer, st[j].r, ct_out, ct_in) *
               st[j].dp_cur * st[j].w;
      phi[j] += inc;
      inc_max = std::max(inc_max, std::abs(inc));
      running_max = std::max(running_max, std::abs(phi[j]));
      // Advance the Legendre recurrences to degree n+1.
      const double p_next = ((2 * n + 1) * st[j].u * st[j].p_cur - n * st[j].p_prev) / (n + 1);
      const double dp_next = st[j].dp_prev + (2 * n + 1) * st[j].p_cur;
      st[j].p_prev = st[j].p_cur;
      st[j].p_cur = p_next;
      st[j].dp_prev = st[j].dp_cur;
      st[j].dp_cur = dp_next;
    }

    if (inc_max <= 1e-14 * std::max(running_max, 1e-300)) {
      if (++quiet >= 4) break;
    } else {
      quiet = 0;
    }
  }
  return phi;
}

double relative_error(const VectorXd& test, const VectorXd& reference) {
  if (test.size() != reference.size()) fail(ErrorCode::invalid, "metric size mismatch");
  const VectorXd a = referenced(test), r = referenced(reference);
  const double denom = r.norm();
  if (denom == 0.0) fail(ErrorCode::invalid, "reference vector is zero");
  return (a - r).norm() / denom;
}

double rdm(const VectorXd& test, const VectorXd& reference) {
  if (test.size() != reference.size()) fail(ErrorCode::invalid, "metric size mismatch");
  const VectorXd a = referenced(test), r = referenced(reference);
  if (a.norm() == 0.0 || r.norm() == 0.0) fail(ErrorCode::invalid, "metric vector is zero");
  return (a / a.norm() - r / r.norm()).norm();
}

double mag(const VectorXd& test, const VectorXd& reference) {
  if (test.size() != reference.size()) fail(ErrorCode::invalid, "metric size mismatch");
  const VectorXd a = referenced(test), r = referenced(reference);
  const double denom = r.norm();
  if (denom == 0.0) fail(ErrorCode::invalid, "reference vector is zero");
  return a.norm() / denom;
}

}  // namespace hybem
