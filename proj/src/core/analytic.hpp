#pragma once

#include <Eigen/Dense>
#include <vector>

namespace hybem {

// Potential of a current dipole embedded in an unbounded homogeneous medium.
double dipole_infinite_potential(const Eigen::Vector3d& r, const Eigen::Vector3d& position,
                                 const Eigen::Vector3d& moment, double sigma);
Eigen::Vector3d dipole_infinite_gradient(const Eigen::Vector3d& r, const Eigen::Vector3d& position,
                                         const Eigen::Vector3d& moment, double sigma);

// Concentric isotropic shells. Layer i fills radii[i-1] < r < radii[i]; the
// region outside radii.back() is insulating.
struct LayeredSphere {
  std::vector<double> radii;
  std::vector<double> sigma;
};

// Spherical-harmonic series for the potential of a dipole placed anywhere
// strictly inside the outermost shell. Modes are accumulated until the
// increments stall in double precision or max_modes is reached. The returned
// values carry the gauge in which the monopole (constant) component is zero,
// so compare them mean-referenced.
Eigen::VectorXd layered_sphere_potential(const LayeredSphere& model,
                                         const Eigen::Vector3d& position,
                                         const Eigen::Vector3d& moment,
                                         const std::vector<Eigen::Vector3d>& points,
                                         int max_modes = 800);

// Error metrics between a test vector and a reference, both mean-referenced
// first so that the potential gauge drops out.
double relative_error(const Eigen::VectorXd& test, const Eigen::VectorXd& reference);
double rdm(const Eigen::VectorXd& test, const Eigen::VectorXd& reference);
double mag(const Eigen::VectorXd& test, const Eigen::VectorXd& reference);

}  // namespace hybem
