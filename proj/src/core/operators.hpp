#pragma once

#include <Eigen/Dense>

#include "core/basis.hpp"

namespace hybem {

// Dense Galerkin blocks of the layer and volume potential operators. All
// kernels carry the 1/(4 pi) factor. Evaluations that land on a source
// element follow the principal-value conventions of the closed-form kernels:
// coincident traces return the two-sided average, so the one-sided jump terms
// must be added separately (see boundary_overlap_block).

// <p_m, p_n> on the surface carrying the basis.
Eigen::MatrixXd mass_matrix(const PyramidBasis& basis);

// <p_m, n . grad S p_n>: normal trace (principal value) on the test surface
// of the single-layer potential radiated by the trial surface.
Eigen::MatrixXd adjoint_double_layer_block(const PyramidBasis& test, const PyramidBasis& trial);

// <p_m, n . grad Sv f_n>: same trace for the radiation of the volume basis.
Eigen::MatrixXd volume_normal_grad_block(const PyramidBasis& test, const SwgBasis& trial);

// Overlap of p_m with the normal trace f_n . n on region boundary faces that
// geometrically coincide with test surface triangles (n is the test surface
// normal). Zero when the region does not touch the surface.
Eigen::MatrixXd boundary_overlap_block(const PyramidBasis& test, const SwgBasis& trial);

// <f_m, grad S p_n> over the region carrying the test basis.
Eigen::MatrixXd volume_from_surface_block(const SwgBasis& test, const PyramidBasis& trial);

// <f_m, grad Sv f_n>.
Eigen::MatrixXd volume_from_volume_block(const SwgBasis& test, const SwgBasis& trial);

// <f_m, grad Sw h_n>: wire radiation, the potential of the hat slope line
// charges, regularized with the fiber radius on its own fiber.
Eigen::MatrixXd volume_from_wire_block(const SwgBasis& test, const WireHatBasis& trial);

// <p_m, n . grad Sw h_n>.
Eigen::MatrixXd surface_from_wire_block(const PyramidBasis& test, const WireHatBasis& trial);

// Wire test rows: the tangential derivative along the centerline integrated
// against h_m by parts, so each row applies minus the hat slopes to the plain
// potential of the trial sources along the wire.
Eigen::MatrixXd wire_from_surface_block(const WireHatBasis& test, const PyramidBasis& trial);
Eigen::MatrixXd wire_from_volume_block(const WireHatBasis& test, const SwgBasis& trial);
Eigen::MatrixXd wire_from_wire_block(const WireHatBasis& test, const WireHatBasis& trial);

// Pointwise potentials of the discretized sources at arbitrary points,
// including points on the elements themselves.
Eigen::VectorXd eval_single_layer(const PyramidBasis& basis, const Eigen::VectorXd& density,
                                  const std::vector<Eigen::Vector3d>& points);
Eigen::VectorXd eval_volume_radiation(const SwgBasis& basis, const Eigen::VectorXd& coeffs,
                                      const std::vector<Eigen::Vector3d>& points);
Eigen::VectorXd eval_wire_radiation(const WireHatBasis& basis, const Eigen::VectorXd& coeffs,
                                    const std::vector<Eigen::Vector3d>& points);

// <f_m, T f_n> with a constant tensor per tet.
Eigen::MatrixXd swg_material_block(const SwgBasis& basis,
                                   const std::vector<Eigen::Matrix3d>& tensor_per_tet);

// <h_m, h_n> along the fibers (tridiagonal within each fiber).
Eigen::MatrixXd wire_mass_matrix(const WireHatBasis& basis);

}  // namespace hybem
