#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "basis.hpp"
#include "geometry.hpp"

namespace hybem {

struct Dipole {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // meters
  Eigen::Vector3d moment = Eigen::Vector3d::Zero();    // A m
};

// Complete conduction model: nested isotropic compartments plus anisotropic
// tet regions and wire bundles embedded in them. With no surfaces the model
// is the unbounded homogeneous medium of conductivity head.sigma[0].
struct ConductionModel {
  NestedHeadModel head;
  std::vector<TetRegion> regions;
  std::vector<WireBundle> bundles;
};

// Contrast of every region and bundle against its host compartment.
// Negligible-contrast tets and fibers are dropped and the remainder re-packed,
// so the equivalent-current unknowns cover only the truly inhomogeneous
// support. The packed meshes are owned here; basis objects built on them must
// not outlive the field.
struct ContrastField {
  struct Region {
    TetRegion mesh;  // active tets only, possibly empty
    std::vector<Eigen::Matrix3d> chi;
    // Inverse of (sigma_host I - sigma) with eigenvalue moduli floored at a
    // fraction of the largest, so contrast-free directions cost enough to stay
    // small without over-constraining the expansion.
    std::vector<Eigen::Matrix3d> inverse;
    bool active() const { return !mesh.tets.empty(); }
  };
  struct Bundle {
    WireBundle wires;  // active fibers only, possibly empty
    std::vector<double> factor;  // sigma_host - sigma_l per active fiber
    bool active() const { return !wires.fibers.empty(); }
  };
  std::vector<Region> regions;
  std::vector<Bundle> bundles;
  bool any_active() const;
};

ContrastField compute_contrast(const ConductionModel& model);

struct DofLayout {
  struct Range {
    int offset = 0;
    int count = 0;
  };
  std::vector<Range> surface;
  std::vector<Range> region;  // zero count when the region is inactive
  std::vector<Range> bundle;
  int total = 0;
};

// Square coupled system over all unknowns: surface charge densities, volume
// equivalent currents, wire currents. The deflation vector holds the integral
// of every outermost-surface test function and is zero elsewhere; alpha stays
// zero until deflate() adds the rank-1 term.
struct BlockSystem {
  Eigen::MatrixXd matrix;
  DofLayout layout;
  Eigen::VectorXd deflation;
  double alpha = 0.0;
};

BlockSystem build_system(const ConductionModel& model, const ContrastField& contrast);

// Removes the constant-potential null space of the insulated outermost
// boundary by adding alpha * w w^T over the outermost-surface block. Safe to
// call once; later calls are no-ops.
void deflate(BlockSystem& system);

// Degree-of-freedom bookkeeping without assembling anything.
DofLayout dof_layout(const ConductionModel& model, const ContrastField& contrast);

// quadrature_order selects the rules for the source integrals (volume and
// wire moments of the incident field; the surface flux uses the next rule up).
Eigen::VectorXd build_rhs(const ConductionModel& model, const ContrastField& contrast,
                          const DofLayout& layout, const Dipole& source,
                          int quadrature_order = 3);

struct SolverOptions {
  enum class Method { direct, iterative };
  Method method = Method::direct;
  double tolerance = 1e-8;  // iterative relative residual
  int restart = 80;
  int max_iterations = 2000;
  int quadrature_order = 3;  // source integrals; one of the supported rule orders
};

struct ForwardSolution {
  Eigen::VectorXd coefficients;
  Dipole source;
};

ForwardSolution solve(const BlockSystem& system, const Eigen::VectorXd& rhs, const Dipole& source,
                      const SolverOptions& options = {});

// Total potential at arbitrary points: incident dipole field plus the fields
// radiated by all solved sources. No reference is applied.
Eigen::VectorXd eval_potential(const ConductionModel& model, const ContrastField& contrast,
                               const DofLayout& layout, const ForwardSolution& solution,
                               const std::vector<Eigen::Vector3d>& points);

Eigen::VectorXd mean_referenced(const Eigen::VectorXd& v);

// One assembled, deflated and factorized model answering any number of
// sources. The model must outlive the solver.
class ForwardSolver {
 public:
  explicit ForwardSolver(const ConductionModel& model, SolverOptions options = {});

  const ContrastField& contrast() const { return contrast_; }
  const BlockSystem& system() const { return system_; }

  ForwardSolution solve_source(const Dipole& source) const;
  Eigen::VectorXd potentials(const Dipole& source,
                             const std::vector<Eigen::Vector3d>& points) const;

  // Mean-referenced electrode potentials for unit moments along x, y, z at
  // every dipole position; column 3*d + axis, one factorization for all.
  Eigen::MatrixXd leadfield(const std::vector<Eigen::Vector3d>& positions,
                            const std::vector<Eigen::Vector3d>& electrodes) const;

 private:
  const ConductionModel* model_;
  SolverOptions options_;
  ContrastField contrast_;
  BlockSystem system_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

}  // namespace hybem
