#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

namespace hybem {

// Closed, consistently oriented triangle mesh with outward normals.
// finalize() validates manifoldness and orientation (repairing a globally
// inverted mesh by flipping every triangle) and fills the derived caches.
// Immutable after finalize().
struct TriangleSurface {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> triangles;
  int layer_index = 0;  // 1-based position in the nested stack, 0 when standalone

  std::vector<Eigen::Vector3d> tri_normal;  // unit, outward
  std::vector<double> tri_area;
  double total_area = 0.0;
  double enclosed_volume = 0.0;  // positive once outward-oriented
  double mean_edge = 0.0;
  double max_edge = 0.0;

  void finalize();
  Eigen::Vector3d tri_vertex(int t, int corner) const { return vertices[triangles[t][corner]]; }
  Eigen::Vector3d centroid(int t) const;
  double diameter(int t) const;  // longest edge of triangle t
};

TriangleSurface load_surface_mesh(const std::string& path, int layer_index = 0);

// Icosphere: recursively subdivided icosahedron, every vertex projected onto
// the sphere. level 0 is the icosahedron (12 vertices, 20 triangles); each
// level quadruples the triangle count.
TriangleSurface generate_sphere_surface(double radius, int level,
                                        const Eigen::Vector3d& center = Eigen::Vector3d::Zero());

// Generalized winding number of the closed surface around p (1 inside, 0
// outside, robust to roundoff for points away from the surface itself).
double winding_number(const TriangleSurface& s, const Eigen::Vector3d& p);
bool point_inside(const TriangleSurface& s, const Eigen::Vector3d& p);

// Squared distance from p to the surface, plus the closest point.
double surface_distance2(const TriangleSurface& s, const Eigen::Vector3d& p,
                         Eigen::Vector3d* closest = nullptr);

// Nested layer stack, innermost surface first. sigma[i] is the (isotropic
// background) conductivity of the compartment bounded outside by surfaces[i];
// the exterior of the last surface is non-conducting.
struct NestedHeadModel {
  std::vector<TriangleSurface> surfaces;
  std::vector<double> sigma;

  int layer_count() const { return static_cast<int>(surfaces.size()); }
  // 0-based layer index of p, or -1 when p lies outside the outermost surface.
  int locate_layer(const Eigen::Vector3d& p) const;
};

// Per-pair containment results for the ordered stack. Strict nesting means
// every adjacent pair passes both directions.
struct NestingReport {
  struct Pair {
    int inner = 0, outer = 0;  // 1-based surface indices
    bool inner_contained = false;
    bool disjoint = false;  // no outer vertex inside the inner surface
  };
  std::vector<Pair> pairs;
  std::vector<std::string> failures;
  bool pass = true;
};

NestingReport validate_nesting(const NestedHeadModel& model);

// Throws ErrorCode::invalid with the first failure of validate_nesting.
void require_nested(const NestedHeadModel& model);

// Tetrahedral conductivity region embedded in one compartment of the model.
// Tensors are full symmetric 3x3 per tet. finalize() repairs inverted tets by
// swapping two vertices, validates the tensors, and builds the face adjacency.
struct TetRegion {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 4>> tets;
  std::vector<Eigen::Matrix3d> sigma;
  int host_layer = 0;  // 0-based compartment the region is embedded in

  struct Face {
    std::array<int, 3> v;  // oriented so its normal points out of tet t0
    int t0 = -1;           // owning tet
    int t1 = -1;           // neighbour, -1 on the region boundary
  };
  std::vector<Face> faces;
  std::vector<double> volume;
  double total_volume = 0.0;

  void finalize();
  int interior_face_count() const;
  Eigen::Vector3d tet_centroid(int t) const;
  double tet_diameter(int t) const;
};

TetRegion load_tet_region(const std::string& path, int host_layer = 0);

// Ball of the given radius centered at the origin meshed as radial shells of
// subdivided icospheres; boundary vertices lie on the sphere. Edge lengths
// track target_edge and the summed volume is within a few percent of the
// ball for target_edge <= radius/4. All tets carry the constant tensor.
TetRegion generate_ball_tets(double radius, double target_edge, const Eigen::Matrix3d& sigma);

// Axis-aligned cylinder (axis z, centered at the origin) for the thin-wire
// comparison setups.
TetRegion generate_cylinder_tets(double radius, double length, double target_edge,
                                 const Eigen::Matrix3d& sigma);

// Open polyline fiber with physical radius and longitudinal conductivity.
struct Fiber {
  std::vector<Eigen::Vector3d> nodes;
  double radius = 0.0;
  double sigma_l = 0.0;
  double length() const;
};

struct WireBundle {
  std::vector<Fiber> fibers;
  int host_layer = 0;  // 0-based compartment the fibers run through
};

// Loads fibers and resamples each so that no segment exceeds max_seg_len;
// resampling keeps nodes on the original polyline (lengths preserved).
WireBundle load_wire_bundle(const std::string& path, double max_seg_len, int host_layer = 0);
void resample_fiber(Fiber& f, double max_seg_len);

// Straight fibers pointing outward along a low-discrepancy direction set
// (Fibonacci sphere), spanning radii [r_inner, r_outer].
WireBundle generate_radial_fibers(int count, double r_inner, double r_outer, double radius,
                                  double sigma_l);

struct Electrode {
  std::string label;
  Eigen::Vector3d pos;
};

struct ElectrodeSet {
  std::vector<Electrode> electrodes;
};

ElectrodeSet load_electrodes(const std::string& path);

// Projects every electrode onto the outermost surface; an electrode farther
// than delta_snap from it is an error naming the label.
void snap_electrodes(ElectrodeSet& set, const TriangleSurface& outer, double delta_snap);

}  // namespace hybem
