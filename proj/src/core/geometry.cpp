#include "geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "common.hpp"

namespace hybem {

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open " + path);
  return in;
}

// Next non-empty line with comments ('#' to end of line) stripped.
bool next_line(std::istream& in, std::string& line, int& lineno) {
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r\n") != std::string::npos) return true;
  }
  return false;
}

[[noreturn]] void parse_fail(const std::string& path, int lineno, const std::string& what) {
  fail(ErrorCode::parse, path + ":" + std::to_string(lineno) + ": " + what);
}

}  // namespace

Eigen::Vector3d TriangleSurface::centroid(int t) const {
  return (tri_vertex(t, 0) + tri_vertex(t, 1) + tri_vertex(t, 2)) / 3.0;
}

double TriangleSurface::diameter(int t) const {
  const Eigen::Vector3d a = tri_vertex(t, 0), b = tri_vertex(t, 1), c = tri_vertex(t, 2);
  return std::sqrt(std::max({(b - a).squaredNorm(), (c - b).squaredNorm(), (a - c).squaredNorm()}));
}

void TriangleSurface::finalize() {
  const int nv = static_cast<int>(vertices.size());
  const int nt = static_cast<int>(triangles.size());
  if (nv < 4 || nt < 4) fail(ErrorCode::invalid, "surface too small to be closed");
  for (const auto& t : triangles)
    for (int k = 0; k < 3; ++k)
      if (t[k] < 0 || t[k] >= nv)
        fail(ErrorCode::invalid, "triangle vertex index " + std::to_string(t[k]) + " out of range");

  // Closed 2-manifold with consistent orientation <=> every directed edge
  // appears exactly once and so does its reverse.
  std::unordered_map<int64_t, std::array<int, 2>> edges;  // undirected -> {fwd count, rev count}
  auto key = [nv](int a, int b) {
    return static_cast<int64_t>(std::min(a, b)) * nv + std::max(a, b);
  };
  for (const auto& t : triangles)
    for (int k = 0; k < 3; ++k) {
      const int a = t[k], b = t[(k + 1) % 3];
      if (a == b) fail(ErrorCode::invalid, "triangle with repeated vertex");
      auto& e = edges[key(a, b)];
      ++e[a < b ? 0 : 1];
    }
  int boundary = 0;
  for (const auto& [k, e] : edges) {
    const int total = e[0] + e[1];
    if (total == 1) ++boundary;
    if (total > 2) fail(ErrorCode::invalid, "non-manifold edge shared by " + std::to_string(total) + " triangles");
  }
  if (boundary > 0)
    fail(ErrorCode::invalid, "open mesh: " + std::to_string(boundary) + " boundary edges");
  for (const auto& [k, e] : edges)
    if (e[0] != 1 || e[1] != 1)
      fail(ErrorCode::invalid, "mixed orientation not fixable by global flip");

  const int ne = static_cast<int>(edges.size());
  const int euler = nv - ne + nt;
  if (euler != 2)
    fail(ErrorCode::invalid, "surface is not genus zero (Euler characteristic " + std::to_string(euler) + ")");

  auto signed_vol = [&] {
    double v = 0.0;
    for (int t = 0; t < nt; ++t)
      v += tri_vertex(t, 0).dot(tri_vertex(t, 1).cross(tri_vertex(t, 2))) / 6.0;
    return v;
  };
  if (signed_vol() < 0.0)
    for (auto& t : triangles) std::swap(t[1], t[2]);  // globally inverted: flip everything

  tri_normal.resize(nt);
  tri_area.resize(nt);
  total_area = 0.0;
  mean_edge = 0.0;
  max_edge = 0.0;
  double scale2 = 0.0;
  for (const auto& v : vertices) scale2 = std::max(scale2, v.squaredNorm());
  for (int t = 0; t < nt; ++t) {
    const Eigen::Vector3d a = tri_vertex(t, 0), b = tri_vertex(t, 1), c = tri_vertex(t, 2);
    const Eigen::Vector3d n = (b - a).cross(c - a);
    const double n2 = n.norm();
    if (n2 <= 1e-14 * std::max(scale2, 1e-300))
      fail(ErrorCode::invalid, "degenerate triangle " + std::to_string(t));
    tri_normal[t] = n / n2;
    tri_area[t] = 0.5 * n2;
    total_area += tri_area[t];
    for (int k = 0; k < 3; ++k) {
      const double e = (tri_vertex(t, (k + 1) % 3) - tri_vertex(t, k)).norm();
      mean_edge += e;
      max_edge = std::max(max_edge, e);
    }
  }
  mean_edge /= 3.0 * nt;
  enclosed_volume = signed_vol();
}

TriangleSurface load_surface_mesh(const std::string& path, int layer_index) {
  auto in = open_input(path);
  int lineno = 0;
  std::string line;
  if (!next_line(in, line, lineno)) parse_fail(path, lineno, "missing header");
  std::istringstream head(line);
  std::string tag;
  int nv = 0, nt = 0;
  if (!(head >> tag >> nv >> nt) || tag != "surf")
    parse_fail(path, lineno, "expected 'surf <nv> <nt>' header");
  TriangleSurface s;
  s.vertices.reserve(nv);
  for (int i = 0; i < nv; ++i) {
    if (!next_line(in, line, lineno)) parse_fail(path, lineno, "unexpected end of vertex list");
    std::istringstream row(line);
    Eigen::Vector3d v;
    if (!(row >> v.x() >> v.y() >> v.z())) parse_fail(path, lineno, "bad vertex line");
    s.vertices.push_back(v);
  }
  s.triangles.reserve(nt);
  for (int i = 0; i < nt; ++i) {
    if (!next_line(in, line, lineno)) parse_fail(path, lineno, "unexpected end of triangle list");
    std::istringstream row(line);
    std::array<int, 3> t{};
    if (!(row >> t[0] >> t[1] >> t[2])) parse_fail(path, lineno, "bad triangle line");
    s.triangles.push_back(t);
  }
  s.layer_index = layer_index;
  s.finalize();
  return s;
}

TriangleSurface generate_sphere_surface(double radius, int level, const Eigen::Vector3d& center) {
  if (radius <= 0.0) fail(ErrorCode::invalid, "sphere radius must be positive");
  if (level < 0 || level > 7) fail(ErrorCode::invalid, "sphere subdivision level out of range");
  // Icosahedron with unit circumradius.
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  const double s = 1.0 / std::sqrt(1.0 + phi * phi);
  std::vector<Eigen::Vector3d> verts = {
      {-s, phi * s, 0}, {s, phi * s, 0}, {-s, -phi * s, 0}, {s, -phi * s, 0},
      {0, -s, phi * s}, {0, s, phi * s}, {0, -s, -phi * s}, {0, s, -phi * s},
      {phi * s, 0, -s}, {phi * s, 0, s}, {-phi * s, 0, -s}, {-phi * s, 0, s}};
  std::vector<std::array<int, 3>> tris = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},  {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6},  {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};

  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto k = std::minmax(a, b);
      auto it = midpoint.find(k);
      if (it != midpoint.end()) return it->second;
      Eigen::Vector3d m = (verts[a] + verts[b]).normalized();
      verts.push_back(m);
      const int idx = static_cast<int>(verts.size()) - 1;
      midpoint.emplace(k, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(tris.size() * 4);
    for (const auto& t : tris) {
      const int ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
      next.push_back({t[0], ab, ca});
      next.push_back({t[1], bc, ab});
      next.push_back({t[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    tris = std::move(next);
  }

  TriangleSurface out;
  out.vertices.reserve(verts.size());
  for (const auto& v : verts) out.vertices.push_back(center + radius * v.normalized());
  out.triangles = std::move(tris);
  out.finalize();
  return out;
}

double winding_number(const TriangleSurface& s, const Eigen::Vector3d& p) {
  double omega = 0.0;
  for (size_t t = 0; t < s.triangles.size(); ++t) {
    const Eigen::Vector3d a = s.vertices[s.triangles[t][0]] - p;
    const Eigen::Vector3d b = s.vertices[s.triangles[t][1]] - p;
    const Eigen::Vector3d c = s.vertices[s.triangles[t][2]] - p;
    const double la = a.norm(), lb = b.norm(), lc = c.norm();
    const double num = a.dot(b.cross(c));
    const double den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
    omega += 2.0 * std::atan2(num, den);
  }
  return omega / (4.0 * kPi);
}

bool point_inside(const TriangleSurface& s, const Eigen::Vector3d& p) {
  return winding_number(s, p) > 0.5;
}

namespace {

Eigen::Vector3d closest_point_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                       const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  // Ericson, Real-Time Collision Detection, 5.1.5.
  const Eigen::Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

}  // namespace

double surface_distance2(const TriangleSurface& s, const Eigen::Vector3d& p,
                         Eigen::Vector3d* closest) {
  double best = std::numeric_limits<double>::infinity();
  Eigen::Vector3d bestq = Eigen::Vector3d::Zero();
  for (size_t t = 0; t < s.triangles.size(); ++t) {
    const Eigen::Vector3d q = closest_point_triangle(p, s.vertices[s.triangles[t][0]],
                                                     s.vertices[s.triangles[t][1]],
                                                     s.vertices[s.triangles[t][2]]);
    const double d2 = (p - q).squaredNorm();
    if (d2 < best) {
      best = d2;
      bestq = q;
    }
  }
  if (closest) *closest = bestq;
  return best;
}

int NestedHeadModel::locate_layer(const Eigen::Vector3d& p) const {
  int count = 0;
  for (const auto& s : surfaces)
    if (point_inside(s, p)) ++count;
  if (count == 0) return -1;
  return layer_count() - count;
}

NestingReport validate_nesting(const NestedHeadModel& model) {
  const int n = model.layer_count();
  if (n == 0) fail(ErrorCode::invalid, "model has no surfaces");
  if (static_cast<int>(model.sigma.size()) != n)
    fail(ErrorCode::invalid, "conductivity count does not match surface count");
  for (double s : model.sigma)
    if (!(s > 0.0)) fail(ErrorCode::invalid, "layer conductivities must be positive");
  NestingReport report;
  for (int i = 0; i + 1 < n; ++i) {
    const auto& inner = model.surfaces[i];
    const auto& outer = model.surfaces[i + 1];
    NestingReport::Pair pair;
    pair.inner = i + 1;
    pair.outer = i + 2;
    pair.inner_contained = true;
    pair.disjoint = true;
    for (const auto& v : inner.vertices)
      if (!point_inside(outer, v)) {
        pair.inner_contained = false;
        break;
      }
    for (const auto& v : outer.vertices)
      if (point_inside(inner, v)) {
        pair.disjoint = false;
        break;
      }
    if (!pair.inner_contained)
      report.failures.push_back("surface " + std::to_string(pair.inner) + " not inside surface " +
                                std::to_string(pair.outer));
    else if (!pair.disjoint)
      report.failures.push_back("surface " + std::to_string(pair.outer) +
                                " intersects surface " + std::to_string(pair.inner));
    report.pairs.push_back(pair);
  }
  report.pass = report.failures.empty();
  return report;
}

void require_nested(const NestedHeadModel& model) {
  const NestingReport report = validate_nesting(model);
  if (!report.pass) fail(ErrorCode::invalid, report.failures.front());
}

Eigen::Vector3d TetRegion::tet_centroid(int t) const {
  return (vertices[tets[t][0]] + vertices[tets[t][1]] + vertices[tets[t][2]] +
          vertices[tets[t][3]]) /
         4.0;
}

double TetRegion::tet_diameter(int t) const {
  double d2 = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      d2 = std::max(d2, (vertices[tets[t][i]] - vertices[tets[t][j]]).squaredNorm());
  return std::sqrt(d2);
}

void TetRegion::finalize() {
  const int nv = static_cast<int>(vertices.size());
  const int nk = static_cast<int>(tets.size());
  if (nk == 0) fail(ErrorCode::invalid, "tet region is empty");
  if (static_cast<int>(sigma.size()) != nk)
    fail(ErrorCode::invalid, "tensor count does not match tet count");
  double scale2 = 0.0;
  for (const auto& v : vertices) scale2 = std::max(scale2, v.squaredNorm());

  volume.resize(nk);
  total_volume = 0.0;
  for (int t = 0; t < nk; ++t) {
    auto& k = tets[t];
    for (int j = 0; j < 4; ++j)
      if (k[j] < 0 || k[j] >= nv)
        fail(ErrorCode::invalid, "tet vertex index " + std::to_string(k[j]) + " out of range");
    auto vol = [&] {
      return (vertices[k[1]] - vertices[k[0]])
                 .cross(vertices[k[2]] - vertices[k[0]])
                 .dot(vertices[k[3]] - vertices[k[0]]) /
             6.0;
    };
    double v = vol();
    if (v < 0.0) {
      std::swap(k[2], k[3]);  // inverted connectivity: repair by vertex swap
      v = vol();
    }
    if (v <= 1e-16 * std::pow(std::max(scale2, 1e-300), 1.5))
      fail(ErrorCode::invalid, "degenerate tet " + std::to_string(t));
    volume[t] = v;
    total_volume += v;
  }

  for (int t = 0; t < nk; ++t) {
    const Eigen::Matrix3d& m = sigma[t];
    if ((m - m.transpose()).norm() > 1e-10 * std::max(m.norm(), 1e-300))
      fail(ErrorCode::invalid, "tensor not symmetric on tet " + std::to_string(t));
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m);
    if (es.eigenvalues().minCoeff() <= 0.0)
      fail(ErrorCode::invalid, "tensor not positive definite on tet " + std::to_string(t));
  }

  // Unique faces with adjacency; Face::v is oriented out of t0.
  std::map<std::array<int, 3>, int> index;  // sorted triple -> face id
  faces.clear();
  // Corner j of the canonical outward face list is opposite tet vertex j.
  static const int face_of[4][3] = {{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}};
  for (int t = 0; t < nk; ++t) {
    for (int j = 0; j < 4; ++j) {
      std::array<int, 3> tri = {tets[t][face_of[j][0]], tets[t][face_of[j][1]],
                                tets[t][face_of[j][2]]};
      std::array<int, 3> sorted = tri;
      std::sort(sorted.begin(), sorted.end());
      auto it = index.find(sorted);
      if (it == index.end()) {
        Face f;
        f.v = tri;
        f.t0 = t;
        index.emplace(sorted, static_cast<int>(faces.size()));
        faces.push_back(f);
      } else {
        Face& f = faces[it->second];
        if (f.t1 != -1)
          fail(ErrorCode::invalid, "non-manifold face shared by more than two tets");
        f.t1 = t;
      }
    }
  }
}

int TetRegion::interior_face_count() const {
  int n = 0;
  for (const auto& f : faces)
    if (f.t1 != -1) ++n;
  return n;
}

TetRegion load_tet_region(const std::string& path, int host_layer) {
  auto in = open_input(path);
  int lineno = 0;
  std::string line;
  if (!next_line(in, line, lineno)) parse_fail(path, lineno, "missing header");
  std::istringstream head(line);
  std::string tag;
  int nv = 0, nk = 0;
  if (!(head >> tag >> nv >> nk) || tag != "tet")
    parse_fail(path, lineno, "expected 'tet <nv> <nk>' header");
  TetRegion r;
  r.vertices.reserve(nv);
  for (int i = 0; i < nv; ++i) {
    if (!next_line(in, line, lineno)) parse_fail(path, lineno, "unexpected end of vertex list");
    std::istringstream row(line);
    Eigen::Vector3d v;
    if (!(row >> v.x() >> v.y() >> v.z())) parse_fail(path, lineno, "bad vertex line");
    r.vertices.push_back(v);
  }
  r.tets.reserve(nk);
  r.sigma.reserve(nk);
  for (int i = 0; i < nk; ++i) {
    if (!next_line(in, line, lineno)) parse_fail(path, lineno, "unexpected end of tet list");
    std::istringstream row(line);
    std::array<int, 4> k{};
    double sxx, syy, szz, sxy, sxz, syz;
    if (!(row >> k[0] >> k[1] >> k[2] >> k[3] >> sxx >> syy >> szz >> sxy >> sxz >> syz))
      parse_fail(path, lineno, "bad tet line (want 4 indices and 6 tensor entries)");
    r.tets.push_back(k);
    Eigen::Matrix3d m;
    m << sxx, sxy, sxz, sxy, syy, syz, sxz, syz, szz;
    r.sigma.push_back(m);
  }
  r.host_layer = host_layer;
  r.finalize();
  return r;
}

namespace {

// Dompierre et al. prism split: diagonals run through the smallest global
// vertex id of each quad face, which makes neighbouring prisms conform.
void split_prism(const std::array<int, 6>& p, std::vector<std::array<int, 4>>& out) {
  // Orientation-preserving symmetries bringing each position to slot 0.
  static const int perms[6][6] = {{0, 1, 2, 3, 4, 5}, {1, 2, 0, 4, 5, 3}, {2, 0, 1, 5, 3, 4},
                                  {3, 5, 4, 0, 2, 1}, {4, 3, 5, 1, 0, 2}, {5, 4, 3, 2, 1, 0}};
  int smallest = 0;
  for (int i = 1; i < 6; ++i)
    if (p[i] < p[smallest]) smallest = i;
  std::array<int, 6> q;
  for (int i = 0; i < 6; ++i) q[i] = p[perms[smallest][i]];
  if (std::min(q[1], q[5]) < std::min(q[2], q[4])) {
    out.push_back({q[0], q[1], q[2], q[5]});
    out.push_back({q[0], q[1], q[5], q[4]});
    out.push_back({q[0], q[4], q[5], q[3]});
  } else {
    out.push_back({q[0], q[1], q[2], q[4]});
    out.push_back({q[0], q[4], q[2], q[5]});
    out.push_back({q[0], q[4], q[5], q[3]});
  }
}

}  // namespace

TetRegion generate_ball_tets(double radius, double target_edge, const Eigen::Matrix3d& sigma) {
  if (radius <= 0.0 || target_edge <= 0.0)
    fail(ErrorCode::invalid, "ball radius and target edge must be positive");
  // Icosahedron edge for unit circumradius is ~1.0515; each level halves it.
  int level = 0;
  while (level < 6 && 1.0515 * radius / (1 << level) > target_edge) ++level;
  const int shells = std::max(1, static_cast<int>(std::lround(radius / target_edge)));
  const TriangleSurface shell = generate_sphere_surface(1.0, level);
  const int shell_nv = static_cast<int>(shell.vertices.size());

  TetRegion r;
  r.vertices.push_back(Eigen::Vector3d::Zero());
  for (int k = 1; k <= shells; ++k) {
    const double rk = radius * k / shells;
    for (const auto& v : shell.vertices) r.vertices.push_back(rk * v / v.norm() * 1.0);
  }
  auto shell_vertex = [&](int k, int i) { return 1 + (k - 1) * shell_nv + i; };

  for (const auto& t : shell.triangles)
    r.tets.push_back({0, shell_vertex(1, t[0]), shell_vertex(1, t[1]), shell_vertex(1, t[2])});
  for (int k = 1; k < shells; ++k)
    for (const auto& t : shell.triangles)
      split_prism({shell_vertex(k, t[0]), shell_vertex(k, t[1]), shell_vertex(k, t[2]),
                   shell_vertex(k + 1, t[0]), shell_vertex(k + 1, t[1]), shell_vertex(k + 1, t[2])},
                  r.tets);
  r.sigma.assign(r.tets.size(), sigma);
  r.finalize();
  return r;
}

TetRegion generate_cylinder_tets(double radius, double length, double target_edge,
                                 const Eigen::Matrix3d& sigma) {
  if (radius <= 0.0 || length <= 0.0 || target_edge <= 0.0)
    fail(ErrorCode::invalid, "cylinder dimensions and target edge must be positive");
  const int nr = std::max(1, static_cast<int>(std::lround(radius / target_edge)));
  const int nz = std::max(1, static_cast<int>(std::lround(length / target_edge)));

  // Hexagonal disk: ring j holds 6j vertices; standard annulus triangulation.
  std::vector<Eigen::Vector2d> disk = {{0.0, 0.0}};
  auto ring_start = [](int j) { return j == 0 ? 0 : 1 + 3 * j * (j - 1); };
  for (int j = 1; j <= nr; ++j) {
    const double rj = radius * j / nr;
    for (int m = 0; m < 6 * j; ++m) {
      const double ang = 2.0 * kPi * m / (6 * j);
      disk.emplace_back(rj * std::cos(ang), rj * std::sin(ang));
    }
  }
  std::vector<std::array<int, 3>> disk_tris;
  for (int j = 0; j < nr; ++j) {
    const int inner = ring_start(j), outer = ring_start(j + 1);
    const int ni = std::max(1, 6 * j), no = 6 * (j + 1);
    for (int s = 0; s < 6; ++s) {
      auto iv = [&](int t) { return j == 0 ? inner : inner + (j * s + t) % ni; };
      auto ov = [&](int t) { return outer + ((j + 1) * s + t) % no; };
      for (int t = 0; t <= j; ++t) disk_tris.push_back({ov(t), ov(t + 1), iv(t)});
      for (int t = 0; t < j; ++t) disk_tris.push_back({iv(t), ov(t + 1), iv(t + 1)});
    }
  }

  TetRegion r;
  const int disk_nv = static_cast<int>(disk.size());
  for (int l = 0; l <= nz; ++l) {
    const double z = -0.5 * length + length * l / nz;
    for (const auto& d : disk) r.vertices.emplace_back(d.x(), d.y(), z);
  }
  for (int l = 0; l < nz; ++l)
    for (const auto& t : disk_tris)
      split_prism({l * disk_nv + t[0], l * disk_nv + t[1], l * disk_nv + t[2],
                   (l + 1) * disk_nv + t[0], (l + 1) * disk_nv + t[1], (l + 1) * disk_nv + t[2]},
                  r.tets);
  r.sigma.assign(r.tets.size(), sigma);
  r.finalize();
  return r;
}

double Fiber::length() const {
  double L = 0.0;
  for (size_t i = 0; i + 1 < nodes.size(); ++i) L += (nodes[i + 1] - nodes[i]).norm();
  return L;
}

void resample_fiber(Fiber& f, double max_seg_len) {
  if (max_seg_len <= 0.0) fail(ErrorCode::invalid, "max segment length must be positive");
  std::vector<Eigen::Vector3d> out;
  out.push_back(f.nodes.front());
  for (size_t i = 0; i + 1 < f.nodes.size(); ++i) {
    const Eigen::Vector3d a = f.nodes[i], b = f.nodes[i + 1];
    const double L = (b - a).norm();
    const int pieces = std::max(1, static_cast<int>(std::ceil(L / max_seg_len - 1e-12)));
    for (int k = 1; k <= pieces; ++k) out.push_back(a + (b - a) * (static_cast<double>(k) / pieces));
  }
  f.nodes = std::move(out);
}

namespace {

void validate_fiber(const Fiber& f, size_t idx) {
  if (f.nodes.size() < 2)
    fail(ErrorCode::invalid, "fiber " + std::to_string(idx) + " has fewer than 2 nodes");
  if (!(f.radius > 0.0))
    fail(ErrorCode::invalid, "fiber " + std::to_string(idx) + " has non-positive radius");
  if (!(f.sigma_l > 0.0))
    fail(ErrorCode::invalid, "fiber " + std::to_string(idx) + " has non-positive conductivity");
  for (size_t i = 0; i + 1 < f.nodes.size(); ++i)
    if ((f.nodes[i + 1] - f.nodes[i]).norm() <= 1e-14)
      fail(ErrorCode::invalid, "fiber " + std::to_string(idx) + " has a zero-length segment");
}

}  // namespace

WireBundle load_wire_bundle(const std::string& path, double max_seg_len, int host_layer) {
  auto in = open_input(path);
  int lineno = 0;
  std::string line;
  if (!next_line(in, line, lineno)) parse_fail(path, lineno, "missing header");
  std::istringstream head(line);
  std::string tag;
  int nf = 0;
  if (!(head >> tag >> nf) || tag != "wire") parse_fail(path, lineno, "expected 'wire <nf>' header");
  WireBundle b;
  b.host_layer = host_layer;
  for (int i = 0; i < nf; ++i) {
    if (!next_line(in, line, lineno)) parse_fail(path, lineno, "unexpected end of fiber list");
    std::istringstream row(line);
    int nn = 0;
    Fiber f;
    if (!(row >> tag >> nn >> f.radius >> f.sigma_l) || tag != "fiber")
      parse_fail(path, lineno, "expected 'fiber <nn> <a> <sigma_l>'");
    for (int k = 0; k < nn; ++k) {
      if (!next_line(in, line, lineno)) parse_fail(path, lineno, "unexpected end of node list");
      std::istringstream nrow(line);
      Eigen::Vector3d v;
      if (!(nrow >> v.x() >> v.y() >> v.z())) parse_fail(path, lineno, "bad node line");
      f.nodes.push_back(v);
    }
    validate_fiber(f, b.fibers.size() + 1);
    resample_fiber(f, max_seg_len);
    b.fibers.push_back(std::move(f));
  }
  return b;
}

WireBundle generate_radial_fibers(int count, double r_inner, double r_outer, double radius,
                                  double sigma_l) {
  if (count < 1) fail(ErrorCode::invalid, "fiber count must be at least 1");
  if (!(0.0 < r_inner && r_inner < r_outer))
    fail(ErrorCode::invalid, "need 0 < r_inner < r_outer");
  WireBundle b;
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double z = count == 1 ? 1.0 : 1.0 - 2.0 * (i + 0.5) / count;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double ang = golden * i;
    const Eigen::Vector3d dir(rho * std::cos(ang), rho * std::sin(ang), z);
    Fiber f;
    f.radius = radius;
    f.sigma_l = sigma_l;
    f.nodes = {r_inner * dir, r_outer * dir};
    validate_fiber(f, b.fibers.size() + 1);
    b.fibers.push_back(std::move(f));
  }
  return b;
}

ElectrodeSet load_electrodes(const std::string& path) {
  auto in = open_input(path);
  int lineno = 0;
  std::string line;
  ElectrodeSet set;
  while (next_line(in, line, lineno)) {
    std::istringstream row(line);
    Electrode e;
    if (!(row >> e.label >> e.pos.x() >> e.pos.y() >> e.pos.z()))
      parse_fail(path, lineno, "expected 'label x y z'");
    set.electrodes.push_back(std::move(e));
  }
  if (set.electrodes.empty()) fail(ErrorCode::invalid, "electrode file is empty");
  return set;
}

void snap_electrodes(ElectrodeSet& set, const TriangleSurface& outer, double delta_snap) {
  for (auto& e : set.electrodes) {
    Eigen::Vector3d q;
    const double d = std::sqrt(surface_distance2(outer, e.pos, &q));
    if (d > delta_snap) {
      std::ostringstream msg;
      msg << "electrode " << e.label << " is " << d << " m from the outer surface (snap limit "
          << delta_snap << " m)";
      fail(ErrorCode::invalid, msg.str());
    }
    e.pos = q;
  }
}

}  // namespace hybem
