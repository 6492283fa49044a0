#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "advcat/common.hpp"

namespace advcat {

struct RangeError : Error { using Error::Error; };

constexpr double kDegenerateArea = 1e-12;
constexpr double kBaryTolerance = 1e-9;

struct BaryCoord {
    double l1 = 0.0, l2 = 0.0, l3 = 0.0;

    double operator[](int i) const { return i == 0 ? l1 : (i == 1 ? l2 : l3); }
    bool interior(double tol = kBaryTolerance) const {
        return l1 >= -tol && l2 >= -tol && l3 >= -tol;
    }
};

// Barycentric coordinates of p in triangle (a, b, c).
inline BaryCoord barycentric(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
    double denom = (b - a).cross(c - a);
    if (std::abs(denom) * 0.5 <= kDegenerateArea)
        throw GeometryError("barycentric: degenerate triangle");
    double l1 = (b - p).cross(c - p) / denom;
    double l2 = (c - p).cross(a - p) / denom;
    return {l1, l2, 1.0 - l1 - l2};
}

// Uniform grid over triangle bounding boxes; cell lists stay sorted by
// triangle id so grid lookups reproduce the exhaustive scan exactly.
struct LocateGrid {
    Vec2 origin;
    double cell = 1.0;
    int nx = 0, ny = 0;
    std::vector<std::vector<int>> cells;

    bool empty() const { return cells.empty(); }
    int cell_x(double x) const {
        return std::clamp(static_cast<int>(std::floor((x - origin.x) / cell)), 0, nx - 1);
    }
    int cell_y(double y) const {
        return std::clamp(static_cast<int>(std::floor((y - origin.y) / cell)), 0, ny - 1);
    }
};

// 2D projection of the mesh stored per triangle corner, so seam vertices may
// hold several images in GeoProj while TopoProj merges them.
struct Projection2D {
    std::vector<Vec2> corners;   // size 3 * triangle_count
    std::vector<int> piece_id;   // size triangle_count
    LocateGrid grid;             // optional acceleration structure

    int triangle_count() const { return static_cast<int>(piece_id.size()); }

    Vec2 corner(int tri, int k) const { return corners[static_cast<size_t>(tri) * 3 + k]; }
    Vec2& corner(int tri, int k) { return corners[static_cast<size_t>(tri) * 3 + k]; }

    double signed_area(int tri) const {
        Vec2 a = corner(tri, 0), b = corner(tri, 1), c = corner(tri, 2);
        return 0.5 * (b - a).cross(c - a);
    }

    void bounding_box(Vec2* lo, Vec2* hi) const {
        *lo = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
        *hi = {-lo->x, -lo->y};
        for (const Vec2& c : corners) {
            lo->x = std::min(lo->x, c.x);
            lo->y = std::min(lo->y, c.y);
            hi->x = std::max(hi->x, c.x);
            hi->y = std::max(hi->y, c.y);
        }
    }

    // Cell size follows the median triangle bounding-box edge.
    void build_index() {
        grid = LocateGrid{};
        const int f = triangle_count();
        if (f == 0) return;
        std::vector<double> edges;
        edges.reserve(static_cast<size_t>(f) * 2);
        for (int t = 0; t < f; ++t) {
            Vec2 a = corner(t, 0), b = corner(t, 1), c = corner(t, 2);
            double w = std::max({a.x, b.x, c.x}) - std::min({a.x, b.x, c.x});
            double h = std::max({a.y, b.y, c.y}) - std::min({a.y, b.y, c.y});
            edges.push_back(w);
            edges.push_back(h);
        }
        std::nth_element(edges.begin(), edges.begin() + edges.size() / 2, edges.end());
        double cell = std::max(edges[edges.size() / 2], 1e-12);

        Vec2 lo, hi;
        bounding_box(&lo, &hi);
        grid.origin = lo;
        grid.cell = cell;
        grid.nx = std::clamp(static_cast<int>(std::ceil((hi.x - lo.x) / cell)) + 1, 1, 2048);
        grid.ny = std::clamp(static_cast<int>(std::ceil((hi.y - lo.y) / cell)) + 1, 1, 2048);
        grid.cells.assign(static_cast<size_t>(grid.nx) * grid.ny, {});
        for (int t = 0; t < f; ++t) {
            Vec2 a = corner(t, 0), b = corner(t, 1), c = corner(t, 2);
            int x0 = grid.cell_x(std::min({a.x, b.x, c.x}));
            int x1 = grid.cell_x(std::max({a.x, b.x, c.x}));
            int y0 = grid.cell_y(std::min({a.y, b.y, c.y}));
            int y1 = grid.cell_y(std::max({a.y, b.y, c.y}));
            for (int gy = y0; gy <= y1; ++gy)
                for (int gx = x0; gx <= x1; ++gx)
                    grid.cells[static_cast<size_t>(gy) * grid.nx + gx].push_back(t);
        }
    }
};

struct Locate {
    int triangle = -1;
    BaryCoord bary;
};

namespace detail {

inline std::optional<Locate> try_triangle(const Projection2D& proj, int t, const Vec2& p) {
    Vec2 a = proj.corner(t, 0), b = proj.corner(t, 1), c = proj.corner(t, 2);
    double denom = (b - a).cross(c - a);
    if (std::abs(denom) * 0.5 <= kDegenerateArea) return std::nullopt;
    double l1 = (b - p).cross(c - p) / denom;
    double l2 = (c - p).cross(a - p) / denom;
    double l3 = 1.0 - l1 - l2;
    if (l1 >= -kBaryTolerance && l2 >= -kBaryTolerance && l3 >= -kBaryTolerance)
        return Locate{t, {l1, l2, l3}};
    return std::nullopt;
}

}  // namespace detail

// Finds the lowest-id triangle containing p (ties between adjacent triangles
// resolve to the lower id). Uses the grid when built, which matches the
// exhaustive scan exactly; returns nullopt on a miss.
inline std::optional<Locate> locate(const Projection2D& proj, const Vec2& p) {
    if (!p.finite()) throw InvalidInputError("locate: non-finite query point");
    if (proj.grid.empty()) {
        for (int t = 0; t < proj.triangle_count(); ++t)
            if (auto hit = detail::try_triangle(proj, t, p)) return hit;
        return std::nullopt;
    }
    const LocateGrid& g = proj.grid;
    if (p.x < g.origin.x - g.cell || p.y < g.origin.y - g.cell ||
        p.x > g.origin.x + (g.nx + 1) * g.cell || p.y > g.origin.y + (g.ny + 1) * g.cell)
        return std::nullopt;
    const std::vector<int>& cand = g.cells[static_cast<size_t>(g.cell_y(p.y)) * g.nx + g.cell_x(p.x)];
    for (int t : cand)
        if (auto hit = detail::try_triangle(proj, t, p)) return hit;
    return std::nullopt;
}

// Transfers a barycentric location from one projection into another that
// shares the triangle list.
inline Vec2 map_point(const Projection2D& dst, int tri, const BaryCoord& b) {
    if (tri < 0 || tri >= dst.triangle_count())
        throw RangeError("map_point: triangle id out of range");
    return dst.corner(tri, 0) * b.l1 + dst.corner(tri, 1) * b.l2 + dst.corner(tri, 2) * b.l3;
}

// Corner pairs identified across piece boundaries (global corner indices).
struct SeamPairs {
    std::vector<std::pair<int, int>> pairs;
};

struct ClothMesh {
    std::vector<Vec3> vertices3d;
    std::vector<std::array<int, 3>> triangles;
    Projection2D geo;
    std::optional<Projection2D> topo;
    SeamPairs seams;

    int triangle_count() const { return static_cast<int>(triangles.size()); }
    int vertex_count() const { return static_cast<int>(vertices3d.size()); }

    double triangle_area3d(int t) const {
        const auto& f = triangles[t];
        Vec3 e1 = vertices3d[f[1]] - vertices3d[f[0]];
        Vec3 e2 = vertices3d[f[2]] - vertices3d[f[0]];
        return 0.5 * e1.cross(e2).norm();
    }

    Vec3 face_normal(int t) const {
        const auto& f = triangles[t];
        Vec3 e1 = vertices3d[f[1]] - vertices3d[f[0]];
        Vec3 e2 = vertices3d[f[2]] - vertices3d[f[0]];
        return e1.cross(e2).normalized();
    }

    // Vertex index behind a global corner index.
    int corner_vertex(int corner) const { return triangles[corner / 3][corner % 3]; }

    void validate() const {
        const int f = triangle_count();
        for (int t = 0; t < f; ++t)
            for (int k = 0; k < 3; ++k)
                if (triangles[t][k] < 0 || triangles[t][k] >= vertex_count())
                    throw FormatError("mesh: face " + std::to_string(t) +
                                      " references vertex out of range");
        std::string degens;
        for (int t = 0; t < f; ++t)
            if (triangle_area3d(t) <= kDegenerateArea)
                degens += (degens.empty() ? "" : ", ") + std::to_string(t);
        if (!degens.empty())
            throw ValidationError("mesh: degenerate triangles: " + degens);
        if (static_cast<int>(geo.corners.size()) != 3 * f || geo.triangle_count() != f)
            throw FormatError("mesh: GeoProj corner count differs from triangle count");
        if (topo) {
            if (static_cast<int>(topo->corners.size()) != 3 * f || topo->triangle_count() != f)
                throw FormatError("mesh: TopoProj triangle count differs from mesh");
        }
        for (const auto& [a, b] : seams.pairs) {
            if (a < 0 || b < 0 || a >= 3 * f || b >= 3 * f)
                throw FormatError("mesh: seam pair corner index out of range");
            if (corner_vertex(a) != corner_vertex(b))
                throw ValidationError("mesh: seam pair does not share a 3D vertex");
        }
    }
};

// ---------------------------------------------------------------------------
// File formats. Mesh: Wavefront-style text (v / vt / f v/vt, `g` starts a new
// piece). Projections and seam pairs: JSON keyed by corner index. Every
// parser rejects NaN/Inf.
// ---------------------------------------------------------------------------

namespace detail {

inline double parse_finite(const std::string& tok, const std::string& what) {
    size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(tok, &pos);
    } catch (const std::exception&) {
        throw FormatError(what + ": not a number: '" + tok + "'");
    }
    if (pos != tok.size()) throw FormatError(what + ": trailing characters in '" + tok + "'");
    if (!std::isfinite(v)) throw InvalidInputError(what + ": non-finite value");
    return v;
}

}  // namespace detail

inline ClothMesh read_obj_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("read_obj_mesh: cannot open " + path);
    ClothMesh mesh;
    std::vector<Vec2> uvs;
    std::vector<std::array<int, 3>> face_uvs;
    int current_piece = 0;
    bool saw_group = false;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag) || tag[0] == '#') continue;
        const std::string where = path + ":" + std::to_string(line_no);
        if (tag == "v") {
            std::string a, b, c;
            if (!(ss >> a >> b >> c)) throw FormatError(where + ": malformed vertex");
            mesh.vertices3d.push_back({detail::parse_finite(a, where),
                                       detail::parse_finite(b, where),
                                       detail::parse_finite(c, where)});
        } else if (tag == "vt") {
            std::string a, b;
            if (!(ss >> a >> b)) throw FormatError(where + ": malformed texture coordinate");
            uvs.push_back({detail::parse_finite(a, where), detail::parse_finite(b, where)});
        } else if (tag == "f") {
            std::array<int, 3> vi{};
            std::array<int, 3> ti{};
            for (int k = 0; k < 3; ++k) {
                std::string corner;
                if (!(ss >> corner)) throw FormatError(where + ": face needs three corners");
                size_t slash = corner.find('/');
                if (slash == std::string::npos)
                    throw FormatError(where + ": face corner lacks a texture index");
                vi[k] = std::stoi(corner.substr(0, slash)) - 1;
                ti[k] = std::stoi(corner.substr(slash + 1)) - 1;
            }
            std::string extra;
            if (ss >> extra) throw FormatError(where + ": only triangles are supported");
            mesh.triangles.push_back(vi);
            face_uvs.push_back(ti);
            mesh.geo.piece_id.push_back(current_piece);
        } else if (tag == "g" || tag == "o") {
            if (saw_group) ++current_piece;
            saw_group = true;
        }
        // other tags (vn, s, mtllib, ...) are ignored
    }
    mesh.geo.corners.resize(mesh.triangles.size() * 3);
    for (size_t t = 0; t < face_uvs.size(); ++t) {
        for (int k = 0; k < 3; ++k) {
            int ti = face_uvs[t][k];
            int vi = mesh.triangles[t][k];
            if (vi < 0 || vi >= mesh.vertex_count())
                throw FormatError("read_obj_mesh: face " + std::to_string(t) +
                                  " vertex index out of range in " + path);
            if (ti < 0 || ti >= static_cast<int>(uvs.size()))
                throw FormatError("read_obj_mesh: face " + std::to_string(t) +
                                  " texture index out of range in " + path);
            mesh.geo.corners[t * 3 + k] = uvs[ti];
        }
    }
    return mesh;
}

inline void write_obj_mesh(const ClothMesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("write_obj_mesh: cannot open " + path);
    out.precision(17);
    for (const Vec3& v : mesh.vertices3d) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
    for (const Vec2& c : mesh.geo.corners) out << "vt " << c.x << ' ' << c.y << '\n';
    int piece = -1;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        if (mesh.geo.piece_id[t] != piece) {
            piece = mesh.geo.piece_id[t];
            out << "g piece" << piece << '\n';
        }
        out << "f";
        for (int k = 0; k < 3; ++k)
            out << ' ' << mesh.triangles[t][k] + 1 << '/' << t * 3 + k + 1;
        out << '\n';
    }
}

inline Projection2D read_projection_json(const std::string& path,
                                         const std::vector<int>& piece_id) {
    std::ifstream in(path);
    if (!in) throw FormatError("read_projection_json: cannot open " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("read_projection_json: " + path + ": " + e.what());
    }
    if (!doc.contains("corners") || !doc["corners"].is_array())
        throw FormatError("read_projection_json: missing corners array in " + path);
    Projection2D proj;
    proj.piece_id = piece_id;
    for (const auto& c : doc["corners"]) {
        if (!c.is_array() || c.size() != 2)
            throw FormatError("read_projection_json: corner entries must be [x, y] in " + path);
        double x = c[0].get<double>(), y = c[1].get<double>();
        if (!std::isfinite(x) || !std::isfinite(y))
            throw InvalidInputError("read_projection_json: non-finite corner in " + path);
        proj.corners.push_back({x, y});
    }
    if (proj.corners.size() != piece_id.size() * 3)
        throw FormatError("read_projection_json: corner count " +
                          std::to_string(proj.corners.size()) + " does not match " +
                          std::to_string(piece_id.size()) + " triangles in " + path);
    return proj;
}

inline void write_projection_json(const Projection2D& proj, const std::string& path) {
    nlohmann::json doc;
    doc["corners"] = nlohmann::json::array();
    for (const Vec2& c : proj.corners) doc["corners"].push_back({c.x, c.y});
    std::ofstream out(path);
    if (!out) throw FormatError("write_projection_json: cannot open " + path);
    out << doc.dump(1) << '\n';
}

inline SeamPairs read_seams_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("read_seams_json: cannot open " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("read_seams_json: " + path + ": " + e.what());
    }
    if (!doc.contains("pairs") || !doc["pairs"].is_array())
        throw FormatError("read_seams_json: missing pairs array in " + path);
    SeamPairs seams;
    for (const auto& p : doc["pairs"]) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer())
            throw FormatError("read_seams_json: pair entries must be [corner, corner] in " + path);
        seams.pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
    }
    return seams;
}

inline void write_seams_json(const SeamPairs& seams, const std::string& path) {
    nlohmann::json doc;
    doc["pairs"] = nlohmann::json::array();
    for (const auto& [a, b] : seams.pairs) doc["pairs"].push_back({a, b});
    std::ofstream out(path);
    if (!out) throw FormatError("write_seams_json: cannot open " + path);
    out << doc.dump(1) << '\n';
}

// Loads and validates a clothed mesh. GeoProj comes from the mesh file's UV
// coordinates unless a separate geo document overrides it.
inline ClothMesh load_mesh(const std::string& mesh_path, const std::string& geo_path = "",
                           const std::string& topo_path = "", const std::string& seam_path = "") {
    ClothMesh mesh = read_obj_mesh(mesh_path);
    if (!geo_path.empty()) mesh.geo = read_projection_json(geo_path, mesh.geo.piece_id);
    if (!topo_path.empty()) mesh.topo = read_projection_json(topo_path, mesh.geo.piece_id);
    if (!seam_path.empty()) mesh.seams = read_seams_json(seam_path);
    mesh.validate();
    mesh.geo.build_index();
    if (mesh.topo) mesh.topo->build_index();
    return mesh;
}

}  // namespace advcat
