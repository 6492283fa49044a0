#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "advcat/common.hpp"
#include "advcat/mesh.hpp"

namespace advcat {

struct ZipParams {
    double gamma = 0.5;          // step safety factor
    double beta_max = 0.1;       // largest admissible time interval
    double k_pair = 1.0;         // seam attraction coefficient
    double tol_pair = -1.0;      // <0 resolves to 1e-3 x layout bbox diagonal
    int max_iters = 20000;

    void validate() const {
        if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("zip: gamma must be in (0,1)");
        if (!(beta_max > 0.0)) throw DomainError("zip: beta_max must be positive");
        if (!(k_pair >= 0.0)) throw DomainError("zip: k_pair must be nonnegative");
        if (max_iters < 1) throw DomainError("zip: max_iters must be >= 1");
    }
};

// Corners sharing a piece and a 3D vertex are one projection point; Zipping
// moves points, not corner slots.
struct WeldMap {
    std::vector<int> corner_to_point;  // size 3F
    int point_count = 0;
};

inline WeldMap weld_corners(const ClothMesh& mesh) {
    WeldMap weld;
    const int f = mesh.triangle_count();
    weld.corner_to_point.assign(static_cast<size_t>(f) * 3, -1);
    std::vector<std::pair<int64_t, int>> keys;  // (piece, vertex) -> point id
    keys.reserve(static_cast<size_t>(f) * 3);
    std::vector<int64_t> seen;
    for (int t = 0; t < f; ++t) {
        for (int k = 0; k < 3; ++k) {
            int64_t key = static_cast<int64_t>(mesh.geo.piece_id[t]) * (mesh.vertex_count() + 1) +
                          mesh.triangles[t][k];
            auto it = std::lower_bound(keys.begin(), keys.end(), std::make_pair(key, -1));
            if (it != keys.end() && it->first == key) {
                weld.corner_to_point[static_cast<size_t>(t) * 3 + k] = it->second;
            } else {
                int id = weld.point_count++;
                keys.insert(it, {key, id});
                weld.corner_to_point[static_cast<size_t>(t) * 3 + k] = id;
            }
        }
    }
    return weld;
}

// Mutable relaxation state over welded points.
struct ZipState {
    WeldMap weld;
    std::vector<Vec2> coords;        // per point
    std::vector<Vec2> rest;          // per corner, from GeoProj (size 3F)
    std::vector<double> init_sign;   // per triangle
    std::vector<std::pair<int, int>> point_pairs;
    int step = 0;
    double max_pair_dist = std::numeric_limits<double>::infinity();
    int flip_count = 0;

    Vec2 point_of_corner(int tri, int k) const {
        return coords[weld.corner_to_point[static_cast<size_t>(tri) * 3 + k]];
    }

    double signed_area(int tri) const {
        Vec2 a = point_of_corner(tri, 0), b = point_of_corner(tri, 1), c = point_of_corner(tri, 2);
        return 0.5 * (b - a).cross(c - a);
    }

    double pair_distance() const {
        double d = 0.0;
        for (const auto& [a, b] : point_pairs) d = std::max(d, (coords[a] - coords[b]).norm());
        return d;
    }
};

namespace detail {

// Altitude from the edge opposite the corner, Eq. S2 form: with va = C - B,
// vb = C - A, vc = B - A this is vb minus its component along vc.
inline Vec2 altitude(const Vec2& corner, const Vec2& edge_a, const Vec2& edge_b) {
    Vec2 vc = edge_b - edge_a;
    Vec2 va = corner - edge_b;
    Vec2 vb = corner - edge_a;
    double denom = vc.dot(vc);
    if (denom <= 0.0) throw NumericError("zip: zero-length opposite edge");
    return (va * vb.dot(vc) - vb * va.dot(vc)) / denom;
}

}  // namespace detail

// Restoring forces per point: for each triangle and corner, rigidly align the
// rest triangle's opposite edge onto the deformed one (midpoints coincident)
// and pull the corner toward its aligned rest image, scaled by the inverse
// current altitude so squashed triangles resist flipping. Seam pairs add a
// linear spring toward the partner.
inline std::vector<Vec2> restoring_force(const ZipState& state, const ClothMesh& mesh,
                                         double k_pair) {
    std::vector<Vec2> force(state.coords.size(), Vec2{0.0, 0.0});
    const int f = mesh.triangle_count();
    for (int t = 0; t < f; ++t) {
        for (int k = 0; k < 3; ++k) {
            int ka = (k + 1) % 3, kb = (k + 2) % 3;
            Vec2 cur = state.point_of_corner(t, k);
            Vec2 cur_a = state.point_of_corner(t, ka);
            Vec2 cur_b = state.point_of_corner(t, kb);
            Vec2 rest = state.rest[static_cast<size_t>(t) * 3 + k];
            Vec2 rest_a = state.rest[static_cast<size_t>(t) * 3 + ka];
            Vec2 rest_b = state.rest[static_cast<size_t>(t) * 3 + kb];

            Vec2 cur_edge = cur_b - cur_a;
            Vec2 rest_edge = rest_b - rest_a;
            double cur_len = cur_edge.norm();
            double rest_len = rest_edge.norm();
            if (cur_len <= 0.0 || rest_len <= 0.0)
                throw NumericError("zip: degenerate edge while computing forces");

            // Rotation taking the rest edge direction onto the current one.
            double cos_r = (rest_edge.dot(cur_edge)) / (rest_len * cur_len);
            double sin_r = (rest_edge.cross(cur_edge)) / (rest_len * cur_len);
            Vec2 rest_mid = (rest_a + rest_b) * 0.5;
            Vec2 cur_mid = (cur_a + cur_b) * 0.5;
            Vec2 r = rest - rest_mid;
            Vec2 target{cos_r * r.x - sin_r * r.y, sin_r * r.x + cos_r * r.y};
            target += cur_mid;

            Vec2 alt = detail::altitude(cur, cur_a, cur_b);
            double alt_norm = alt.norm();
            if (alt_norm <= 1e-300) throw NumericError("zip: degenerate triangle in state");
            int point = state.weld.corner_to_point[static_cast<size_t>(t) * 3 + k];
            force[point] += (target - cur) / alt_norm;
        }
    }
    for (const auto& [a, b] : state.point_pairs) {
        force[a] += (state.coords[b] - state.coords[a]) * k_pair;
        force[b] += (state.coords[a] - state.coords[b]) * k_pair;
    }
    return force;
}

// Largest chirality-safe time interval: gamma times the smallest positive
// root, over all triangles, of signed-area(x + beta * F) = 0 (quadratic in
// beta), capped at beta_max.
inline double adaptive_step(const ZipState& state, const std::vector<Vec2>& forces,
                            const ZipParams& params) {
    double min_root = params.beta_max;
    const int f = static_cast<int>(state.init_sign.size());
    for (int t = 0; t < f; ++t) {
        int p0 = state.weld.corner_to_point[static_cast<size_t>(t) * 3 + 0];
        int p1 = state.weld.corner_to_point[static_cast<size_t>(t) * 3 + 1];
        int p2 = state.weld.corner_to_point[static_cast<size_t>(t) * 3 + 2];
        Vec2 e1 = state.coords[p1] - state.coords[p0];
        Vec2 e2 = state.coords[p2] - state.coords[p0];
        Vec2 g1 = forces[p1] - forces[p0];
        Vec2 g2 = forces[p2] - forces[p0];
        double a = g1.cross(g2);
        double b = e1.cross(g2) + g1.cross(e2);
        double c = e1.cross(e2);
        // smallest positive root of a b^2 + b b + c
        double root = std::numeric_limits<double>::infinity();
        if (std::abs(a) < 1e-300) {
            if (std::abs(b) > 1e-300) {
                double r = -c / b;
                if (r > 0.0) root = r;
            }
        } else {
            double disc = b * b - 4.0 * a * c;
            if (disc >= 0.0) {
                double sq = std::sqrt(disc);
                double q = b >= 0.0 ? -0.5 * (b + sq) : -0.5 * (b - sq);
                for (double r : {q / a, std::abs(q) > 0.0 ? c / q
                                                          : std::numeric_limits<double>::infinity()})
                    if (r > 0.0) root = std::min(root, r);
            }
        }
        min_root = std::min(min_root, root);
    }
    return params.gamma * min_root;
}

struct ZipTraceRow {
    int step = 0;
    double beta = 0.0;
    double max_pair_dist = 0.0;
    int flip_count = 0;
};

inline ZipState make_zip_state(const ClothMesh& mesh, const SeamPairs& seams,
                               const Projection2D& init) {
    if (init.triangle_count() != mesh.triangle_count())
        throw ValidationError("zip: init layout triangle count differs from mesh");
    ZipState state;
    state.weld = weld_corners(mesh);
    state.coords.assign(state.weld.point_count, Vec2{0.0, 0.0});
    for (int t = 0; t < mesh.triangle_count(); ++t)
        for (int k = 0; k < 3; ++k)
            state.coords[state.weld.corner_to_point[static_cast<size_t>(t) * 3 + k]] =
                init.corner(t, k);
    state.rest = mesh.geo.corners;
    state.init_sign.resize(mesh.triangle_count());
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        double area = state.signed_area(t);
        if (area <= 0.0)
            throw ValidationError("zip: init layout has flipped or degenerate triangle " +
                                  std::to_string(t));
        state.init_sign[t] = 1.0;
    }
    for (const auto& [a, b] : seams.pairs) {
        if (a < 0 || b < 0 || a >= 3 * mesh.triangle_count() || b >= 3 * mesh.triangle_count())
            throw ValidationError("zip: seam corner index out of range");
        int pa = state.weld.corner_to_point[a];
        int pb = state.weld.corner_to_point[b];
        if (pa != pb) state.point_pairs.emplace_back(std::min(pa, pb), std::max(pa, pb));
    }
    std::sort(state.point_pairs.begin(), state.point_pairs.end());
    state.point_pairs.erase(std::unique(state.point_pairs.begin(), state.point_pairs.end()),
                            state.point_pairs.end());
    state.max_pair_dist = state.pair_distance();
    return state;
}

// Runs Zipping until every seam pair is within tol_pair, then merges each
// pair cluster to its centroid and returns the TopoProj.
inline Projection2D zip_projection(const ClothMesh& mesh, const SeamPairs& seams,
                                   const Projection2D& init, const ZipParams& params_in,
                                   std::vector<ZipTraceRow>* trace = nullptr) {
    ZipParams params = params_in;
    params.validate();
    ZipState state = make_zip_state(mesh, seams, init);

    if (params.tol_pair < 0.0) {
        Vec2 lo, hi;
        init.bounding_box(&lo, &hi);
        params.tol_pair = 1e-3 * (hi - lo).norm();
    }
    if (!(params.tol_pair > 0.0)) throw DomainError("zip: tol_pair must be positive");

    while (state.max_pair_dist >= params.tol_pair) {
        if (state.step >= params.max_iters)
            throw ConvergenceError("zip: did not converge in " + std::to_string(params.max_iters) +
                                       " iterations (max pair distance " +
                                       std::to_string(state.max_pair_dist) + ")",
                                   state.max_pair_dist);
        std::vector<Vec2> force = restoring_force(state, mesh, params.k_pair);
        double beta = adaptive_step(state, force, params);
        for (size_t i = 0; i < state.coords.size(); ++i) state.coords[i] += force[i] * beta;
        ++state.step;
        for (int t = 0; t < mesh.triangle_count(); ++t)
            if (state.signed_area(t) * state.init_sign[t] <= 0.0) ++state.flip_count;
        if (state.flip_count > 0)
            throw NumericError("zip: chirality flip at step " + std::to_string(state.step));
        state.max_pair_dist = state.pair_distance();
        if (trace)
            trace->push_back({state.step, beta, state.max_pair_dist, state.flip_count});
    }

    // Merge pair clusters (union-find handles chained pairs) to centroids.
    std::vector<int> parent(state.coords.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int v) {
        while (parent[v] != v) v = parent[v] = parent[parent[v]];
        return v;
    };
    for (const auto& [a, b] : state.point_pairs) parent[find(a)] = find(b);
    std::vector<Vec2> centroid(state.coords.size(), Vec2{0, 0});
    std::vector<int> count(state.coords.size(), 0);
    for (size_t i = 0; i < state.coords.size(); ++i) {
        int r = find(static_cast<int>(i));
        centroid[r] += state.coords[i];
        count[r]++;
    }
    for (size_t i = 0; i < state.coords.size(); ++i) {
        int r = find(static_cast<int>(i));
        state.coords[i] = centroid[r] / static_cast<double>(count[r]);
    }

    Projection2D topo;
    topo.piece_id = mesh.geo.piece_id;
    topo.corners.resize(mesh.geo.corners.size());
    for (int t = 0; t < mesh.triangle_count(); ++t)
        for (int k = 0; k < 3; ++k)
            topo.corners[static_cast<size_t>(t) * 3 + k] =
                state.coords[state.weld.corner_to_point[static_cast<size_t>(t) * 3 + k]];
    topo.build_index();
    return topo;
}

}  // namespace advcat
