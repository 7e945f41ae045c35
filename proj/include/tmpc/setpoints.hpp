#pragma once

#include <numbers>
#include <optional>
#include <random>
#include <vector>

#include "equilibria.hpp"
#include "polytope.hpp"
#include "qp.hpp"
#include "tubes.hpp"

namespace tmpc {

/// Convex bounded set of admissible artificial references.
struct SetpointRegion {
    Polytope polytope;
    double eps = 1e-6;
    std::vector<Vec> feasible_points; // grid points that passed the membership test
    std::size_t grid_points = 0;
    std::size_t hull_points_rejected = 0; // grid points inside the hull that failed

    bool contains(const Vec& y, double tol = 1e-12) const { return polytope.contains(y, tol); }
};

struct SetpointGridOptions {
    int density = 41;            // grid points per output axis
    double eps = 1e-6;           // interior margin on every constraint face
    bool inscribed_box = false;  // replace the hull by the largest inscribed grid box
};

/// True when the steady pair of y lies in the stage-j tightened boxes shrunk by eps.
inline bool steady_point_admissible(const EquilibriumMaps& maps, const Vec& y, const TightenedConstraints& tc,
                                    int j, double eps)
{
    Vec x, u;
    try {
        std::tie(x, u) = maps.steady(y);
    } catch (const Error&) {
        return false;
    }
    const auto sj = static_cast<size_t>(j);
    const Hyperbox& X = tc.state_boxes[sj];
    const Hyperbox& U = tc.input_boxes[sj];
    if (X.shrink_is_empty(Vec::Constant(X.dim(), eps)) || U.shrink_is_empty(Vec::Constant(U.dim(), eps)))
        return false;
    return X.shrink(Vec::Constant(X.dim(), eps)).contains(x) && U.shrink(Vec::Constant(U.dim(), eps)).contains(u);
}

namespace detail {

inline Vec grid_point(const Hyperbox& box, int density, int i, int j)
{
    const auto at = [&](int k, int idx) {
        if (density == 1) return box.center()[k];
        return box.lower()[k] + (box.upper()[k] - box.lower()[k]) * idx / (density - 1);
    };
    return Vec{{at(0, i), at(1, j)}};
}

// Largest level L with {e'Pe <= L} + x_s inside X and K e + v_s inside U.
inline double level_limit(const Mat& Pinv, const Mat& K, const Vec& xs, const Vec& vs, const Hyperbox& X,
                          const Hyperbox& U)
{
    double L = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
        const double s = std::min(xs[i] - X.lower()[i], X.upper()[i] - xs[i]);
        L = std::min(L, s <= 0 ? 0.0 : s * s / Pinv(i, i));
    }
    const Mat KPK = K * Pinv * K.transpose();
    for (Eigen::Index b = 0; b < vs.size(); ++b) {
        const double s = std::min(vs[b] - U.lower()[b], U.upper()[b] - vs[b]);
        L = std::min(L, s <= 0 ? 0.0 : (KPK(b, b) > 0 ? s * s / KPK(b, b) : std::numeric_limits<double>::infinity()));
    }
    return L;
}

} // namespace detail

/// Optional extra requirement on a reference: the ellipsoid {e'Pe <= level}
/// around its equilibrium, driven by K e + v_s, fits the stage-N boxes.
struct TerminalFit {
    Mat P;
    Mat K;
    double level = 0.0;
};

/// Grids the candidate output rectangle and keeps the references whose
/// equilibrium satisfies the stage-N tightened constraints. Planar outputs only.
inline SetpointRegion build_Yt(const EquilibriumMaps& maps, const TightenedConstraints& tc, int horizon,
                               const Hyperbox& candidate, const SetpointGridOptions& opt = {},
                               const std::optional<TerminalFit>& fit = std::nullopt)
{
    const Mat Pinv = fit ? Mat(fit->P.inverse()) : Mat();
    const auto sN = static_cast<size_t>(horizon);
    if (candidate.dim() != 2 || maps.model().p != 2)
        throw DimensionError("build_Yt: only two-dimensional outputs are supported");
    if (horizon < 0 || horizon > tc.horizon()) throw DimensionError("build_Yt: stage outside the tightened sequence");
    if (opt.density < 2) throw DimensionError("build_Yt: grid density must be at least 2");
    const int G = opt.density;
    std::vector<char> ok(static_cast<size_t>(G * G), 0);
    SetpointRegion reg;
    reg.eps = opt.eps;
    reg.grid_points = static_cast<std::size_t>(G * G);
    for (int i = 0; i < G; ++i)
        for (int j = 0; j < G; ++j) {
            const Vec y = detail::grid_point(candidate, G, i, j);
            bool keep = steady_point_admissible(maps, y, tc, horizon, opt.eps);
            if (keep && fit) {
                const auto [xs, vs] = maps.steady(y);
                keep = detail::level_limit(Pinv, fit->K, xs, vs, tc.state_boxes[sN], tc.input_boxes[sN]) >= fit->level;
            }
            if (keep) {
                ok[static_cast<size_t>(i * G + j)] = 1;
                reg.feasible_points.push_back(y);
            }
        }
    if (reg.feasible_points.empty()) throw EmptyRegionError("build_Yt: no admissible grid point");

    if (opt.inscribed_box) {
        // Largest-area all-feasible index rectangle, via 2D prefix sums.
        std::vector<int> S(static_cast<size_t>((G + 1) * (G + 1)), 0);
        const auto s = [&](int a, int b) -> int& { return S[static_cast<size_t>(a * (G + 1) + b)]; };
        for (int i = 0; i < G; ++i)
            for (int j = 0; j < G; ++j)
                s(i + 1, j + 1) = s(i, j + 1) + s(i + 1, j) - s(i, j) + ok[static_cast<size_t>(i * G + j)];
        int best = -1, bi0 = 0, bj0 = 0, bi1 = 0, bj1 = 0;
        for (int i0 = 0; i0 < G; ++i0)
            for (int i1 = i0 + 1; i1 < G; ++i1)
                for (int j0 = 0; j0 < G; ++j0)
                    for (int j1 = j0 + 1; j1 < G; ++j1) {
                        const int cnt = s(i1 + 1, j1 + 1) - s(i0, j1 + 1) - s(i1 + 1, j0) + s(i0, j0);
                        const int area = (i1 - i0) * (j1 - j0);
                        if (cnt == (i1 - i0 + 1) * (j1 - j0 + 1) && area > best) {
                            best = area;
                            bi0 = i0, bi1 = i1, bj0 = j0, bj1 = j1;
                        }
                    }
        if (best < 0) throw EmptyRegionError("build_Yt: no full-dimensional feasible box");
        const Vec lo = detail::grid_point(candidate, G, bi0, bj0);
        const Vec hi = detail::grid_point(candidate, G, bi1, bj1);
        reg.polytope = Polytope::from_box(Hyperbox(lo, hi));
        return reg;
    }

    const auto hull = convex_hull_2d(reg.feasible_points);
    if (hull.size() < 3) throw EmptyRegionError("build_Yt: admissible points do not span a region");
    reg.polytope = polygon_from_vertices(hull);
    for (int i = 0; i < G; ++i)
        for (int j = 0; j < G; ++j)
            if (!ok[static_cast<size_t>(i * G + j)] &&
                reg.polytope.contains(detail::grid_point(candidate, G, i, j), -1e-12))
                ++reg.hull_points_rejected;
    return reg;
}

/// Region from a stored counter-clockwise vertex list.
inline SetpointRegion region_from_vertices(const std::vector<Vec>& vertices, double eps = 1e-6)
{
    SetpointRegion reg;
    reg.eps = eps;
    reg.polytope = polygon_from_vertices(convex_hull_2d(vertices));
    reg.feasible_points = reg.polytope.vertices;
    return reg;
}

/// argmin (y - y_t)' T (y - y_t) over the region.
inline Vec best_setpoint(const Vec& y_t, const SetpointRegion& region, const Mat& T)
{
    if (region.polytope.A.rows() == 0) throw EmptyRegionError("best_setpoint: empty region");
    if (region.contains(y_t)) return y_t;
    QuadraticProgram qp;
    qp.H = 2.0 * symmetrize(T);
    qp.g = -2.0 * T * y_t;
    qp.A_in = region.polytope.A;
    qp.b_in = region.polytope.b;
    const auto res = solve_qp(qp);
    if (res.status != QpStatus::optimal) throw EmptyRegionError("best_setpoint: projection failed");
    return res.x;
}

/// Uniform sample in the region by rejection from its vertex bounding box.
inline Vec sample_in_region(const SetpointRegion& region, std::mt19937_64& rng)
{
    const auto& V = region.polytope.vertices;
    if (V.empty()) throw EmptyRegionError("sample_in_region: region has no vertex list");
    Vec lo = V.front(), hi = V.front();
    for (const Vec& v : V) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    std::uniform_real_distribution<double> U01(0.0, 1.0);
    for (int it = 0; it < 100000; ++it) {
        Vec y = lo + (hi - lo).cwiseProduct(Vec::NullaryExpr(lo.size(), [&](Eigen::Index) { return U01(rng); }));
        if (region.contains(y)) return y;
    }
    throw EmptyRegionError("sample_in_region: rejection sampling failed");
}

/// Sampled Lipschitz constant of g_x on the region with a multiplicative margin.
/// One third of the pairs are far chords; the rest are short chords in random
/// directions, anchored at random points or at the vertices, which approach the
/// largest local gain.
inline double estimate_Lg(const EquilibriumMaps& maps, const SetpointRegion& region, std::size_t pairs = 2000,
                          std::uint64_t seed = 7, double margin = 1.05)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U01(0.0, 1.0);
    const auto& V = region.polytope.vertices;
    double diam = 0.0;
    for (const Vec& a : V)
        for (const Vec& b : V) diam = std::max(diam, (a - b).norm());
    double L = 0.0;
    for (std::size_t k = 0; k < pairs; ++k) {
        Vec a, b;
        if (k % 3 == 0) {
            a = sample_in_region(region, rng);
            b = sample_in_region(region, rng);
        } else {
            a = k % 3 == 1 ? sample_in_region(region, rng) : V[static_cast<size_t>(U01(rng) * V.size()) % V.size()];
            const double th = 2.0 * std::numbers::pi * U01(rng);
            Vec dir = Vec::Zero(a.size());
            dir[0] = std::cos(th);
            if (dir.size() > 1) dir[1] = std::sin(th);
            b = a + 1e-4 * diam * dir;
            if (!region.contains(b)) b = a - 1e-4 * diam * dir;
            if (!region.contains(b)) continue;
        }
        const double dy = (a - b).norm();
        if (dy < 1e-12) continue;
        L = std::max(L, (maps.state(a) - maps.state(b)).norm() / dy);
    }
    return margin * L;
}

/// Regular grid of references inside the region (at most density^2 points).
inline std::vector<Vec> region_grid(const SetpointRegion& region, int density)
{
    const auto& V = region.polytope.vertices;
    Vec lo = V.front(), hi = V.front();
    for (const Vec& v : V) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    std::vector<Vec> out;
    const Hyperbox bb(lo, hi);
    for (int i = 0; i < density; ++i)
        for (int j = 0; j < density; ++j) {
            const Vec y = detail::grid_point(bb, density, i, j);
            if (region.contains(y, 1e-12)) out.push_back(y);
        }
    return out;
}

} // namespace tmpc
