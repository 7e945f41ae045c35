#pragma once

#include <algorithm>
#include <vector>

#include "hyperbox.hpp"

namespace tmpc {

/// Bounded convex polytope {y : A y <= b}. For two-dimensional regions the
/// counter-clockwise vertex list is kept alongside the half-planes.
struct Polytope {
    Mat A;
    Vec b;
    std::vector<Vec> vertices;

    Eigen::Index dim() const { return A.cols(); }

    bool contains(const Vec& y, double tol = 1e-12) const
    {
        return ((A * y - b).array() <= tol).all();
    }

    /// Largest signed violation max_i (A_i y - b_i).
    double violation(const Vec& y) const { return (A * y - b).maxCoeff(); }

    static Polytope from_box(const Hyperbox& box)
    {
        const auto p = box.dim();
        Polytope poly;
        poly.A.resize(2 * p, p);
        poly.A << Mat::Identity(p, p), -Mat::Identity(p, p);
        poly.b.resize(2 * p);
        poly.b << box.upper(), -box.lower();
        if (p == 2) {
            const Vec& lo = box.lower();
            const Vec& hi = box.upper();
            poly.vertices = {Vec{{lo[0], lo[1]}}, Vec{{hi[0], lo[1]}}, Vec{{hi[0], hi[1]}},
                             Vec{{lo[0], hi[1]}}};
        } else if (p == 1) {
            poly.vertices = {box.lower(), box.upper()};
        }
        return poly;
    }
};

/// Convex hull of planar points (Andrew's monotone chain), counter-clockwise,
/// collinear points dropped.
inline std::vector<Vec> convex_hull_2d(std::vector<Vec> pts)
{
    std::sort(pts.begin(), pts.end(), [](const Vec& a, const Vec& b) {
        return a[0] < b[0] || (a[0] == b[0] && a[1] < b[1]);
    });
    pts.erase(std::unique(pts.begin(), pts.end(), [](const Vec& a, const Vec& b) { return a == b; }),
              pts.end());
    if (pts.size() < 3) return pts;
    const auto cross = [](const Vec& o, const Vec& a, const Vec& b) {
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    };
    std::vector<Vec> hull(2 * pts.size());
    size_t k = 0;
    for (size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    for (size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
        while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0) --k;
        hull[k++] = pts[i - 1];
    }
    hull.resize(k - 1);
    return hull;
}

/// Half-plane description of a counter-clockwise convex polygon.
inline Polytope polygon_from_vertices(const std::vector<Vec>& ccw)
{
    const auto nv = ccw.size();
    if (nv < 3) throw DimensionError("polygon: needs at least three vertices");
    Polytope poly;
    poly.A.resize(static_cast<Eigen::Index>(nv), 2);
    poly.b.resize(static_cast<Eigen::Index>(nv));
    for (size_t i = 0; i < nv; ++i) {
        const Vec& a = ccw[i];
        const Vec& c = ccw[(i + 1) % nv];
        // Outward normal of edge a->c for a counter-clockwise polygon.
        Vec nrm{{c[1] - a[1], a[0] - c[0]}};
        nrm /= nrm.norm();
        poly.A.row(static_cast<Eigen::Index>(i)) = nrm.transpose();
        poly.b[static_cast<Eigen::Index>(i)] = nrm.dot(a);
    }
    poly.vertices = ccw;
    return poly;
}

} // namespace tmpc
