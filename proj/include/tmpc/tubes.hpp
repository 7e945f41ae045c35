#pragma once

#include <string>
#include <vector>

#include "equilibria.hpp"
#include "lipschitz.hpp"
#include "policy.hpp"

namespace tmpc {

/// Box tube sequences. Column j of c bounds the deviation caused by the
/// initial-condition box F(0) after j steps; column j of d is the cumulative
/// bound sum_{k<j} c(:, k). F(j) = {|x_i| <= c(i, j)}, R(j) = {|x_i| <= d(i, j)}.
struct TubeSystem {
    Mat c; // n x (N + 1)
    Mat d; // n x (N + 1)
    std::vector<Hyperbox> F;
    std::vector<Hyperbox> R;
    int horizon = 0;
    std::vector<std::string> warnings;
};

/// Propagates a given first cross-section c(:, 0) through L_x.
inline TubeSystem build_tubes_from(const Mat& Lx, const Vec& c0, int horizon,
                                   const std::optional<Vec>& state_half_width = std::nullopt)
{
    if (horizon < 1) throw DimensionError("build_tubes: horizon must be at least 1");
    if (Lx.rows() != Lx.cols() || Lx.rows() != c0.size())
        throw DimensionError("build_tubes: L_x and F(0) dimensions differ");
    if ((Lx.array() < 0).any() || (c0.array() < 0).any())
        throw DomainError("build_tubes: negative constant");
    const auto n = c0.size();
    TubeSystem t;
    t.horizon = horizon;
    t.c = Mat::Zero(n, horizon + 1);
    t.d = Mat::Zero(n, horizon + 1);
    t.c.col(0) = c0;
    for (int j = 1; j <= horizon; ++j) {
        t.c.col(j) = Lx * t.c.col(j - 1);
        t.d.col(j) = t.d.col(j - 1) + t.c.col(j - 1);
    }
    for (int j = 0; j <= horizon; ++j) {
        t.F.push_back(Hyperbox::symmetric(t.c.col(j)));
        t.R.push_back(Hyperbox::symmetric(t.d.col(j)));
    }
    if (state_half_width) {
        for (Eigen::Index i = 0; i < n; ++i)
            if (t.c(i, horizon) > (*state_half_width)[i])
                t.warnings.push_back("tube growth: c(" + std::to_string(i) + ", " + std::to_string(horizon) +
                                     ") exceeds the state-box half-width");
    }
    return t;
}

/// c(:, 0) = L_w * w_bar, the worst-case one-step disturbance effect.
inline TubeSystem build_tubes(const LipschitzMatrices& L, const Vec& w_bar, int horizon,
                              const std::optional<Vec>& state_half_width = std::nullopt)
{
    if (L.Lw.cols() != w_bar.size()) throw DimensionError("build_tubes: L_w and w_bar dimensions differ");
    if ((w_bar.array() < 0).any()) throw DomainError("build_tubes: negative disturbance bound");
    return build_tubes_from(L.Lx, L.Lw * w_bar, horizon, state_half_width);
}

/// Stage-wise constraint boxes: X shrunk by d(:, j) and U shrunk by |K| d(:, j).
struct TightenedConstraints {
    std::vector<Hyperbox> state_boxes;
    std::vector<Vec> input_margins;
    std::vector<Hyperbox> input_boxes;
    Mat K;

    int horizon() const { return static_cast<int>(state_boxes.size()) - 1; }
};

inline TightenedConstraints tighten(const Hyperbox& state_box, const Hyperbox& input_box, const Mat& K,
                                    const TubeSystem& tubes)
{
    if (K.rows() != input_box.dim() || K.cols() != state_box.dim() || tubes.d.rows() != state_box.dim())
        throw DimensionError("tighten: inconsistent dimensions");
    TightenedConstraints tc;
    tc.K = K;
    const Mat absK = K.cwiseAbs();
    for (int j = 0; j <= tubes.horizon; ++j) {
        const Vec dx = tubes.d.col(j);
        const Vec du = absK * dx;
        if (state_box.shrink_is_empty(dx) || input_box.shrink_is_empty(du))
            throw HorizonTooLongError("tighten: tightened constraint set is empty at stage " + std::to_string(j));
        tc.state_boxes.push_back(state_box.shrink(dx));
        tc.input_margins.push_back(du);
        tc.input_boxes.push_back(input_box.shrink(du));
    }
    return tc;
}

/// Stage-j tightened membership of (x, v) for the reference y_s.
inline bool membership(const Vec& x, const Vec& v, int j, const Vec& x_s, const TightenedConstraints& tc)
{
    if (j < 0 || j > tc.horizon()) return false;
    const auto sj = static_cast<size_t>(j);
    return tc.state_boxes[sj].contains(x) && tc.input_boxes[sj].contains(tc.K * (x - x_s) + v);
}

inline bool membership(const Vec& x, const Vec& v, int j, const Vec& y_s, const TightenedConstraints& tc,
                       const EquilibriumMaps& maps)
{
    return membership(x, v, j, maps.state(y_s), tc);
}

} // namespace tmpc
