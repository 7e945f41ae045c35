#pragma once

#include "hyperbox.hpp"

namespace tmpc {

/// Equilibrium-dependent pre-stabilizing policy u = K (x - x_s) + v.
/// With this policy the steady policy input equals the steady plant input.
struct AffinePolicy {
    Mat K;

    Vec apply(const Vec& x_s, const Vec& x, const Vec& v) const { return K * (x - x_s) + v; }

    /// v such that apply(x_s, x, v) == u.
    Vec input_for(const Vec& x_s, const Vec& x, const Vec& u) const { return u - K * (x - x_s); }
};

} // namespace tmpc
