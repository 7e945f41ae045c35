#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "model.hpp"
#include "policy.hpp"

namespace tmpc {

struct LipschitzCertificate {
    std::size_t samples = 0;
    Vec max_residual;        // worst e_i per row on the estimation sample
    std::uint64_t seed = 0;
    bool certified = false;
};

/// Component-wise Lipschitz constants of x+ = f(x, pi(y_s, x, v), w):
/// |f_i - f_i'| <= sum_a Lx(i,a)|dx_a| + sum_b Lv(i,b)|dv_b| + sum_c Lw(i,c)|dw_c|.
struct LipschitzMatrices {
    Mat Lx;
    Mat Lv;
    Mat Lw;
    LipschitzCertificate certificate;
};

/// Sampling domain X x U x W. For the affine policy the pair difference in v
/// is du - K dx whatever y_s is, so the setpoint drops out of the residual and
/// pairs are drawn directly in plant coordinates.
struct LipschitzRegion {
    Hyperbox state_box;
    Hyperbox input_box;
    Hyperbox dist_box;

    static LipschitzRegion of(const PlantModel& model)
    {
        return {model.state_box, model.input_box, model.dist_box};
    }
};

struct LipschitzOptions {
    std::size_t budget = 100000;  // number of sample pairs
    std::uint64_t seed = 1;
    double initial_value = 1e3;   // starting candidate for every entry
    double decay = 0.95;          // multiplicative shrink per trial
    int refine_steps = 8;         // bisection steps after the first failure
    double safety_factor = 1.01;  // inflation of the shrunk constants
};

/// One sample pair, stored as plant coordinates.
struct LipschitzPair {
    Vec x, u, w;
    Vec xc, uc, wc;
};

namespace detail {

inline Vec uniform_in(const Hyperbox& box, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> U01(0.0, 1.0);
    Vec v(box.dim());
    for (Eigen::Index i = 0; i < box.dim(); ++i)
        v[i] = box.lower()[i] + U01(rng) * (box.upper()[i] - box.lower()[i]);
    return v;
}

// Each coordinate on the lower face, the upper face or uniform inside.
inline Vec boundary_biased_in(const Hyperbox& box, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> U01(0.0, 1.0);
    Vec v(box.dim());
    for (Eigen::Index i = 0; i < box.dim(); ++i) {
        const double t = U01(rng);
        const double lo = box.lower()[i], hi = box.upper()[i];
        v[i] = t < 1.0 / 3 ? lo : t < 2.0 / 3 ? hi : lo + U01(rng) * (hi - lo);
    }
    return v;
}

} // namespace detail

/// Deterministic pair sample: single-coordinate probes (which pin each
/// constant individually), small joint perturbations and far random pairs.
/// Base points are biased towards the box faces where derivatives peak.
inline std::vector<LipschitzPair> sample_lipschitz_pairs(const LipschitzRegion& region,
                                                         const AffinePolicy& policy,
                                                         std::size_t count, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U01(0.0, 1.0);
    const auto n = region.state_box.dim();
    const auto m = region.input_box.dim();
    const auto r = region.dist_box.dim();
    const Vec wx = region.state_box.upper() - region.state_box.lower();
    const Vec wu = region.input_box.upper() - region.input_box.lower();
    const Vec ww = region.dist_box.upper() - region.dist_box.lower();
    const auto coords = n + m + r;

    std::vector<LipschitzPair> pairs;
    pairs.reserve(count);
    std::size_t attempts = 0;
    while (pairs.size() < count && attempts < 50 * count + 1000) {
        ++attempts;
        const bool biased = U01(rng) < 0.5;
        LipschitzPair pr;
        pr.x = biased ? detail::boundary_biased_in(region.state_box, rng) : detail::uniform_in(region.state_box, rng);
        pr.u = biased ? detail::boundary_biased_in(region.input_box, rng) : detail::uniform_in(region.input_box, rng);
        pr.w = biased ? detail::boundary_biased_in(region.dist_box, rng) : detail::uniform_in(region.dist_box, rng);
        const double kind = U01(rng);
        if (kind < 0.6) {
            // Probe one coordinate with the other policy coordinates held.
            const auto c = static_cast<Eigen::Index>(U01(rng) * static_cast<double>(coords)) % coords;
            const double scale = std::pow(10.0, -4.0 + 3.0 * U01(rng));
            const double sign = U01(rng) < 0.5 ? -1.0 : 1.0;
            pr.xc = pr.x;
            pr.uc = pr.u;
            pr.wc = pr.w;
            if (c < n) {
                const double dx = sign * scale * wx[c];
                pr.xc[c] += dx;
                pr.uc += policy.K.col(c) * dx; // v unchanged
            } else if (c < n + m) {
                pr.uc[c - n] += sign * scale * wu[c - n];
            } else {
                pr.wc[c - n - m] += sign * scale * ww[c - n - m];
            }
        } else if (kind < 0.8) {
            const double scale = std::pow(10.0, -4.0 + 3.0 * U01(rng));
            pr.xc = pr.x + scale * wx.cwiseProduct(Vec::NullaryExpr(n, [&](Eigen::Index) { return 2 * U01(rng) - 1; }));
            pr.uc = pr.u + scale * wu.cwiseProduct(Vec::NullaryExpr(m, [&](Eigen::Index) { return 2 * U01(rng) - 1; }));
            pr.wc = pr.w + scale * ww.cwiseProduct(Vec::NullaryExpr(r, [&](Eigen::Index) { return 2 * U01(rng) - 1; }));
        } else {
            pr.xc = detail::uniform_in(region.state_box, rng);
            pr.uc = detail::uniform_in(region.input_box, rng);
            pr.wc = detail::uniform_in(region.dist_box, rng);
        }
        if (!region.state_box.contains(pr.xc) || !region.input_box.contains(pr.uc) ||
            !region.dist_box.contains(pr.wc))
            continue;
        pairs.push_back(std::move(pr));
    }
    return pairs;
}

namespace detail {

// Per-pair data for one row: |df_i| and the absolute coordinate differences
// in (x, v, w) order.
struct RowData {
    Vec df;     // pairs
    Mat D;      // pairs x (n + m + r)
};

inline std::vector<RowData> pair_differences(const PlantModel& model, const AffinePolicy& policy,
                                             const std::vector<LipschitzPair>& pairs)
{
    const int n = model.n, m = model.m, r = model.r;
    const auto np = static_cast<Eigen::Index>(pairs.size());
    Mat F(np, n);
    Mat D(np, n + m + r);
    for (Eigen::Index k = 0; k < np; ++k) {
        const auto& pr = pairs[static_cast<size_t>(k)];
        F.row(k) = (model.step(pr.x, pr.u, pr.w) - model.step(pr.xc, pr.uc, pr.wc)).cwiseAbs().transpose();
        const Vec dx = pr.x - pr.xc;
        const Vec dv = (pr.u - pr.uc) - policy.K * dx;
        D.row(k) << dx.cwiseAbs().transpose(), dv.cwiseAbs().transpose(), (pr.w - pr.wc).cwiseAbs().transpose();
    }
    std::vector<RowData> rows(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) rows[static_cast<size_t>(i)] = {F.col(i), D};
    return rows;
}

inline Vec stack_row(const LipschitzMatrices& L, int i)
{
    Vec l(L.Lx.cols() + L.Lv.cols() + L.Lw.cols());
    l << L.Lx.row(i).transpose(), L.Lv.row(i).transpose(), L.Lw.row(i).transpose();
    return l;
}

} // namespace detail

struct LipschitzWitness {
    double residual = -std::numeric_limits<double>::infinity();
    std::size_t pair_index = 0;
};

struct LipschitzVerification {
    Vec max_residual;                    // e_i per row
    std::vector<LipschitzWitness> worst; // per row
    std::size_t samples = 0;
    bool pass = false;
};

inline LipschitzVerification verify_on_pairs(const PlantModel& model, const AffinePolicy& policy,
                                             const LipschitzMatrices& candidate,
                                             const std::vector<LipschitzPair>& pairs, double tol = 1e-9)
{
    const auto rows = detail::pair_differences(model, policy, pairs);
    LipschitzVerification rep;
    rep.samples = pairs.size();
    rep.max_residual = Vec::Constant(model.n, -std::numeric_limits<double>::infinity());
    rep.worst.resize(static_cast<size_t>(model.n));
    for (int i = 0; i < model.n; ++i) {
        const Vec l = detail::stack_row(candidate, i);
        const auto& rd = rows[static_cast<size_t>(i)];
        if (rd.df.size() == 0) continue;
        const Vec e = rd.df - rd.D * l;
        Eigen::Index k;
        rep.max_residual[i] = e.maxCoeff(&k);
        rep.worst[static_cast<size_t>(i)] = {rep.max_residual[i], static_cast<std::size_t>(k)};
    }
    rep.pass = rep.samples > 0 && rep.max_residual.maxCoeff() <= tol;
    return rep;
}

/// Checks a candidate against a fresh deterministic sample. Report only.
inline LipschitzVerification verify_constants(const PlantModel& model, const AffinePolicy& policy,
                                              const LipschitzRegion& region,
                                              const LipschitzMatrices& candidate, std::size_t samples,
                                              std::uint64_t seed, double tol = 1e-9)
{
    const auto pairs = sample_lipschitz_pairs(region, policy, samples, seed);
    return verify_on_pairs(model, policy, candidate, pairs, tol);
}

/// Shrinks every entry from a large certified start: multiplicative decay
/// until certification is lost, then bisection between the last certified
/// and first failing value. Rows are independent.
inline LipschitzMatrices estimate_constants(const PlantModel& model, const AffinePolicy& policy,
                                            const LipschitzRegion& region, const LipschitzOptions& opt = {})
{
    if (opt.budget < 1) throw DimensionError("estimate_constants: empty budget");
    const int n = model.n, m = model.m, r = model.r;
    const auto pairs = sample_lipschitz_pairs(region, policy, opt.budget, opt.seed);
    const auto rows = detail::pair_differences(model, policy, pairs);
    const int nc = n + m + r;

    LipschitzMatrices L;
    L.Lx = Mat::Zero(n, n);
    L.Lv = Mat::Zero(n, m);
    L.Lw = Mat::Zero(n, r);
    L.certificate.samples = pairs.size();
    L.certificate.seed = opt.seed;
    L.certificate.max_residual = Vec::Zero(n);

    for (int i = 0; i < n; ++i) {
        const auto& rd = rows[static_cast<size_t>(i)];
        Vec l = Vec::Constant(nc, opt.initial_value);
        const Vec slack = rd.df - rd.D * l;
        if (slack.size() > 0 && slack.maxCoeff() > 0.0)
            throw NotLipschitzError("estimate_constants: row " + std::to_string(i) +
                                    " is not certified even at the initial constants");
        for (int e = 0; e < nc; ++e) {
            // Residual without entry e; certification of a trial value t is
            // rest_k - t * D(k, e) <= 0 for every pair k.
            l[e] = 0.0;
            const Vec rest = rd.df - rd.D * l;
            const auto certified = [&](double t) {
                for (Eigen::Index k = 0; k < rest.size(); ++k)
                    if (rest[k] - t * rd.D(k, e) > 0.0) return false;
                return true;
            };
            double ok = opt.initial_value;
            double fail = -1.0;
            while (true) {
                const double trial = ok * opt.decay;
                if (trial < 1e-14 * opt.initial_value) {
                    ok = certified(0.0) ? 0.0 : ok;
                    break;
                }
                if (certified(trial)) {
                    ok = trial;
                } else {
                    fail = trial;
                    break;
                }
            }
            if (fail >= 0.0) {
                for (int s = 0; s < opt.refine_steps; ++s) {
                    const double mid = 0.5 * (ok + fail);
                    (certified(mid) ? ok : fail) = mid;
                }
            }
            l[e] = ok;
        }
        l *= opt.safety_factor;
        L.Lx.row(i) = l.head(n).transpose();
        L.Lv.row(i) = l.segment(n, m).transpose();
        L.Lw.row(i) = l.tail(r).transpose();
        const Vec e = rd.df - rd.D * l;
        L.certificate.max_residual[i] = e.size() > 0 ? e.maxCoeff() : 0.0;
    }
    L.certificate.certified = L.certificate.max_residual.size() == 0 || L.certificate.max_residual.maxCoeff() <= 0.0;
    return L;
}

} // namespace tmpc
