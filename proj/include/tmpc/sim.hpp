#pragma once

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "ocp.hpp"

namespace tmpc {

struct ScheduleEntry {
    double t_min = 0.0; // start time of the segment
    Vec y_t;
};

/// One closed-loop run: constant disturbance or an explicit per-step sequence.
struct Scenario {
    Vec x0;
    std::vector<ScheduleEntry> schedule;
    double duration_min = 100.0;
    double sample_min = 0.25;
    std::optional<Vec> w_const;
    std::vector<Vec> w_seq; // used when w_const is empty; missing steps are zero

    int steps() const { return static_cast<int>(std::lround(duration_min / sample_min)); }

    Vec disturbance(int k, int r) const
    {
        if (w_const) return *w_const;
        if (k < static_cast<int>(w_seq.size())) return w_seq[static_cast<size_t>(k)];
        return Vec::Zero(r);
    }

    /// Index of the segment active at step k (changes apply at the start of a step).
    std::size_t segment_at(int k) const
    {
        const double t = k * sample_min;
        std::size_t s = 0;
        for (std::size_t i = 0; i < schedule.size(); ++i)
            if (schedule[i].t_min <= t + 1e-9) s = i;
        return s;
    }

    void validate(const PlantModel& model) const
    {
        if (x0.size() != model.n) throw DimensionError("Scenario: x0 dimension");
        if (schedule.empty() || schedule.front().t_min != 0.0)
            throw ConfigError("Scenario: schedule must start at t = 0");
        for (std::size_t i = 0; i < schedule.size(); ++i) {
            if (schedule[i].y_t.size() != model.p) throw DimensionError("Scenario: y_t dimension");
            if (i > 0 && !(schedule[i].t_min > schedule[i - 1].t_min))
                throw ConfigError("Scenario: schedule times must increase strictly");
        }
        if (!(sample_min > 0) || !(duration_min > 0)) throw ConfigError("Scenario: non-positive duration");
        const auto in_W = [&](const Vec& w) { return w.size() == model.r && model.dist_box.contains(w, 1e-15); };
        if (w_const && !in_W(*w_const)) throw ConfigError("Scenario: disturbance outside W");
        for (const Vec& w : w_seq)
            if (!in_W(w)) throw ConfigError("Scenario: disturbance outside W");
    }
};

struct StepRecord {
    int k = 0;
    double t_min = 0.0;
    Vec x, u, y, y_t, y_s, w;
    double cost = 0.0;
    double W = 0.0;                 // cost minus the offset cost of the best admissible output
    std::string status;             // solver status, or "infeasible"
    double min_slack = 0.0;         // smallest distance of (x, u) to a raw constraint face
};

struct Trace {
    std::vector<StepRecord> steps;
    Vec x_final;                    // state after the last step
    int violations = 0;             // steps with a negative raw slack
    int infeasible_steps = 0;
    int feasible_to_infeasible = 0;
};

namespace detail {

inline double raw_slack(const PlantModel& model, const Vec& x, const Vec& u)
{
    return std::min(model.state_box.min_slack(x), model.input_box.min_slack(u));
}

} // namespace detail

/// solve -> control law -> plant step, warm-started from the shifted candidate.
/// Only the first solve may fail outright.
inline Trace run_closed_loop(const TrackingProblem& pb, const Scenario& sc)
{
    const PlantModel& model = pb.model();
    sc.validate(model);
    Trace tr;
    Vec x = sc.x0;
    std::optional<Vec> warm;
    bool prev_feasible = true;
    std::vector<Vec> best(sc.schedule.size());
    for (std::size_t i = 0; i < sc.schedule.size(); ++i) best[i] = best_setpoint(sc.schedule[i].y_t, pb.region, pb.T);

    const int K = sc.steps();
    for (int k = 0; k < K; ++k) {
        const std::size_t seg = sc.segment_at(k);
        const Vec& y_t = sc.schedule[seg].y_t;
        StepRecord rec;
        rec.k = k;
        rec.t_min = k * sc.sample_min;
        rec.x = x;
        rec.y_t = y_t;
        try {
            auto [u, sol] = control_law(pb, x, y_t, warm);
            rec.u = u;
            rec.y_s = sol.y_s;
            rec.cost = sol.cost;
            rec.status = to_string(sol.status);
            warm = shift_candidate(pb, sol);
            prev_feasible = true;
        } catch (const InfeasibleProblemError& e) {
            if (!warm) throw ScenarioInfeasibleError(std::string("run_closed_loop: initial state infeasible: ") + e.what());
            // Keep going on the previous plan, flagged.
            ++tr.infeasible_steps;
            if (prev_feasible) ++tr.feasible_to_infeasible;
            prev_feasible = false;
            const Vec& z = *warm;
            rec.y_s = z.tail(pb.p());
            rec.u = model.input_box.clamp(pb.terminal.K * (x - pb.maps.state(rec.y_s)) + z.head(pb.m()));
            rec.cost = std::numeric_limits<double>::quiet_NaN();
            rec.status = "infeasible";
            Solution held;
            held.v_seq = pb.unpack_v(z);
            held.y_s = rec.y_s;
            warm = shift_candidate(pb, held);
        }
        const Vec dy = best[seg] - y_t;
        rec.W = rec.cost - dy.dot(pb.T * dy);
        rec.y = model.output(x, rec.u);
        rec.w = sc.disturbance(k, model.r);
        rec.min_slack = detail::raw_slack(model, x, rec.u);
        if (rec.min_slack < 0) ++tr.violations;
        x = model.step(x, rec.u, rec.w);
        tr.steps.push_back(std::move(rec));
    }
    tr.x_final = x;
    if (!model.state_box.contains(x)) ++tr.violations;
    return tr;
}

struct SegmentMetrics {
    Vec y_t;
    Vec best;                 // best admissible steady output for y_t
    double final_error = 0.0; // |y - best| at the end of the segment
    double final_target_error = 0.0; // |y - y_t|
};

struct TraceMetrics {
    std::vector<SegmentMetrics> segments;
    double max_violation = 0.0;   // largest slack deficit, 0 when all constraints hold
    int violations = 0;
    int W_increases = 0;          // W(k+1) > W(k) + tol before convergence, within a segment
    int fallback_steps = 0;
    int infeasible_steps = 0;
    int feasible_to_infeasible = 0;
};

/// Per-segment errors, violations and descent of W. The segment's last output
/// is the output of the state reached after its last step.
inline TraceMetrics compute_metrics(const Trace& tr, const TrackingProblem& pb, const Scenario& sc,
                                    double W_tol = 1e-8, double converged_tol = 1e-6)
{
    TraceMetrics m;
    m.infeasible_steps = tr.infeasible_steps;
    m.feasible_to_infeasible = tr.feasible_to_infeasible;
    const PlantModel& model = pb.model();
    for (const auto& s : tr.steps) {
        m.max_violation = std::max(m.max_violation, -s.min_slack);
        if (s.min_slack < 0) ++m.violations;
        if (s.status == to_string(SolveStatus::fallback_candidate)) ++m.fallback_steps;
    }
    m.max_violation = std::max(m.max_violation, -model.state_box.min_slack(tr.x_final));
    if (!model.state_box.contains(tr.x_final)) ++m.violations;

    const int K = static_cast<int>(tr.steps.size());
    for (std::size_t seg = 0; seg < sc.schedule.size(); ++seg) {
        SegmentMetrics sm;
        sm.y_t = sc.schedule[seg].y_t;
        sm.best = best_setpoint(sm.y_t, pb.region, pb.T);
        int last = -1;
        for (int k = 0; k < K; ++k)
            if (sc.segment_at(k) == seg) last = k;
        if (last < 0) continue;
        const Vec& xe = last + 1 < K ? tr.steps[static_cast<size_t>(last + 1)].x : tr.x_final;
        const Vec ye = model.output(xe, tr.steps[static_cast<size_t>(last)].u);
        sm.final_error = (ye - sm.best).norm();
        sm.final_target_error = (ye - sm.y_t).norm();
        m.segments.push_back(sm);

        const Vec xs = pb.maps.state(sm.best);
        for (int k = 0; k < last; ++k) {
            if (sc.segment_at(k) != seg) continue;
            const auto& a = tr.steps[static_cast<size_t>(k)];
            const auto& b = tr.steps[static_cast<size_t>(k + 1)];
            if ((a.x - xs).norm() <= converged_tol) break;
            if (std::isfinite(a.W) && std::isfinite(b.W) && b.W > a.W + W_tol) ++m.W_increases;
        }
    }
    return m;
}

struct BatchReport {
    std::vector<Vec> w_values;
    std::vector<Trace> traces;
    std::vector<TraceMetrics> metrics;
    int total_steps = 0;
    int violations = 0;
    int infeasible_steps = 0;
    int feasible_to_infeasible = 0;
    double feasibility_rate = 1.0;
    std::vector<double> max_final_error; // per segment, max over scenarios
    Mat x_min, x_max, u_min, u_max;      // envelopes, one column per step
};

/// All (w1, w2) pairs of the grid (|grid|^2 runs for two disturbances), run on
/// `threads` workers; each worker owns a copy of the problem.
inline BatchReport run_batch(const TrackingProblem& pb, const Scenario& base, const std::vector<double>& w_grid,
                             int threads = 0)
{
    BatchReport rep;
    if (pb.model().r != 2) throw DimensionError("run_batch: the grid form needs two disturbances");
    for (double a : w_grid)
        for (double b : w_grid) rep.w_values.push_back(Vec{{a, b}});
    for (const Vec& w : rep.w_values)
        if (!pb.model().dist_box.contains(w, 1e-15)) throw ConfigError("run_batch: grid value outside W");

    const std::size_t n = rep.w_values.size();
    rep.traces.resize(n);
    rep.metrics.resize(n);
    std::vector<std::exception_ptr> errors(n);
    unsigned nt = threads > 0 ? static_cast<unsigned>(threads) : std::max(1u, std::thread::hardware_concurrency());
    nt = std::min<unsigned>(nt, static_cast<unsigned>(std::max<std::size_t>(1, n)));
    const auto worker = [&](unsigned id) {
        const TrackingProblem local = pb;
        for (std::size_t i = id; i < n; i += nt) {
            try {
                Scenario sc = base;
                sc.w_const = rep.w_values[i];
                rep.traces[i] = run_closed_loop(local, sc);
                rep.metrics[i] = compute_metrics(rep.traces[i], local, sc);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (nt == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < nt; ++t) pool.emplace_back(worker, t);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    const int K = base.steps();
    const int nx = pb.n(), nu = pb.m();
    rep.x_min = Mat::Constant(nx, K + 1, std::numeric_limits<double>::infinity());
    rep.x_max = Mat::Constant(nx, K + 1, -std::numeric_limits<double>::infinity());
    rep.u_min = Mat::Constant(nu, K, std::numeric_limits<double>::infinity());
    rep.u_max = Mat::Constant(nu, K, -std::numeric_limits<double>::infinity());
    rep.max_final_error.assign(base.schedule.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& tr = rep.traces[i];
        const auto& mt = rep.metrics[i];
        rep.total_steps += static_cast<int>(tr.steps.size());
        rep.violations += mt.violations;
        rep.infeasible_steps += mt.infeasible_steps;
        rep.feasible_to_infeasible += mt.feasible_to_infeasible;
        for (std::size_t s = 0; s < mt.segments.size(); ++s)
            rep.max_final_error[s] = std::max(rep.max_final_error[s], mt.segments[s].final_error);
        for (int k = 0; k < K; ++k) {
            const auto& st = tr.steps[static_cast<size_t>(k)];
            rep.x_min.col(k) = rep.x_min.col(k).cwiseMin(st.x);
            rep.x_max.col(k) = rep.x_max.col(k).cwiseMax(st.x);
            rep.u_min.col(k) = rep.u_min.col(k).cwiseMin(st.u);
            rep.u_max.col(k) = rep.u_max.col(k).cwiseMax(st.u);
        }
        rep.x_min.col(K) = rep.x_min.col(K).cwiseMin(tr.x_final);
        rep.x_max.col(K) = rep.x_max.col(K).cwiseMax(tr.x_final);
    }
    rep.feasibility_rate =
        rep.total_steps > 0 ? 1.0 - static_cast<double>(rep.infeasible_steps) / rep.total_steps : 1.0;
    return rep;
}

} // namespace tmpc
