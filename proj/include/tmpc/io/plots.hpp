#pragma once

#include <string>
#include <vector>

#include "../model.hpp"
#include "../sim.hpp"
#include "svg.hpp"

namespace tmpc::io {

namespace detail {

inline std::vector<double> times(const Trace& tr)
{
    std::vector<double> t;
    for (const auto& s : tr.steps) t.push_back(s.t_min);
    return t;
}

inline std::vector<double> column(const Trace& tr, Vec StepRecord::*field, Eigen::Index i)
{
    std::vector<double> v;
    for (const auto& s : tr.steps) v.push_back(i < (s.*field).size() ? (s.*field)[i] : NAN);
    return v;
}

inline void add_bounds(LineChart& c, const Hyperbox& box, Eigen::Index i)
{
    c.hlines.push_back({box.lower()[i], "bound", "#d62728"});
    c.hlines.push_back({box.upper()[i], "", "#d62728"});
}

} // namespace detail

/// One panel per state, with the requested output step overlaid on the
/// states that are outputs (output i is state i for the four-tank plant).
inline std::vector<LineChart> states_figure(const Trace& tr, const PlantModel& model)
{
    std::vector<LineChart> out;
    const auto t = detail::times(tr);
    for (Eigen::Index i = 0; i < model.n; ++i) {
        LineChart c;
        c.title = "x" + std::to_string(i + 1);
        c.x_label = "t [min]";
        c.y_label = "x" + std::to_string(i + 1);
        c.series.push_back({"x" + std::to_string(i + 1), t, detail::column(tr, &StepRecord::x, i), "#1f77b4"});
        if (i < model.p) {
            c.series.push_back({"y_t", t, detail::column(tr, &StepRecord::y_t, i), "#2ca02c", true, true});
            c.series.push_back({"y_s", t, detail::column(tr, &StepRecord::y_s, i), "#ff7f0e", true, false, 1.0});
        }
        detail::add_bounds(c, model.state_box, i);
        out.push_back(std::move(c));
    }
    return out;
}

inline std::vector<LineChart> inputs_figure(const Trace& tr, const PlantModel& model)
{
    std::vector<LineChart> out;
    const auto t = detail::times(tr);
    for (Eigen::Index i = 0; i < model.m; ++i) {
        LineChart c;
        c.title = "u" + std::to_string(i + 1);
        c.x_label = "t [min]";
        c.y_label = "u" + std::to_string(i + 1);
        c.series.push_back({"u" + std::to_string(i + 1), t, detail::column(tr, &StepRecord::u, i), "#1f77b4", false, true});
        detail::add_bounds(c, model.input_box, i);
        out.push_back(std::move(c));
    }
    return out;
}

/// Min/max band over all scenarios of a batch, states then inputs.
inline std::vector<LineChart> envelope_figure(const BatchReport& rep, const Scenario& sc, const PlantModel& model)
{
    std::vector<LineChart> out;
    const auto band_chart = [&](const std::string& name, const Mat& lo, const Mat& hi, const Hyperbox& box,
                                Eigen::Index i) {
        LineChart c;
        c.title = name + " envelope over " + std::to_string(rep.traces.size()) + " scenarios";
        c.x_label = "t [min]";
        c.y_label = name;
        Band b;
        Series smin{"min", {}, {}, "#1f77b4", false, false, 0.8}, smax{"max", {}, {}, "#1f77b4", false, false, 0.8};
        for (Eigen::Index k = 0; k < lo.cols(); ++k) {
            const double t = static_cast<double>(k) * sc.sample_min;
            b.x.push_back(t);
            b.lo.push_back(lo(i, k));
            b.hi.push_back(hi(i, k));
            smin.x.push_back(t);
            smin.y.push_back(lo(i, k));
            smax.x.push_back(t);
            smax.y.push_back(hi(i, k));
        }
        c.bands.push_back(std::move(b));
        smax.label = "";
        c.series.push_back(std::move(smin));
        c.series.push_back(std::move(smax));
        if (i < model.p && name[0] == 'x') {
            Series yt{"y_t", {}, {}, "#2ca02c", true, true};
            for (Eigen::Index k = 0; k < lo.cols(); ++k) {
                const int kk = static_cast<int>(std::min<Eigen::Index>(k, sc.steps() - 1));
                yt.x.push_back(static_cast<double>(k) * sc.sample_min);
                yt.y.push_back(sc.schedule[sc.segment_at(kk)].y_t[i]);
            }
            c.series.push_back(std::move(yt));
        }
        detail::add_bounds(c, box, i);
        out.push_back(std::move(c));
    };
    for (Eigen::Index i = 0; i < model.n; ++i)
        band_chart("x" + std::to_string(i + 1), rep.x_min, rep.x_max, model.state_box, i);
    for (Eigen::Index i = 0; i < model.m; ++i)
        band_chart("u" + std::to_string(i + 1), rep.u_min, rep.u_max, model.input_box, i);
    return out;
}

} // namespace tmpc::io
