#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "errors.hpp"

namespace tmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Axis-aligned interval vector. Used for constraint boxes, the disturbance
/// set and the tube cross-sections.
class Hyperbox {
public:
    Hyperbox() = default;

    Hyperbox(Vec lower, Vec upper) : lower_(std::move(lower)), upper_(std::move(upper))
    {
        if (lower_.size() != upper_.size())
            throw DimensionError("Hyperbox: bound vectors differ in length");
        for (Eigen::Index i = 0; i < lower_.size(); ++i)
            if (!(lower_[i] <= upper_[i]))
                throw DomainError("Hyperbox: lower bound exceeds upper bound at index " +
                                  std::to_string(i));
    }

    /// Box {x : |x_i| <= half_width_i}.
    static Hyperbox symmetric(const Vec& half_width) { return {-half_width, half_width}; }

    static Hyperbox origin(Eigen::Index dim) { return symmetric(Vec::Zero(dim)); }

    Eigen::Index dim() const { return lower_.size(); }
    const Vec& lower() const { return lower_; }
    const Vec& upper() const { return upper_; }
    Vec center() const { return 0.5 * (lower_ + upper_); }
    Vec half_width() const { return 0.5 * (upper_ - lower_); }

    bool contains(const Vec& x, double tol = 0.0) const
    {
        if (x.size() != dim()) return false;
        for (Eigen::Index i = 0; i < dim(); ++i)
            if (x[i] < lower_[i] - tol || x[i] > upper_[i] + tol) return false;
        return true;
    }

    bool contains(const Hyperbox& other) const
    {
        return other.dim() == dim() && (other.lower_.array() >= lower_.array()).all() &&
               (other.upper_.array() <= upper_.array()).all();
    }

    /// Smallest signed distance to a face; negative when x is outside.
    double min_slack(const Vec& x) const
    {
        double s = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < dim(); ++i)
            s = std::min({s, x[i] - lower_[i], upper_[i] - x[i]});
        return s;
    }

    Vec clamp(const Vec& x) const { return x.cwiseMax(lower_).cwiseMin(upper_); }

    /// Minkowski sum.
    Hyperbox operator+(const Hyperbox& other) const
    {
        check_dim(other);
        return {lower_ + other.lower_, upper_ + other.upper_};
    }

    /// Pontryagin difference {x : x + other ⊆ *this}. Throws when empty.
    Hyperbox operator-(const Hyperbox& other) const
    {
        check_dim(other);
        return {lower_ - other.lower_, upper_ - other.upper_};
    }

    /// Shrinks every face inward by margin[i]; margin must be nonnegative.
    Hyperbox shrink(const Vec& margin) const { return *this - symmetric(margin); }

    /// Pontryagin difference that reports emptiness instead of throwing.
    bool shrink_is_empty(const Vec& margin) const
    {
        return ((lower_ + margin).array() > (upper_ - margin).array()).any();
    }

    bool operator==(const Hyperbox& other) const
    {
        return lower_ == other.lower_ && upper_ == other.upper_;
    }

private:
    void check_dim(const Hyperbox& other) const
    {
        if (other.dim() != dim()) throw DimensionError("Hyperbox: dimension mismatch");
    }

    Vec lower_;
    Vec upper_;
};

} // namespace tmpc
