#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tilq {

/// Deterministic coefficient on [0, T]: either a constant or a piecewise-linear
/// interpolant through breakpoints that cover [0, T]. Evaluation outside the
/// covered interval is an error; there is no extrapolation.
template <class Value>
class CoefficientPath {
public:
    CoefficientPath() = default;

    static CoefficientPath constant(Value value, double horizon) {
        if (!(horizon > 0.0)) throw std::invalid_argument("CoefficientPath: horizon must be positive");
        CoefficientPath p;
        p.times_ = {0.0, horizon};
        p.values_ = {value, value};
        p.constant_ = true;
        return p;
    }

    static CoefficientPath piecewise(std::vector<double> times, std::vector<Value> values) {
        if (times.size() != values.size() || times.size() < 2) {
            throw std::invalid_argument("CoefficientPath: need >= 2 breakpoints with matching values");
        }
        if (times.front() != 0.0) {
            throw std::invalid_argument("CoefficientPath: breakpoints must start at t = 0");
        }
        for (std::size_t i = 1; i < times.size(); ++i) {
            if (!(times[i] > times[i - 1])) {
                throw std::invalid_argument("CoefficientPath: breakpoint times must be strictly increasing");
            }
        }
        CoefficientPath p;
        p.times_ = std::move(times);
        p.values_ = std::move(values);
        return p;
    }

    bool is_constant() const { return constant_; }
    double start() const { return times_.front(); }
    double end() const { return times_.back(); }
    const std::vector<double>& breakpoints() const { return times_; }
    const std::vector<Value>& values() const { return values_; }

    /// Exact at breakpoints, linear in between.
    Value operator()(double t) const {
        if (values_.empty()) throw std::logic_error("CoefficientPath: evaluated before initialisation");
        const double tol = 1e-12 * std::max(1.0, end());
        if (t < start() - tol || t > end() + tol) {
            throw std::out_of_range("CoefficientPath: t = " + std::to_string(t) + " outside [" +
                                    std::to_string(start()) + ", " + std::to_string(end()) + "]");
        }
        if (constant_) return values_.front();
        t = std::clamp(t, start(), end());
        const auto it = std::upper_bound(times_.begin(), times_.end(), t);
        if (it == times_.end()) return values_.back();
        const auto i = static_cast<std::size_t>(it - times_.begin());
        const double t0 = times_[i - 1];
        if (t == t0) return values_[i - 1];
        const double w = (t - t0) / (times_[i] - t0);
        Value v = values_[i - 1] + w * (values_[i] - values_[i - 1]);
        return v;
    }

private:
    std::vector<double> times_;
    std::vector<Value> values_;
    bool constant_ = false;
};

using ScalarPath = CoefficientPath<double>;
using VectorPath = CoefficientPath<Eigen::VectorXd>;
using MatrixPath = CoefficientPath<Eigen::MatrixXd>;

}  // namespace tilq
