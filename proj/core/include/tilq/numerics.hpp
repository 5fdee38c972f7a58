#pragma once

#include "tilq/errors.hpp"
#include "tilq/time_grid.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace tilq::numerics {

/// Simpson's rule on a single interval [a, b] using the midpoint.
inline double simpson(const std::function<double(double)>& f, double a, double b) {
    return (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
}

/// I[i] = integral of f over [t_i, T], accumulated backwards with
/// interval-wise Simpson. I.back() == 0 exactly.
std::vector<double> integral_to_horizon(const TimeGrid& grid, const std::function<double(double)>& f);

/// E[i] = exp(scale * integral of f over [t_i, T]).
std::vector<double> exp_integral_to_horizon(const TimeGrid& grid,
                                            const std::function<double(double)>& f,
                                            double scale = 1.0);

/// t -> exp(scale * integral of f over [t, T]) with exact node values from
/// interval-wise Simpson and a Simpson partial step for off-node t.
class HorizonExponential {
public:
    HorizonExponential() = default;
    HorizonExponential(const TimeGrid& grid, std::function<double(double)> f, double scale = 1.0);

    double operator()(double t) const;
    double node(std::size_t i) const { return exp_values_[i]; }
    const std::vector<double>& node_values() const { return exp_values_; }
    /// integral of f over [t_i, T]
    const std::vector<double>& integrals() const { return integrals_; }

private:
    TimeGrid grid_;
    std::function<double(double)> f_;
    double scale_ = 1.0;
    std::vector<double> integrals_;
    std::vector<double> exp_values_;
};

/// Cubic Hermite value at the midpoint of [t0, t1] from end values/slopes.
inline double hermite_midpoint(double y0, double dy0, double y1, double dy1, double h) {
    return 0.5 * (y0 + y1) + h / 8.0 * (dy0 - dy1);
}

inline bool all_finite(double x) { return std::isfinite(x); }
template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
    return m.allFinite();
}

/// Classical fixed-step RK4 run backwards from the terminal value on the
/// grid. rhs(t, y) returns dy/dt. Output is indexed by grid node and the
/// terminal entry is the terminal value as given.
template <class State, class Rhs>
std::vector<State> rk4_backward(const TimeGrid& grid, const State& terminal, Rhs&& rhs) {
    const std::size_t n = grid.steps();
    std::vector<State> out(n + 1);
    out[n] = terminal;
    for (std::size_t i = n; i-- > 0;) {
        const double t1 = grid[i + 1];
        const double h = -grid.dt(i);
        const State& y = out[i + 1];
        const State k1 = rhs(t1, y);
        const State y2 = y + (0.5 * h) * k1;
        const State k2 = rhs(t1 + 0.5 * h, y2);
        const State y3 = y + (0.5 * h) * k2;
        const State k3 = rhs(t1 + 0.5 * h, y3);
        const State y4 = y + h * k3;
        const State k4 = rhs(grid[i], y4);
        State next = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!all_finite(next)) {
            throw NumericalError("non-finite state in backward integration at node " + std::to_string(i) +
                                 " (t = " + std::to_string(grid[i]) + ")");
        }
        out[i] = std::move(next);
    }
    return out;
}

/// Forward counterpart of rk4_backward, from out[0] = initial.
template <class State, class Rhs>
std::vector<State> rk4_forward(const TimeGrid& grid, const State& initial, Rhs&& rhs) {
    const std::size_t n = grid.steps();
    std::vector<State> out(n + 1);
    out[0] = initial;
    for (std::size_t i = 0; i < n; ++i) {
        const double t0 = grid[i];
        const double h = grid.dt(i);
        const State& y = out[i];
        const State k1 = rhs(t0, y);
        const State k2 = rhs(t0 + 0.5 * h, State(y + (0.5 * h) * k1));
        const State k3 = rhs(t0 + 0.5 * h, State(y + (0.5 * h) * k2));
        const State k4 = rhs(grid[i + 1], State(y + h * k3));
        State next = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!all_finite(next)) {
            throw NumericalError("non-finite state in forward integration at node " + std::to_string(i + 1));
        }
        out[i + 1] = std::move(next);
    }
    return out;
}

double sup_abs_diff(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace tilq::numerics
