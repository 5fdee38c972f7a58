#pragma once

#include "tilq/errors.hpp"
#include "tilq/random.hpp"
#include "tilq/simulate.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace tilq::detail {

/// Per-path scratch: factor values, control loadings and feedback
/// coefficients along the path, plus the recorded base control.
struct PathWorkspace {
    std::vector<double> y;
    std::vector<SmallVec> load;
    std::vector<SmallVec> alpha;
    std::vector<SmallVec> beta;
    std::vector<SmallVec> ustar;
};

/// dW holds (steps - start) rows of d increments, row-major.
inline void prepare_path(const ControlledSystem& sys, const AffineFeedback& fb, std::size_t start, double y_start,
                         const double* dW, PathWorkspace& ws) {
    const std::size_t n = sys.grid().steps();
    const int d = sys.noise_dim();
    ws.y.resize(n + 1);
    ws.load.resize(n);
    ws.alpha.resize(n);
    ws.beta.resize(n);
    ws.ustar.resize(n);
    ws.y[start] = y_start;
    for (std::size_t i = start; i < n; ++i) {
        sys.loading(i, ws.y[i], ws.load[i]);
        fb.eval(i, ws.y[i], ws.alpha[i], ws.beta[i]);
        if (sys.factor_driven()) {
            ws.y[i + 1] = sys.advance_factor(i, ws.y[i], dW + (i - start) * static_cast<std::size_t>(d));
        } else {
            ws.y[i + 1] = ws.y[i];
        }
    }
}

inline double step_state(const StepCoefficients& c, const SmallVec& load, double x, const SmallVec& u, const double* dW,
                         int d) {
    double diffusion = 0.0;
    for (int q = 0; q < d; ++q) {
        double vol = c.C[q] * x + c.sigma[q];
        for (int k = 0; k < u.size(); ++k) vol += c.D(q, k) * u[k];
        diffusion += vol * dW[q];
    }
    return c.growth * x + (load.dot(u) + c.b) * c.dt + diffusion;
}

inline double control_cost(const StepCoefficients& c, const SmallVec& u) {
    double acc = 0.0;
    for (int a = 0; a < u.size(); ++a) {
        for (int b = 0; b < u.size(); ++b) acc += u[a] * c.R(a, b) * u[b];
    }
    return acc;
}

inline void check_finite(double x, std::size_t i) {
    if (!std::isfinite(x)) throw NumericalError("non-finite state at step " + std::to_string(i));
}

struct PathResult {
    double terminal = 0.0;
    double running = 0.0;
};

/// Base path under the feedback; records u* into ws.ustar and, if given,
/// states (nodes start..n) and controls.
inline PathResult run_base(const ControlledSystem& sys, PathWorkspace& ws, std::size_t start, double x,
                           const double* dW, double* states = nullptr) {
    const std::size_t n = sys.grid().steps();
    const int d = sys.noise_dim();
    PathResult r;
    if (states) states[0] = x;
    for (std::size_t i = start; i < n; ++i) {
        const StepCoefficients& c = sys.step(i);
        SmallVec& u = ws.ustar[i];
        u = ws.alpha[i] * x + ws.beta[i];
        const double next = step_state(c, ws.load[i], x, u, dW + (i - start) * static_cast<std::size_t>(d), d);
        check_finite(next, i);
        r.running += 0.5 * (c.Q_left * x * x + c.Q_right * next * next) * c.dt + control_cost(c, u) * c.dt;
        x = next;
        if (states) states[i + 1 - start] = x;
    }
    r.terminal = x;
    return r;
}

/// Perturbed path: v added on [begin, end); outside the window the control is
/// the recorded u* (replay) or the feedback on the perturbed state.
inline PathResult run_perturbed(const ControlledSystem& sys, const PathWorkspace& ws, std::size_t start, double x,
                                const double* dW, const std::vector<Spike>& spikes, SpikeMode mode,
                                double* states = nullptr, SmallVec* controls = nullptr) {
    const std::size_t n = sys.grid().steps();
    const int d = sys.noise_dim();
    PathResult r;
    if (states) states[0] = x;
    SmallVec u;
    for (std::size_t i = start; i < n; ++i) {
        const StepCoefficients& c = sys.step(i);
        if (mode == SpikeMode::replay) {
            u = ws.ustar[i];
        } else {
            u = ws.alpha[i] * x + ws.beta[i];
        }
        for (const Spike& s : spikes) {
            if (i >= s.begin && i < s.end) u += s.v;
        }
        if (controls) controls[i - start] = u;
        const double next = step_state(c, ws.load[i], x, u, dW + (i - start) * static_cast<std::size_t>(d), d);
        check_finite(next, i);
        r.running += 0.5 * (c.Q_left * x * x + c.Q_right * next * next) * c.dt + control_cost(c, u) * c.dt;
        x = next;
        if (states) states[i + 1 - start] = x;
    }
    r.terminal = x;
    return r;
}

/// Normals for one path pair: `count` standard normals scaled per step by sqrt(dt).
inline void draw_increments(std::mt19937_64& engine, const TimeGrid& grid, std::size_t start, int d,
                            std::vector<double>& out) {
    const std::size_t n = grid.steps();
    out.resize((n - start) * static_cast<std::size_t>(d));
    fill_normals(engine, out);
    for (std::size_t i = start; i < n; ++i) {
        const double s = std::sqrt(grid.dt(i));
        for (int q = 0; q < d; ++q) out[(i - start) * static_cast<std::size_t>(d) + static_cast<std::size_t>(q)] *= s;
    }
}

}  // namespace tilq::detail
