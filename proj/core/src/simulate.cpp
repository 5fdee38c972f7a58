#include "tilq/simulate.hpp"

#include "path_kernel.hpp"
#include "tilq/errors.hpp"
#include "tilq/parallel.hpp"
#include "tilq/random.hpp"

#include <cmath>
#include <stdexcept>

namespace tilq {

ControlLaw spike_control(const ControlLaw& base, const TimeGrid& grid, double t, double epsilon,
                         const Eigen::VectorXd& v) {
    if (base.feedback.dim() != v.size()) throw std::invalid_argument("spike_control: direction has wrong dimension");
    if (!(epsilon >= 0.0)) throw std::invalid_argument("spike_control: epsilon must be non-negative");
    const double T = grid.horizon();
    if (t < 0.0 || t + epsilon > T * (1.0 + 1e-12)) throw std::invalid_argument("spike_control: t + epsilon > T");
    Spike s;
    s.begin = grid.nearest_index(t);
    s.end = epsilon == 0.0 ? s.begin : grid.nearest_index(grid[s.begin] + epsilon);
    if (epsilon > 0.0 && s.end == s.begin) s.end = s.begin + 1;
    if (s.end > grid.steps()) throw std::invalid_argument("spike_control: window runs past T");
    s.v = v;
    ControlLaw law = base;
    law.spikes.push_back(std::move(s));
    return law;
}

PathBundle simulate_state(const ControlledSystem& system, const ControlLaw& law, const SimOptions& options) {
    const TimeGrid& grid = system.grid();
    const std::size_t n = grid.steps();
    const std::size_t start = options.start_index;
    if (start > n) throw std::invalid_argument("simulate_state: start index past the horizon");
    if (options.paths == 0) throw ConfigError("simulate_state: need at least one path");
    if (law.feedback.dim() != system.control_dim()) throw ConfigError("policy dimension does not match the system");
    const int d = system.noise_dim();
    const int l = system.control_dim();
    std::size_t paths = options.paths;
    if (options.antithetic && paths % 2 != 0) ++paths;
    const std::size_t nodes = n - start + 1;
    const double x_start = options.start_state.value_or(system.x0);
    const double y_start = options.start_factor.value_or(system.y0);

    PathBundle bundle;
    bundle.grid = grid;
    bundle.start_index = start;
    bundle.seed = options.seed;
    bundle.X.resize(static_cast<Eigen::Index>(paths), static_cast<Eigen::Index>(nodes));
    bundle.running_cost.resize(static_cast<Eigen::Index>(paths));
    if (system.factor_driven()) bundle.Y.resize(static_cast<Eigen::Index>(paths), static_cast<Eigen::Index>(nodes));
    if (options.record_controls) bundle.controls.assign(n - start, Eigen::MatrixXd(static_cast<Eigen::Index>(paths), l));
    if (options.record_increments) bundle.increments.assign(n - start, Eigen::MatrixXd(static_cast<Eigen::Index>(paths), d));

    const bool perturbed = !law.spikes.empty() || law.mode == SpikeMode::feedback;
    const std::size_t draws = options.antithetic ? paths / 2 : paths;
    parallel_blocks(draws, [&](std::size_t lo, std::size_t hi) {
        detail::PathWorkspace ws;
        std::vector<double> z, dW;
        std::vector<double> states(nodes);
        std::vector<SmallVec> controls(n - start);
        for (std::size_t j = lo; j < hi; ++j) {
            auto engine = make_engine(options.seed, Stream::state, j);
            detail::draw_increments(engine, grid, start, d, z);
            const int copies = options.antithetic ? 2 : 1;
            for (int c = 0; c < copies; ++c) {
                const auto p = static_cast<Eigen::Index>(options.antithetic ? 2 * j + static_cast<std::size_t>(c) : j);
                dW = z;
                if (c == 1) {
                    for (double& w : dW) w = -w;
                }
                detail::prepare_path(system, law.feedback, start, y_start, dW.data(), ws);
                detail::PathResult r = detail::run_base(system, ws, start, x_start, dW.data(), states.data());
                if (options.record_controls) {
                    for (std::size_t i = start; i < n; ++i) controls[i - start] = ws.ustar[i];
                }
                if (perturbed) {
                    r = detail::run_perturbed(system, ws, start, x_start, dW.data(), law.spikes, law.mode, states.data(),
                                              controls.data());
                }
                for (std::size_t k = 0; k < nodes; ++k) bundle.X(p, static_cast<Eigen::Index>(k)) = states[k];
                bundle.running_cost[p] = r.running;
                if (system.factor_driven()) {
                    for (std::size_t k = 0; k < nodes; ++k) bundle.Y(p, static_cast<Eigen::Index>(k)) = ws.y[start + k];
                }
                if (options.record_controls) {
                    for (std::size_t i = 0; i < n - start; ++i) bundle.controls[i].row(p) = controls[i].transpose();
                }
                if (options.record_increments) {
                    for (std::size_t i = 0; i < n - start; ++i) {
                        for (int q = 0; q < d; ++q) {
                            bundle.increments[i](p, q) = dW[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(q)];
                        }
                    }
                }
            }
        }
    });
    return bundle;
}

std::vector<double> simulate_path(const ControlledSystem& system, const ControlLaw& law,
                                  const std::vector<Eigen::VectorXd>& increments, std::size_t start_index,
                                  double start_state) {
    const std::size_t n = system.grid().steps();
    const int d = system.noise_dim();
    if (increments.size() != n - start_index) throw std::invalid_argument("simulate_path: one increment per step");
    std::vector<double> dW;
    dW.reserve(increments.size() * static_cast<std::size_t>(d));
    for (const auto& w : increments) {
        if (w.size() != d) throw std::invalid_argument("simulate_path: increment has wrong dimension");
        dW.insert(dW.end(), w.data(), w.data() + d);
    }
    detail::PathWorkspace ws;
    std::vector<double> states(n - start_index + 1);
    detail::prepare_path(system, law.feedback, start_index, system.y0, dW.data(), ws);
    detail::run_base(system, ws, start_index, start_state, dW.data(), states.data());
    if (!law.spikes.empty() || law.mode == SpikeMode::feedback) {
        detail::run_perturbed(system, ws, start_index, start_state, dW.data(), law.spikes, law.mode, states.data());
    }
    return states;
}

CostEstimate estimate_cost(const PathBundle& bundle, const ControlledSystem& system) {
    const std::size_t N = bundle.paths();
    if (N < 100) throw ConfigError("estimate_cost needs at least 100 paths");
    const Eigen::VectorXd XT = bundle.terminal();
    const double n = static_cast<double>(N);
    const double x_t = bundle.start_state();
    // moments about the first path so identical paths give exactly zero spread
    const Eigen::ArrayXd dx = XT.array() - XT[0];
    const double dm = dx.mean();
    const double m = XT[0] + dm;
    const double s2 = (dx - dm).square().sum() / (n - 1.0);
    const double second = XT.squaredNorm() / n;
    const double run = bundle.running_cost.mean();
    const double weight = system.mu1 * x_t + system.mu2;

    CostEstimate e;
    e.paths = N;
    e.mean_terminal = m;
    e.var_terminal = s2;
    e.value = 0.5 * run + 0.5 * system.G * second - 0.5 * system.h * (m * m - s2 / n) - weight * m;
    Eigen::VectorXd psi(static_cast<Eigen::Index>(N));
    for (Eigen::Index p = 0; p < psi.size(); ++p) {
        const double x = XT[p];
        psi[p] = 0.5 * bundle.running_cost[p] + 0.5 * system.G * x * x - system.h * m * x - weight * x;
    }
    const Eigen::ArrayXd dpsi = psi.array() - psi[0];
    const double var = (dpsi - dpsi.mean()).square().sum() / (n - 1.0);
    e.ci = kZ99 * std::sqrt(var / n);
    return e;
}

}  // namespace tilq
