#include "tilq/time_grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tilq {

TimeGrid TimeGrid::uniform(double horizon, std::size_t steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw std::invalid_argument("TimeGrid: horizon must be positive and finite");
    }
    if (steps == 0) throw std::invalid_argument("TimeGrid: steps must be positive");
    std::vector<double> nodes(steps + 1);
    const double h = horizon / static_cast<double>(steps);
    for (std::size_t i = 0; i <= steps; ++i) nodes[i] = h * static_cast<double>(i);
    nodes.front() = 0.0;
    nodes.back() = horizon;
    return TimeGrid(std::move(nodes));
}

TimeGrid TimeGrid::from_nodes(std::vector<double> nodes) {
    if (nodes.size() < 2) throw std::invalid_argument("TimeGrid: need at least two nodes");
    if (nodes.front() != 0.0) throw std::invalid_argument("TimeGrid: first node must be 0");
    for (std::size_t i = 1; i < nodes.size(); ++i) {
        if (!(nodes[i] > nodes[i - 1]) || !std::isfinite(nodes[i])) {
            throw std::invalid_argument("TimeGrid: nodes must be strictly increasing and finite");
        }
    }
    return TimeGrid(std::move(nodes));
}

TimeGrid TimeGrid::with_breakpoints(std::span<const double> times) const {
    const double T = horizon();
    const double tol = 1e-12 * T;
    std::vector<double> merged(nodes_.begin(), nodes_.end());
    for (double t : times) {
        if (t < -tol || t > T + tol) {
            throw std::invalid_argument("TimeGrid: breakpoint " + std::to_string(t) + " outside [0, T]");
        }
        const auto it = std::lower_bound(merged.begin(), merged.end(), t);
        const bool near_next = it != merged.end() && std::abs(*it - t) <= tol;
        const bool near_prev = it != merged.begin() && std::abs(*(it - 1) - t) <= tol;
        if (!near_next && !near_prev) merged.insert(it, t);
    }
    return TimeGrid(std::move(merged));
}

TimeGrid TimeGrid::refined(std::size_t factor) const {
    if (factor == 0) throw std::invalid_argument("TimeGrid: refinement factor must be positive");
    std::vector<double> nodes;
    nodes.reserve(steps() * factor + 1);
    for (std::size_t i = 0; i < steps(); ++i) {
        const double a = nodes_[i];
        const double h = dt(i) / static_cast<double>(factor);
        for (std::size_t k = 0; k < factor; ++k) nodes.push_back(a + h * static_cast<double>(k));
    }
    nodes.push_back(horizon());
    return TimeGrid(std::move(nodes));
}

bool TimeGrid::is_uniform(double rel_tol) const {
    if (steps() == 0) return true;
    const double h0 = dt(0);
    for (std::size_t i = 1; i < steps(); ++i) {
        if (std::abs(dt(i) - h0) > rel_tol * h0) return false;
    }
    return true;
}

std::size_t TimeGrid::index_of(double t) const {
    const std::size_t i = nearest_index(t);
    if (std::abs(nodes_[i] - t) > 1e-9 * std::max(1.0, horizon())) {
        throw std::invalid_argument("TimeGrid: time " + std::to_string(t) + " is not a grid node");
    }
    return i;
}

std::size_t TimeGrid::nearest_index(double t) const {
    const auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t);
    if (it == nodes_.begin()) return 0;
    if (it == nodes_.end()) return nodes_.size() - 1;
    const auto i = static_cast<std::size_t>(it - nodes_.begin());
    return (t - nodes_[i - 1] <= nodes_[i] - t) ? i - 1 : i;
}

std::size_t TimeGrid::interval_of(double t) const {
    const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
    std::size_t i = it == nodes_.begin() ? 0 : static_cast<std::size_t>(it - nodes_.begin()) - 1;
    return std::min(i, steps() - 1);
}

}  // namespace tilq
