#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tilq {

/// Discretization of [0, T]. Nodes are strictly increasing with nodes[0] = 0
/// and nodes.back() = T held exactly.
class TimeGrid {
public:
    TimeGrid() = default;

    static TimeGrid uniform(double horizon, std::size_t steps);
    static TimeGrid from_nodes(std::vector<double> nodes);

    /// Union of the current nodes with `times` (each inside [0, T]). Times
    /// closer than 1e-12 * T to an existing node are merged into it.
    TimeGrid with_breakpoints(std::span<const double> times) const;

    /// Every interval split into `factor` equal sub-intervals.
    TimeGrid refined(std::size_t factor) const;

    double horizon() const { return nodes_.empty() ? 0.0 : nodes_.back(); }
    std::size_t steps() const { return nodes_.empty() ? 0 : nodes_.size() - 1; }
    std::size_t size() const { return nodes_.size(); }
    std::span<const double> nodes() const { return nodes_; }
    double operator[](std::size_t i) const { return nodes_[i]; }
    double dt(std::size_t i) const { return nodes_[i + 1] - nodes_[i]; }

    bool is_uniform(double rel_tol = 1e-12) const;

    /// Index of the node equal to t (within 1e-9 * T); throws otherwise.
    std::size_t index_of(double t) const;
    /// Index of the node closest to t.
    std::size_t nearest_index(double t) const;
    /// Largest i with nodes[i] <= t, clamped to [0, steps()-1].
    std::size_t interval_of(double t) const;

private:
    explicit TimeGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {}

    std::vector<double> nodes_;
};

}  // namespace tilq
