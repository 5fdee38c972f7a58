#include "tilq/numerics.hpp"

#include <algorithm>
#include <stdexcept>

namespace tilq::numerics {

std::vector<double> integral_to_horizon(const TimeGrid& grid, const std::function<double(double)>& f) {
    const std::size_t n = grid.steps();
    std::vector<double> out(n + 1, 0.0);
    for (std::size_t i = n; i-- > 0;) out[i] = out[i + 1] + simpson(f, grid[i], grid[i + 1]);
    return out;
}

std::vector<double> exp_integral_to_horizon(const TimeGrid& grid, const std::function<double(double)>& f,
                                            double scale) {
    auto out = integral_to_horizon(grid, f);
    for (double& v : out) v = std::exp(scale * v);
    return out;
}

HorizonExponential::HorizonExponential(const TimeGrid& grid, std::function<double(double)> f, double scale)
    : grid_(grid), f_(std::move(f)), scale_(scale) {
    integrals_ = integral_to_horizon(grid_, f_);
    exp_values_.resize(integrals_.size());
    for (std::size_t i = 0; i < integrals_.size(); ++i) exp_values_[i] = std::exp(scale_ * integrals_[i]);
}

double HorizonExponential::operator()(double t) const {
    const std::size_t i = grid_.interval_of(t);
    if (t == grid_[i]) return exp_values_[i];
    if (t == grid_[i + 1]) return exp_values_[i + 1];
    const double partial = simpson(f_, t, grid_[i + 1]);
    return std::exp(scale_ * (integrals_[i + 1] + partial));
}

double sup_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("sup_abs_diff: size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace tilq::numerics
