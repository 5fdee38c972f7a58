#include "tilq/errors.hpp"
#include "tilq/numerics.hpp"
#include "tilq/simulate.hpp"

#include <cmath>

namespace tilq {

namespace {

void require_dims(int l, int d) {
    if (l < 1 || d < 1 || l > kMaxDim || d > kMaxDim) {
        throw ConfigError("simulation supports control and noise dimensions between 1 and " + std::to_string(kMaxDim));
    }
}

}  // namespace

ControlledSystem ControlledSystem::from_problem(const ProblemSpec& spec) {
    if (spec.state_dim != 1) throw AssumptionViolation("simulation requires state dimension n = 1");
    require_dims(spec.control_dim, spec.noise_dim);
    ControlledSystem s;
    s.grid_ = spec.grid;
    s.l_ = spec.control_dim;
    s.d_ = spec.noise_dim;
    s.G = spec.G;
    s.h = spec.h;
    s.mu1 = spec.mu1;
    s.mu2 = spec.mu2;
    s.x0 = spec.x0;
    const TimeGrid& g = spec.grid;
    for (std::size_t i = 0; i < g.steps(); ++i) {
        const double t = g[i];
        StepCoefficients c;
        c.dt = g.dt(i);
        c.growth = std::exp(numerics::simpson([&](double u) { return spec.A(u); }, t, g[i + 1]));
        c.B = spec.B(t);
        c.C = spec.C(t);
        c.D = spec.D(t);
        c.b = spec.b(t);
        c.sigma = spec.sigma(t);
        c.Q_left = spec.Q(t);
        c.Q_right = spec.Q(g[i + 1]);
        c.R = spec.R(t);
        s.steps_.push_back(std::move(c));
    }
    return s;
}

ControlledSystem ControlledSystem::from_market(const MarketSpec& market) {
    const int d = market.noise_dim;
    require_dims(d, d);
    ControlledSystem s;
    s.grid_ = market.grid;
    s.l_ = d;
    s.d_ = d;
    s.G = 1.0;
    s.h = 1.0;
    s.mu1 = market.mu1;
    s.mu2 = market.mu2;
    s.x0 = market.x0;
    if (!market.deterministic_premium()) {
        s.factor_ = market.factor_model();
        s.y0 = s.factor_->y0;
    }
    const TimeGrid& g = market.grid;
    for (std::size_t i = 0; i < g.steps(); ++i) {
        const double t = g[i];
        StepCoefficients c;
        c.dt = g.dt(i);
        c.growth = std::exp(numerics::simpson([&](double u) { return market.r(u); }, t, g[i + 1]));
        c.B = market.deterministic_premium() ? Eigen::VectorXd(market.theta(t)) : Eigen::VectorXd::Zero(d);
        c.C = SmallVec::Zero(d);
        c.D = SmallMat::Identity(d, d);
        c.sigma = SmallVec::Zero(d);
        c.R = SmallMat::Zero(d, d);
        if (s.factor_) {
            const double kappa = s.factor_->kappa;
            c.factor_decay = std::exp(-kappa * c.dt);
            const double var = kappa > 0.0 ? (1.0 - std::exp(-2.0 * kappa * c.dt)) / (2.0 * kappa) : c.dt;
            c.factor_spread = s.factor_->vol * std::sqrt(var);
        }
        s.steps_.push_back(std::move(c));
    }
    return s;
}

void ControlledSystem::loading(std::size_t i, double y, SmallVec& out) const {
    if (factor_) {
        out = factor_->theta_bar + factor_->loading * y;
    } else {
        out = steps_[i].B;
    }
}

double ControlledSystem::advance_factor(std::size_t i, double y, const double* dW) const {
    const StepCoefficients& c = steps_[i];
    const double z = dW[factor_->factor_component] / std::sqrt(c.dt);
    return factor_->mean + (y - factor_->mean) * c.factor_decay + c.factor_spread * z;
}

// ---------------------------------------------------------------------------

AffineFeedback AffineFeedback::from_lq(const EquilibriumPolicy& policy) {
    AffineFeedback f;
    f.dim_ = policy.alpha.empty() ? 1 : static_cast<int>(policy.alpha.front().size());
    for (std::size_t i = 0; i < policy.alpha.size(); ++i) {
        f.alpha_.emplace_back(policy.alpha[i]);
        f.beta_.emplace_back(policy.beta[i]);
    }
    return f;
}

AffineFeedback AffineFeedback::from_mv(const MVPolicy& policy) {
    AffineFeedback f;
    f.dim_ = policy.noise_dim();
    if (policy.deterministic()) {
        for (std::size_t i = 0; i < policy.grid().size(); ++i) {
            f.alpha_.emplace_back(policy.alpha(i));
            f.beta_.emplace_back(policy.beta(i));
        }
    } else {
        f.mv_ = std::make_shared<const MVPolicy>(policy);
    }
    return f;
}

AffineFeedback AffineFeedback::constant(const TimeGrid& grid, const Eigen::VectorXd& u) {
    return linear(grid, Eigen::VectorXd::Zero(u.size()), u);
}

AffineFeedback AffineFeedback::linear(const TimeGrid& grid, const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta) {
    AffineFeedback f;
    f.dim_ = static_cast<int>(beta.size());
    f.alpha_.assign(grid.size(), SmallVec(alpha));
    f.beta_.assign(grid.size(), SmallVec(beta));
    return f;
}

AffineFeedback AffineFeedback::detuned(double factor) const {
    AffineFeedback f = *this;
    f.detune_ *= factor;
    return f;
}

void AffineFeedback::eval(std::size_t i, double y, SmallVec& alpha, SmallVec& beta) const {
    if (mv_) {
        alpha = mv_->alpha(i, y) * detune_;
        beta = mv_->beta(i, y);
        return;
    }
    alpha = alpha_[i] * detune_;
    beta = beta_[i];
}

}  // namespace tilq
