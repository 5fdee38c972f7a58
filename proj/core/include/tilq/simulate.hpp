#pragma once

#include "tilq/meanvar.hpp"
#include "tilq/model.hpp"
#include "tilq/riccati.hpp"
#include "tilq/time_grid.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace tilq {

/// Control and noise dimensions handled by the path simulators.
inline constexpr int kMaxDim = 8;
using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using SmallMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

/// Coefficients of one time step [t_i, t_{i+1}], frozen at the left node
/// except for the exact linear growth factor exp(int A).
struct StepCoefficients {
    double dt = 0.0;
    double growth = 1.0;
    SmallVec B;
    SmallVec C;
    SmallMat D;
    double b = 0.0;
    SmallVec sigma;
    double Q_left = 0.0;
    double Q_right = 0.0;
    SmallMat R;
    // exact OU transition of the premium factor over the step
    double factor_decay = 1.0;
    double factor_spread = 0.0;
};

/// Scalar controlled state dX = [A X + B'u + b] ds + [C X + D u + sigma]'dW
/// with the quadratic cost weights. Built from either an LQ problem or a
/// mean-variance market (A = r, B = theta, D = I, G = h = 1).
class ControlledSystem {
public:
    static ControlledSystem from_problem(const ProblemSpec& spec);
    static ControlledSystem from_market(const MarketSpec& market);

    const TimeGrid& grid() const { return grid_; }
    int control_dim() const { return l_; }
    int noise_dim() const { return d_; }
    const StepCoefficients& step(std::size_t i) const { return steps_[i]; }

    bool factor_driven() const { return factor_.has_value(); }
    const OUFactorPremium& factor() const { return *factor_; }

    /// Drift loading of the control on step i (theta(y) when factor driven).
    void loading(std::size_t i, double y, SmallVec& out) const;
    /// One exact OU step of the factor given the Brownian increment vector.
    double advance_factor(std::size_t i, double y, const double* dW) const;

    double G = 1.0;
    double h = 1.0;
    double mu1 = 0.0;
    double mu2 = 0.0;
    double x0 = 1.0;
    double y0 = 0.0;

private:
    TimeGrid grid_;
    int l_ = 1;
    int d_ = 1;
    std::vector<StepCoefficients> steps_;
    std::optional<OUFactorPremium> factor_;
};

/// u = alpha_i(y) X + beta_i(y) on grid step i.
class AffineFeedback {
public:
    AffineFeedback() = default;

    static AffineFeedback from_lq(const EquilibriumPolicy& policy);
    static AffineFeedback from_mv(const MVPolicy& policy);
    static AffineFeedback constant(const TimeGrid& grid, const Eigen::VectorXd& u);
    static AffineFeedback linear(const TimeGrid& grid, const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta);

    /// alpha scaled by `factor`, beta unchanged.
    AffineFeedback detuned(double factor) const;

    bool factor_dependent() const { return static_cast<bool>(mv_); }
    int dim() const { return dim_; }
    double detune() const { return detune_; }
    void eval(std::size_t i, double y, SmallVec& alpha, SmallVec& beta) const;

private:
    int dim_ = 1;
    double detune_ = 1.0;
    std::vector<SmallVec> alpha_;
    std::vector<SmallVec> beta_;
    std::shared_ptr<const MVPolicy> mv_;
};

/// How the base control is continued after a spike on a perturbed path.
enum class SpikeMode {
    replay,    // open-loop u* recorded on the base path, replayed verbatim
    feedback,  // alpha X + beta re-evaluated on the perturbed state
};

/// Grid-aligned spike: v added on steps [begin, end).
struct Spike {
    std::size_t begin = 0;
    std::size_t end = 0;
    SmallVec v;
};

struct ControlLaw {
    AffineFeedback feedback;
    std::vector<Spike> spikes;
    SpikeMode mode = SpikeMode::replay;
};

/// u^{t,eps,v} = u* + v 1_[t, t+eps). t snaps to the nearest node and eps to
/// a whole number of steps (at least one unless eps == 0). Throws
/// std::invalid_argument if t + eps > T.
ControlLaw spike_control(const ControlLaw& base, const TimeGrid& grid, double t, double epsilon,
                         const Eigen::VectorXd& v);

struct SimOptions {
    std::size_t paths = 1000;
    std::uint64_t seed = 1;
    bool antithetic = false;
    std::size_t start_index = 0;          // restart node
    std::optional<double> start_state;    // defaults to x0
    std::optional<double> start_factor;   // defaults to y0
    bool record_controls = false;
    bool record_increments = false;
};

/// Simulated paths. Column j of X is node start_index + j.
struct PathBundle {
    TimeGrid grid;
    std::size_t start_index = 0;
    Eigen::MatrixXd X;                       // paths x nodes
    Eigen::MatrixXd Y;                       // factor, empty when not factor driven
    std::vector<Eigen::MatrixXd> controls;   // per step: paths x l (if recorded)
    std::vector<Eigen::MatrixXd> increments; // per step: paths x d (if recorded)
    Eigen::VectorXd running_cost;            // int (Q X^2 + u'R u) per path
    std::uint64_t seed = 0;

    std::size_t paths() const { return static_cast<std::size_t>(X.rows()); }
    double start_state() const { return X(0, 0); }
    Eigen::VectorXd terminal() const { return X.col(X.cols() - 1); }
};

/// Exponential-integrator Euler scheme for the controlled state. Throws
/// NumericalError with the step index on a non-finite state.
PathBundle simulate_state(const ControlledSystem& system, const ControlLaw& law, const SimOptions& options);

/// Same scheme driven by caller-supplied increments (one length-d vector per
/// step from start_index), single path.
std::vector<double> simulate_path(const ControlledSystem& system, const ControlLaw& law,
                                  const std::vector<Eigen::VectorXd>& increments, std::size_t start_index,
                                  double start_state);

struct CostEstimate {
    double value = 0.0;
    double ci = 0.0;           // 99% half-width
    double mean_terminal = 0.0;
    double var_terminal = 0.0;
    std::size_t paths = 0;
};

/// 99% two-sided normal quantile.
inline constexpr double kZ99 = 2.5758293035489004;

/// J(t, x_t; u) from a bundle restarted at (t, x_t). The squared mean uses
/// m^2 - s^2/N, and the CI comes from the delta method. Needs >= 100 paths.
CostEstimate estimate_cost(const PathBundle& bundle, const ControlledSystem& system);

}  // namespace tilq
