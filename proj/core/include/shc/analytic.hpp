#pragma once

// Closed-form controller for orthogonal stacks with orthogonal embedding
// subspaces, and the multi-channel PID controller built on the same gains.

#include "shc/dynamics.hpp"
#include "shc/manifolds.hpp"

#include <array>
#include <optional>
#include <vector>

namespace shc::analytic {

/// λ_T = 0, λ_t = c(1+λ_{t+1}) / (1+λ_{t+1}+c), α_t = c / (1+λ_{t+1}+c).
struct LambdaSchedule {
    double c = 0.0;
    std::vector<double> lambdas;  // λ_0..λ_T
    std::vector<double> alphas;   // α_0..α_{T-1}

    Index horizon() const { return static_cast<Index>(alphas.size()); }
};

LambdaSchedule lambda_schedule(double c, Index horizon);

/// α_t from λ_{t+1}; shared by the schedule and its deserializer.
inline double alpha_from(double c, double lambda_next) { return c / (1.0 + lambda_next + c); }

/// Embedding bases V_0..V_{T-1} (or V_0..V_T) plus the λ/α schedule. The gain
/// is K_t = (1 − α_t)(I − V_tV_tᵀ) and the feedback is π_t(x) = −K_t x.
struct GainSchedule {
    std::vector<Matrix> bases;
    LambdaSchedule schedule;

    /// Throws unless bases cover every layer of the schedule.
    void validate() const;
    /// Explicit K_t, for checks only; feedback never materializes it.
    Matrix gain_matrix(Index t) const;
};

/// π(x) = −(1 − α)(x − V(Vᵀx)).
Vector analytic_feedback(const Vector& x, const Matrix& v, double alpha);

/// ½λ(I − VVᵀ), the value matrix of the orthogonal case.
Matrix closed_form_p(const Matrix& v, double lambda);

class AnalyticController final : public dynamics::Controller {
public:
    explicit AnalyticController(GainSchedule gains);
    Vector control(Index t, std::span<const Vector> history) const override;
    const GainSchedule& gains() const { return gains_; }

private:
    GainSchedule gains_;
};

/// Pushes batches of column states through the stack under the analytic
/// controller. The state is carried stacked as [X_t; V_tᵀX_t] and each layer
/// is a single product with the precomputed operator
///   A_t = [α_tθ_t, (1−α_t)θ_tV_t],  op_t = [A_t; V_{t+1}ᵀA_t],
/// so the coefficients for the next layer come out of the same product.
class BatchForward {
public:
    BatchForward(const dynamics::LinearStack& stack, const GainSchedule& gains);

    Index horizon() const { return static_cast<Index>(ops_.size()); }
    Index dim() const { return dim_; }

    /// Runs all layers; `states` (d x N) is replaced by the terminal states.
    void run(Matrix& states);

private:
    Index dim_ = 0;
    std::vector<Matrix> ops_;    // (d + r_{t+1}) x (d + r_t), no extra rows at the last layer
    std::vector<Matrix> bases_;  // V_t
    Matrix cur_, next_;  // stacked [X; VᵀX] work buffers
};

struct PidGains {
    double kp = 0.5;
    double ki = 0.0;
    double kd = 0.5;
};

/// Channel bases; any channel may be left out.
struct ChannelBases {
    const manifolds::EmbeddingBasis* p = nullptr;
    const manifolds::EmbeddingBasis* i = nullptr;
    const manifolds::EmbeddingBasis* d = nullptr;
};

/// π_t = −(1−α_t)[K_p R^P(x_t) + K_i R^I(x_t + Σ_{s<t}x_s) + K_d R^D(x_t − x_{t−1})]
/// with R(v) = v − V(Vᵀv). A missing channel or zero gain contributes
/// nothing; the D term is skipped at t = 0.
Vector practical_feedback(std::span<const Vector> history, const ChannelBases& bases, const PidGains& gains,
                          double alpha);

class PracticalController final : public dynamics::Controller {
public:
    PracticalController(ChannelBases bases, PidGains gains, LambdaSchedule schedule);
    Vector control(Index t, std::span<const Vector> history) const override;

private:
    ChannelBases bases_;
    PidGains gains_;
    LambdaSchedule schedule_;
};

}  // namespace shc::analytic
