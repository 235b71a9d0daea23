#pragma once

// Exact error theory of the analytic controller on orthogonal stacks.

#include "shc/analytic.hpp"
#include "shc/dynamics.hpp"

#include <vector>

namespace shc::analysis {

struct PerturbationSplit {
    Vector parallel;
    Vector perpendicular;
    double parallel_norm = 0.0;
    double perpendicular_norm = 0.0;
};

/// z∥ = V₀V₀ᵀz, z⊥ = z − z∥.
PerturbationSplit decompose_perturbation(const Vector& z, const Matrix& v0);

/// Π_{s<t} α_s² ‖z⊥‖² + ‖z∥‖² for 1 <= t <= T.
double predict_error(const analytic::LambdaSchedule& sched, const PerturbationSplit& split, Index t);

/// predict_error for t = 1..T.
std::vector<double> predict_errors(const analytic::LambdaSchedule& sched, const PerturbationSplit& split);

/// ‖x̄_t − x_t‖² for t = 1..T, where x̄ starts at x0 + z under the analytic
/// controller and x starts at x0 without control.
std::vector<double> empirical_error(const dynamics::LinearStack& stack, const analytic::GainSchedule& gains,
                                    const Vector& x0, const Vector& z);

/// Max deviations of the four gain/projection identities behind the error
/// formula, each a max-entry difference between both sides.
struct LemmaReport {
    double gain_identity = 0.0;          // I − K_t = α_t I + (1−α_t) P_t
    double transported_idempotence = 0.0;  // (P_t^s)² = P_t^s
    double transported_endpoint = 0.0;     // P_t^t = P_0
    double difference_product = 0.0;       // x̄_t − x_t = (θ_{t−1}···θ_0)(G_{t−1}^{t−1}···G_0^0) z
    double collapsed_product = 0.0;        // F_t = Πα·I + (1 − Πα) P_0

    double worst() const;
};

/// Requires an orthogonal stack whose bases satisfy V_{t+1} = θ_t V_t.
LemmaReport verify_lemmas(const dynamics::LinearStack& stack, const analytic::GainSchedule& gains);

/// One row of the orthogonality-deviation study.
struct GapRow {
    Index t = 0;
    double predicted = 0.0;
    double empirical = 0.0;
    double gap = 0.0;
};

/// Runs the analytic controller on θ_t + εE_t (columns re-normalized, so the
/// layers stop being orthogonal) with bases propagated by the perturbed
/// layers and records |empirical − predicted| per layer.
std::vector<GapRow> orthogonality_gap_study(Index dim, Index rank, Index horizon, double c, double epsilon,
                                            std::uint64_t seed);

}  // namespace shc::analysis
