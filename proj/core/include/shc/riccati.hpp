#pragma once

// General linear-case optimal control: backward Riccati recursion for
// V(x_t) = x_tᵀ P_t x_t and the associated linear feedback.

#include "shc/dynamics.hpp"

#include <vector>

namespace shc::riccati {

/// Symmetric PSD state-cost matrix of one layer.
class QMatrix {
public:
    /// Validates symmetry (1e-12) and PSD (eigenvalues >= -1e-10).
    explicit QMatrix(Matrix q);

    /// Orthogonal projector onto the complement of span of all given column
    /// sets. This is the merged P/I/D cost: eigenvalue 1 off the union of
    /// the channel subspaces and 0 on it.
    static QMatrix complement_of(std::span<const Matrix> bases, Index dim);
    static QMatrix complement_of(const Matrix& basis);

    const Matrix& matrix() const { return q_; }
    Index dim() const { return q_.rows(); }

private:
    Matrix q_;
};

struct RiccatiSchedule {
    std::vector<Matrix> p;  // P_0..P_T, P_T = 0
    double c = 0.0;
    /// Set when some step needed a pseudo-inverse because c = 0 left the
    /// solve singular.
    bool degenerate = false;
};

/// Smallest accepted LDLT pivot, relative to the largest.
inline constexpr double kPivotFloor = 1e-12;

/// Backward recursion from P_T = 0:
///   M = Q_t + 2θᵀP_{t+1}θ
///   P_t = ½Q_t + θᵀP_{t+1}θ − ½ Mᵀ (M + cI)⁻¹ M
/// followed by symmetrization.
RiccatiSchedule riccati_backward(const dynamics::LinearStack& stack, std::span<const QMatrix> qs, double c);

/// π(x) = −(Q + cI + 2θᵀPθ)⁻¹(Q + 2θᵀPθ)x. Throws DegenerateScheduleError when
/// the solve is singular, unless `allow_pseudo_inverse` is set.
Vector lqr_feedback(const Vector& x, const Matrix& theta, const Matrix& p_next, const QMatrix& q, double c,
                    bool allow_pseudo_inverse = false);

/// Feedback gain K with π(x) = −Kx for one layer.
Matrix lqr_gain(const Matrix& theta, const Matrix& p_next, const QMatrix& q, double c,
                bool allow_pseudo_inverse = false);

/// Uses precomputed per-layer gains, so each control costs one mat-vec.
class RiccatiController final : public dynamics::Controller {
public:
    RiccatiController(const dynamics::LinearStack& stack, std::span<const QMatrix> qs,
                      const RiccatiSchedule& sched);
    Vector control(Index t, std::span<const Vector> history) const override;

    const std::vector<Matrix>& gains() const { return gains_; }

private:
    std::vector<Matrix> gains_;
};

/// ½(x+u)ᵀQ(x+u) + (c/2)‖u‖².
double quadratic_running_loss(const Vector& x, const Vector& u, const QMatrix& q, double c);

/// max_t |x_tᵀP_t x_t − loss_t − x_{t+1}ᵀP_{t+1}x_{t+1}|.
double bellman_check(const dynamics::ControlledTrajectory& traj, const RiccatiSchedule& sched,
                     std::span<const QMatrix> qs, double c);

}  // namespace shc::riccati
