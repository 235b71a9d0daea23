#pragma once

// Iterative optimal control through the maximum principle: forward states,
// backward adjoints, and gradient ascent on the per-layer Hamiltonian
// (method of successive approximations).
//
// Sign convention: the adjoint p_t is ∇_x H, i.e. the negative gradient of
// the downstream objective with respect to x_t. Maximizing H is the same as
// minimizing the objective.

#include "shc/dynamics.hpp"

#include <optional>
#include <vector>

namespace shc::pmp {

/// A channel cost matrix Q. When built from a basis it keeps V and applies
/// Q = I − VVᵀ as x − V(Vᵀx), which is what makes batched solves affordable
/// at large d.
class Projector {
public:
    explicit Projector(Matrix q);
    static Projector complement(const Matrix& v);

    const Matrix& matrix() const { return q_; }
    const std::optional<Matrix>& basis() const { return basis_; }
    Index dim() const { return q_.rows(); }

    Matrix apply(const Matrix& x) const;
    Matrix apply_transpose(const Matrix& x) const;
    /// QᵀQx; a basis projector is symmetric idempotent, so this is Qx.
    Matrix apply_gram(const Matrix& x) const;

    /// out = Qx, reusing out's storage. `work` is scratch for the basis form.
    void apply_into(const Matrix& x, Matrix& out, Matrix& work) const;
    /// acc += QᵀQx without temporaries the size of x.
    void add_gram(const Matrix& x, Matrix& acc, Matrix& work) const;

private:
    Matrix q_;
    std::optional<Matrix> basis_;
};

/// Cost terms of one layer, one projector per channel; an absent projector
/// drops that term.
struct LayerLoss {
    std::optional<Projector> qp;
    std::optional<Projector> qi;
    std::optional<Projector> qd;
    double c = 0.0;
};

struct RunningLossSpec {
    std::vector<LayerLoss> layers;
    /// Uniform bound on ‖x‖² used only by running_loss_bound.
    std::optional<double> state_bound;

    Index horizon() const { return static_cast<Index>(layers.size()); }
    bool has_integral() const;
    /// Checks dims, c_t >= 0, and idempotence of every projector to 1e-10.
    void validate(Index dim) const;

    /// Same projectors and c at every layer: Q = I − VVᵀ for each given basis.
    static RunningLossSpec uniform(Index horizon, const std::optional<Matrix>& vp, const std::optional<Matrix>& vi,
                                   const std::optional<Matrix>& vd, double c);
};

/// Complement projector I − VVᵀ.
Matrix complement_projector(const Matrix& v);

/// Loss of layer t for history x_0..x_t and control u. The D term needs t >= 1.
double running_loss(std::span<const Vector> history, const Vector& u, const RunningLossSpec& spec, Index t);

/// Upper bound on running_loss that drops the history terms in favour of
/// T·B/2. Needs spec.state_bound.
double running_loss_bound(std::span<const Vector> history, const Vector& u, const RunningLossSpec& spec, Index t);

/// H = p_{t+1}ᵀθ(x_t + u) − loss.
double hamiltonian(Index t, std::span<const Vector> history, const Vector& p_next, const Matrix& theta,
                   const Vector& u, const RunningLossSpec& spec);

/// ∇_u H = θᵀp_{t+1} − ∇_u loss.
Vector hamiltonian_grad_u(Index t, std::span<const Vector> history, const Vector& p_next, const Matrix& theta,
                          const Vector& u, const RunningLossSpec& spec);

/// States x_0..x_T under open-loop controls.
std::vector<Vector> rollout(const dynamics::LinearStack& stack, const Vector& x0, std::span<const Vector> controls);

/// Σ_t loss_t along the open-loop rollout (no terminal loss).
double total_objective(const dynamics::LinearStack& stack, const Vector& x0, std::span<const Vector> controls,
                       const RunningLossSpec& spec);

/// p_0..p_T with p_T = 0, including the cross-layer terms from the I and D
/// channels.
std::vector<Vector> adjoint(const dynamics::LinearStack& stack, std::span<const Vector> states,
                            std::span<const Vector> controls, const RunningLossSpec& spec);

struct MsaConfig {
    int max_outer_iters = 50;
    int inner_steps = 5;
    double step_size = 0.1;
    int max_halvings = 20;
    double tolerance = 1e-8;

    void validate() const;
};

struct MsaDiagnostics {
    std::vector<double> objective;   // entry 0 is the zero-control objective
    std::vector<double> step_sizes;  // accepted step per iteration
    int iterations = 0;
    bool converged = false;
    /// True when every accepted iterate had objective <= its predecessor.
    bool monotone = true;
};

struct MsaSolution {
    std::vector<Vector> controls;
    MsaDiagnostics diagnostics;
};

struct MsaBatchSolution {
    std::vector<Matrix> controls;  // d x N per layer
    MsaDiagnostics diagnostics;
};

MsaSolution msa_solve(const dynamics::LinearStack& stack, const Vector& x0, const RunningLossSpec& spec,
                      const MsaConfig& cfg);

/// Solves N independent problems stored as columns of x0. The step size is
/// shared and controlled by the summed objective.
MsaBatchSolution msa_solve_batch(const dynamics::LinearStack& stack, const Matrix& x0, const RunningLossSpec& spec,
                                 const MsaConfig& cfg);

}  // namespace shc::pmp
