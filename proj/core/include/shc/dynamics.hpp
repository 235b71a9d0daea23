#pragma once

// Layered linear dynamics x_{t+1} = θ_t (x_t + u_t), controllers, and the
// synthetic classification task used by the experiments.

#include "shc/rng.hpp"
#include "shc/types.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace shc::dynamics {

/// Tolerance used to accept a layer as orthogonal.
inline constexpr double kOrthogonalTol = 1e-10;

class LinearStack {
public:
    LinearStack() = default;
    /// Throws std::invalid_argument if layers are not square, not all the
    /// same size, or (when `orthogonal` is set) not orthogonal to 1e-10.
    LinearStack(std::vector<Matrix> layers, bool orthogonal);

    /// T seeded random orthogonal layers of size d.
    static LinearStack random_orthogonal(Index d, Index horizon, std::uint64_t seed);
    static LinearStack identity(Index d, Index horizon);

    Index horizon() const { return static_cast<Index>(layers_.size()); }
    Index dim() const { return layers_.empty() ? 0 : layers_.front().rows(); }
    bool orthogonal() const { return orthogonal_; }
    const Matrix& operator[](Index t) const { return layers_[static_cast<std::size_t>(t)]; }
    const std::vector<Matrix>& layers() const { return layers_; }

private:
    std::vector<Matrix> layers_;
    bool orthogonal_ = false;
};

/// Feedback law u_t = π_t(x_0..x_t). The history span always ends in x_t.
class Controller {
public:
    virtual ~Controller() = default;
    virtual Vector control(Index t, std::span<const Vector> history) const = 0;
};

class ZeroController final : public Controller {
public:
    Vector control(Index t, std::span<const Vector> history) const override;
};

/// Replays a precomputed control sequence regardless of the state.
class OpenLoopController final : public Controller {
public:
    explicit OpenLoopController(std::vector<Vector> controls) : controls_(std::move(controls)) {}
    Vector control(Index t, std::span<const Vector> history) const override;

private:
    std::vector<Vector> controls_;
};

struct ControlledTrajectory {
    std::vector<Vector> states;    // x_0..x_T
    std::vector<Vector> controls;  // u_0..u_{T-1}
};

ControlledTrajectory forward(const LinearStack& stack, const Vector& x0, const Controller& ctrl);

/// max_t max-entry |x_{t+1} − θ_t(x_t + u_t)|.
double trajectory_defect(const LinearStack& stack, const ControlledTrajectory& traj);

/// Orthogonal matrix from the QR factorization of a seeded Gaussian matrix,
/// with the diagonal of R made positive.
Matrix random_orthogonal(Index d, std::uint64_t seed);

/// Random d x r matrix with orthonormal columns.
Matrix random_orthonormal_columns(Index d, Index r, std::uint64_t seed);

/// V_0..V_T with V_{t+1} = θ_t V_t. Requires an orthogonal stack.
std::vector<Matrix> propagate_basis(const LinearStack& stack, const Matrix& v0);

/// z = z∥ + z⊥ with the requested norms, z∥ in span(V₀) and z⊥ orthogonal to it.
Vector make_perturbation(const Matrix& v0, double par_norm, double perp_norm, std::uint64_t seed);

/// Seeded classification task on an orthogonal stack. Clean inputs are
/// x₀ = V₀a with Gaussian coefficients a; the label is the argmax of a fixed
/// random readout of a. The terminal readout acts on the coordinates of x_T
/// in the full orthonormal basis [V_T | complement], so off-subspace error
/// can move the logits.
class SyntheticTask {
public:
    struct Options {
        Index dim = 32;
        Index rank = 8;
        Index horizon = 12;
        Index num_classes = 4;
        double off_subspace_gain = 1.0;
        std::uint64_t seed = 0;
    };

    struct Sample {
        Vector x0;
        Vector coefficients;
        Index label = 0;
    };

    explicit SyntheticTask(const Options& opt);

    const LinearStack& stack() const { return stack_; }
    const Matrix& data_basis() const { return bases_.front(); }
    const std::vector<Matrix>& propagated_bases() const { return bases_; }
    const Options& options() const { return opt_; }
    Index num_classes() const { return opt_.num_classes; }

    /// Deterministic in (task seed, index).
    Sample sample(std::uint64_t index) const;

    /// Logits of a terminal state.
    Vector logits(const Vector& x_terminal) const;
    Index predict(const Vector& x_terminal) const;

private:
    Options opt_;
    LinearStack stack_;
    std::vector<Matrix> bases_;
    Matrix coefficient_readout_;  // K x r
    Matrix terminal_readout_;     // K x d, acts on x_T
};

/// Index of the largest entry, lowest index on ties.
Index argmax(const Vector& v);

}  // namespace shc::dynamics
