#include "shc/dynamics.hpp"

#include <cmath>
#include <sstream>

namespace shc::dynamics {

LinearStack::LinearStack(std::vector<Matrix> layers, bool orthogonal)
    : layers_(std::move(layers)), orthogonal_(orthogonal) {
    if (layers_.empty()) throw std::invalid_argument("a stack needs at least one layer");
    const Index d = layers_.front().rows();
    for (std::size_t t = 0; t < layers_.size(); ++t) {
        const auto& th = layers_[t];
        if (th.rows() != d || th.cols() != d) {
            std::ostringstream os;
            os << "layer " << t << " is " << th.rows() << "x" << th.cols() << ", expected " << d << "x" << d;
            throw std::invalid_argument(os.str());
        }
        if (orthogonal_ && max_abs(th.transpose() * th - Matrix::Identity(d, d)) > kOrthogonalTol) {
            std::ostringstream os;
            os << "layer " << t << " is flagged orthogonal but θᵀθ deviates from I";
            throw std::invalid_argument(os.str());
        }
    }
}

LinearStack LinearStack::random_orthogonal(Index d, Index horizon, std::uint64_t seed) {
    if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
    const Rng root(seed);
    std::vector<Matrix> layers;
    layers.reserve(static_cast<std::size_t>(horizon));
    for (Index t = 0; t < horizon; ++t)
        layers.push_back(dynamics::random_orthogonal(d, root.split(static_cast<std::uint64_t>(t)).seed()));
    return LinearStack(std::move(layers), true);
}

LinearStack LinearStack::identity(Index d, Index horizon) {
    if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
    return LinearStack(std::vector<Matrix>(static_cast<std::size_t>(horizon), Matrix::Identity(d, d)), true);
}

Vector ZeroController::control(Index, std::span<const Vector> history) const {
    return Vector::Zero(history.back().size());
}

Vector OpenLoopController::control(Index t, std::span<const Vector>) const {
    if (t < 0 || t >= static_cast<Index>(controls_.size()))
        throw std::out_of_range("open-loop controller has no control for this layer");
    return controls_[static_cast<std::size_t>(t)];
}

ControlledTrajectory forward(const LinearStack& stack, const Vector& x0, const Controller& ctrl) {
    if (x0.size() != stack.dim()) throw DimensionError("initial state dim does not match the stack");
    ControlledTrajectory traj;
    const auto horizon = static_cast<std::size_t>(stack.horizon());
    traj.states.reserve(horizon + 1);
    traj.controls.reserve(horizon);
    traj.states.push_back(x0);
    for (std::size_t t = 0; t < horizon; ++t) {
        Vector u = ctrl.control(static_cast<Index>(t), std::span<const Vector>(traj.states));
        if (u.size() != x0.size()) {
            std::ostringstream os;
            os << "controller returned a vector of size " << u.size() << " at layer " << t
               << ", expected " << x0.size();
            throw std::runtime_error(os.str());
        }
        traj.states.push_back(stack[static_cast<Index>(t)] * (traj.states.back() + u));
        traj.controls.push_back(std::move(u));
    }
    return traj;
}

double trajectory_defect(const LinearStack& stack, const ControlledTrajectory& traj) {
    double worst = 0.0;
    for (std::size_t t = 0; t < traj.controls.size(); ++t) {
        const Vector expected = stack[static_cast<Index>(t)] * (traj.states[t] + traj.controls[t]);
        worst = std::max(worst, max_abs(traj.states[t + 1] - expected));
    }
    return worst;
}

Matrix random_orthogonal(Index d, std::uint64_t seed) {
    if (d < 1) throw std::invalid_argument("random_orthogonal needs d >= 1");
    Rng rng(seed);
    const Matrix g = rng.normal_matrix(d, d);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    const Matrix& r = qr.matrixQR();
    for (Index i = 0; i < d; ++i)
        if (r(i, i) < 0.0) q.col(i) = -q.col(i);
    return q;
}

Matrix random_orthonormal_columns(Index d, Index r, std::uint64_t seed) {
    if (r < 0 || r > d) throw std::invalid_argument("need 0 <= r <= d for an orthonormal column set");
    return random_orthogonal(d, seed).leftCols(r);
}

std::vector<Matrix> propagate_basis(const LinearStack& stack, const Matrix& v0) {
    if (!stack.orthogonal())
        throw std::invalid_argument("propagate_basis requires an orthogonal stack");
    if (v0.rows() != stack.dim()) throw DimensionError("basis rows do not match the stack dim");
    std::vector<Matrix> out;
    out.reserve(static_cast<std::size_t>(stack.horizon()) + 1);
    out.push_back(v0);
    for (Index t = 0; t < stack.horizon(); ++t) out.push_back(stack[t] * out.back());
    return out;
}

Vector make_perturbation(const Matrix& v0, double par_norm, double perp_norm, std::uint64_t seed) {
    if (!(par_norm >= 0.0) || !(perp_norm >= 0.0))
        throw std::invalid_argument("perturbation norms must be nonnegative");
    const Index d = v0.rows();
    const Index r = v0.cols();
    if (perp_norm > 0.0 && r >= d)
        throw std::invalid_argument("no orthogonal complement: basis spans the whole space");
    if (par_norm > 0.0 && r == 0)
        throw std::invalid_argument("empty basis cannot carry a parallel component");

    Rng rng(seed);
    Vector z = Vector::Zero(d);
    if (par_norm > 0.0) {
        Vector a = rng.normal_vector(r);
        while (a.norm() == 0.0) a = rng.normal_vector(r);
        z += par_norm * (v0 * a.normalized());
    }
    if (perp_norm > 0.0) {
        Vector g = rng.normal_vector(d);
        Vector perp = g - v0 * (v0.transpose() * g);
        while (perp.norm() < 1e-8 * g.norm()) {
            g = rng.normal_vector(d);
            perp = g - v0 * (v0.transpose() * g);
        }
        // Second projection pass removes the rounding left by the first.
        perp -= v0 * (v0.transpose() * perp);
        z += perp_norm * perp.normalized();
    }
    return z;
}

Index argmax(const Vector& v) {
    if (v.size() == 0) throw std::invalid_argument("argmax of an empty vector");
    Index best = 0;
    for (Index i = 1; i < v.size(); ++i)
        if (v(i) > v(best)) best = i;
    return best;
}

SyntheticTask::SyntheticTask(const Options& opt) : opt_(opt) {
    if (opt.dim < 1 || opt.rank < 1 || opt.rank > opt.dim)
        throw std::invalid_argument("synthetic task needs 1 <= rank <= dim");
    if (opt.num_classes < 2) throw std::invalid_argument("synthetic task needs at least two classes");
    const Rng root(opt.seed);
    stack_ = LinearStack::random_orthogonal(opt.dim, opt.horizon, root.split(1).seed());
    bases_ = propagate_basis(stack_, random_orthonormal_columns(opt.dim, opt.rank, root.split(2).seed()));

    Rng readout = root.split(3);
    coefficient_readout_ = readout.normal_matrix(opt.num_classes, opt.rank);
    const Matrix off = readout.normal_matrix(opt.num_classes, opt.dim);
    const Matrix& vt = bases_.back();
    const Matrix complement = Matrix::Identity(opt.dim, opt.dim) - vt * vt.transpose();
    terminal_readout_ = coefficient_readout_ * vt.transpose() + opt.off_subspace_gain * off * complement;
}

SyntheticTask::Sample SyntheticTask::sample(std::uint64_t index) const {
    Rng rng = Rng(opt_.seed).split(4).split(index);
    Sample s;
    s.coefficients = rng.normal_vector(opt_.rank);
    s.x0 = data_basis() * s.coefficients;
    s.label = argmax(coefficient_readout_ * s.coefficients);
    return s;
}

Vector SyntheticTask::logits(const Vector& x_terminal) const { return terminal_readout_ * x_terminal; }

Index SyntheticTask::predict(const Vector& x_terminal) const { return argmax(logits(x_terminal)); }

}  // namespace shc::dynamics
