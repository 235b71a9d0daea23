#include "shc/pmp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace shc::pmp {

Projector::Projector(Matrix q) : q_(std::move(q)) {
    if (q_.rows() != q_.cols()) throw DimensionError("projector must be square");
}

Projector Projector::complement(const Matrix& v) {
    Projector p(complement_projector(v));
    p.basis_ = v;
    return p;
}

Matrix Projector::apply(const Matrix& x) const {
    if (!basis_) return q_ * x;
    Matrix out = x;
    out.noalias() -= *basis_ * (basis_->transpose() * x);
    return out;
}

Matrix Projector::apply_transpose(const Matrix& x) const {
    if (basis_) return apply(x);
    return q_.transpose() * x;
}

Matrix Projector::apply_gram(const Matrix& x) const {
    if (basis_) return apply(x);
    return q_.transpose() * (q_ * x);
}

void Projector::apply_into(const Matrix& x, Matrix& out, Matrix& work) const {
    if (!basis_) {
        out.noalias() = q_ * x;
        return;
    }
    work.noalias() = basis_->transpose() * x;
    out = x;
    out.noalias() -= *basis_ * work;
}

void Projector::add_gram(const Matrix& x, Matrix& acc, Matrix& work) const {
    if (!basis_) {
        work.noalias() = q_ * x;
        acc.noalias() += q_.transpose() * work;
        return;
    }
    work.noalias() = basis_->transpose() * x;
    acc += x;
    acc.noalias() -= *basis_ * work;
}

bool RunningLossSpec::has_integral() const {
    for (const auto& l : layers)
        if (l.qi) return true;
    return false;
}

void RunningLossSpec::validate(Index dim) const {
    if (layers.empty()) throw std::invalid_argument("running loss needs at least one layer");
    auto check = [dim](const std::optional<Projector>& proj, std::size_t t, const char* name) {
        if (!proj) return;
        const Matrix* q = &proj->matrix();
        if (q->rows() != dim) {
            std::ostringstream os;
            os << "Q^" << name << " at layer " << t << " is " << q->rows() << "x" << q->cols() << ", expected "
               << dim << "x" << dim;
            throw DimensionError(os.str());
        }
        const bool idempotent = proj->basis() ? orthonormality_defect(*proj->basis()) <= 1e-10
                                              : max_abs(*q * *q - *q) <= 1e-10;
        if (!idempotent) {
            std::ostringstream os;
            os << "Q^" << name << " at layer " << t << " is not idempotent";
            throw std::invalid_argument(os.str());
        }
    };
    for (std::size_t t = 0; t < layers.size(); ++t) {
        if (!(layers[t].c >= 0.0)) throw std::invalid_argument("c_t must be nonnegative");
        check(layers[t].qp, t, "P");
        check(layers[t].qi, t, "I");
        check(layers[t].qd, t, "D");
    }
    if (state_bound && !(*state_bound >= 0.0)) throw std::invalid_argument("state bound must be nonnegative");
}

Matrix complement_projector(const Matrix& v) {
    const Index d = v.rows();
    return Matrix::Identity(d, d) - v * v.transpose();
}

RunningLossSpec RunningLossSpec::uniform(Index horizon, const std::optional<Matrix>& vp,
                                         const std::optional<Matrix>& vi, const std::optional<Matrix>& vd, double c) {
    RunningLossSpec spec;
    LayerLoss layer;
    if (vp) layer.qp = Projector::complement(*vp);
    if (vi) layer.qi = Projector::complement(*vi);
    if (vd) layer.qd = Projector::complement(*vd);
    layer.c = c;
    spec.layers.assign(static_cast<std::size_t>(horizon), layer);
    return spec;
}

namespace {

const LayerLoss& layer_at(const RunningLossSpec& spec, Index t) {
    if (t < 0 || t >= spec.horizon()) throw std::out_of_range("layer index outside the running-loss horizon");
    return spec.layers[static_cast<std::size_t>(t)];
}

void check_history(std::span<const Vector> history, Index t, const Vector& u) {
    if (static_cast<Index>(history.size()) != t + 1)
        throw std::invalid_argument("history must hold exactly x_0..x_t");
    if (u.size() != history.back().size()) throw DimensionError("control dim does not match the state dim");
}

Vector past_sum(std::span<const Vector> history) {
    Vector s = Vector::Zero(history.back().size());
    for (std::size_t i = 0; i + 1 < history.size(); ++i) s += history[i];
    return s;
}

// Gradient of the layer loss with respect to u (equivalently x_t).
Vector loss_grad_u(std::span<const Vector> history, const Vector& u, const LayerLoss& l, Index t) {
    const Vector& x = history.back();
    const Vector v = x + u;
    Vector g = l.c * u;
    if (l.qp) g += l.qp->apply_gram(v);
    if (l.qi) g += l.qi->apply_gram(v + past_sum(history));
    if (l.qd && t >= 1) g += l.qd->apply_gram(v - history[static_cast<std::size_t>(t) - 1]);
    return g;
}

// States, running sums and residuals of a batch rollout. Buffers are reused
// across calls.
struct Pass {
    std::vector<Matrix> x;     // x_0..x_T
    std::vector<Matrix> past;  // Σ_{s<t} x_s, only filled when the I channel is used
    std::vector<Matrix> rp, ri, rd;
    double objective = 0.0;
};

// Scratch matrices for the batch kernels.
struct Work {
    Matrix v, w, coeff, grad, running;
};

void forward_pass(const dynamics::LinearStack& stack, const Matrix& x0, const std::vector<Matrix>& u,
                  const RunningLossSpec& spec, Pass& pass, Work& work) {
    const auto horizon = static_cast<std::size_t>(stack.horizon());
    const bool integral = spec.has_integral();
    pass.x.resize(horizon + 1);
    pass.x[0] = x0;
    pass.rp.resize(horizon);
    pass.ri.resize(horizon);
    pass.rd.resize(horizon);
    if (integral) pass.past.resize(horizon);
    pass.objective = 0.0;
    Matrix& v = work.v;
    if (integral) work.running.setZero(x0.rows(), x0.cols());
    for (std::size_t t = 0; t < horizon; ++t) {
        const LayerLoss& l = spec.layers[t];
        v.noalias() = pass.x[t] + u[t];
        if (l.qp) {
            l.qp->apply_into(v, pass.rp[t], work.coeff);
            pass.objective += 0.5 * pass.rp[t].squaredNorm();
        }
        if (integral) {
            pass.past[t] = work.running;
            if (l.qi) {
                work.w.noalias() = v + work.running;
                l.qi->apply_into(work.w, pass.ri[t], work.coeff);
                pass.objective += 0.5 * pass.ri[t].squaredNorm();
            }
            work.running += pass.x[t];
        }
        if (l.qd && t >= 1) {
            work.w.noalias() = v - pass.x[t - 1];
            l.qd->apply_into(work.w, pass.rd[t], work.coeff);
            pass.objective += 0.5 * pass.rd[t].squaredNorm();
        }
        pass.objective += 0.5 * l.c * u[t].squaredNorm();
        pass.x[t + 1].noalias() = stack[static_cast<Index>(t)] * v;
    }
}

// Downstream-objective gradients g_t = dJ_{>=t}/dx_t with g_T = 0 (the
// adjoint is −g), plus the propagated terms θ_tᵀg_{t+1}.
struct Gradients {
    std::vector<Matrix> g;
    std::vector<Matrix> carried;
};

Gradients objective_gradients(const dynamics::LinearStack& stack, const Pass& pass, const RunningLossSpec& spec) {
    const auto horizon = static_cast<std::size_t>(stack.horizon());
    const Index d = pass.x.front().rows();
    const Index n = pass.x.front().cols();
    Gradients out;
    auto& g = out.g;
    g.assign(horizon + 1, Matrix::Zero(d, n));
    out.carried.resize(horizon);
    Matrix integral_carry = Matrix::Zero(d, n);  // Σ_{s>t} Q^Iᵀ r^I_s
    for (std::size_t t = horizon; t-- > 0;) {
        const LayerLoss& l = spec.layers[t];
        out.carried[t].noalias() = stack[static_cast<Index>(t)].transpose() * g[t + 1];
        Matrix gt = out.carried[t];
        if (l.qp) gt += l.qp->apply_transpose(pass.rp[t]);
        if (l.qi) gt += l.qi->apply_transpose(pass.ri[t]);
        if (l.qd && t >= 1) gt += l.qd->apply_transpose(pass.rd[t]);
        gt += integral_carry;
        if (t + 1 < horizon) {
            const LayerLoss& next = spec.layers[t + 1];
            if (next.qd) gt -= next.qd->apply_transpose(pass.rd[t + 1]);
        }
        if (l.qi) integral_carry += l.qi->apply_transpose(pass.ri[t]);
        g[t] = std::move(gt);
    }
    return out;
}

// Columns per block in the inner loop, small enough for the block's working
// set to stay in cache across the inner steps.
constexpr Index kColumnBlock = 32;

// `steps` gradient steps u ← u − η(∇_u loss_t + extra) with the states fixed.
// Columns are independent here, so each block runs all its steps before the
// next one is touched.
void inner_steps(const Pass& pass, Matrix& u, const LayerLoss& l, std::size_t t, const Matrix& extra, double eta,
                 int steps, Work& work) {
    const Index n = u.cols();
    for (Index j = 0; j < n; j += kColumnBlock) {
        const Index nb = std::min(kColumnBlock, n - j);
        auto ub = u.middleCols(j, nb);
        const auto xb = pass.x[t].middleCols(j, nb);
        const auto eb = extra.middleCols(j, nb);
        for (int k = 0; k < steps; ++k) {
            work.grad.noalias() = l.c * ub + eb;
            work.v.noalias() = xb + ub;
            if (l.qp) l.qp->add_gram(work.v, work.grad, work.coeff);
            if (l.qi) {
                work.w.noalias() = work.v + pass.past[t].middleCols(j, nb);
                l.qi->add_gram(work.w, work.grad, work.coeff);
            }
            if (l.qd && t >= 1) {
                work.w.noalias() = work.v - pass.x[t - 1].middleCols(j, nb);
                l.qd->add_gram(work.w, work.grad, work.coeff);
            }
            ub.noalias() -= eta * work.grad;
        }
    }
}

void check_instance(const dynamics::LinearStack& stack, Index rows, const RunningLossSpec& spec) {
    if (rows != stack.dim()) throw DimensionError("initial state dim does not match the stack");
    if (spec.horizon() != stack.horizon()) throw DimensionError("running loss horizon differs from the stack");
    spec.validate(stack.dim());
}

}  // namespace

double running_loss(std::span<const Vector> history, const Vector& u, const RunningLossSpec& spec, Index t) {
    const LayerLoss& l = layer_at(spec, t);
    check_history(history, t, u);
    const Vector v = history.back() + u;
    double loss = 0.5 * l.c * u.squaredNorm();
    if (l.qp) loss += 0.5 * l.qp->apply(v).squaredNorm();
    if (l.qi) loss += 0.5 * l.qi->apply(v + past_sum(history)).squaredNorm();
    if (l.qd && t >= 1) loss += 0.5 * l.qd->apply(v - history[static_cast<std::size_t>(t) - 1]).squaredNorm();
    return loss;
}

double running_loss_bound(std::span<const Vector> history, const Vector& u, const RunningLossSpec& spec, Index t) {
    if (!spec.state_bound) throw std::invalid_argument("running_loss_bound needs a state bound B");
    const LayerLoss& l = layer_at(spec, t);
    check_history(history, t, u);
    const Vector v = history.back() + u;
    double bound = 0.5 * l.c * u.squaredNorm();
    if (l.qp) bound += 0.5 * l.qp->apply(v).squaredNorm();
    if (l.qi) bound += 0.5 * l.qi->apply(v).squaredNorm();
    if (l.qd) bound += 0.5 * l.qd->apply(v).squaredNorm();
    return bound + 0.5 * static_cast<double>(spec.horizon()) * *spec.state_bound;
}

double hamiltonian(Index t, std::span<const Vector> history, const Vector& p_next, const Matrix& theta,
                   const Vector& u, const RunningLossSpec& spec) {
    return p_next.dot(theta * (history.back() + u)) - running_loss(history, u, spec, t);
}

Vector hamiltonian_grad_u(Index t, std::span<const Vector> history, const Vector& p_next, const Matrix& theta,
                          const Vector& u, const RunningLossSpec& spec) {
    const LayerLoss& l = layer_at(spec, t);
    check_history(history, t, u);
    return theta.transpose() * p_next - loss_grad_u(history, u, l, t);
}

std::vector<Vector> rollout(const dynamics::LinearStack& stack, const Vector& x0, std::span<const Vector> controls) {
    if (static_cast<Index>(controls.size()) != stack.horizon()) throw DimensionError("need one control per layer");
    std::vector<Vector> x;
    x.reserve(controls.size() + 1);
    x.push_back(x0);
    for (std::size_t t = 0; t < controls.size(); ++t) x.push_back(stack[static_cast<Index>(t)] * (x.back() + controls[t]));
    return x;
}

double total_objective(const dynamics::LinearStack& stack, const Vector& x0, std::span<const Vector> controls,
                       const RunningLossSpec& spec) {
    const auto x = rollout(stack, x0, controls);
    double total = 0.0;
    for (std::size_t t = 0; t < controls.size(); ++t)
        total += running_loss(std::span<const Vector>(x.data(), t + 1), controls[t], spec, static_cast<Index>(t));
    return total;
}

std::vector<Vector> adjoint(const dynamics::LinearStack& stack, std::span<const Vector> states,
                            std::span<const Vector> controls, const RunningLossSpec& spec) {
    const auto horizon = static_cast<std::size_t>(stack.horizon());
    if (states.size() != horizon + 1 || controls.size() != horizon)
        throw DimensionError("adjoint needs T+1 states and T controls");
    check_instance(stack, states.front().size(), spec);
    std::vector<Matrix> u(controls.begin(), controls.end());
    Pass pass;
    Work work;
    forward_pass(stack, states.front(), u, spec, pass, work);
    const auto grads = objective_gradients(stack, pass, spec);
    std::vector<Vector> p;
    p.reserve(grads.g.size());
    for (const auto& gt : grads.g) p.push_back(-gt.col(0));
    return p;
}

void MsaConfig::validate() const {
    if (max_outer_iters < 1 || inner_steps < 1 || max_halvings < 1 || !(step_size > 0.0) || !(tolerance > 0.0))
        throw std::invalid_argument("MSA configuration values must all be positive");
}

MsaBatchSolution msa_solve_batch(const dynamics::LinearStack& stack, const Matrix& x0, const RunningLossSpec& spec,
                                 const MsaConfig& cfg) {
    cfg.validate();
    check_instance(stack, x0.rows(), spec);
    const auto horizon = static_cast<std::size_t>(stack.horizon());

    MsaBatchSolution sol;
    sol.controls.assign(horizon, Matrix::Zero(x0.rows(), x0.cols()));
    Pass pass, trial_pass;
    Work work;
    std::vector<Matrix> trial;
    forward_pass(stack, x0, sol.controls, spec, pass, work);
    auto& diag = sol.diagnostics;
    diag.objective.push_back(pass.objective);
    double eta = cfg.step_size;

    for (int iter = 0; iter < cfg.max_outer_iters; ++iter) {
        const auto grads = objective_gradients(stack, pass, spec);

        bool accepted = false;
        for (int halving = 0; halving <= cfg.max_halvings; ++halving) {
            trial = sol.controls;
            for (std::size_t t = 0; t < horizon; ++t)
                inner_steps(pass, trial[t], spec.layers[t], t, grads.carried[t], eta, cfg.inner_steps, work);
            forward_pass(stack, x0, trial, spec, trial_pass, work);
            if (trial_pass.objective <= pass.objective) {
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if (!accepted) break;

        double change = 0.0;
        for (std::size_t t = 0; t < horizon; ++t) change = std::max(change, max_abs(trial[t] - sol.controls[t]));
        if (trial_pass.objective > diag.objective.back()) diag.monotone = false;
        sol.controls.swap(trial);
        std::swap(pass, trial_pass);
        diag.objective.push_back(pass.objective);
        diag.step_sizes.push_back(eta);
        diag.iterations = iter + 1;
        if (change < cfg.tolerance) {
            diag.converged = true;
            break;
        }
    }
    return sol;
}

MsaSolution msa_solve(const dynamics::LinearStack& stack, const Vector& x0, const RunningLossSpec& spec,
                      const MsaConfig& cfg) {
    auto batch = msa_solve_batch(stack, Matrix(x0), spec, cfg);
    MsaSolution sol;
    sol.controls.reserve(batch.controls.size());
    for (const auto& u : batch.controls) sol.controls.push_back(u.col(0));
    sol.diagnostics = std::move(batch.diagnostics);
    return sol;
}

}  // namespace shc::pmp
