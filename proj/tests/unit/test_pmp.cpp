#include "shc/analytic.hpp"
#include "shc/harness/experiments.hpp"
#include "shc/pmp.hpp"

#include <gtest/gtest.h>

namespace {

using namespace shc;
using namespace shc::pmp;

// Random instance using all three channels with distinct bases.
struct Problem {
    dynamics::LinearStack stack;
    RunningLossSpec spec;
    Vector x0;
    std::vector<Vector> controls;
};

Problem pid_problem(Index d, Index horizon, std::uint64_t seed) {
    Rng rng(seed);
    Problem pr;
    pr.stack = dynamics::LinearStack::random_orthogonal(d, horizon, rng.split(1).seed());
    const Matrix vp = dynamics::random_orthonormal_columns(d, 2, rng.split(2).seed());
    const Matrix vi = dynamics::random_orthonormal_columns(d, 3, rng.split(3).seed());
    const Matrix vd = dynamics::random_orthonormal_columns(d, 1, rng.split(4).seed());
    pr.spec = RunningLossSpec::uniform(horizon, vp, vi, vd, 0.7);
    pr.spec.layers[1].qp = Projector(0.5 * (complement_projector(vp) + complement_projector(vp).transpose()));
    pr.x0 = rng.normal_vector(d);
    for (Index t = 0; t < horizon; ++t) pr.controls.push_back(0.3 * rng.normal_vector(d));
    return pr;
}

// Σ_{s>=t} loss_s with x_t replaced by x_t + h and the controls held fixed.
double downstream(const Problem& pr, Index t, const Vector& h) {
    auto x = rollout(pr.stack, pr.x0, pr.controls);
    const auto i = static_cast<std::size_t>(t);
    x[i] += h;
    for (std::size_t s = i; s < pr.controls.size(); ++s) x[s + 1] = pr.stack[static_cast<Index>(s)] * (x[s] + pr.controls[s]);
    double total = 0.0;
    for (std::size_t s = i; s < pr.controls.size(); ++s)
        total += running_loss(std::span<const Vector>(x.data(), s + 1), pr.controls[s], pr.spec, static_cast<Index>(s));
    return total;
}

MsaConfig tight_config() {
    MsaConfig cfg;
    cfg.max_outer_iters = 3000;
    cfg.step_size = 0.3;
    cfg.tolerance = 1e-12;
    return cfg;
}

TEST(RunningLoss, HandExample) {
    RunningLossSpec spec;
    LayerLoss l;
    l.qp = Projector((Matrix(2, 2) << 0, 0, 0, 1).finished());
    l.c = 1.0;
    spec.layers.push_back(l);
    const std::vector<Vector> hist{(Vector(2) << 1, 1).finished()};
    EXPECT_DOUBLE_EQ(running_loss(hist, Vector::Zero(2), spec, 0), 0.5);
    EXPECT_DOUBLE_EQ(running_loss(hist, (Vector(2) << 1, -1).finished(), spec, 0), 1.0);
    EXPECT_THROW(running_loss(hist, Vector::Zero(2), spec, 1), std::out_of_range);
    EXPECT_THROW(running_loss(hist, Vector::Zero(3), spec, 0), DimensionError);
}

TEST(RunningLoss, IntegralAndDerivativeTerms) {
    RunningLossSpec spec;
    LayerLoss l;
    l.qi = Projector(Matrix::Identity(1, 1));
    l.qd = Projector(Matrix::Identity(1, 1));
    spec.layers.assign(3, l);
    const std::vector<Vector> hist{Vector::Constant(1, 1.0), Vector::Constant(1, 2.0), Vector::Constant(1, 4.0)};
    // I: ½(4 + 1 + 2)², D: ½(4 − 2)².
    EXPECT_DOUBLE_EQ(running_loss(hist, Vector::Zero(1), spec, 2), 0.5 * 49.0 + 0.5 * 4.0);
}

TEST(Hamiltonian, ZeroAdjointAndLinearity) {
    const auto pr = pid_problem(6, 4, 1);
    const auto x = rollout(pr.stack, pr.x0, pr.controls);
    const std::span<const Vector> hist(x.data(), 3);
    const Vector& u = pr.controls[2];
    const double loss = running_loss(hist, u, pr.spec, 2);
    EXPECT_DOUBLE_EQ(hamiltonian(2, hist, Vector::Zero(6), pr.stack[2], u, pr.spec), -loss);
    const Vector p = Rng(2).normal_vector(6);
    const double h1 = hamiltonian(2, hist, p, pr.stack[2], u, pr.spec);
    const double h2 = hamiltonian(2, hist, 2.0 * p, pr.stack[2], u, pr.spec);
    EXPECT_NEAR(h2 - 2.0 * h1, loss, 1e-12);
}

TEST(Hamiltonian, GradientMatchesFiniteDifference) {
    const auto pr = pid_problem(5, 4, 3);
    const auto x = rollout(pr.stack, pr.x0, pr.controls);
    const Vector p = Rng(4).normal_vector(5);
    for (Index t = 0; t < 4; ++t) {
        const std::span<const Vector> hist(x.data(), static_cast<std::size_t>(t) + 1);
        const Vector& u = pr.controls[static_cast<std::size_t>(t)];
        const Vector g = hamiltonian_grad_u(t, hist, p, pr.stack[t], u, pr.spec);
        for (Index k = 0; k < 5; ++k) {
            const double h = 1e-6;
            const Vector e = Vector::Unit(5, k) * h;
            const double fd = (hamiltonian(t, hist, p, pr.stack[t], u + e, pr.spec) -
                               hamiltonian(t, hist, p, pr.stack[t], u - e, pr.spec)) /
                              (2 * h);
            EXPECT_NEAR(g(k), fd, 1e-7);
        }
    }
}

TEST(Adjoint, MatchesFiniteDifferenceWithAllChannels) {
    const auto pr = pid_problem(6, 5, 5);
    const auto x = rollout(pr.stack, pr.x0, pr.controls);
    const auto p = adjoint(pr.stack, x, pr.controls, pr.spec);
    ASSERT_EQ(p.size(), 6u);
    EXPECT_EQ(p.back(), Vector::Zero(6));
    for (Index t = 0; t < 5; ++t)
        for (Index k = 0; k < 6; ++k) {
            const double h = 1e-6;
            const Vector e = Vector::Unit(6, k) * h;
            const double fd = (downstream(pr, t, e) - downstream(pr, t, -e)) / (2 * h);
            EXPECT_NEAR(p[static_cast<std::size_t>(t)](k), -fd, 1e-6) << "t=" << t << " k=" << k;
        }
}

TEST(Adjoint, RejectsWrongLengths) {
    const auto pr = pid_problem(4, 3, 6);
    const auto x = rollout(pr.stack, pr.x0, pr.controls);
    EXPECT_THROW(adjoint(pr.stack, std::span<const Vector>(x.data(), 3), pr.controls, pr.spec), DimensionError);
}

TEST(Msa, ConvergedSolutionIsStationary) {
    const auto pr = pid_problem(6, 4, 7);
    const auto sol = msa_solve(pr.stack, pr.x0, pr.spec, tight_config());
    EXPECT_GT(sol.diagnostics.iterations, 10);
    const auto x = rollout(pr.stack, pr.x0, sol.controls);
    const auto p = adjoint(pr.stack, x, sol.controls, pr.spec);
    for (Index t = 0; t < 4; ++t) {
        const auto i = static_cast<std::size_t>(t);
        const Vector g = hamiltonian_grad_u(t, std::span<const Vector>(x.data(), i + 1), p[i + 1], pr.stack[t],
                                            sol.controls[i], pr.spec);
        EXPECT_LE(g.norm(), 1e-5);
    }
}

TEST(Msa, MatchesAnalyticControlOnOrthogonalInstance) {
    const auto inst = harness::make_orthogonal_instance(8, 2, 5, 1.0, 8);
    const Vector x0 = inst.x0 + inst.z;
    const auto sol = msa_solve(inst.stack, x0, harness::instance_loss(inst), tight_config());
    const auto traj = dynamics::forward(inst.stack, x0, analytic::AnalyticController(inst.gains));
    for (std::size_t t = 0; t < traj.controls.size(); ++t)
        EXPECT_LE(max_abs(sol.controls[t] - traj.controls[t]), 1e-4);
}

TEST(Msa, ZeroProjectorsGiveZeroControls) {
    RunningLossSpec spec;
    LayerLoss l;
    l.qp = Projector(Matrix::Zero(4, 4));
    l.c = 1.0;
    spec.layers.assign(3, l);
    const auto stack = dynamics::LinearStack::random_orthogonal(4, 3, 9);
    const auto sol = msa_solve(stack, Rng(10).normal_vector(4), spec, MsaConfig{});
    for (const auto& u : sol.controls) EXPECT_EQ(u, Vector::Zero(4));
    EXPECT_EQ(sol.diagnostics.objective.front(), 0.0);
}

TEST(Msa, ObjectiveIsMonotoneAndDeterministic) {
    const auto pr = pid_problem(7, 5, 11);
    const auto a = msa_solve(pr.stack, pr.x0, pr.spec, MsaConfig{});
    EXPECT_TRUE(a.diagnostics.monotone);
    const auto& obj = a.diagnostics.objective;
    for (std::size_t i = 1; i < obj.size(); ++i) EXPECT_LE(obj[i], obj[i - 1]);
    EXPECT_LT(obj.back(), obj.front());
    const auto b = msa_solve(pr.stack, pr.x0, pr.spec, MsaConfig{});
    EXPECT_EQ(a.diagnostics.objective, b.diagnostics.objective);
    for (std::size_t t = 0; t < a.controls.size(); ++t) EXPECT_EQ(a.controls[t], b.controls[t]);
}

TEST(Msa, BatchColumnsSolveIndependentProblems) {
    const auto inst = harness::make_orthogonal_instance(8, 2, 4, 1.0, 12);
    const Matrix x0 = Rng(13).normal_matrix(8, 3);
    const auto batch = msa_solve_batch(inst.stack, x0, harness::instance_loss(inst), tight_config());
    EXPECT_TRUE(batch.diagnostics.converged);
    const analytic::AnalyticController ctrl(inst.gains);
    for (Index n = 0; n < 3; ++n) {
        const auto traj = dynamics::forward(inst.stack, x0.col(n), ctrl);
        for (std::size_t t = 0; t < traj.controls.size(); ++t)
            EXPECT_LE(max_abs(batch.controls[t].col(n) - traj.controls[t]), 1e-4);
    }
}

TEST(Msa, RejectsBadConfig) {
    MsaConfig cfg;
    cfg.step_size = 0.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    const auto pr = pid_problem(4, 3, 14);
    EXPECT_THROW(msa_solve(pr.stack, Vector::Ones(5), pr.spec, MsaConfig{}), DimensionError);
}

TEST(LossBound, HoldsForProportionalOnlyLoss) {
    const auto inst = harness::make_orthogonal_instance(6, 2, 4, 1.0, 15);
    auto spec = harness::instance_loss(inst);
    spec.state_bound = 2.0;
    const auto x = rollout(inst.stack, inst.x0, std::vector<Vector>(4, Vector::Ones(6)));
    for (Index t = 0; t < 4; ++t) {
        const std::span<const Vector> hist(x.data(), static_cast<std::size_t>(t) + 1);
        const double gap = running_loss_bound(hist, Vector::Ones(6), spec, t) - running_loss(hist, Vector::Ones(6), spec, t);
        EXPECT_NEAR(gap, 0.5 * 4 * 2.0, 1e-12);
    }
}

TEST(LossBound, FailsForDerivativeChannel) {
    // x_0 = x_1 = 1 so B = 1 bounds ‖x‖²; u = −2 puts x_1 + u at −1 and the
    // D term reaches ½(−1 − 1)² = 2 against a bound of ½ + ½·2·1 = 1.5.
    RunningLossSpec spec;
    LayerLoss l;
    l.qd = Projector(Matrix::Identity(1, 1));
    spec.layers.assign(2, l);
    spec.state_bound = 1.0;
    const std::vector<Vector> hist{Vector::Constant(1, 1.0), Vector::Constant(1, 1.0)};
    const Vector u = Vector::Constant(1, -2.0);
    EXPECT_DOUBLE_EQ(running_loss(hist, u, spec, 1), 2.0);
    EXPECT_DOUBLE_EQ(running_loss_bound(hist, u, spec, 1), 1.5);
    spec.state_bound.reset();
    EXPECT_THROW(running_loss_bound(hist, u, spec, 1), std::invalid_argument);
}

TEST(Projector, BasisFormMatchesDenseForm) {
    const Matrix v = dynamics::random_orthonormal_columns(9, 3, 16);
    const Projector low = Projector::complement(v);
    const Projector dense(complement_projector(v));
    ASSERT_TRUE(low.basis().has_value());
    EXPECT_FALSE(dense.basis().has_value());
    EXPECT_LE(max_abs(low.matrix() - dense.matrix()), 1e-15);
    const Matrix x = Rng(17).normal_matrix(9, 4);
    EXPECT_LE(max_abs(low.apply(x) - dense.apply(x)), 1e-13);
    EXPECT_LE(max_abs(low.apply_transpose(x) - dense.apply_transpose(x)), 1e-13);
    EXPECT_LE(max_abs(low.apply_gram(x) - dense.apply_gram(x)), 1e-13);
    Matrix out, work, acc = Matrix::Ones(9, 4), acc2 = acc;
    low.apply_into(x, out, work);
    EXPECT_LE(max_abs(out - dense.apply(x)), 1e-13);
    low.add_gram(x, acc, work);
    dense.add_gram(x, acc2, work);
    EXPECT_LE(max_abs(acc - acc2), 1e-13);
}

TEST(RunningLossSpec, ValidateRejectsBadProjectors) {
    auto spec = RunningLossSpec::uniform(2, Matrix(Matrix::Identity(3, 1)), std::nullopt, std::nullopt, 1.0);
    EXPECT_NO_THROW(spec.validate(3));
    EXPECT_THROW(spec.validate(4), DimensionError);
    spec.layers[1].qi = Projector(2.0 * Matrix::Identity(3, 3));
    EXPECT_THROW(spec.validate(3), std::invalid_argument);
    spec.layers[1].qi.reset();
    spec.layers[0].c = -1.0;
    EXPECT_THROW(spec.validate(3), std::invalid_argument);
    EXPECT_THROW(Projector(Matrix::Zero(2, 3)), DimensionError);
}

}  // namespace
