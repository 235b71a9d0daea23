#include "shc/analytic.hpp"
#include "shc/harness/experiments.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace {

using namespace shc;
using namespace shc::analytic;
using manifolds::Channel;
using manifolds::EmbeddingBasis;

EmbeddingBasis constant_basis(Channel ch, const Matrix& v, Index layers) {
    EmbeddingBasis b;
    b.channel = ch;
    b.per_layer.assign(static_cast<std::size_t>(layers), v);
    b.temporal.assign(static_cast<std::size_t>(layers), std::nullopt);
    return b;
}

EmbeddingBasis layered_basis(Channel ch, const std::vector<Matrix>& bases) {
    EmbeddingBasis b;
    b.channel = ch;
    for (const auto& v : bases) b.per_layer.emplace_back(v);
    b.temporal.assign(bases.size(), std::nullopt);
    return b;
}

TEST(LambdaSchedule, HandValues) {
    const auto s = lambda_schedule(1.0, 2);
    ASSERT_EQ(s.lambdas.size(), 3u);
    ASSERT_EQ(s.alphas.size(), 2u);
    EXPECT_NEAR(s.lambdas[0], 0.6, 1e-15);
    EXPECT_NEAR(s.lambdas[1], 0.5, 1e-15);
    EXPECT_EQ(s.lambdas[2], 0.0);
    EXPECT_NEAR(s.alphas[0], 0.4, 1e-15);
    EXPECT_NEAR(s.alphas[1], 0.5, 1e-15);
}

TEST(LambdaSchedule, ZeroCostGivesZeros) {
    const auto s = lambda_schedule(0.0, 5);
    for (double l : s.lambdas) EXPECT_EQ(l, 0.0);
    for (double a : s.alphas) EXPECT_EQ(a, 0.0);
}

TEST(LambdaSchedule, RejectsBadInput) {
    EXPECT_THROW(lambda_schedule(-0.1, 3), std::invalid_argument);
    EXPECT_THROW(lambda_schedule(1.0, 0), std::invalid_argument);
}

TEST(LambdaSchedule, ConvergesToFixedPoint) {
    for (double c : {0.1, 1.0, 10.0}) {
        const auto s = lambda_schedule(c, 200);
        const double star = 0.5 * (std::sqrt(1.0 + 4.0 * c) - 1.0);
        EXPECT_NEAR(s.lambdas.front(), star, 1e-12) << c;
        for (std::size_t t = 0; t + 1 < s.lambdas.size(); ++t) {
            EXPECT_GE(s.lambdas[t], s.lambdas[t + 1]);
            EXPECT_GT(s.alphas[t], 0.0);
            EXPECT_LT(s.alphas[t], 1.0);
        }
    }
}

TEST(AnalyticFeedback, HandExample) {
    const Vector u = analytic_feedback((Vector(2) << 3, 4).finished(), Vector::Unit(2, 0), 0.5);
    EXPECT_LE(max_abs(u - (Vector(2) << 0, -2).finished()), 1e-15);
    EXPECT_THROW(analytic_feedback(Vector::Ones(3), Vector::Unit(2, 0), 0.5), DimensionError);
}

TEST(AnalyticFeedback, MatchesExplicitGain) {
    const auto inst = harness::make_orthogonal_instance(7, 2, 3, 1.0, 1);
    const Vector x = Rng(2).normal_vector(7);
    for (Index t = 0; t < 3; ++t) {
        const auto i = static_cast<std::size_t>(t);
        const Vector u = analytic_feedback(x, inst.gains.bases[i], inst.gains.schedule.alphas[i]);
        EXPECT_LE(max_abs(u + inst.gains.gain_matrix(t) * x), 1e-14);
    }
}

TEST(ClosedFormP, TraceAndNullSpace) {
    const Matrix v = dynamics::random_orthonormal_columns(9, 4, 3);
    const Matrix p = closed_form_p(v, 0.8);
    EXPECT_NEAR(p.trace(), 0.5 * 0.8 * 5.0, 1e-12);
    EXPECT_LE(max_abs(p * v), 1e-14);
    EXPECT_LE(max_abs(p - p.transpose()), 1e-15);
}

TEST(GainSchedule, ValidatesCoverage) {
    GainSchedule g{{Matrix::Identity(3, 1)}, lambda_schedule(1.0, 2)};
    EXPECT_THROW(g.validate(), DimensionError);
    g.bases.push_back(Matrix::Identity(4, 1));
    EXPECT_THROW(g.validate(), DimensionError);
    g.bases.back() = Matrix::Identity(3, 2);
    EXPECT_NO_THROW(g.validate());
}

TEST(AnalyticController, ResidualShrinksByAlphaEachLayer) {
    const auto inst = harness::make_orthogonal_instance(16, 4, 6, 1.0, 4);
    const Vector x0 = inst.x0 + inst.z;
    const auto traj = dynamics::forward(inst.stack, x0, AnalyticController(inst.gains));
    for (std::size_t t = 0; t < 6; ++t) {
        const double before = manifolds::residual(traj.states[t], inst.bases[t]);
        const double after = manifolds::residual(traj.states[t + 1], inst.bases[t + 1]);
        EXPECT_NEAR(after, inst.gains.schedule.alphas[t] * before, 1e-12);
    }
}

TEST(BatchForward, MatchesPerVectorForward) {
    const auto inst = harness::make_orthogonal_instance(12, 3, 5, 0.7, 5);
    Rng rng(6);
    Matrix x = rng.normal_matrix(12, 9);
    const Matrix x0 = x;
    BatchForward fwd(inst.stack, inst.gains);
    EXPECT_EQ(fwd.horizon(), 5);
    EXPECT_EQ(fwd.dim(), 12);
    fwd.run(x);
    const AnalyticController ctrl(inst.gains);
    for (Index n = 0; n < 9; ++n) {
        const auto traj = dynamics::forward(inst.stack, x0.col(n), ctrl);
        EXPECT_LE(max_abs(x.col(n) - traj.states.back()), 1e-12);
    }
    Matrix again = x0;
    fwd.run(again);
    EXPECT_EQ(again, x);
}

TEST(BatchForward, RejectsMismatch) {
    const auto inst = harness::make_orthogonal_instance(6, 2, 3, 1.0, 7);
    GainSchedule short_gains = inst.gains;
    short_gains.schedule = lambda_schedule(1.0, 2);
    EXPECT_THROW(BatchForward(inst.stack, short_gains), DimensionError);
    BatchForward fwd(inst.stack, inst.gains);
    Matrix bad = Matrix::Zero(5, 2);
    EXPECT_THROW(fwd.run(bad), DimensionError);
}

TEST(PracticalFeedback, ZeroGainsGiveZeroControl) {
    const Index d = 5;
    const auto p = constant_basis(Channel::P, Matrix::Identity(d, 2), 3);
    const auto i = constant_basis(Channel::I, Matrix::Identity(d, 1), 3);
    const std::vector<Vector> hist{Vector::Ones(d), Vector::LinSpaced(d, 0, 1)};
    const Vector u = practical_feedback(hist, {&p, &i, &p}, {0.0, 0.0, 0.0}, 0.3);
    EXPECT_EQ(u, Vector::Zero(d));
    EXPECT_THROW(practical_feedback(hist, {&p, nullptr, nullptr}, {-1.0, 0.0, 0.0}, 0.3), std::invalid_argument);
    EXPECT_THROW(practical_feedback({}, {&p, nullptr, nullptr}, {1.0, 0.0, 0.0}, 0.3), std::invalid_argument);
}

TEST(PracticalFeedback, ProportionalOnlyEqualsAnalytic) {
    const auto inst = harness::make_orthogonal_instance(10, 3, 4, 1.0, 8);
    const auto p = layered_basis(Channel::P, inst.bases);
    const PracticalController pc({&p, nullptr, nullptr}, {1.0, 0.0, 0.0}, inst.gains.schedule);
    const Vector x0 = inst.x0 + inst.z;
    const auto a = dynamics::forward(inst.stack, x0, AnalyticController(inst.gains));
    const auto b = dynamics::forward(inst.stack, x0, pc);
    for (std::size_t t = 0; t < a.states.size(); ++t) EXPECT_LE(max_abs(a.states[t] - b.states[t]), 1e-13);
}

TEST(PracticalFeedback, SingleActiveChannelScalesItsResidualByAlpha) {
    const Index d = 6;
    const Matrix vi = Matrix::Identity(d, 2);
    const auto i = constant_basis(Channel::I, vi, 1);
    const Vector x0 = (Vector(d) << 1, 2, 3, 4, 5, 6).finished();
    const std::vector<Vector> hist{x0};
    const Vector u = practical_feedback(hist, {nullptr, &i, nullptr}, {0.0, 1.0, 0.0}, 0.25);
    EXPECT_NEAR(manifolds::residual(x0 + u, vi), 0.25 * manifolds::residual(x0, vi), 1e-14);
}

TEST(PracticalFeedback, OverlappingComplementsBreakPerChannelShrink) {
    // Orthogonal channel bases e1, e2, e3 with all gains 1 and α = 0: each
    // complement contains the other bases, so the channels push on each other.
    const Index d = 6;
    const auto p = constant_basis(Channel::P, Matrix(Vector::Unit(d, 0)), 2);
    const auto i = constant_basis(Channel::I, Matrix(Vector::Unit(d, 1)), 2);
    const auto dd = constant_basis(Channel::D, Matrix(Vector::Unit(d, 2)), 2);
    const Vector x0 = (Vector(d) << 1, 1, 1, 0, 0, 0).finished();
    const std::vector<Vector> hist{x0};
    const Vector x1 = x0 + practical_feedback(hist, {&p, &i, &dd}, {1.0, 1.0, 1.0}, 0.0);
    EXPECT_LE(max_abs(x1 - (Vector(d) << 0, 0, -1, 0, 0, 0).finished()), 1e-15);
    EXPECT_NEAR(manifolds::residual(x1, *p.per_layer[0]), 1.0, 1e-15);
}

TEST(PracticalFeedback, DerivativeTermSkippedAtLayerZero) {
    const Index d = 4;
    const auto dd = constant_basis(Channel::D, Matrix::Identity(d, 1), 2);
    const std::vector<Vector> h0{Vector::Ones(d)};
    EXPECT_EQ(practical_feedback(h0, {nullptr, nullptr, &dd}, {0.0, 0.0, 1.0}, 0.5), Vector::Zero(d));
    const std::vector<Vector> h1{Vector::Zero(d), Vector::Ones(d)};
    const Vector u = practical_feedback(h1, {nullptr, nullptr, &dd}, {0.0, 0.0, 1.0}, 0.5);
    EXPECT_LE(max_abs(u - (Vector(d) << 0, -0.5, -0.5, -0.5).finished()), 1e-15);
}

}  // namespace
