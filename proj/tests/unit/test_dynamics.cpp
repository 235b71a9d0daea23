#include "shc/analytic.hpp"
#include "shc/dynamics.hpp"
#include "shc/manifolds.hpp"

#include <gtest/gtest.h>

namespace {

using namespace shc;
using namespace shc::dynamics;

TEST(RandomOrthogonal, OneByOneIsPlusOne) {
    const Matrix q = random_orthogonal(1, 7);
    ASSERT_EQ(q.rows(), 1);
    EXPECT_DOUBLE_EQ(q(0, 0), 1.0);
}

TEST(RandomOrthogonal, OrthogonalAndDeterministic) {
    const Matrix a = random_orthogonal(9, 3);
    EXPECT_LE(orthonormality_defect(a), 1e-12);
    EXPECT_EQ(a, random_orthogonal(9, 3));
    EXPECT_NE(a, random_orthogonal(9, 4));
    EXPECT_THROW(random_orthogonal(0, 3), std::invalid_argument);
    EXPECT_THROW(random_orthonormal_columns(3, 4, 1), std::invalid_argument);
}

TEST(LinearStack, ValidatesLayers) {
    EXPECT_THROW(LinearStack({}, false), std::invalid_argument);
    EXPECT_THROW(LinearStack({Matrix::Identity(2, 2), Matrix::Identity(3, 3)}, false), std::invalid_argument);
    EXPECT_THROW(LinearStack({Matrix::Ones(2, 3)}, false), std::invalid_argument);
    EXPECT_THROW(LinearStack({2.0 * Matrix::Identity(2, 2)}, true), std::invalid_argument);
    EXPECT_NO_THROW(LinearStack({2.0 * Matrix::Identity(2, 2)}, false));
    const auto s = LinearStack::random_orthogonal(5, 4, 1);
    EXPECT_EQ(s.horizon(), 4);
    EXPECT_EQ(s.dim(), 5);
    EXPECT_TRUE(s.orthogonal());
}

TEST(Forward, ZeroControllerOnIdentityStackKeepsState) {
    const auto stack = LinearStack::identity(3, 4);
    const Vector x0 = (Vector(3) << 1, -2, 3).finished();
    const auto traj = forward(stack, x0, ZeroController{});
    ASSERT_EQ(traj.states.size(), 5u);
    ASSERT_EQ(traj.controls.size(), 4u);
    for (const auto& x : traj.states) EXPECT_EQ(x, x0);
    EXPECT_EQ(trajectory_defect(stack, traj), 0.0);
}

TEST(Forward, OrthogonalStackConservesNorm) {
    const auto stack = LinearStack::random_orthogonal(8, 6, 2);
    const Vector x0 = Rng(3).normal_vector(8);
    const auto traj = forward(stack, x0, ZeroController{});
    for (const auto& x : traj.states) EXPECT_NEAR(x.norm(), x0.norm(), 1e-12);
}

TEST(Forward, OpenLoopControlsEnterBeforeTheLayer) {
    const auto stack = LinearStack::random_orthogonal(4, 2, 4);
    const Vector x0 = Vector::Unit(4, 1);
    const std::vector<Vector> u{Vector::Unit(4, 0), Vector::Unit(4, 3)};
    const auto traj = forward(stack, x0, OpenLoopController(u));
    const Vector x1 = stack[0] * (x0 + u[0]);
    EXPECT_LE(max_abs(traj.states[1] - x1), 1e-14);
    EXPECT_LE(max_abs(traj.states[2] - stack[1] * (x1 + u[1])), 1e-14);
    EXPECT_LE(trajectory_defect(stack, traj), 1e-15);
}

TEST(Forward, AnalyticWithZeroCostRemovesOffSubspacePartInOneStep) {
    const auto stack = LinearStack::random_orthogonal(6, 3, 5);
    const Matrix v0 = random_orthonormal_columns(6, 2, 6);
    analytic::GainSchedule gains{propagate_basis(stack, v0), analytic::lambda_schedule(0.0, 3)};
    const Vector x0 = Rng(7).normal_vector(6);
    const auto traj = forward(stack, x0, analytic::AnalyticController(gains));
    EXPECT_LE(max_abs(traj.states[1] - stack[0] * v0 * (v0.transpose() * x0)), 1e-12);
    EXPECT_LE(manifolds::residual(traj.states[1], gains.bases[1]), 1e-12);
}

TEST(Forward, DimensionMismatchThrows) {
    const auto stack = LinearStack::identity(3, 2);
    EXPECT_THROW(forward(stack, Vector::Ones(4), ZeroController{}), DimensionError);
    EXPECT_THROW(forward(stack, Vector::Ones(3), OpenLoopController({Vector::Ones(2), Vector::Ones(2)})),
                 std::runtime_error);
    EXPECT_THROW(forward(stack, Vector::Ones(3), OpenLoopController({Vector::Ones(3)})), std::out_of_range);
}

TEST(PropagateBasis, FollowsLayers) {
    const auto stack = LinearStack::random_orthogonal(7, 4, 8);
    const Matrix v0 = random_orthonormal_columns(7, 3, 9);
    const auto bases = propagate_basis(stack, v0);
    ASSERT_EQ(bases.size(), 5u);
    for (Index t = 0; t < 4; ++t) {
        const auto i = static_cast<std::size_t>(t);
        EXPECT_LE(max_abs(bases[i + 1] - stack[t] * bases[i]), 1e-14);
        EXPECT_LE(orthonormality_defect(bases[i + 1]), 1e-12);
    }
    EXPECT_THROW(propagate_basis(LinearStack({2.0 * Matrix::Identity(7, 7)}, false), v0), std::invalid_argument);
    EXPECT_THROW(propagate_basis(stack, Matrix::Identity(6, 2)), DimensionError);
}

TEST(Perturbation, NormsAndSplit) {
    const Matrix v0 = random_orthonormal_columns(10, 3, 10);
    EXPECT_EQ(make_perturbation(v0, 0.0, 0.0, 1).norm(), 0.0);
    const Vector z = make_perturbation(v0, 3.0, 4.0, 2);
    EXPECT_NEAR(z.norm(), 5.0, 1e-12);
    const Vector par = v0 * (v0.transpose() * z);
    EXPECT_NEAR(par.norm(), 3.0, 1e-12);
    EXPECT_NEAR((z - par).norm(), 4.0, 1e-12);
    EXPECT_EQ(z, make_perturbation(v0, 3.0, 4.0, 2));
}

TEST(Perturbation, RejectsImpossibleRequests) {
    EXPECT_THROW(make_perturbation(Matrix::Identity(3, 3), 0.0, 1.0, 1), std::invalid_argument);
    EXPECT_THROW(make_perturbation(Matrix(3, 0), 1.0, 0.0, 1), std::invalid_argument);
    EXPECT_THROW(make_perturbation(Matrix::Identity(3, 1), -1.0, 0.0, 1), std::invalid_argument);
}

TEST(Argmax, LowestIndexOnTies) {
    EXPECT_EQ(argmax((Vector(4) << 1, 3, 3, 2).finished()), 1);
    EXPECT_THROW(argmax(Vector()), std::invalid_argument);
}

TEST(SyntheticTask, CleanSamplesStayOnSubspaceAndAreClassifiedExactly) {
    SyntheticTask::Options opt;
    opt.dim = 16;
    opt.rank = 4;
    opt.horizon = 5;
    opt.seed = 11;
    const SyntheticTask task(opt);
    for (std::uint64_t i = 0; i < 50; ++i) {
        const auto s = task.sample(i);
        EXPECT_LE(manifolds::residual(s.x0, task.data_basis()), 1e-12);
        const auto traj = forward(task.stack(), s.x0, ZeroController{});
        EXPECT_LE(manifolds::residual(traj.states.back(), task.propagated_bases().back()), 1e-12);
        EXPECT_EQ(task.predict(traj.states.back()), s.label);
    }
    EXPECT_EQ(task.sample(3).x0, SyntheticTask(opt).sample(3).x0);
}

}  // namespace
