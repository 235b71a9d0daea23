#include "shc/riccati.hpp"

#include <cmath>
#include <sstream>

namespace shc::riccati {

QMatrix::QMatrix(Matrix q) : q_(std::move(q)) {
    if (q_.rows() != q_.cols()) throw std::invalid_argument("Q must be square");
    if (max_abs(q_ - q_.transpose()) > 1e-12) throw std::invalid_argument("Q must be symmetric");
    if (q_.rows() > 0) {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(q_, Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() < -1e-10) throw std::invalid_argument("Q must be PSD");
    }
}

QMatrix QMatrix::complement_of(std::span<const Matrix> bases, Index dim) {
    Index cols = 0;
    for (const auto& b : bases) {
        if (b.rows() != dim) throw DimensionError("channel basis rows must equal the state dim");
        cols += b.cols();
    }
    Matrix q = Matrix::Identity(dim, dim);
    if (cols == 0) return QMatrix(std::move(q));

    Matrix stacked(dim, cols);
    Index at = 0;
    for (const auto& b : bases) {
        stacked.middleCols(at, b.cols()) = b;
        at += b.cols();
    }
    Eigen::BDCSVD<Matrix> svd(stacked, Eigen::ComputeThinU);
    const Vector& s = svd.singularValues();
    Index rank = 0;
    while (rank < s.size() && s(rank) > 1e-10 * s(0)) ++rank;
    const Matrix u = svd.matrixU().leftCols(rank);
    q -= u * u.transpose();
    q = 0.5 * (q + q.transpose()).eval();
    return QMatrix(std::move(q));
}

QMatrix QMatrix::complement_of(const Matrix& basis) {
    return complement_of(std::span<const Matrix>(&basis, 1), basis.rows());
}

namespace {

// Solves (M + cI) X = B. Returns false when the LDLT pivots fall under the
// floor; X is then filled by the pseudo-inverse if allowed.
bool regularized_solve(const Matrix& m, double c, const Matrix& b, bool allow_pinv, Matrix& x) {
    const Index d = m.rows();
    const Matrix a = m + c * Matrix::Identity(d, d);
    Eigen::LDLT<Matrix> ldlt(a);
    if (ldlt.info() == Eigen::Success) {
        const Vector pivots = ldlt.vectorD();
        const double largest = pivots.cwiseAbs().maxCoeff();
        if (largest > 0.0 && pivots.minCoeff() > kPivotFloor * largest) {
            x = ldlt.solve(b);
            return true;
        }
    }
    if (!allow_pinv) return false;
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a);
    cod.setThreshold(kPivotFloor);
    x = cod.pseudoInverse() * b;
    return false;
}

void check_layer(const Matrix& theta, const Matrix& p_next, const QMatrix& q) {
    const Index d = theta.rows();
    if (theta.cols() != d || p_next.rows() != d || p_next.cols() != d || q.dim() != d)
        throw DimensionError("θ, P and Q must share the state dim");
}

}  // namespace

RiccatiSchedule riccati_backward(const dynamics::LinearStack& stack, std::span<const QMatrix> qs, double c) {
    if (!(c >= 0.0)) throw std::invalid_argument("regularization c must be nonnegative");
    const Index horizon = stack.horizon();
    if (static_cast<Index>(qs.size()) != horizon)
        throw DimensionError("need one Q per layer");
    const Index d = stack.dim();

    RiccatiSchedule sched;
    sched.c = c;
    sched.p.assign(static_cast<std::size_t>(horizon) + 1, Matrix::Zero(d, d));
    for (Index t = horizon - 1; t >= 0; --t) {
        const Matrix& theta = stack[t];
        const Matrix& p_next = sched.p[static_cast<std::size_t>(t) + 1];
        const QMatrix& q = qs[static_cast<std::size_t>(t)];
        check_layer(theta, p_next, q);

        const Matrix carried = theta.transpose() * p_next * theta;
        const Matrix m = q.matrix() + 2.0 * carried;
        Matrix solved;
        if (!regularized_solve(m, c, m, /*allow_pinv=*/true, solved)) sched.degenerate = true;
        Matrix p = 0.5 * q.matrix() + carried - 0.5 * m.transpose() * solved;
        sched.p[static_cast<std::size_t>(t)] = 0.5 * (p + p.transpose());
    }
    return sched;
}

Matrix lqr_gain(const Matrix& theta, const Matrix& p_next, const QMatrix& q, double c, bool allow_pseudo_inverse) {
    check_layer(theta, p_next, q);
    const Matrix m = q.matrix() + 2.0 * theta.transpose() * p_next * theta;
    Matrix k;
    if (!regularized_solve(m, c, m, allow_pseudo_inverse, k) && !allow_pseudo_inverse)
        throw DegenerateScheduleError("feedback solve is singular; c = 0 needs the pseudo-inverse path");
    return k;
}

Vector lqr_feedback(const Vector& x, const Matrix& theta, const Matrix& p_next, const QMatrix& q, double c,
                    bool allow_pseudo_inverse) {
    check_layer(theta, p_next, q);
    if (x.size() != theta.rows()) throw DimensionError("state dim does not match θ");
    const Matrix m = q.matrix() + 2.0 * theta.transpose() * p_next * theta;
    Matrix solved;
    const Matrix rhs = m * x;
    if (!regularized_solve(m, c, rhs, allow_pseudo_inverse, solved) && !allow_pseudo_inverse)
        throw DegenerateScheduleError("feedback solve is singular; c = 0 needs the pseudo-inverse path");
    return -solved.col(0);
}

RiccatiController::RiccatiController(const dynamics::LinearStack& stack, std::span<const QMatrix> qs,
                                     const RiccatiSchedule& sched) {
    const Index horizon = stack.horizon();
    if (static_cast<Index>(qs.size()) != horizon || static_cast<Index>(sched.p.size()) != horizon + 1)
        throw DimensionError("Riccati controller needs one Q per layer and T+1 value matrices");
    gains_.reserve(static_cast<std::size_t>(horizon));
    for (Index t = 0; t < horizon; ++t)
        gains_.push_back(lqr_gain(stack[t], sched.p[static_cast<std::size_t>(t) + 1],
                                  qs[static_cast<std::size_t>(t)], sched.c, sched.degenerate));
}

Vector RiccatiController::control(Index t, std::span<const Vector> history) const {
    return -(gains_.at(static_cast<std::size_t>(t)) * history.back());
}

double quadratic_running_loss(const Vector& x, const Vector& u, const QMatrix& q, double c) {
    const Vector v = x + u;
    return 0.5 * v.dot(q.matrix() * v) + 0.5 * c * u.squaredNorm();
}

double bellman_check(const dynamics::ControlledTrajectory& traj, const RiccatiSchedule& sched,
                     std::span<const QMatrix> qs, double c) {
    const std::size_t horizon = traj.controls.size();
    if (traj.states.size() != horizon + 1 || sched.p.size() != horizon + 1 || qs.size() != horizon)
        throw DimensionError("trajectory, schedule and Q sequence lengths disagree");
    double worst = 0.0;
    for (std::size_t t = 0; t < horizon; ++t) {
        const Vector& x = traj.states[t];
        const Vector& xn = traj.states[t + 1];
        const double lhs = x.dot(sched.p[t] * x);
        const double rhs = quadratic_running_loss(x, traj.controls[t], qs[t], c) + xn.dot(sched.p[t + 1] * xn);
        worst = std::max(worst, std::abs(lhs - rhs));
    }
    return worst;
}

}  // namespace shc::riccati
