#include "shc/analytic.hpp"

#include <sstream>

namespace shc::analytic {

LambdaSchedule lambda_schedule(double c, Index horizon) {
    if (!(c >= 0.0)) throw std::invalid_argument("regularization c must be nonnegative");
    if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
    LambdaSchedule s;
    s.c = c;
    const auto n = static_cast<std::size_t>(horizon);
    s.lambdas.assign(n + 1, 0.0);
    s.alphas.assign(n, 0.0);
    for (std::size_t t = n; t-- > 0;) {
        const double next = s.lambdas[t + 1];
        s.lambdas[t] = c * (1.0 + next) / (1.0 + next + c);
        s.alphas[t] = alpha_from(c, next);
    }
    return s;
}

void GainSchedule::validate() const {
    if (static_cast<Index>(bases.size()) < schedule.horizon())
        throw DimensionError("gain schedule needs one basis per layer");
    if (bases.empty()) return;
    const Index d = bases.front().rows();
    for (std::size_t t = 0; t < bases.size(); ++t)
        if (bases[t].rows() != d) {
            std::ostringstream os;
            os << "basis at layer " << t << " has " << bases[t].rows() << " rows, expected " << d;
            throw DimensionError(os.str());
        }
}

Matrix GainSchedule::gain_matrix(Index t) const {
    const Matrix& v = bases.at(static_cast<std::size_t>(t));
    const Index d = v.rows();
    const double alpha = schedule.alphas.at(static_cast<std::size_t>(t));
    return (1.0 - alpha) * (Matrix::Identity(d, d) - v * v.transpose());
}

Vector analytic_feedback(const Vector& x, const Matrix& v, double alpha) {
    if (v.rows() != x.size()) throw DimensionError("basis rows must match the state dim");
    return -(1.0 - alpha) * (x - v * (v.transpose() * x));
}

Matrix closed_form_p(const Matrix& v, double lambda) {
    const Index d = v.rows();
    return 0.5 * lambda * (Matrix::Identity(d, d) - v * v.transpose());
}

AnalyticController::AnalyticController(GainSchedule gains) : gains_(std::move(gains)) { gains_.validate(); }

Vector AnalyticController::control(Index t, std::span<const Vector> history) const {
    const auto i = static_cast<std::size_t>(t);
    const Matrix& v = gains_.bases.at(i);
    if (v.rows() != history.back().size()) {
        std::ostringstream os;
        os << "basis at layer " << t << " has " << v.rows() << " rows but the state has dim "
           << history.back().size();
        throw DimensionError(os.str());
    }
    return analytic_feedback(history.back(), v, gains_.schedule.alphas.at(i));
}

BatchForward::BatchForward(const dynamics::LinearStack& stack, const GainSchedule& gains) : dim_(stack.dim()) {
    gains.validate();
    if (gains.schedule.horizon() != stack.horizon()) throw DimensionError("gain schedule and stack horizons differ");
    for (Index t = 0; t < stack.horizon(); ++t) {
        const auto i = static_cast<std::size_t>(t);
        const Matrix& v = gains.bases[i];
        if (v.rows() != dim_) throw DimensionError("basis rows do not match the stack dim");
        const double alpha = gains.schedule.alphas[i];
        Matrix a(dim_, dim_ + v.cols());
        a.leftCols(dim_) = alpha * stack[t];
        a.rightCols(v.cols()).noalias() = (1.0 - alpha) * stack[t] * v;
        const bool last = t + 1 == stack.horizon();
        const Index r_next = last ? 0 : gains.bases[i + 1].cols();
        Matrix op(dim_ + r_next, a.cols());
        op.topRows(dim_) = a;
        if (!last) op.bottomRows(r_next).noalias() = gains.bases[i + 1].transpose() * a;
        ops_.push_back(std::move(op));
        bases_.push_back(v);
    }
}

void BatchForward::run(Matrix& states) {
    if (states.rows() != dim_) throw DimensionError("state batch rows do not match the stack dim");
    if (ops_.empty()) return;
    const Index n = states.cols();
    const Index r0 = bases_.front().cols();
    cur_.resize(dim_ + r0, n);
    cur_.topRows(dim_) = states;
    cur_.bottomRows(r0).noalias() = bases_.front().transpose() * states;
    for (const auto& op : ops_) {
        next_.resize(op.rows(), n);
        next_.noalias() = op * cur_;
        cur_.swap(next_);
    }
    states = cur_.topRows(dim_);
}

namespace {

void add_residual(Vector& acc, double gain, const manifolds::EmbeddingBasis* basis, Index t, const Vector& input) {
    if (basis == nullptr || gain == 0.0 || !basis->has_layer(t)) return;
    const Matrix& v = basis->at(t);
    if (v.rows() != input.size()) {
        std::ostringstream os;
        os << "channel " << manifolds::to_string(basis->channel) << " basis at layer " << t << " has "
           << v.rows() << " rows but the state has dim " << input.size();
        throw DimensionError(os.str());
    }
    acc += gain * (input - v * (v.transpose() * input));
}

}  // namespace

Vector practical_feedback(std::span<const Vector> history, const ChannelBases& bases, const PidGains& gains,
                          double alpha) {
    if (history.empty()) throw std::invalid_argument("practical_feedback needs at least the current state");
    if (gains.kp < 0.0 || gains.ki < 0.0 || gains.kd < 0.0) throw std::invalid_argument("PID gains must be >= 0");
    const auto t = static_cast<Index>(history.size()) - 1;
    const Vector& x = history.back();
    Vector acc = Vector::Zero(x.size());

    add_residual(acc, gains.kp, bases.p, t, x);
    if (bases.i != nullptr && gains.ki != 0.0) {
        Vector integral = x;
        for (Index s = 0; s < t; ++s) integral += history[static_cast<std::size_t>(s)];
        add_residual(acc, gains.ki, bases.i, t, integral);
    }
    if (t >= 1) add_residual(acc, gains.kd, bases.d, t, x - history[static_cast<std::size_t>(t) - 1]);
    return -(1.0 - alpha) * acc;
}

PracticalController::PracticalController(ChannelBases bases, PidGains gains, LambdaSchedule schedule)
    : bases_(bases), gains_(gains), schedule_(std::move(schedule)) {}

Vector PracticalController::control(Index t, std::span<const Vector> history) const {
    if (static_cast<Index>(history.size()) != t + 1)
        throw std::invalid_argument("practical controller expects the full history x_0..x_t");
    return practical_feedback(history, bases_, gains_, schedule_.alphas.at(static_cast<std::size_t>(t)));
}

}  // namespace shc::analytic
