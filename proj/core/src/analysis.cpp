#include "shc/analysis.hpp"

#include <algorithm>
#include <cmath>

namespace shc::analysis {

PerturbationSplit decompose_perturbation(const Vector& z, const Matrix& v0) {
    if (v0.rows() != z.size()) throw DimensionError("basis rows must match the perturbation dim");
    PerturbationSplit s;
    s.parallel = v0 * (v0.transpose() * z);
    s.perpendicular = z - s.parallel;
    s.parallel_norm = s.parallel.norm();
    s.perpendicular_norm = s.perpendicular.norm();
    return s;
}

double predict_error(const analytic::LambdaSchedule& sched, const PerturbationSplit& split, Index t) {
    if (t < 1 || t > sched.horizon()) throw std::invalid_argument("predict_error needs 1 <= t <= T");
    double decay = 1.0;
    for (Index s = 0; s < t; ++s) {
        const double a = sched.alphas[static_cast<std::size_t>(s)];
        decay *= a * a;
    }
    return decay * split.perpendicular_norm * split.perpendicular_norm + split.parallel_norm * split.parallel_norm;
}

std::vector<double> predict_errors(const analytic::LambdaSchedule& sched, const PerturbationSplit& split) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(sched.horizon()));
    for (Index t = 1; t <= sched.horizon(); ++t) out.push_back(predict_error(sched, split, t));
    return out;
}

std::vector<double> empirical_error(const dynamics::LinearStack& stack, const analytic::GainSchedule& gains,
                                    const Vector& x0, const Vector& z) {
    if (z.size() != x0.size()) throw DimensionError("perturbation dim must match the state dim");
    const analytic::AnalyticController controlled(gains);
    const auto perturbed = dynamics::forward(stack, x0 + z, controlled);
    const auto clean = dynamics::forward(stack, x0, dynamics::ZeroController{});
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(stack.horizon()));
    for (std::size_t t = 1; t < perturbed.states.size(); ++t)
        out.push_back((perturbed.states[t] - clean.states[t]).squaredNorm());
    return out;
}

double LemmaReport::worst() const {
    return std::max({gain_identity, transported_idempotence, transported_endpoint, difference_product,
                     collapsed_product});
}

LemmaReport verify_lemmas(const dynamics::LinearStack& stack, const analytic::GainSchedule& gains) {
    if (!stack.orthogonal()) throw std::invalid_argument("lemma checks require an orthogonal stack");
    gains.validate();
    const Index horizon = stack.horizon();
    const Index d = stack.dim();
    if (gains.schedule.horizon() != horizon) throw DimensionError("gain schedule horizon differs from the stack");
    const Matrix eye = Matrix::Identity(d, d);

    std::vector<Matrix> proj;  // P_t = V_tV_tᵀ
    std::vector<Matrix> inverse;
    for (Index t = 0; t < horizon; ++t) {
        const Matrix& v = gains.bases[static_cast<std::size_t>(t)];
        if (v.rows() != d) throw DimensionError("basis rows must match the stack dim");
        proj.push_back(v * v.transpose());
        inverse.push_back(stack[t].partialPivLu().inverse());
    }
    const auto alpha = [&](Index t) { return gains.schedule.alphas[static_cast<std::size_t>(t)]; };

    LemmaReport rep;
    for (Index t = 0; t < horizon; ++t) {
        const Matrix lhs = eye - gains.gain_matrix(t);
        const Matrix rhs = alpha(t) * eye + (1.0 - alpha(t)) * proj[static_cast<std::size_t>(t)];
        rep.gain_identity = std::max(rep.gain_identity, max_abs(lhs - rhs));
    }

    // P_t^s transported back s layers; G_t^t uses the fully transported one.
    std::vector<Matrix> g_diag;
    for (Index t = 0; t < horizon; ++t) {
        Matrix pts = proj[static_cast<std::size_t>(t)];
        for (Index s = 0; s <= t; ++s) {
            rep.transported_idempotence = std::max(rep.transported_idempotence, max_abs(pts * pts - pts));
            if (s == t) break;
            const Index layer = t - s - 1;
            pts = inverse[static_cast<std::size_t>(layer)] * pts * stack[layer];
        }
        rep.transported_endpoint = std::max(rep.transported_endpoint, max_abs(pts - proj.front()));
        g_diag.push_back(alpha(t) * eye + (1.0 - alpha(t)) * pts);
    }

    // Error map z ↦ x̄_t − x_t simulated column by column.
    Matrix error_map = eye;
    Matrix transport = eye;  // θ_{t−1}···θ_0
    Matrix product = eye;    // G_{t−1}^{t−1}···G_0^0
    double alpha_product = 1.0;
    for (Index t = 0; t < horizon; ++t) {
        const Matrix& v = gains.bases[static_cast<std::size_t>(t)];
        for (Index col = 0; col < d; ++col) {
            const Vector e = error_map.col(col);
            error_map.col(col) = stack[t] * (e + analytic::analytic_feedback(e, v, alpha(t)));
        }
        transport = stack[t] * transport;
        product = g_diag[static_cast<std::size_t>(t)] * product;
        alpha_product *= alpha(t);

        rep.difference_product = std::max(rep.difference_product, max_abs(error_map - transport * product));
        const Matrix collapsed = alpha_product * eye + (1.0 - alpha_product) * proj.front();
        rep.collapsed_product = std::max(rep.collapsed_product, max_abs(product - collapsed));
    }
    return rep;
}

std::vector<GapRow> orthogonality_gap_study(Index dim, Index rank, Index horizon, double c, double epsilon,
                                            std::uint64_t seed) {
    const Rng root(seed);
    const auto base = dynamics::LinearStack::random_orthogonal(dim, horizon, root.split(1).seed());
    std::vector<Matrix> layers;
    for (Index t = 0; t < horizon; ++t) {
        Rng noise = root.split(100 + static_cast<std::uint64_t>(t));
        Matrix th = base[t] + epsilon * noise.normal_matrix(dim, dim);
        for (Index j = 0; j < dim; ++j) th.col(j).normalize();
        layers.push_back(std::move(th));
    }
    const dynamics::LinearStack stack(std::move(layers), false);

    analytic::GainSchedule gains;
    gains.schedule = analytic::lambda_schedule(c, horizon);
    Matrix v = dynamics::random_orthonormal_columns(dim, rank, root.split(2).seed());
    for (Index t = 0; t <= horizon; ++t) {
        gains.bases.push_back(v);
        if (t == horizon) break;
        Eigen::HouseholderQR<Matrix> qr(stack[t] * v);
        v = qr.householderQ() * Matrix::Identity(dim, rank);
    }

    Rng draw = root.split(3);
    const Vector x0 = gains.bases.front() * draw.normal_vector(rank);
    const Vector z = dynamics::make_perturbation(gains.bases.front(), 1.0, 3.0, root.split(4).seed());
    const auto split = decompose_perturbation(z, gains.bases.front());
    const auto predicted = predict_errors(gains.schedule, split);
    const auto empirical = empirical_error(stack, gains, x0, z);

    std::vector<GapRow> rows;
    for (std::size_t i = 0; i < predicted.size(); ++i)
        rows.push_back({static_cast<Index>(i) + 1, predicted[i], empirical[i], std::abs(empirical[i] - predicted[i])});
    return rows;
}

}  // namespace shc::analysis
