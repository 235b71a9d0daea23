#include "shc/manifolds.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace shc::manifolds {

std::string_view to_string(Channel ch) {
    switch (ch) {
        case Channel::P: return "P";
        case Channel::I: return "I";
        case Channel::D: return "D";
    }
    return "?";
}

const Matrix& EmbeddingBasis::at(Index t) const {
    if (!has_layer(t)) {
        std::ostringstream os;
        os << "channel " << to_string(channel) << " has no basis at layer " << t;
        throw std::out_of_range(os.str());
    }
    return *per_layer[static_cast<std::size_t>(t)];
}

std::vector<Index> EmbeddingBasis::ranks() const {
    std::vector<Index> out;
    out.reserve(per_layer.size());
    for (const auto& v : per_layer) out.push_back(v ? v->cols() : -1);
    return out;
}

namespace {

bool same(const std::optional<Matrix>& a, const std::optional<Matrix>& b) {
    if (a.has_value() != b.has_value()) return false;
    if (!a) return true;
    return a->rows() == b->rows() && a->cols() == b->cols() &&
           std::equal(a->data(), a->data() + a->size(), b->data());
}

bool same(const std::vector<std::optional<Matrix>>& a, const std::vector<std::optional<Matrix>>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!same(a[i], b[i])) return false;
    return true;
}

}  // namespace

bool operator==(const EmbeddingBasis& a, const EmbeddingBasis& b) {
    return a.channel == b.channel && a.threshold == b.threshold && same(a.per_layer, b.per_layer) &&
           same(a.temporal, b.temporal);
}

void validate(const TrajectoryEnsemble& e) {
    if (e.empty()) throw std::invalid_argument("trajectory ensemble needs at least one layer");
    for (const auto& layer : e) {
        tensorkit::validate(layer);
        if (layer.dims() != e.front().dims())
            throw DimensionError("all layers of a trajectory ensemble must share dims");
    }
}

TrajectoryEnsemble accumulate_states(const TrajectoryEnsemble& e) {
    validate(e);
    TrajectoryEnsemble out;
    out.reserve(e.size());
    Tensor3 running = e.front();
    out.push_back(running);
    for (std::size_t t = 1; t < e.size(); ++t) {
        running += e[t];
        out.push_back(running);
    }
    return out;
}

TrajectoryEnsemble difference_states(const TrajectoryEnsemble& e) {
    validate(e);
    if (e.size() < 2) throw std::invalid_argument("difference_states needs at least two layers");
    TrajectoryEnsemble out;
    out.reserve(e.size() - 1);
    for (std::size_t t = 1; t < e.size(); ++t) out.push_back(e[t] - e[t - 1]);
    return out;
}

std::vector<std::optional<Tensor3>> channel_input(const TrajectoryEnsemble& e, Channel ch) {
    std::vector<std::optional<Tensor3>> out(e.size());
    switch (ch) {
        case Channel::P:
            validate(e);
            for (std::size_t t = 0; t < e.size(); ++t) out[t] = e[t];
            break;
        case Channel::I: {
            auto acc = accumulate_states(e);
            for (std::size_t t = 0; t < e.size(); ++t) out[t] = std::move(acc[t]);
            break;
        }
        case Channel::D: {
            auto diff = difference_states(e);
            for (std::size_t t = 1; t < e.size(); ++t) out[t] = std::move(diff[t - 1]);
            break;
        }
    }
    return out;
}

EmbeddingBasis build_basis(const TrajectoryEnsemble& e, Channel ch, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw std::invalid_argument("basis threshold must lie in (0, 1]");
    const auto inputs = channel_input(e, ch);

    EmbeddingBasis basis;
    basis.channel = ch;
    basis.threshold = threshold;
    basis.per_layer.resize(inputs.size());
    basis.temporal.resize(inputs.size());
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        if (!inputs[t]) continue;
        const auto factors = tensorkit::hosvd(*inputs[t]);
        const Index d = inputs[t]->dim(3);
        const Index l = inputs[t]->dim(2);
        const Index r = tensorkit::truncate_basis(factors.singular_values[2], threshold);
        const Index s = tensorkit::truncate_basis(factors.singular_values[1], threshold);
        basis.per_layer[t] = r == 0 ? Matrix(d, 0) : Matrix(factors.bases[2].leftCols(r));
        basis.temporal[t] = s == 0 ? Matrix(l, 0) : Matrix(factors.bases[1].leftCols(s));
    }
    return basis;
}

double residual(const Vector& x, const Matrix& v) {
    if (v.rows() != x.size()) throw DimensionError("residual: basis rows must match state dim");
    if (v.cols() == 0) return x.norm();
    return (x - v * (v.transpose() * x)).norm();
}

double mean_residual(const Tensor3& layer, const Matrix& v) {
    const Index d = layer.dim(3);
    if (v.rows() != d) throw DimensionError("mean_residual: basis rows must match embedding dim");
    const Index count = layer.dim(1) * layer.dim(2);
    if (count == 0) return 0.0;
    double total = 0.0;
    Vector x(d);
    for (Index n = 0; n < layer.dim(1); ++n)
        for (Index j = 0; j < layer.dim(2); ++j) {
            for (Index k = 0; k < d; ++k) x(k) = layer(n, j, k);
            total += residual(x, v);
        }
    return total / static_cast<double>(count);
}

}  // namespace shc::manifolds
