#include "shc/tensorkit.hpp"

#include <cmath>
#include <sstream>

namespace shc::tensorkit {

namespace {

void check_mode(int mode) {
    if (mode < 1 || mode > 3) {
        std::ostringstream os;
        os << "tensor mode must be 1, 2 or 3 (got " << mode << ")";
        throw std::invalid_argument(os.str());
    }
}

// Row/column of entry (n, j, k) in the mode unfolding.
struct Cell {
    Index row;
    Index col;
};

Cell unfold_cell(const std::array<Index, 3>& dims, int mode, Index n, Index j, Index k) {
    switch (mode) {
        case 1: return {n, j * dims[2] + k};
        case 2: return {j, n * dims[2] + k};
        default: return {k, n * dims[1] + j};
    }
}

}  // namespace

Tensor3::Tensor3(Index n, Index l, Index d) : dims_{n, l, d} {
    if (n < 0 || l < 0 || d < 0) throw std::invalid_argument("tensor dims must be nonnegative");
    data_.assign(static_cast<std::size_t>(n * l * d), 0.0);
}

double Tensor3::frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

bool Tensor3::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor3& Tensor3::operator+=(const Tensor3& other) {
    if (dims_ != other.dims_) throw DimensionError("tensor dims differ in +=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor3& Tensor3::operator-=(const Tensor3& other) {
    if (dims_ != other.dims_) throw DimensionError("tensor dims differ in -=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Tensor3 operator+(Tensor3 a, const Tensor3& b) { return a += b; }
Tensor3 operator-(Tensor3 a, const Tensor3& b) { return a -= b; }

void validate(const Tensor3& t) {
    const auto& d = t.dims();
    if (d[0] < 1 || d[1] < 1 || d[2] < 1)
        throw std::invalid_argument("tensor dims must all be at least 1");
    if (!t.all_finite()) throw std::invalid_argument("tensor has non-finite entries");
}

Matrix unfold(const Tensor3& t, int mode) {
    check_mode(mode);
    const auto& dims = t.dims();
    const Index rows = dims[static_cast<std::size_t>(mode - 1)];
    Index cols = 1;
    for (int other = 1; other <= 3; ++other)
        if (other != mode) cols *= dims[static_cast<std::size_t>(other - 1)];
    Matrix m(rows, cols);
    for (Index n = 0; n < dims[0]; ++n)
        for (Index j = 0; j < dims[1]; ++j)
            for (Index k = 0; k < dims[2]; ++k) {
                const Cell c = unfold_cell(dims, mode, n, j, k);
                m(c.row, c.col) = t(n, j, k);
            }
    return m;
}

Tensor3 fold(const Matrix& m, int mode, const std::array<Index, 3>& dims) {
    check_mode(mode);
    const Index rows = dims[static_cast<std::size_t>(mode - 1)];
    const Index total = dims[0] * dims[1] * dims[2];
    if (m.rows() != rows || m.rows() * m.cols() != total)
        throw DimensionError("matrix shape does not match fold target");
    Tensor3 t(dims[0], dims[1], dims[2]);
    for (Index n = 0; n < dims[0]; ++n)
        for (Index j = 0; j < dims[1]; ++j)
            for (Index k = 0; k < dims[2]; ++k) {
                const Cell c = unfold_cell(dims, mode, n, j, k);
                t(n, j, k) = m(c.row, c.col);
            }
    return t;
}

Tensor3 mode_product(const Tensor3& t, const Matrix& m, int mode) {
    check_mode(mode);
    auto dims = t.dims();
    auto& mode_size = dims[static_cast<std::size_t>(mode - 1)];
    if (m.cols() != mode_size) {
        std::ostringstream os;
        os << "mode-" << mode << " product: matrix has " << m.cols()
           << " columns but the mode has size " << mode_size;
        throw DimensionError(os.str());
    }
    mode_size = m.rows();
    const Matrix product = m * unfold(t, mode);
    return fold(product, mode, dims);
}

TuckerFactors hosvd(const Tensor3& t) {
    validate(t);
    TuckerFactors f;
    const auto& dims = t.dims();

    if (t.frobenius_norm() == 0.0) {
        for (int mode = 1; mode <= 3; ++mode) {
            const Index size = dims[static_cast<std::size_t>(mode - 1)];
            const Index other = t.size() / size;
            f.bases[static_cast<std::size_t>(mode - 1)] = Matrix(size, 0);
            f.singular_values[static_cast<std::size_t>(mode - 1)] =
                Vector::Zero(std::min(size, other));
        }
        f.core = Tensor3(0, 0, 0);
        return f;
    }

    for (int mode = 1; mode <= 3; ++mode) {
        const auto i = static_cast<std::size_t>(mode - 1);
        const Matrix unfolded = unfold(t, mode);
        Eigen::BDCSVD<Matrix> svd(unfolded, Eigen::ComputeThinU);
        const Vector& sigma = svd.singularValues();
        Index rank = 0;
        const double floor = kRankCutoff * sigma(0);
        while (rank < sigma.size() && sigma(rank) > floor) ++rank;
        f.bases[i] = svd.matrixU().leftCols(rank);
        f.singular_values[i] = sigma;
    }

    Tensor3 core = t;
    for (int mode = 1; mode <= 3; ++mode)
        core = mode_product(core, f.bases[static_cast<std::size_t>(mode - 1)].transpose(), mode);
    f.core = std::move(core);
    return f;
}

Index truncate_basis(const Vector& singular_values, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw std::invalid_argument("truncation threshold must lie in (0, 1]");
    const Index n = singular_values.size();
    for (Index i = 0; i < n; ++i) {
        if (!std::isfinite(singular_values(i)) || singular_values(i) < 0.0)
            throw std::invalid_argument("singular values must be finite and nonnegative");
        if (i > 0 && singular_values(i) > singular_values(i - 1))
            throw std::invalid_argument("singular values must be sorted nonincreasing");
    }
    if (n == 0 || singular_values(0) == 0.0) return 0;

    const double floor = kRankCutoff * singular_values(0);
    double total = 0.0;
    Index numerical_rank = 0;
    while (numerical_rank < n && singular_values(numerical_rank) > floor) {
        total += singular_values(numerical_rank) * singular_values(numerical_rank);
        ++numerical_rank;
    }
    const double target = threshold * total;
    double energy = 0.0;
    for (Index k = 0; k < numerical_rank; ++k) {
        energy += singular_values(k) * singular_values(k);
        if (energy >= target) return k + 1;
    }
    return numerical_rank;
}

TuckerFactors truncate(const TuckerFactors& f, const std::array<Index, 3>& ranks) {
    const auto full = f.ranks();
    for (std::size_t i = 0; i < 3; ++i)
        if (ranks[i] < 0 || ranks[i] > full[i])
            throw std::invalid_argument("truncation rank exceeds available rank");
    TuckerFactors out;
    for (std::size_t i = 0; i < 3; ++i) {
        out.bases[i] = f.bases[i].leftCols(ranks[i]);
        out.singular_values[i] = f.singular_values[i];
    }
    out.core = Tensor3(ranks[0], ranks[1], ranks[2]);
    for (Index a = 0; a < ranks[0]; ++a)
        for (Index b = 0; b < ranks[1]; ++b)
            for (Index c = 0; c < ranks[2]; ++c) out.core(a, b, c) = f.core(a, b, c);
    return out;
}

Tensor3 reconstruct(const TuckerFactors& f) {
    const auto r = f.ranks();
    if (f.core.dims() != r) throw DimensionError("core dims do not match basis ranks");
    Tensor3 t = f.core;
    for (int mode = 1; mode <= 3; ++mode)
        t = mode_product(t, f.bases[static_cast<std::size_t>(mode - 1)], mode);
    return t;
}

}  // namespace shc::tensorkit
