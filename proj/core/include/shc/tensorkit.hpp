#pragma once

// Mode-n algebra on dense 3-way tensors and the truncated higher-order SVD.
//
// Unfolding convention: the mode-n unfolding has one row per index of mode n
// and one column per pair of remaining indices, enumerated lexicographically
// with the lower-numbered remaining mode varying slowest:
//   mode 1: column = j * d + k
//   mode 2: column = n * d + k
//   mode 3: column = n * l + j

#include "shc/types.hpp"

#include <array>
#include <vector>

namespace shc::tensorkit {

/// Dense N x l x d tensor stored with k fastest, then j, then n.
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(Index n, Index l, Index d);

    static Tensor3 zeros(Index n, Index l, Index d) { return Tensor3(n, l, d); }

    Index dim(int mode) const { return dims_[static_cast<std::size_t>(mode - 1)]; }
    const std::array<Index, 3>& dims() const { return dims_; }
    Index size() const { return static_cast<Index>(data_.size()); }

    double& operator()(Index n, Index j, Index k) { return data_[offset(n, j, k)]; }
    double operator()(Index n, Index j, Index k) const { return data_[offset(n, j, k)]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    double frobenius_norm() const;
    bool all_finite() const;

    Tensor3& operator+=(const Tensor3& other);
    Tensor3& operator-=(const Tensor3& other);

    friend bool operator==(const Tensor3& a, const Tensor3& b) {
        return a.dims_ == b.dims_ && a.data_ == b.data_;
    }

private:
    std::size_t offset(Index n, Index j, Index k) const {
        return static_cast<std::size_t>((n * dims_[1] + j) * dims_[2] + k);
    }

    std::array<Index, 3> dims_{0, 0, 0};
    std::vector<double> data_;
};

Tensor3 operator+(Tensor3 a, const Tensor3& b);
Tensor3 operator-(Tensor3 a, const Tensor3& b);

/// Throws std::invalid_argument unless every dimension is positive and every
/// entry finite.
void validate(const Tensor3& t);

Matrix unfold(const Tensor3& t, int mode);

/// Inverse of unfold for a tensor of the given dims.
Tensor3 fold(const Matrix& m, int mode, const std::array<Index, 3>& dims);

/// t ×_mode m: contracts mode `mode` of t with the columns of m.
Tensor3 mode_product(const Tensor3& t, const Matrix& m, int mode);

struct TuckerFactors {
    Tensor3 core;
    std::array<Matrix, 3> bases;
    std::array<Vector, 3> singular_values;

    std::array<Index, 3> ranks() const {
        return {bases[0].cols(), bases[1].cols(), bases[2].cols()};
    }
};

/// Relative cutoff below which a singular value counts as zero.
inline constexpr double kRankCutoff = 1e-12;

/// Full numerical-rank HOSVD. Bases are thin left singular vectors of each
/// unfolding; the core is t projected onto them. A zero tensor yields rank-0
/// factors.
TuckerFactors hosvd(const Tensor3& t);

/// Smallest k whose leading squared singular values reach `threshold` of the
/// total energy. Values under kRankCutoff * σ_max are ignored.
Index truncate_basis(const Vector& singular_values, double threshold);

/// Keeps the leading ranks[i] columns of each basis and the matching core
/// block. Singular values are left untouched.
TuckerFactors truncate(const TuckerFactors& f, const std::array<Index, 3>& ranks);

/// core ×1 V1 ×2 V2 ×3 V3.
Tensor3 reconstruct(const TuckerFactors& f);

}  // namespace shc::tensorkit
