#pragma once

// Per-layer P/I/D embedding bases learned from trajectory ensembles.

#include "shc/tensorkit.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace shc::manifolds {

using tensorkit::Tensor3;

/// One tensor per layer t = 0..T-1, all of shape (samples, temporal, embedding).
using TrajectoryEnsemble = std::vector<Tensor3>;

enum class Channel { P = 0, I = 1, D = 2 };

std::string_view to_string(Channel ch);

/// Per-layer orthonormal column sets V_t (d x r_t). For the D channel the
/// layer-0 entry is empty because no previous state exists there.
struct EmbeddingBasis {
    Channel channel = Channel::P;
    std::vector<std::optional<Matrix>> per_layer;
    std::vector<std::optional<Matrix>> temporal;
    double threshold = 1.0;

    Index layers() const { return static_cast<Index>(per_layer.size()); }
    bool has_layer(Index t) const {
        return t >= 0 && t < layers() && per_layer[static_cast<std::size_t>(t)].has_value();
    }
    /// Throws std::out_of_range when layer t is absent.
    const Matrix& at(Index t) const;
    /// Rank per layer; -1 marks an absent layer.
    std::vector<Index> ranks() const;

    friend bool operator==(const EmbeddingBasis&, const EmbeddingBasis&);
};

void validate(const TrajectoryEnsemble& e);

/// Layer t of the output is the sum of input layers 0..t.
TrajectoryEnsemble accumulate_states(const TrajectoryEnsemble& e);

/// T-1 layers; output layer i is X_{i+1} - X_i. Requires T >= 2.
TrajectoryEnsemble difference_states(const TrajectoryEnsemble& e);

/// HOSVD per layer of the channel-transformed ensemble, keeping the mode-3
/// (embedding) basis truncated at `threshold` of the spectral energy. The
/// mode-2 (temporal) basis is truncated the same way and stored alongside.
EmbeddingBasis build_basis(const TrajectoryEnsemble& e, Channel ch, double threshold);

/// ‖(I − VVᵀ)x‖₂.
double residual(const Vector& x, const Matrix& v);

/// Mean residual over every (sample, position) embedding vector of one layer.
double mean_residual(const Tensor3& layer, const Matrix& v);

/// Channel input ensemble: identity, accumulated, or differenced, with the
/// D output re-indexed so that entry t corresponds to original layer t.
std::vector<std::optional<Tensor3>> channel_input(const TrajectoryEnsemble& e, Channel ch);

}  // namespace shc::manifolds
