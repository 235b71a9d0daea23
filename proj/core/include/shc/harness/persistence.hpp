#pragma once

// Binary persistence for bases and schedules.
//
// Layout (all integers u32 little-endian, all reals f64 little-endian):
//   "SHC1" | version | kind | T | kind-specific header | f64 payload
//
// kind 0/1/2 (EmbeddingBasis, channel P/I/D):
//   header: 2T presence bytes (per-layer, then temporal), T x (d, r) for
//           the per-layer bases, T x (l, s) for the temporal bases; absent
//           entries are written as (0, 0)
//   payload: threshold, then each present matrix row-major
// kind 3 (GainSchedule):
//   header: B (number of bases), B x (d, r)
//   payload: c, λ_0..λ_T, then each basis row-major
// kind 4 (LambdaSchedule):
//   payload: c, λ_0..λ_T

#include "shc/analytic.hpp"
#include "shc/manifolds.hpp"

#include <filesystem>

namespace shc::harness {

inline constexpr std::uint32_t kFormatVersion = 1;

enum class FileKind : std::uint32_t { BasisP = 0, BasisI = 1, BasisD = 2, Gains = 3, Lambda = 4 };

void save_basis(const std::filesystem::path& path, const manifolds::EmbeddingBasis& basis);
manifolds::EmbeddingBasis load_basis(const std::filesystem::path& path);

void save_gains(const std::filesystem::path& path, const analytic::GainSchedule& gains);
analytic::GainSchedule load_gains(const std::filesystem::path& path);

void save_lambda(const std::filesystem::path& path, const analytic::LambdaSchedule& sched);
analytic::LambdaSchedule load_lambda(const std::filesystem::path& path);

/// Throws DimensionError naming the first layer whose basis does not have
/// `dim` rows.
void check_basis_dim(const manifolds::EmbeddingBasis& basis, Index dim);
void check_gains_dim(const analytic::GainSchedule& gains, Index dim);

}  // namespace shc::harness
