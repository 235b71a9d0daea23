#pragma once

#include "shc/analysis.hpp"
#include "shc/harness/config.hpp"
#include "shc/manifolds.hpp"
#include "shc/riccati.hpp"

#include <functional>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

namespace shc::harness {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfigError = 2;

/// Orthogonal stack, bases V_{t+1} = θ_tV_t, merged complement costs and a
/// clean initial state plus a perturbation with ‖z⊥‖ = 3‖z∥‖.
struct OrthogonalInstance {
    dynamics::LinearStack stack;
    std::vector<Matrix> bases;  // V_0..V_T
    analytic::GainSchedule gains;
    std::vector<riccati::QMatrix> costs;  // Q_t = I − V_tV_tᵀ
    Vector x0;
    Vector z;
};

OrthogonalInstance make_orthogonal_instance(Index dim, Index rank, Index horizon, double c, std::uint64_t seed);

/// P-channel running loss over the instance's propagated bases.
pmp::RunningLossSpec instance_loss(const OrthogonalInstance& inst);

/// Runs fn(i) for i in [0, n) on a pool of workers. Each index is handled
/// exactly once; callers write results into per-index slots.
void parallel_for(Index n, unsigned workers, const std::function<void(Index)>& fn);

/// Clean trajectories of the synthetic task as a T-layer ensemble of shape
/// (N, l, d); sample (n, j) uses task sample index n * l + j offset by
/// `first_index`.
manifolds::TrajectoryEnsemble clean_ensemble(const dynamics::SyntheticTask& task, Index samples, Index temporal,
                                             std::uint64_t first_index);

dynamics::SyntheticTask make_task(const ExperimentConfig& cfg);

struct ChannelSet {
    manifolds::EmbeddingBasis p, i, d;
};

/// P/I/D bases fitted on a held-out clean ensemble of the task.
ChannelSet fit_channels(const ExperimentConfig& cfg, const dynamics::SyntheticTask& task);

struct CompareRow {
    std::string scheme;
    std::string controller;
    double par_norm = 0.0;
    double perp_norm = 0.0;
    double accuracy = 0.0;
    Index trials = 0;
};

std::vector<CompareRow> run_compare(const ExperimentConfig& cfg);

/// Minimal CSV emitter; every file starts with its header row.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns);
    CsvWriter& cell(const std::string& v);
    CsvWriter& cell(double v);
    CsvWriter& cell(Index v);
    CsvWriter& cell(std::uint64_t v);
    void end_row();

private:
    void sep();
    std::ofstream* out();
    std::unique_ptr<std::ofstream> file_;
    std::size_t columns_;
    std::size_t in_row_ = 0;
};

std::string format_real(double v);

/// Writes `<out>/<command>.meta`: config echo plus environment and timing
/// details that are kept out of the data files.
void write_metadata(const ExperimentConfig& cfg, const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& extra);

int cmd_gen(const ExperimentConfig& cfg);
int cmd_fit(const ExperimentConfig& cfg);
int cmd_schedule(const ExperimentConfig& cfg);
int cmd_simulate(const ExperimentConfig& cfg);
int cmd_compare(const ExperimentConfig& cfg);

}  // namespace shc::harness
