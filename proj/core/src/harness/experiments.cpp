#include "shc/harness/experiments.hpp"

#include "shc/harness/persistence.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <iomanip>
#include <sstream>
#include <thread>

namespace shc::harness {

namespace {

// Offset that keeps basis-fitting samples disjoint from trial samples.
constexpr std::uint64_t kFitSampleOffset = 1ULL << 40;

}  // namespace

OrthogonalInstance make_orthogonal_instance(Index dim, Index rank, Index horizon, double c, std::uint64_t seed) {
    const Rng root(seed);
    OrthogonalInstance inst;
    inst.stack = dynamics::LinearStack::random_orthogonal(dim, horizon, root.split(1).seed());
    inst.bases = dynamics::propagate_basis(inst.stack,
                                           dynamics::random_orthonormal_columns(dim, rank, root.split(2).seed()));
    inst.gains.bases = inst.bases;
    inst.gains.schedule = analytic::lambda_schedule(c, horizon);
    for (Index t = 0; t < horizon; ++t)
        inst.costs.push_back(riccati::QMatrix::complement_of(inst.bases[static_cast<std::size_t>(t)]));
    Rng coeffs = root.split(3);
    inst.x0 = inst.bases.front() * coeffs.normal_vector(rank);
    inst.z = dynamics::make_perturbation(inst.bases.front(), 1.0, 3.0, root.split(4).seed());
    return inst;
}

pmp::RunningLossSpec instance_loss(const OrthogonalInstance& inst) {
    pmp::RunningLossSpec spec;
    for (std::size_t t = 0; t < inst.costs.size(); ++t) {
        pmp::LayerLoss layer;
        layer.qp = pmp::Projector::complement(inst.bases[t]);
        layer.c = inst.gains.schedule.c;
        spec.layers.push_back(std::move(layer));
    }
    return spec;
}

void parallel_for(Index n, unsigned workers, const std::function<void(Index)>& fn) {
    if (n <= 0) return;
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<Index>(workers, n));
    if (workers == 1) {
        for (Index i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (Index i = w; i < n; i += workers) fn(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

dynamics::SyntheticTask make_task(const ExperimentConfig& cfg) {
    dynamics::SyntheticTask::Options opt;
    opt.dim = cfg.dim;
    opt.rank = cfg.rank;
    opt.horizon = cfg.horizon;
    opt.num_classes = cfg.classes;
    opt.off_subspace_gain = cfg.off_subspace_gain;
    opt.seed = cfg.seed;
    return dynamics::SyntheticTask(opt);
}

manifolds::TrajectoryEnsemble clean_ensemble(const dynamics::SyntheticTask& task, Index samples, Index temporal,
                                             std::uint64_t first_index) {
    const Index horizon = task.stack().horizon();
    const Index d = task.stack().dim();
    manifolds::TrajectoryEnsemble e(static_cast<std::size_t>(horizon), manifolds::Tensor3(samples, temporal, d));
    for (Index n = 0; n < samples; ++n)
        for (Index j = 0; j < temporal; ++j) {
            const auto s = task.sample(first_index + static_cast<std::uint64_t>(n * temporal + j));
            Vector x = s.x0;
            for (Index t = 0; t < horizon; ++t) {
                auto& layer = e[static_cast<std::size_t>(t)];
                for (Index k = 0; k < d; ++k) layer(n, j, k) = x(k);
                x = task.stack()[t] * x;
            }
        }
    return e;
}

ChannelSet fit_channels(const ExperimentConfig& cfg, const dynamics::SyntheticTask& task) {
    const auto e = clean_ensemble(task, cfg.samples, cfg.temporal, kFitSampleOffset);
    ChannelSet set;
    set.p = manifolds::build_basis(e, manifolds::Channel::P, cfg.threshold);
    set.i = manifolds::build_basis(e, manifolds::Channel::I, cfg.threshold);
    if (e.size() >= 2) {
        set.d = manifolds::build_basis(e, manifolds::Channel::D, cfg.threshold);
    } else {
        set.d.channel = manifolds::Channel::D;
        set.d.threshold = cfg.threshold;
        set.d.per_layer.resize(e.size());
        set.d.temporal.resize(e.size());
    }
    return set;
}

namespace {

// Fraction of trials whose perturbed, controlled terminal state is classified
// correctly. Trial i always uses task sample i and the same perturbation
// direction, whatever the norms.
double trial_accuracy(const ExperimentConfig& cfg, const dynamics::SyntheticTask& task, const PerturbationNorms& p,
                      const std::function<dynamics::ControlledTrajectory(const Vector&)>& run) {
    std::vector<char> correct(static_cast<std::size_t>(cfg.trials), 0);
    const Rng directions = Rng(cfg.seed).split(5);
    parallel_for(cfg.trials, cfg.workers, [&](Index i) {
        const auto s = task.sample(static_cast<std::uint64_t>(i));
        const Vector z = dynamics::make_perturbation(task.data_basis(), p.parallel, p.perpendicular,
                                                     directions.split(static_cast<std::uint64_t>(i)).seed());
        const auto traj = run(s.x0 + z);
        correct[static_cast<std::size_t>(i)] = task.predict(traj.states.back()) == s.label ? 1 : 0;
    });
    const auto hits = std::count(correct.begin(), correct.end(), 1);
    return static_cast<double>(hits) / static_cast<double>(cfg.trials);
}

bool wants(const ExperimentConfig& cfg, ControllerKind k) {
    return std::find(cfg.controllers.begin(), cfg.controllers.end(), k) != cfg.controllers.end();
}

pmp::RunningLossSpec task_loss(const dynamics::SyntheticTask& task, double c) {
    pmp::RunningLossSpec spec;
    const auto& bases = task.propagated_bases();
    for (Index t = 0; t < task.stack().horizon(); ++t) {
        pmp::LayerLoss layer;
        layer.qp = pmp::Projector::complement(bases[static_cast<std::size_t>(t)]);
        layer.c = c;
        spec.layers.push_back(std::move(layer));
    }
    return spec;
}

}  // namespace

std::vector<CompareRow> run_compare(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto task = make_task(cfg);
    const auto& stack = task.stack();
    const auto lambdas = analytic::lambda_schedule(cfg.c, cfg.horizon);

    const analytic::AnalyticController analytic_ctrl(analytic::GainSchedule{task.propagated_bases(), lambdas});
    std::optional<riccati::RiccatiController> riccati_ctrl;
    if (wants(cfg, ControllerKind::Riccati)) {
        std::vector<riccati::QMatrix> costs;
        for (Index t = 0; t < cfg.horizon; ++t)
            costs.push_back(riccati::QMatrix::complement_of(task.propagated_bases()[static_cast<std::size_t>(t)]));
        const auto sched = riccati::riccati_backward(stack, costs, cfg.c);
        riccati_ctrl.emplace(stack, costs, sched);
    }
    const auto loss = task_loss(task, cfg.c);
    std::optional<ChannelSet> channels;
    if (wants(cfg, ControllerKind::Practical)) channels = fit_channels(cfg, task);

    std::vector<CompareRow> rows;
    for (const auto& p : cfg.perturbations) {
        for (const auto kind : cfg.controllers) {
            std::vector<double> per_scheme(cfg.schemes.size());
            if (kind == ControllerKind::Practical) {
                for (std::size_t s = 0; s < cfg.schemes.size(); ++s) {
                    const analytic::PracticalController ctrl(
                        analytic::ChannelBases{&channels->p, &channels->i, &channels->d},
                        cfg.schemes[s].apply(cfg.gains), lambdas);
                    per_scheme[s] = trial_accuracy(cfg, task, p, [&](const Vector& x0) {
                        return dynamics::forward(stack, x0, ctrl);
                    });
                }
            } else {
                std::function<dynamics::ControlledTrajectory(const Vector&)> run;
                switch (kind) {
                    case ControllerKind::None:
                        run = [&](const Vector& x0) { return dynamics::forward(stack, x0, dynamics::ZeroController{}); };
                        break;
                    case ControllerKind::Analytic:
                        run = [&](const Vector& x0) { return dynamics::forward(stack, x0, analytic_ctrl); };
                        break;
                    case ControllerKind::Riccati:
                        run = [&](const Vector& x0) { return dynamics::forward(stack, x0, *riccati_ctrl); };
                        break;
                    case ControllerKind::Pmp:
                        run = [&](const Vector& x0) {
                            auto sol = pmp::msa_solve(stack, x0, loss, cfg.msa);
                            return dynamics::forward(stack, x0, dynamics::OpenLoopController(std::move(sol.controls)));
                        };
                        break;
                    case ControllerKind::Practical: break;
                }
                std::fill(per_scheme.begin(), per_scheme.end(), trial_accuracy(cfg, task, p, run));
            }
            for (std::size_t s = 0; s < cfg.schemes.size(); ++s)
                rows.push_back({cfg.schemes[s].name(), to_string(kind), p.parallel, p.perpendicular, per_scheme[s],
                                cfg.trials});
        }
    }
    return rows;
}

std::string format_real(double v) {
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns)
    : file_(std::make_unique<std::ofstream>(path, std::ios::trunc)), columns_(columns.size()) {
    if (!*file_) throw std::runtime_error("cannot open " + path.string() + " for writing");
    for (const auto& c : columns) cell(c);
    end_row();
}

void CsvWriter::sep() {
    if (in_row_++ > 0) *file_ << ',';
}

CsvWriter& CsvWriter::cell(const std::string& v) {
    sep();
    *file_ << v;
    return *this;
}

CsvWriter& CsvWriter::cell(double v) { return cell(format_real(v)); }
CsvWriter& CsvWriter::cell(Index v) { return cell(std::to_string(v)); }
CsvWriter& CsvWriter::cell(std::uint64_t v) { return cell(std::to_string(v)); }

void CsvWriter::end_row() {
    if (in_row_ != columns_) throw std::logic_error("CSV row has the wrong number of cells");
    *file_ << '\n';
    in_row_ = 0;
}

void write_metadata(const ExperimentConfig& cfg, const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& extra) {
    std::ofstream out(cfg.out / (command + ".meta"), std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write metadata to " + cfg.out.string());
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    out << "command = " << command << '\n';
    out << "timestamp_utc = " << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ") << '\n';
    out << "compiler = " << __VERSION__ << '\n';
    out << "eigen = " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION << '\n';
    out << "hardware_threads = " << std::thread::hardware_concurrency() << '\n';
    for (const auto& [k, v] : extra) out << k << " = " << v << '\n';
    for (const auto& [k, v] : to_key_values(cfg)) out << "config." << k << " = " << v << '\n';
}

namespace {

void prepare_out(const ExperimentConfig& cfg) {
    cfg.validate();
    std::filesystem::create_directories(cfg.out);
}

}  // namespace

int cmd_gen(const ExperimentConfig& cfg) {
    prepare_out(cfg);
    const auto task = make_task(cfg);
    const auto e = clean_ensemble(task, cfg.samples, cfg.temporal, kFitSampleOffset);
    std::vector<std::string> cols{"seed", "sample", "position", "t"};
    for (Index k = 0; k < cfg.dim; ++k) cols.push_back("x" + std::to_string(k));
    CsvWriter csv(cfg.out / "ensemble.csv", cols);
    for (std::size_t t = 0; t < e.size(); ++t)
        for (Index n = 0; n < cfg.samples; ++n)
            for (Index j = 0; j < cfg.temporal; ++j) {
                csv.cell(cfg.seed).cell(n).cell(j).cell(static_cast<Index>(t));
                for (Index k = 0; k < cfg.dim; ++k) csv.cell(e[t](n, j, k));
                csv.end_row();
            }
    write_metadata(cfg, "gen", {});
    return kExitOk;
}

int cmd_fit(const ExperimentConfig& cfg) {
    prepare_out(cfg);
    const auto task = make_task(cfg);
    const auto ensemble = clean_ensemble(task, cfg.samples, cfg.temporal, kFitSampleOffset);
    const auto set = fit_channels(cfg, task);
    save_basis(cfg.out / "basis_P.shc", set.p);
    save_basis(cfg.out / "basis_I.shc", set.i);
    save_basis(cfg.out / "basis_D.shc", set.d);

    CsvWriter csv(cfg.out / "ranks.csv",
                  {"seed", "channel", "layer", "rank", "temporal_rank", "mean_residual", "random_residual"});
    Rng probe = Rng(cfg.seed).split(6);
    for (const auto* basis : {&set.p, &set.i, &set.d}) {
        const auto inputs = manifolds::channel_input(ensemble, basis->channel);
        for (Index t = 0; t < basis->layers(); ++t) {
            if (!basis->has_layer(t)) continue;
            const auto& layer = *inputs[static_cast<std::size_t>(t)];
            const Matrix& v = basis->at(t);
            double mean_norm = 0.0;
            Vector x(cfg.dim);
            for (Index n = 0; n < layer.dim(1); ++n)
                for (Index j = 0; j < layer.dim(2); ++j) {
                    for (Index k = 0; k < cfg.dim; ++k) x(k) = layer(n, j, k);
                    mean_norm += x.norm();
                }
            mean_norm /= static_cast<double>(layer.dim(1) * layer.dim(2));
            const Vector random = probe.normal_vector(cfg.dim).normalized() * mean_norm;
            const auto& temporal = basis->temporal[static_cast<std::size_t>(t)];
            csv.cell(cfg.seed)
                .cell(std::string(manifolds::to_string(basis->channel)))
                .cell(t)
                .cell(v.cols())
                .cell(temporal ? temporal->cols() : Index{0})
                .cell(manifolds::mean_residual(layer, v))
                .cell(manifolds::residual(random, v));
            csv.end_row();
        }
    }
    write_metadata(cfg, "fit", {});
    return kExitOk;
}

int cmd_schedule(const ExperimentConfig& cfg) {
    prepare_out(cfg);
    const auto sched = analytic::lambda_schedule(cfg.c, cfg.horizon);
    save_lambda(cfg.out / "lambda.shc", sched);
    const auto task = make_task(cfg);
    save_gains(cfg.out / "gains.shc", analytic::GainSchedule{task.propagated_bases(), sched});

    CsvWriter csv(cfg.out / "schedule.csv", {"seed", "c", "t", "lambda", "alpha"});
    std::vector<double> grid = cfg.c_grid;
    if (std::find(grid.begin(), grid.end(), cfg.c) == grid.end()) grid.insert(grid.begin(), cfg.c);
    for (double c : grid) {
        const auto s = analytic::lambda_schedule(c, cfg.horizon);
        for (Index t = 0; t <= cfg.horizon; ++t) {
            csv.cell(cfg.seed).cell(c).cell(t).cell(s.lambdas[static_cast<std::size_t>(t)]);
            csv.cell(t < cfg.horizon ? format_real(s.alphas[static_cast<std::size_t>(t)]) : std::string{});
            csv.end_row();
        }
    }
    write_metadata(cfg, "schedule", {});
    return kExitOk;
}

int cmd_simulate(const ExperimentConfig& cfg) {
    prepare_out(cfg);
    const auto task = make_task(cfg);
    const auto& stack = task.stack();
    const auto lambdas = analytic::lambda_schedule(cfg.c, cfg.horizon);
    const auto p = cfg.perturbations.back();
    const auto sample = task.sample(0);
    const Vector z = dynamics::make_perturbation(task.data_basis(), p.parallel, p.perpendicular,
                                                 Rng(cfg.seed).split(5).split(0).seed());
    const auto split = analysis::decompose_perturbation(z, task.data_basis());
    const auto clean = dynamics::forward(stack, sample.x0, dynamics::ZeroController{});

    CsvWriter csv(cfg.out / "trajectory.csv",
                  {"seed", "controller", "t", "error_sq", "predicted_sq", "control_norm", "residual"});
    std::optional<CsvWriter> diag;
    for (const auto kind : cfg.controllers) {
        dynamics::ControlledTrajectory traj;
        const Vector x0 = sample.x0 + z;
        switch (kind) {
            case ControllerKind::None: traj = dynamics::forward(stack, x0, dynamics::ZeroController{}); break;
            case ControllerKind::Analytic:
                traj = dynamics::forward(stack, x0,
                                         analytic::AnalyticController({task.propagated_bases(), lambdas}));
                break;
            case ControllerKind::Riccati: {
                std::vector<riccati::QMatrix> costs;
                for (Index t = 0; t < cfg.horizon; ++t)
                    costs.push_back(
                        riccati::QMatrix::complement_of(task.propagated_bases()[static_cast<std::size_t>(t)]));
                const auto sched = riccati::riccati_backward(stack, costs, cfg.c);
                traj = dynamics::forward(stack, x0, riccati::RiccatiController(stack, costs, sched));
                break;
            }
            case ControllerKind::Pmp: {
                auto sol = pmp::msa_solve(stack, x0, task_loss(task, cfg.c), cfg.msa);
                if (!diag)
                    diag.emplace(cfg.out / "msa_diagnostics.csv",
                                 std::vector<std::string>{"seed", "iteration", "objective", "step_size", "converged"});
                for (std::size_t k = 0; k < sol.diagnostics.objective.size(); ++k) {
                    diag->cell(cfg.seed).cell(static_cast<Index>(k)).cell(sol.diagnostics.objective[k]);
                    diag->cell(k == 0 ? std::string{} : format_real(sol.diagnostics.step_sizes[k - 1]));
                    diag->cell(std::string(sol.diagnostics.converged ? "1" : "0"));
                    diag->end_row();
                }
                traj = dynamics::forward(stack, x0, dynamics::OpenLoopController(std::move(sol.controls)));
                break;
            }
            case ControllerKind::Practical: {
                const auto set = fit_channels(cfg, task);
                const analytic::PracticalController ctrl({&set.p, &set.i, &set.d}, cfg.schemes.front().apply(cfg.gains),
                                                         lambdas);
                traj = dynamics::forward(stack, x0, ctrl);
                break;
            }
        }
        for (Index t = 0; t <= cfg.horizon; ++t) {
            const auto i = static_cast<std::size_t>(t);
            csv.cell(cfg.seed).cell(to_string(kind)).cell(t);
            csv.cell((traj.states[i] - clean.states[i]).squaredNorm());
            csv.cell(t == 0 ? format_real(z.squaredNorm()) : format_real(analysis::predict_error(lambdas, split, t)));
            csv.cell(t < cfg.horizon ? format_real(traj.controls[i].norm()) : std::string{});
            csv.cell(manifolds::residual(traj.states[i], task.propagated_bases()[i]));
            csv.end_row();
        }
    }
    write_metadata(cfg, "simulate", {});
    return kExitOk;
}

int cmd_compare(const ExperimentConfig& cfg) {
    prepare_out(cfg);
    const auto start = std::chrono::steady_clock::now();
    const auto rows = run_compare(cfg);
    CsvWriter csv(cfg.out / "compare.csv",
                  {"seed", "scheme", "controller", "par_norm", "perp_norm", "accuracy", "trials"});
    for (const auto& r : rows) {
        csv.cell(cfg.seed).cell(r.scheme).cell(r.controller).cell(r.par_norm).cell(r.perp_norm).cell(r.accuracy).cell(
            r.trials);
        csv.end_row();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_metadata(cfg, "compare", {{"wall_seconds", format_real(secs)}});
    return kExitOk;
}

}  // namespace shc::harness
