#include "shc/harness/bench.hpp"

#include "shc/harness/experiments.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <fstream>

namespace shc::harness {

namespace {

template <typename Fn>
double seconds(Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto mid = v.size() / 2;
    return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

// Runs the functions in alternation so slow drift of the machine hits each
// of them alike. Returns one median per function.
template <typename... Fns>
std::array<double, sizeof...(Fns)> interleaved_medians(int runs, int warmup, Fns&&... fns) {
    std::array<std::vector<double>, sizeof...(Fns)> secs;
    for (int i = 0; i < warmup + runs; ++i) {
        std::size_t k = 0;
        ((i < warmup ? (void)seconds(fns) : secs[k].push_back(seconds(fns)), ++k), ...);
    }
    std::array<double, sizeof...(Fns)> out{};
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = median(std::move(secs[k]));
    return out;
}

// Keeps the optimizer from discarding a result.
volatile double g_sink = 0.0;

}  // namespace

BenchTimings time_forward_modes(const BenchSettings& s) {
    if (s.dim < 1 || s.horizon < 1 || s.batch < 1 || s.rank < 1 || s.rank > s.dim || s.runs < 1 || s.warmup < 0 ||
        s.pmp_iters < 1)
        throw std::invalid_argument("invalid benchmark settings");
    Eigen::setNbThreads(1);

    const auto inst = make_orthogonal_instance(s.dim, s.rank, s.horizon, 1.0, s.seed);
    Rng rng = Rng(s.seed).split(9);
    const Matrix x0 = inst.bases.front() * rng.normal_matrix(s.rank, s.batch) + 0.1 * rng.normal_matrix(s.dim, s.batch);

    Matrix states(s.dim, s.batch), next(s.dim, s.batch);
    BenchTimings out{s.dim, s.horizon, s.batch};

    analytic::BatchForward controlled(inst.stack, inst.gains);
    const auto forward = interleaved_medians(
        s.runs, s.warmup,
        [&] {
            states = x0;
            for (Index t = 0; t < s.horizon; ++t) {
                next.noalias() = inst.stack[t] * states;
                states.swap(next);
            }
            g_sink = states(0, 0);
        },
        [&] {
            states = x0;
            controlled.run(states);
            g_sink = states(0, 0);
        });
    out.base = forward[0];
    out.analytic = forward[1];

    const auto loss = instance_loss(inst);
    pmp::MsaConfig msa;
    msa.max_outer_iters = s.pmp_iters;
    // Run every iteration regardless of progress.
    msa.tolerance = std::numeric_limits<double>::min();
    out.pmp = interleaved_medians(s.runs, s.warmup, [&] {
        const auto sol = pmp::msa_solve_batch(inst.stack, x0, loss, msa);
        g_sink = sol.controls.front()(0, 0);
    })[0];
    return out;
}

int cmd_bench(const ExperimentConfig& cfg) {
    cfg.validate();
    std::filesystem::create_directories(cfg.out);
    std::vector<BenchTimings> rows;
    for (Index d : cfg.bench_dims) {
        BenchSettings s;
        s.dim = d;
        s.horizon = cfg.bench_horizon;
        s.batch = cfg.bench_batch;
        s.rank = std::min(cfg.bench_rank, d);
        s.runs = cfg.bench_runs;
        s.warmup = cfg.bench_warmup;
        s.pmp_iters = cfg.bench_pmp_iters;
        s.seed = cfg.seed;
        rows.push_back(time_forward_modes(s));
    }

    std::ofstream out(cfg.out / "bench.csv", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write bench.csv");
    out << "# wall time in seconds, median of k=" << cfg.bench_runs << " runs after " << cfg.bench_warmup
        << " warmup runs, single thread; base and analytic runs alternate\n";
    out << "# pmp = batched MSA solve with " << cfg.bench_pmp_iters << " outer iterations\n";
    out << "dim,horizon,batch,mode,seconds,ratio_to_base\n";
    bool ordered = true;
    for (const auto& r : rows) {
        const std::pair<const char*, double> modes[] = {{"base", r.base}, {"analytic", r.analytic}, {"pmp", r.pmp}};
        for (const auto& [name, secs] : modes)
            out << r.dim << ',' << r.horizon << ',' << r.batch << ',' << name << ',' << format_real(secs) << ','
                << format_real(secs / r.base) << '\n';
        ordered = ordered && r.base < r.pmp;
    }
    write_metadata(cfg, "bench", {{"runs", std::to_string(cfg.bench_runs)}, {"warmup", std::to_string(cfg.bench_warmup)},
                                  {"threads", "1"}});
    return ordered ? kExitOk : kExitCheckFailed;
}

}  // namespace shc::harness
