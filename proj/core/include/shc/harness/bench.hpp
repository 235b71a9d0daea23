#pragma once

#include "shc/harness/config.hpp"

#include <string>
#include <vector>

namespace shc::harness {

struct BenchTimings {
    Index dim = 0;
    Index horizon = 0;
    Index batch = 0;
    double base = 0.0;      // seconds, median
    double analytic = 0.0;  // seconds, median
    double pmp = 0.0;       // seconds, median
};

struct BenchSettings {
    Index dim = 256;
    Index horizon = 24;
    Index batch = 1000;
    Index rank = 8;
    int runs = 11;
    int warmup = 3;
    int pmp_iters = 10;
    std::uint64_t seed = 42;
};

/// Median-of-runs wall times, after `warmup` discarded runs, of a batched
/// forward pass through an orthogonal stack, the same pass under the
/// analytic controller, and a batched MSA solve with `pmp_iters` outer
/// iterations. Runs on the calling thread only.
BenchTimings time_forward_modes(const BenchSettings& s);

/// Times every dim in cfg.bench_dims and writes `<out>/bench.csv`, whose
/// leading comment lines record the run count and warmup.
int cmd_bench(const ExperimentConfig& cfg);

}  // namespace shc::harness
