#pragma once

#include "shc/analytic.hpp"
#include "shc/pmp.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace shc::harness {

/// Invalid or inconsistent configuration; the CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ControllerKind { None, Analytic, Riccati, Pmp, Practical };

std::string to_string(ControllerKind k);
ControllerKind parse_controller(const std::string& name);

/// Subset of {P, I, D}; P is always present.
struct SchemeMask {
    bool integral = false;
    bool derivative = false;

    std::string name() const;
    /// Gains with the masked-out channels zeroed.
    analytic::PidGains apply(const analytic::PidGains& g) const;
};

SchemeMask parse_scheme(const std::string& name);

struct PerturbationNorms {
    double parallel = 0.0;
    double perpendicular = 0.0;
};

struct ExperimentConfig {
    std::uint64_t seed = 42;

    Index dim = 32;
    Index rank = 8;
    Index temporal = 1;
    Index samples = 256;
    Index horizon = 12;
    Index classes = 4;
    double off_subspace_gain = 1.0;

    double c = 1.0;
    std::vector<double> c_grid{0.1, 1.0, 10.0};
    double threshold = 0.99;
    analytic::PidGains gains{0.5, 0.0, 0.5};

    std::vector<ControllerKind> controllers{ControllerKind::None, ControllerKind::Analytic,
                                            ControllerKind::Practical};
    std::vector<SchemeMask> schemes{{false, false}, {true, false}, {false, true}, {true, true}};
    std::vector<PerturbationNorms> perturbations{{0.0, 0.0}, {0.5, 1.5}};
    Index trials = 1000;
    unsigned workers = 0;  // 0 = hardware concurrency

    pmp::MsaConfig msa{};

    std::vector<Index> bench_dims{16, 64, 256};
    Index bench_horizon = 24;
    Index bench_batch = 1000;
    Index bench_rank = 8;
    int bench_runs = 11;
    int bench_warmup = 3;
    int bench_pmp_iters = 10;

    std::filesystem::path out = "out";

    /// Throws ConfigError on any violated constraint.
    void validate() const;
};

/// Parses `key = value` lines; `#` starts a comment. Unknown keys are errors.
using KeyValues = std::map<std::string, std::string>;
KeyValues read_key_values(const std::filesystem::path& path);
KeyValues parse_key_values(const std::string& text);

/// Applies key/value pairs on top of `cfg`. Throws ConfigError.
void apply(ExperimentConfig& cfg, const KeyValues& kv);

/// Lists every recognised key with its current value, in a stable order.
KeyValues to_key_values(const ExperimentConfig& cfg);

}  // namespace shc::harness
