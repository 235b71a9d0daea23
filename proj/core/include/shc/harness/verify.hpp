#pragma once

#include "shc/harness/config.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace shc::harness {

struct Check {
    std::string name;
    double measured = 0.0;
    double tolerance = 0.0;
    /// Reported-only rows never fail the run.
    bool asserted = true;

    bool passed() const { return !asserted || measured <= tolerance; }
};

struct VerifyReport {
    std::uint64_t seed = 0;
    std::vector<Check> checks;

    bool ok() const;
    Index failures() const;
};

/// Runs the property suite of every module on instances derived from cfg.
VerifyReport run_verify(const ExperimentConfig& cfg);

/// Key-value text: one `check.<name>.{measured,tolerance,status}` triple per
/// check followed by a summary block. Contains no timing information.
std::string format_report(const VerifyReport& report);

/// Writes `<out>/verify_report.txt` and the metadata sidecar. Returns 0 when
/// every asserted check passes, 1 otherwise.
int cmd_verify(const ExperimentConfig& cfg);

}  // namespace shc::harness
