#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lebench {

struct CheckResult {
    std::string name;
    double residual = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::string detail;
};

struct VerifyOptions {
    /// Only run these checks (all when empty).
    std::vector<std::string> only;
    /// Corrupt the implementation side of the named check (mutation test).
    std::string inject_fault;
    std::uint64_t seed = 20240611;
};

/// Names of the built-in oracle-equivalence checks, in run order.
std::vector<std::string> verify_check_names();

/// Runs the oracle-equivalence checks: factored vs materialized BADGE
/// distances and seeding, Woodbury vs dense BAIT objective and the Kronecker
/// factor identity, metrics vs per-class brute force, greedy k-center vs the
/// exhaustive optimum, and analytic vs finite-difference gradients.
std::vector<CheckResult> run_verify(const VerifyOptions& opts = {});

}  // namespace lebench
