#pragma once

// Oracle-equivalence gates: the closed-form bead engine against brute-force quadrature,
// dense log-determinants, and the classic posterior.

#include "dqaem/model.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace dqaem::verify {

inline const std::vector<std::string> kAllGates{"reduction",  "oracle_chain",  "oracle_free_energy",
                                               "oracle_u_function", "mode_logdet", "gamma_limit"};

struct VerifyConfig {
    std::vector<std::string> gates = kAllGates;
    int instances = 10;
    std::uint64_t seed = 1;
    double inject_log_partition_error = 0.0;  // added to engine log partitions in oracle_chain

    void validate() const;
};

struct GateResult {
    std::string name;
    bool passed = true;
    int checks = 0;
    double max_error = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

struct VerifyReport {
    std::vector<GateResult> gates;
    std::vector<std::string> warnings;
    bool passed() const;
};

VerifyReport run_verification(const VerifyConfig& cfg);
GateResult run_gate(const std::string& name, const VerifyConfig& cfg);

/// Random MFA instance with unit-scale latent posteriors.
MfaParams random_instance(std::mt19937_64& rng, int d, int k, int m);

/// log_partition of component w by dense (M k)-dimensional Gaussian integration.
double dense_log_partition(const Vector& y, int w, const MfaParams& params, double beta, double gamma, int beads);

/// |a - b| / max(|b|, 1)
double mixed_error(double a, double b);

}  // namespace dqaem::verify
