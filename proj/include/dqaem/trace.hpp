#pragma once

#include "dqaem/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dqaem {

enum class FitOutcome { Converged, MaxIterations, NumericalFailure };

std::string to_string(FitOutcome outcome);

struct IterationRecord {
    int iteration = 0;
    // Log likelihood for classic EM; negative free energy -F_{beta,Gamma}(theta_t) for annealed solvers.
    double objective = 0.0;
    double beta = 1.0;
    double gamma = 0.0;
    int beads = 1;  // 1 whenever gamma == 0: the ring collapses to a single point
    double wall_ms = 0.0;
    MfaParams params;  // theta_t, the parameters the objective was evaluated at
    // -F of theta_t under the (beta, Gamma) used by the M-step that produced theta_t.
    // Equal to `objective` when the state did not change; absent at iteration 0.
    std::optional<double> audit_objective;
};

struct FitTrace {
    std::vector<IterationRecord> iterations;
    FitOutcome outcome = FitOutcome::MaxIterations;
    std::string failure_reason;
    std::vector<std::string> warnings;

    bool empty() const { return iterations.empty(); }
    const IterationRecord& last() const { return iterations.back(); }
    const MfaParams& final_params() const { return iterations.back().params; }

    /// Largest F increase across M-steps, measured at the (beta, Gamma) each M-step used.
    /// Non-positive for a trace that respects the free-energy descent property.
    double max_free_energy_increase() const;
};

}  // namespace dqaem
