#include "dqaem/trace.hpp"

#include <algorithm>
#include <limits>

namespace dqaem {

std::string to_string(FitOutcome outcome) {
    switch (outcome) {
        case FitOutcome::Converged: return "converged";
        case FitOutcome::MaxIterations: return "max-iterations";
        case FitOutcome::NumericalFailure: return "numerical-failure";
    }
    return "unknown";
}

double FitTrace::max_free_energy_increase() const {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 1; t < iterations.size(); ++t) {
        if (!iterations[t].audit_objective) continue;
        // F(theta_t) - F(theta_{t-1}) at the M-step's state, with objective = -F.
        worst = std::max(worst, iterations[t - 1].objective - *iterations[t].audit_objective);
    }
    return worst;
}

}  // namespace dqaem
