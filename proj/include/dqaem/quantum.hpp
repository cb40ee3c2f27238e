#pragma once

// Deterministic quantum-annealing EM. The kinetic term Gamma * pi^2 / 2 enters through an M-bead
// periodic chain per datum and component; for Gaussian MFA the chain integrates in closed form.

#include "dqaem/classic_em.hpp"
#include "dqaem/model.hpp"
#include "dqaem/trace.hpp"

#include <string>
#include <vector>

namespace dqaem {

struct AnnealState {
    double beta = 1.0;   // inverse temperature
    double gamma = 0.0;  // quantum strength hbar^2 / mu
    int beads = 1;
    int step = 0;

    void validate() const;
    bool classic() const { return gamma == 0.0; }
};

enum class GammaRule { LinearToZero, Frozen };
enum class BetaRule { FixedAtOne, LinearToOne, Frozen };

std::string to_string(GammaRule rule);
std::string to_string(BetaRule rule);
GammaRule parse_gamma_rule(const std::string& text);
BetaRule parse_beta_rule(const std::string& text);

/// Iteration-indexed (beta, Gamma) trajectory. Annealing rules land exactly on (1, 0) at total_steps;
/// frozen rules hold the initial value forever.
struct AnnealSchedule {
    double gamma_init = 1.0;
    double beta_init = 1.0;
    int total_steps = 200;
    GammaRule gamma_rule = GammaRule::LinearToZero;
    BetaRule beta_rule = BetaRule::FixedAtOne;

    void validate() const;
    AnnealState at(int step, int beads) const;
    /// Whether the state no longer changes after `step`.
    bool settled(int step) const;

    static AnnealSchedule frozen(double beta, double gamma);
};

/// Eigenvalues 2(1 - cos(2 pi n / M)), n = 0..M-1, of the ring-coupling form sum_j (x_j - x_{j-1})^2.
std::vector<double> chain_mode_eigenvalues(int beads);

/// Bead-chain posterior for a whole dataset. log_partition excludes beta * log pi_w and is normalized
/// so that it tends to log int p(y, x | w)^beta dx as Gamma -> 0.
struct BeadPosterior : LatentPosterior {
    Matrix log_partition;  // N x m
    AnnealState anneal;
    double free_energy = 0.0;

    /// (1/M) sum_j E[x_j x_j^T] for datum i, component w.
    Matrix bead_second_moment(int i, int w) const { return second_moment(i, w); }
};

/// Single-datum view.
struct DatumBeadPosterior {
    Vector log_partition;                     // m
    Vector responsibilities;                  // m
    std::vector<Vector> bead_mean;            // per component, R^k
    std::vector<Matrix> bead_second_moment;   // per component, k x k
};

/// Requires gamma > 0; the Gamma = 0 limit is served by quantum_e_step's tempered branch.
DatumBeadPosterior bead_posterior(const Vector& y, const MfaParams& params, const AnnealState& anneal);

/// E step under (beta, Gamma). Gamma == 0 uses the exact beta-tempered classic posterior.
BeadPosterior quantum_e_step(const Dataset& data, const MfaParams& params, const AnnealState& anneal);

/// F = -(1/beta) sum_i log sum_w exp(beta log pi_w + log_partition(i, w)).
double free_energy(const Dataset& data, const MfaParams& params, const AnnealState& anneal);

/// Bead-averaged expected negative complete-data log likelihood of `candidate`, up to a
/// candidate-independent constant.
double u_function(const Dataset& data, const BeadPosterior& post, const MfaParams& candidate);

/// argmin of u_function over candidates; same algebra as m_step with bead moments.
MfaParams m_step_quantum(const Dataset& data, const BeadPosterior& post, const MStepOptions& options = {},
                         std::vector<std::string>* warnings = nullptr);

/// S = beta (U - F) at theta' = theta. Carries the constant dropped from U.
double entropy_diagnostic(const Dataset& data, const MfaParams& params, const AnnealState& anneal);

/// Algorithm loop: E step under the current schedule state, M step, advance. Once the schedule settles
/// at (1, 0) it continues with classic EM steps until |Delta L| < tol.
FitTrace run_dqaem(const Dataset& data, const MfaParams& init, const AnnealSchedule& schedule, int beads, int max_iter,
                   double tol = 1e-7);

/// beta-annealed EM: run_dqaem with Gamma held at zero.
FitTrace run_daem(const Dataset& data, const MfaParams& init, const AnnealSchedule& schedule, int max_iter,
                  double tol = 1e-7);

}  // namespace dqaem
