#include "dqaem/quantum.hpp"

#include "posterior_kernel.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

namespace dqaem {

void AnnealState::validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ParameterError("AnnealState: beta must be > 0");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ParameterError("AnnealState: gamma must be >= 0");
    if (beads < 1) throw ParameterError("AnnealState: beads must be >= 1");
}

std::string to_string(GammaRule rule) { return rule == GammaRule::LinearToZero ? "linear" : "frozen"; }

std::string to_string(BetaRule rule) {
    switch (rule) {
        case BetaRule::FixedAtOne: return "fixed";
        case BetaRule::LinearToOne: return "linear";
        case BetaRule::Frozen: return "frozen";
    }
    return "fixed";
}

GammaRule parse_gamma_rule(const std::string& text) {
    if (text == "linear") return GammaRule::LinearToZero;
    if (text == "frozen") return GammaRule::Frozen;
    throw ParameterError("unknown gamma rule '" + text + "' (expected linear | frozen)");
}

BetaRule parse_beta_rule(const std::string& text) {
    if (text == "fixed") return BetaRule::FixedAtOne;
    if (text == "linear") return BetaRule::LinearToOne;
    if (text == "frozen") return BetaRule::Frozen;
    throw ParameterError("unknown beta rule '" + text + "' (expected fixed | linear | frozen)");
}

void AnnealSchedule::validate() const {
    if (!(gamma_init >= 0.0) || !std::isfinite(gamma_init)) throw ParameterError("AnnealSchedule: gamma_init must be >= 0");
    if (!(beta_init > 0.0 && beta_init <= 1.0)) throw ParameterError("AnnealSchedule: beta_init must lie in (0, 1]");
    if (beta_rule == BetaRule::FixedAtOne && beta_init != 1.0)
        throw ParameterError("AnnealSchedule: beta rule 'fixed' requires beta_init = 1");
    if (total_steps < 0) throw ParameterError("AnnealSchedule: total_steps must be >= 0");
}

AnnealState AnnealSchedule::at(int step, int beads) const {
    AnnealState s;
    s.step = step;
    const bool done = step >= total_steps;
    const double frac = done ? 1.0 : static_cast<double>(step) / static_cast<double>(total_steps);
    switch (gamma_rule) {
        case GammaRule::LinearToZero: s.gamma = done ? 0.0 : gamma_init * (1.0 - frac); break;
        case GammaRule::Frozen: s.gamma = gamma_init; break;
    }
    switch (beta_rule) {
        case BetaRule::FixedAtOne: s.beta = 1.0; break;
        case BetaRule::LinearToOne: s.beta = done ? 1.0 : beta_init + (1.0 - beta_init) * frac; break;
        case BetaRule::Frozen: s.beta = beta_init; break;
    }
    s.beads = s.gamma == 0.0 ? 1 : beads;
    return s;
}

bool AnnealSchedule::settled(int step) const {
    const bool gamma_done = gamma_rule == GammaRule::Frozen || step >= total_steps || gamma_init == 0.0;
    const bool beta_done = beta_rule != BetaRule::LinearToOne || step >= total_steps || beta_init == 1.0;
    return gamma_done && beta_done;
}

AnnealSchedule AnnealSchedule::frozen(double beta, double gamma) {
    AnnealSchedule s;
    s.beta_init = beta;
    s.gamma_init = gamma;
    s.total_steps = 0;
    s.gamma_rule = GammaRule::Frozen;
    s.beta_rule = BetaRule::Frozen;
    return s;
}

std::vector<double> chain_mode_eigenvalues(int beads) {
    if (beads < 1) throw ParameterError("chain_mode_eigenvalues: beads must be >= 1");
    std::vector<double> out(static_cast<std::size_t>(beads));
    for (int n = 0; n < beads; ++n)
        out[static_cast<std::size_t>(n)] = 2.0 * (1.0 - std::cos(2.0 * std::numbers::pi * n / beads));
    out[0] = 0.0;
    return out;
}

BeadPosterior quantum_e_step(const Dataset& data, const MfaParams& params, const AnnealState& anneal) {
    anneal.validate();
    auto kernel = detail::evaluate_kernels(data, params, anneal.beta, anneal.gamma, anneal.beads);
    BeadPosterior post;
    static_cast<LatentPosterior&>(post) = std::move(kernel.post);
    post.log_partition = std::move(kernel.log_partition);
    post.anneal = anneal;
    post.free_energy = -kernel.log_normalizer / anneal.beta;
    return post;
}

DatumBeadPosterior bead_posterior(const Vector& y, const MfaParams& params, const AnnealState& anneal) {
    anneal.validate();
    if (!(anneal.gamma > 0.0)) throw ParameterError("bead_posterior: gamma must be > 0 (Gamma = 0 uses the classic branch)");
    if (y.size() != params.observed_dim()) throw ParameterError("bead_posterior: dimension mismatch");
    Dataset single;
    single.points = y.transpose();
    const BeadPosterior post = quantum_e_step(single, params, anneal);

    DatumBeadPosterior out;
    const int m = params.components();
    out.log_partition = post.log_partition.row(0).transpose();
    out.responsibilities = post.responsibilities.row(0).transpose();
    for (int w = 0; w < m; ++w) {
        out.bead_mean.push_back(post.mean(0, w));
        out.bead_second_moment.push_back(post.bead_second_moment(0, w));
    }
    return out;
}

double free_energy(const Dataset& data, const MfaParams& params, const AnnealState& anneal) {
    anneal.validate();
    return -detail::log_normalizer(data, params, anneal.beta, anneal.gamma, anneal.beads) / anneal.beta;
}

double u_function(const Dataset& data, const BeadPosterior& post, const MfaParams& candidate) {
    return -expected_complete_log_likelihood(data, post, candidate);
}

MfaParams m_step_quantum(const Dataset& data, const BeadPosterior& post, const MStepOptions& options,
                         std::vector<std::string>* warnings) {
    return m_step(data, post, options, warnings);
}

double entropy_diagnostic(const Dataset& data, const MfaParams& params, const AnnealState& anneal) {
    const BeadPosterior post = quantum_e_step(data, params, anneal);
    return anneal.beta * (u_function(data, post, params) - post.free_energy);
}

FitTrace run_dqaem(const Dataset& data, const MfaParams& init, const AnnealSchedule& schedule, int beads, int max_iter,
                   double tol) {
    if (max_iter < 1) throw ParameterError("run_dqaem: max_iter must be >= 1");
    if (!(tol > 0.0)) throw ParameterError("run_dqaem: tol must be > 0");
    if (beads < 1) throw ParameterError("run_dqaem: beads must be >= 1");
    schedule.validate();
    init.validate();
    data.validate();

    FitTrace trace;
    const MStepOptions options{init.diagonal_noise};
    MfaParams current = init;
    AnnealState previous;
    const auto start = std::chrono::steady_clock::now();
    try {
        for (int t = 0;; ++t) {
            const AnnealState state = schedule.at(t, beads);
            const BeadPosterior post = quantum_e_step(data, current, state);
            IterationRecord rec;
            rec.iteration = t;
            rec.objective = -post.free_energy;
            rec.beta = state.beta;
            rec.gamma = state.gamma;
            rec.beads = state.beads;
            rec.params = current;
            if (t > 0) {
                const bool same = previous.beta == state.beta && previous.gamma == state.gamma;
                rec.audit_objective = same ? rec.objective : -free_energy(data, current, previous);
            }
            rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            if (!std::isfinite(rec.objective)) throw NumericalError("non-finite free energy");
            const bool converged = t > 0 && schedule.settled(t - 1) && std::abs(rec.objective - trace.last().objective) < tol;
            trace.iterations.push_back(std::move(rec));
            if (converged) {
                trace.outcome = FitOutcome::Converged;
                break;
            }
            if (t == max_iter) {
                trace.outcome = FitOutcome::MaxIterations;
                break;
            }
            current = m_step_quantum(data, post, options, &trace.warnings);
            previous = state;
        }
    } catch (const NumericalError& err) {
        trace.outcome = FitOutcome::NumericalFailure;
        trace.failure_reason = err.what();
    }
    return trace;
}

FitTrace run_daem(const Dataset& data, const MfaParams& init, const AnnealSchedule& schedule, int max_iter, double tol) {
    AnnealSchedule thermal = schedule;
    thermal.gamma_init = 0.0;
    thermal.gamma_rule = GammaRule::Frozen;
    return run_dqaem(data, init, thermal, 1, max_iter, tol);
}

}  // namespace dqaem
