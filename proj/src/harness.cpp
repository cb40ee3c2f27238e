#include "dqaem/harness.hpp"

#include "dqaem/classic_em.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

namespace dqaem::harness {

void SuccessCriterion::validate() const {
    if (!(threshold_factor > 0.0)) throw ParameterError("SuccessCriterion: threshold_factor must be > 0");
}

SuccessResult evaluate_success(const MfaParams& fit, const MfaParams& truth, const SuccessCriterion& crit) {
    crit.validate();
    const int m = truth.components();
    if (fit.components() != m) throw ParameterError("evaluate_success: component counts differ");
    if (fit.observed_dim() != truth.observed_dim()) throw ParameterError("evaluate_success: dimensions differ");
    if (m > 8) throw ParameterError("evaluate_success: at most 8 components are supported");

    Matrix cost(m, m);  // cost(true, fitted)
    for (int t = 0; t < m; ++t)
        for (int f = 0; f < m; ++f) cost(t, f) = (fit.means[static_cast<std::size_t>(f)] - truth.means[static_cast<std::size_t>(t)]).squaredNorm();

    std::vector<int> perm(static_cast<std::size_t>(m));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<int> best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (int t = 0; t < m; ++t) total += cost(t, perm[static_cast<std::size_t>(t)]);
        if (total < best_cost) {
            best_cost = total;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    SuccessResult out;
    out.success = true;
    out.assignment = best;
    for (int t = 0; t < m; ++t) {
        const double err = cost(t, best[static_cast<std::size_t>(t)]);
        out.per_component_error.push_back(err);
        if (!(err < crit.threshold_factor * truth.marginal_covariance(t).trace())) out.success = false;
    }
    return out;
}

MfaParams three_cluster_truth(double variance) {
    std::vector<Vector> means(3, Vector::Zero(2));
    means[0][0] = -1.0;
    means[2][0] = 1.0;
    return MfaParams::isotropic(Vector::Constant(3, 1.0 / 3.0), means, 2, variance);
}

void TrialConfig::validate() const {
    data.truth.validate();
    criterion.validate();
    solver.schedule.validate();
    if (data.n < 1) throw ParameterError("TrialConfig: n must be >= 1");
    if (trials < 1) throw ParameterError("TrialConfig: trials must be >= 1");
    if (threads < 0) throw ParameterError("TrialConfig: threads must be >= 0");
    if (solver.components != data.truth.components())
        throw ParameterError("TrialConfig: solver components must match the true component count");
    if (solver.latent_dim < 1 || solver.beads < 1 || solver.em_max_iter < 1 || solver.dqaem_max_iter < 1 || !(solver.tol > 0.0))
        throw ParameterError("TrialConfig: invalid solver settings");
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    // splitmix64 finalizer over a combined word
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {

int worker_count(int requested, int jobs) {
    int n = requested > 0 ? requested : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    return std::max(1, std::min(n, jobs));
}

template <class Job>
void parallel_for(int jobs, int threads, Job&& job) {
    const int workers = worker_count(threads, jobs);
    if (workers == 1) {
        for (int i = 0; i < jobs; ++i) job(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t)
        pool.emplace_back([&] {
            for (int i = next++; i < jobs; i = next++) job(i);
        });
}

SolverOutcome summarize(const FitTrace& trace, const MfaParams& truth, const SuccessCriterion& crit) {
    SolverOutcome out;
    out.outcome = trace.outcome;
    out.failure_reason = trace.failure_reason;
    out.max_free_energy_increase = std::max(0.0, trace.max_free_energy_increase());
    if (trace.empty()) {
        out.failure_reason = out.failure_reason.empty() ? "empty trace" : out.failure_reason;
        return out;
    }
    out.final_objective = trace.last().objective;
    out.iterations = trace.last().iteration;
    if (trace.outcome == FitOutcome::NumericalFailure) return out;

    const SuccessResult final = evaluate_success(trace.final_params(), truth, crit);
    out.success = final.success;
    out.per_component_error = final.per_component_error;
    if (out.success) {
        int first = 0;
        for (int t = static_cast<int>(trace.iterations.size()) - 1; t >= 0; --t) {
            if (!evaluate_success(trace.iterations[static_cast<std::size_t>(t)].params, truth, crit).success) {
                first = t + 1;
                break;
            }
        }
        out.iterations_to_success = trace.iterations[static_cast<std::size_t>(first)].iteration;
    }
    return out;
}

}  // namespace

ContingencyTable tabulate(const std::vector<TrialRecord>& trials) {
    ContingencyTable table;
    for (const auto& t : trials) {
        ++table.trials;
        if (t.em.success && t.dqaem.success) ++table.both_success;
        else if (t.em.success) ++table.em_only;
        else if (t.dqaem.success) ++table.dqaem_only;
        else ++table.both_fail;
    }
    return table;
}

ComparisonResult run_comparison(const TrialConfig& cfg) {
    cfg.validate();
    std::optional<Dataset> shared;
    if (!cfg.data.fresh_per_trial) shared = sample_dataset(cfg.data.truth, cfg.data.n, cfg.data.seed);

    ComparisonResult result;
    result.trials.resize(static_cast<std::size_t>(cfg.trials));
    parallel_for(cfg.trials, cfg.threads, [&](int i) {
        TrialRecord& rec = result.trials[static_cast<std::size_t>(i)];
        rec.trial = i;
        rec.data_seed = cfg.data.fresh_per_trial ? derive_seed(cfg.data.seed, static_cast<std::uint64_t>(i)) : cfg.data.seed;
        rec.init_seed = derive_seed(cfg.init_seed, static_cast<std::uint64_t>(i));
        const Dataset data = shared ? *shared : sample_dataset(cfg.data.truth, cfg.data.n, rec.data_seed);
        const SolverSpec& s = cfg.solver;
        const MfaParams init = random_init(data, s.components, s.latent_dim, rec.init_seed, s.diagonal_noise);

        FitTrace em = run_em(data, init, s.em_max_iter, s.tol);
        FitTrace dq = run_dqaem(data, init, s.schedule, s.beads, s.dqaem_max_iter, s.tol);
        rec.em = summarize(em, cfg.data.truth, cfg.criterion);
        rec.dqaem = summarize(dq, cfg.data.truth, cfg.criterion);
        if (cfg.keep_traces) {
            rec.em_trace = std::move(em);
            rec.dqaem_trace = std::move(dq);
        }
    });

    result.table = tabulate(result.trials);
    IterationStats& st = result.iterations;
    double em_sum = 0, dq_sum = 0, jem = 0, jdq = 0;
    for (const auto& t : result.trials) {
        if (t.em.iterations_to_success) {
            em_sum += *t.em.iterations_to_success;
            ++st.em_count;
        }
        if (t.dqaem.iterations_to_success) {
            dq_sum += *t.dqaem.iterations_to_success;
            ++st.dqaem_count;
        }
        if (t.em.iterations_to_success && t.dqaem.iterations_to_success) {
            jem += *t.em.iterations_to_success;
            jdq += *t.dqaem.iterations_to_success;
            ++st.joint_count;
        }
    }
    if (st.em_count) st.em_mean = em_sum / st.em_count;
    if (st.dqaem_count) st.dqaem_mean = dq_sum / st.dqaem_count;
    if (st.joint_count) {
        st.joint_em_mean = jem / st.joint_count;
        st.joint_dqaem_mean = jdq / st.joint_count;
    }
    return result;
}

void MonotonicityConfig::validate() const {
    data.truth.validate();
    anneal.validate();
    if (models.empty()) throw ParameterError("MonotonicityConfig: at least one model is required");
    for (int m : models)
        if (m < 1) throw ParameterError("MonotonicityConfig: component counts must be >= 1");
    if (iters < 0 || restarts < 1 || latent_dim < 1 || data.n < 1)
        throw ParameterError("MonotonicityConfig: invalid iteration, restart, latent or sample counts");
}

MonotonicityResult run_monotonicity(const MonotonicityConfig& cfg) {
    cfg.validate();
    const Dataset data = sample_dataset(cfg.data.truth, cfg.data.n, cfg.data.seed);
    const AnnealSchedule frozen = AnnealSchedule::frozen(cfg.anneal.beta, cfg.anneal.gamma);
    const int per_model = cfg.restarts;
    const int jobs = static_cast<int>(cfg.models.size()) * per_model;

    MonotonicityResult result;
    result.runs.resize(static_cast<std::size_t>(jobs));
    parallel_for(jobs, cfg.threads, [&](int job) {
        MonotonicityRun& run = result.runs[static_cast<std::size_t>(job)];
        run.components = cfg.models[static_cast<std::size_t>(job / per_model)];
        run.restart = job % per_model;
        run.init_seed = derive_seed(cfg.init_seed, static_cast<std::uint64_t>(job));
        const MfaParams init = random_init(data, run.components, cfg.latent_dim, run.init_seed, cfg.diagonal_noise);
        if (cfg.iters == 0) {
            run.negative_free_energy.push_back(-free_energy(data, init, cfg.anneal));
            run.outcome = FitOutcome::MaxIterations;
            return;
        }
        const FitTrace trace = run_dqaem(data, init, frozen, cfg.anneal.beads, cfg.iters, cfg.tol);
        run.outcome = trace.outcome;
        run.failure_reason = trace.failure_reason;
        for (const auto& rec : trace.iterations) run.negative_free_energy.push_back(rec.objective);
        for (std::size_t t = 1; t < run.negative_free_energy.size(); ++t) {
            const double delta = run.negative_free_energy[t - 1] - run.negative_free_energy[t];
            run.deltas.push_back(delta);
            if (delta > cfg.tolerance && run.first_violation < 0) run.first_violation = static_cast<int>(t);
        }
        run.max_delta = run.deltas.empty() ? 0.0 : *std::max_element(run.deltas.begin(), run.deltas.end());
    });

    for (std::size_t mi = 0; mi < cfg.models.size(); ++mi) {
        ModelSummary sum;
        sum.components = cfg.models[mi];
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        sum.max_delta = -std::numeric_limits<double>::infinity();
        for (int r = 0; r < per_model; ++r) {
            const auto& run = result.runs[mi * static_cast<std::size_t>(per_model) + static_cast<std::size_t>(r)];
            sum.max_delta = std::max(sum.max_delta, run.max_delta);
            for (double d : run.deltas)
                if (d > cfg.tolerance) ++sum.violations;
            if (run.outcome == FitOutcome::NumericalFailure) sum.passed = false;
            const double final_f = -run.negative_free_energy.back();
            lo = std::min(lo, final_f);
            hi = std::max(hi, final_f);
        }
        sum.final_spread = hi - lo;
        sum.convex_check = sum.components == 1 && cfg.iters > 0;
        if (sum.violations > 0) sum.passed = false;
        if (sum.convex_check && !(sum.final_spread < cfg.convex_spread_tolerance)) sum.passed = false;
        result.passed = result.passed && sum.passed;
        result.models.push_back(sum);
    }
    return result;
}

}  // namespace dqaem::harness
