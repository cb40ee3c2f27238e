#pragma once

// Experiment drivers: EM vs DQAEM success comparison and frozen-state free-energy monotonicity.

#include "dqaem/model.hpp"
#include "dqaem/quantum.hpp"
#include "dqaem/trace.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dqaem::harness {

/// A fit succeeds when every assignment-matched squared mean error is below
/// threshold_factor * trace(true component covariance).
struct SuccessCriterion {
    double threshold_factor = 0.2;

    void validate() const;
};

struct SuccessResult {
    bool success = false;
    std::vector<double> per_component_error;  // squared error, indexed by true component
    std::vector<int> assignment;              // assignment[true w] = fitted component, 0-based
};

/// Brute force over all m! matchings; m is limited to 8.
SuccessResult evaluate_success(const MfaParams& fit, const MfaParams& truth, const SuccessCriterion& crit = {});

/// Rows are EM outcomes, columns DQAEM outcomes.
struct ContingencyTable {
    int both_success = 0;
    int em_only = 0;     // EM success, DQAEM fail
    int dqaem_only = 0;  // EM fail, DQAEM success
    int both_fail = 0;
    int trials = 0;

    int em_successes() const { return both_success + em_only; }
    int dqaem_successes() const { return both_success + dqaem_only; }
    double percent(int count) const { return trials == 0 ? 0.0 : 100.0 * count / trials; }
};

struct DataSpec {
    MfaParams truth;
    int n = 300;
    std::uint64_t seed = 12345;
    bool fresh_per_trial = false;  // otherwise one dataset is shared by every trial
};

/// Three equal-weight clusters at (-1, 0), (0, 0), (1, 0) with isotropic variance.
MfaParams three_cluster_truth(double variance = 0.1);

struct SolverSpec {
    int components = 3;
    int latent_dim = 2;
    bool diagonal_noise = true;
    AnnealSchedule schedule;
    int beads = 128;
    int em_max_iter = 5000;
    int dqaem_max_iter = 5000;
    double tol = 1e-7;
};

struct TrialConfig {
    DataSpec data;
    SolverSpec solver;
    SuccessCriterion criterion;
    std::uint64_t init_seed = 1;
    int trials = 100;
    int threads = 1;
    bool keep_traces = false;

    void validate() const;
};

struct SolverOutcome {
    bool success = false;
    FitOutcome outcome = FitOutcome::MaxIterations;
    std::string failure_reason;
    double final_objective = 0.0;
    int iterations = 0;                         // M-steps performed
    std::optional<int> iterations_to_success;   // first iteration after which the criterion holds for good
    std::vector<double> per_component_error;
    double max_free_energy_increase = 0.0;
};

struct TrialRecord {
    int trial = 0;
    std::uint64_t data_seed = 0;
    std::uint64_t init_seed = 0;
    SolverOutcome em;
    SolverOutcome dqaem;
    std::optional<FitTrace> em_trace;
    std::optional<FitTrace> dqaem_trace;
};

struct IterationStats {
    // Over trials where the respective solver succeeded.
    double em_mean = 0.0;
    int em_count = 0;
    double dqaem_mean = 0.0;
    int dqaem_count = 0;
    // Over trials where both succeeded.
    double joint_em_mean = 0.0;
    double joint_dqaem_mean = 0.0;
    int joint_count = 0;
};

struct ComparisonResult {
    ContingencyTable table;
    IterationStats iterations;
    std::vector<TrialRecord> trials;
};

ComparisonResult run_comparison(const TrialConfig& cfg);

/// Recount the table from per-trial records.
ContingencyTable tabulate(const std::vector<TrialRecord>& trials);

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

struct MonotonicityConfig {
    DataSpec data;
    std::vector<int> models{1, 3, 7, 10};
    int latent_dim = 2;
    bool diagonal_noise = true;
    AnnealState anneal{1.0, 0.5, 8, 0};
    int iters = 200;
    int restarts = 20;
    std::uint64_t init_seed = 1;
    double tol = 1e-13;  // convergence stop; the trace is otherwise `iters` M-steps long
    double tolerance = 1e-9;
    double convex_spread_tolerance = 1e-6;
    int threads = 1;

    void validate() const;
};

struct MonotonicityRun {
    int components = 0;
    int restart = 0;
    std::uint64_t init_seed = 0;
    std::vector<double> negative_free_energy;  // -F(theta_t)
    std::vector<double> deltas;                // F(theta_{t+1}) - F(theta_t)
    double max_delta = 0.0;                    // 0 when there are no deltas
    int first_violation = -1;                  // iteration index t+1 of the first delta above tolerance
    FitOutcome outcome = FitOutcome::MaxIterations;
    std::string failure_reason;
};

struct ModelSummary {
    int components = 0;
    double max_delta = 0.0;
    int violations = 0;
    double final_spread = 0.0;  // max - min of final F across restarts
    bool convex_check = false;  // whether final_spread was asserted (m = 1)
    bool passed = true;
};

struct MonotonicityResult {
    std::vector<MonotonicityRun> runs;
    std::vector<ModelSummary> models;
    bool passed = true;
};

MonotonicityResult run_monotonicity(const MonotonicityConfig& cfg);

}  // namespace dqaem::harness
