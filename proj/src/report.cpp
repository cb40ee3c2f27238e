#include "dqaem/report.hpp"

#include "dqaem/io.hpp"

#include <cstdio>
#include <sstream>

namespace dqaem::report {

using nlohmann::json;

namespace {

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f %%", v);
    return buf;
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

json schedule_json(const AnnealSchedule& s) {
    return {{"gamma_init", s.gamma_init}, {"beta_init", s.beta_init}, {"steps", s.total_steps},
            {"gamma_rule", to_string(s.gamma_rule)}, {"beta_rule", to_string(s.beta_rule)}};
}

json outcome_json(const harness::SolverOutcome& o) {
    json j{{"success", o.success},
           {"outcome", to_string(o.outcome)},
           {"final_objective", o.final_objective},
           {"iterations", o.iterations},
           {"per_component_error", o.per_component_error},
           {"max_free_energy_increase", o.max_free_energy_increase}};
    j["iterations_to_success"] = o.iterations_to_success ? json(*o.iterations_to_success) : json(nullptr);
    if (!o.failure_reason.empty()) j["failure_reason"] = o.failure_reason;
    return j;
}

}  // namespace

json comparison_json(const harness::TrialConfig& cfg, const harness::ComparisonResult& result) {
    const auto& t = result.table;
    json j;
    j["config"] = {{"n", cfg.data.n},
                   {"data_seed", cfg.data.seed},
                   {"fresh_dataset_per_trial", cfg.data.fresh_per_trial},
                   {"truth", io::params_to_json(cfg.data.truth)},
                   {"init_seed", cfg.init_seed},
                   {"trials", cfg.trials},
                   {"components", cfg.solver.components},
                   {"latent_dim", cfg.solver.latent_dim},
                   {"beads", cfg.solver.beads},
                   {"schedule", schedule_json(cfg.solver.schedule)},
                   {"em_max_iter", cfg.solver.em_max_iter},
                   {"dqaem_max_iter", cfg.solver.dqaem_max_iter},
                   {"tol", cfg.solver.tol},
                   {"threshold_factor", cfg.criterion.threshold_factor}};
    j["table"] = {{"trials", t.trials},
                  {"em_success_dqaem_success", t.both_success},
                  {"em_success_dqaem_fail", t.em_only},
                  {"em_fail_dqaem_success", t.dqaem_only},
                  {"em_fail_dqaem_fail", t.both_fail},
                  {"em_success_ratio", t.percent(t.em_successes())},
                  {"dqaem_success_ratio", t.percent(t.dqaem_successes())}};
    const auto& it = result.iterations;
    j["iterations_to_success"] = {{"em_mean", it.em_mean},
                                  {"em_count", it.em_count},
                                  {"dqaem_mean", it.dqaem_mean},
                                  {"dqaem_count", it.dqaem_count},
                                  {"joint_em_mean", it.joint_em_mean},
                                  {"joint_dqaem_mean", it.joint_dqaem_mean},
                                  {"joint_count", it.joint_count}};
    json trials = json::array();
    for (const auto& r : result.trials)
        trials.push_back({{"trial", r.trial},
                          {"data_seed", r.data_seed},
                          {"init_seed", r.init_seed},
                          {"em", outcome_json(r.em)},
                          {"dqaem", outcome_json(r.dqaem)}});
    j["trials"] = std::move(trials);
    return j;
}

std::string contingency_text(const harness::ContingencyTable& t) {
    std::ostringstream os;
    const auto row = [&](const std::string& label, int s, int f) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-12s %10s %10s %10s\n", label.c_str(), pct(t.percent(s)).c_str(),
                      pct(t.percent(f)).c_str(), pct(t.percent(s + f)).c_str());
        os << buf;
    };
    char head[160];
    std::snprintf(head, sizeof head, "%-12s %10s %10s %10s\n", "EM \\ DQAEM", "success", "fail", "total");
    os << head;
    row("success", t.both_success, t.em_only);
    row("fail", t.dqaem_only, t.both_fail);
    row("total", t.dqaem_successes(), t.trials - t.dqaem_successes());
    os << "trials: " << t.trials << '\n';
    return os.str();
}

std::string comparison_markdown(const harness::TrialConfig& cfg, const harness::ComparisonResult& result) {
    const auto& t = result.table;
    const auto& it = result.iterations;
    std::ostringstream os;
    os << "# EM vs DQAEM comparison\n\n";
    os << "- trials: " << t.trials << ", N = " << cfg.data.n << ", components = " << cfg.solver.components
       << ", latent dim = " << cfg.solver.latent_dim << ", beads = " << cfg.solver.beads << "\n";
    os << "- schedule: Gamma " << io::format_double(cfg.solver.schedule.gamma_init) << " -> 0 ("
       << to_string(cfg.solver.schedule.gamma_rule) << ") over " << cfg.solver.schedule.total_steps
       << " steps, beta rule " << to_string(cfg.solver.schedule.beta_rule) << "\n";
    os << "- success: squared mean error < " << io::format_double(cfg.criterion.threshold_factor)
       << " x trace(true covariance) for every matched component\n\n";
    os << "| EM \\ DQAEM | success | fail | total |\n|---|---|---|---|\n";
    os << "| success | " << pct(t.percent(t.both_success)) << " | " << pct(t.percent(t.em_only)) << " | "
       << pct(t.percent(t.em_successes())) << " |\n";
    os << "| fail | " << pct(t.percent(t.dqaem_only)) << " | " << pct(t.percent(t.both_fail)) << " | "
       << pct(t.percent(t.trials - t.em_successes())) << " |\n";
    os << "| total | " << pct(t.percent(t.dqaem_successes())) << " | " << pct(t.percent(t.trials - t.dqaem_successes()))
       << " | 100.0 % |\n\n";
    os << "## Iterations until the success criterion holds\n\n";
    os << "| | EM | DQAEM |\n|---|---|---|\n";
    os << "| successful fits (" << it.em_count << " / " << it.dqaem_count << ") | " << fixed(it.em_mean, 2) << " | "
       << fixed(it.dqaem_mean, 2) << " |\n";
    os << "| jointly successful (" << it.joint_count << ") | " << fixed(it.joint_em_mean, 2) << " | "
       << fixed(it.joint_dqaem_mean, 2) << " |\n";
    return os.str();
}

json monotonicity_json(const harness::MonotonicityConfig& cfg, const harness::MonotonicityResult& result) {
    json j;
    j["config"] = {{"n", cfg.data.n},
                   {"data_seed", cfg.data.seed},
                   {"truth", io::params_to_json(cfg.data.truth)},
                   {"models", cfg.models},
                   {"latent_dim", cfg.latent_dim},
                   {"beta", cfg.anneal.beta},
                   {"gamma", cfg.anneal.gamma},
                   {"beads", cfg.anneal.beads},
                   {"iters", cfg.iters},
                   {"restarts", cfg.restarts},
                   {"init_seed", cfg.init_seed},
                   {"tolerance", cfg.tolerance}};
    j["passed"] = result.passed;
    json models = json::array();
    for (const auto& s : result.models)
        models.push_back({{"components", s.components},
                          {"max_delta", s.max_delta},
                          {"violations", s.violations},
                          {"final_spread", s.final_spread},
                          {"convex_check", s.convex_check},
                          {"passed", s.passed}});
    j["models"] = std::move(models);
    json runs = json::array();
    for (const auto& r : result.runs) {
        json run{{"components", r.components},
                 {"restart", r.restart},
                 {"init_seed", r.init_seed},
                 {"iterations", static_cast<int>(r.deltas.size())},
                 {"final_free_energy", -r.negative_free_energy.back()},
                 {"max_delta", r.max_delta},
                 {"first_violation", r.first_violation},
                 {"outcome", to_string(r.outcome)}};
        if (!r.failure_reason.empty()) run["failure_reason"] = r.failure_reason;
        runs.push_back(std::move(run));
    }
    j["runs"] = std::move(runs);
    return j;
}

std::string monotonicity_csv(const harness::MonotonicityResult& result) {
    std::ostringstream os;
    os << "components,restart,iteration,negative_free_energy,delta\n";
    for (const auto& r : result.runs)
        for (std::size_t t = 0; t < r.negative_free_energy.size(); ++t) {
            os << r.components << ',' << r.restart << ',' << t << ',' << io::format_double(r.negative_free_energy[t]) << ',';
            if (t > 0) os << io::format_double(r.deltas[t - 1]);
            os << '\n';
        }
    return os.str();
}

std::string monotonicity_markdown(const harness::MonotonicityConfig& cfg, const harness::MonotonicityResult& result) {
    std::ostringstream os;
    os << "# Free-energy monotonicity at frozen (beta, Gamma)\n\n";
    os << "- beta = " << io::format_double(cfg.anneal.beta) << ", Gamma = " << io::format_double(cfg.anneal.gamma)
       << ", beads = " << cfg.anneal.beads << ", iterations = " << cfg.iters << ", restarts = " << cfg.restarts << "\n";
    os << "- tolerance per step: " << io::format_double(cfg.tolerance) << "\n\n";
    os << "| m | max dF | violations | final F spread | result |\n|---|---|---|---|---|\n";
    for (const auto& s : result.models)
        os << "| " << s.components << " | " << io::format_double(s.max_delta) << " | " << s.violations << " | "
           << io::format_double(s.final_spread) << (s.convex_check ? " (checked)" : "") << " | "
           << (s.passed ? "pass" : "FAIL") << " |\n";
    os << "\noverall: " << (result.passed ? "pass" : "FAIL") << "\n";
    return os.str();
}

json verify_json(const verify::VerifyReport& report) {
    json gates = json::array();
    for (const auto& g : report.gates)
        gates.push_back({{"name", g.name},
                         {"passed", g.passed},
                         {"checks", g.checks},
                         {"max_error", g.max_error},
                         {"tolerance", g.tolerance},
                         {"worst_case", g.detail}});
    return {{"passed", report.passed()}, {"gates", gates}, {"warnings", report.warnings}};
}

}  // namespace dqaem::report
