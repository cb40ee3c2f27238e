#include "cli.hpp"

#include "dqaem/classic_em.hpp"
#include "dqaem/harness.hpp"
#include "dqaem/io.hpp"
#include "dqaem/quantum.hpp"
#include "dqaem/report.hpp"
#include "dqaem/verify.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <type_traits>

namespace dqaem::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// A JSON object whose keys are checked against a fixed set on construction.
class Section {
public:
    Section(const json& j, std::string where, std::set<std::string> allowed) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
        for (const auto& [key, _] : j_.items())
            if (!allowed.contains(key)) throw ConfigError("unknown config key '" + name(key) + "'");
    }

    bool has(const std::string& key) const { return j_.contains(key); }
    std::string name(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }
    const json& raw(const std::string& key) const { return j_.at(key); }

    template <typename T>
    T require(const std::string& key) const {
        if (!has(key)) throw ConfigError("missing required config key '" + name(key) + "'");
        return convert<T>(j_.at(key), name(key));
    }

    template <typename T>
    T get(const std::string& key, T fallback) const {
        return has(key) ? convert<T>(j_.at(key), name(key)) : fallback;
    }

    Section sub(const std::string& key, std::set<std::string> allowed) const {
        static const json empty = json::object();
        return Section(has(key) ? j_.at(key) : empty, name(key), std::move(allowed));
    }

    void forbid(const std::string& key, const std::string& why) const {
        if (has(key)) throw ConfigError("config key '" + name(key) + "' " + why);
    }

private:
    template <typename T>
    static T convert(const json& v, const std::string& key) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(key + ": expected a boolean");
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            if (!v.is_number_unsigned()) throw ConfigError(key + ": expected a non-negative integer");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(key + ": expected an integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(key + ": expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(key + ": expected a string");
        }
        try {
            return v.get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(key + ": " + e.what());
        }
    }

    const json& j_;
    std::string where_;
};

fs::path input_file(const Section& s, const std::string& key) {
    const fs::path p = s.require<std::string>(key);
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) throw ConfigError(s.name(key) + ": no such file '" + p.string() + "'");
    return p;
}

fs::path output_file(const fs::path& p, const std::string& key) {
    if (p.empty()) throw ConfigError(key + ": empty path");
    const fs::path parent = p.has_parent_path() ? p.parent_path() : fs::path(".");
    std::error_code ec;
    if (!fs::is_directory(parent, ec)) throw ConfigError(key + ": directory '" + parent.string() + "' does not exist");
    if (fs::is_directory(p, ec)) throw ConfigError(key + ": '" + p.string() + "' is a directory");
    return p;
}

fs::path output_file(const Section& s, const std::string& key) {
    return output_file(fs::path(s.require<std::string>(key)), s.name(key));
}

AnnealSchedule parse_schedule(const Section& parent, const AnnealSchedule& defaults) {
    const Section s = parent.sub("schedule", {"gamma_init", "beta_init", "steps", "gamma_rule", "beta_rule"});
    AnnealSchedule sch = defaults;
    sch.gamma_init = s.get("gamma_init", sch.gamma_init);
    sch.beta_init = s.get("beta_init", sch.beta_init);
    sch.total_steps = s.get("steps", sch.total_steps);
    try {
        if (s.has("gamma_rule")) sch.gamma_rule = parse_gamma_rule(s.require<std::string>("gamma_rule"));
        if (s.has("beta_rule")) sch.beta_rule = parse_beta_rule(s.require<std::string>("beta_rule"));
    } catch (const ParameterError& e) {
        throw ConfigError(s.name("schedule") + ": " + e.what());
    }
    sch.validate();
    return sch;
}

MfaParams parse_truth(const Section& s, double default_variance) {
    if (s.has("truth")) {
        s.forbid("variance", "conflicts with explicit truth parameters");
        return io::params_from_json(s.raw("truth"));
    }
    return harness::three_cluster_truth(s.get("variance", default_variance));
}

std::string opt_int(const std::optional<int>& v) { return v ? std::to_string(*v) : std::string(); }

}  // namespace

void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    json* node = &config;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw ConfigError("--set: empty key");
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (parts[i].empty()) throw ConfigError("--set: malformed key '" + key + "'");
        if (node->is_null()) *node = json::object();
        if (!node->is_object()) throw ConfigError("--set: '" + key + "' descends into a non-object value");
        node = &(*node)[parts[i]];
    }
    *node = std::move(value);
}

int cmd_generate(const json& config, std::ostream& out) {
    const Section s(config, "", {"seed", "n", "truth", "variance", "output"});
    const auto seed = s.require<std::uint64_t>("seed");
    const int n = s.get("n", 300);
    if (n < 1) throw ConfigError("n: must be >= 1");
    const Section o = s.sub("output", {"csv", "truth"});
    const fs::path csv = output_file(o, "csv");
    const fs::path sidecar = output_file(o.has("truth") ? fs::path(o.require<std::string>("truth"))
                                                        : fs::path(csv).replace_extension(".json"),
                                         "output.truth");
    const MfaParams truth = parse_truth(s, 0.1);

    const Dataset data = sample_dataset(truth, n, seed);
    io::save_dataset(data, csv, sidecar);
    out << "wrote " << data.size() << " points (d = " << data.dim() << ", m = " << truth.components() << ") to "
        << csv.string() << ", truth to " << sidecar.string() << '\n';
    return kOk;
}

int cmd_fit(const json& config, std::ostream& out) {
    const Section s(config, "", {"seed", "solver", "data", "components", "latent_dim", "diagonal_noise", "init",
                                 "max_iter", "tol", "beads", "schedule", "threshold_factor", "output"});
    const std::string solver = s.require<std::string>("solver");
    if (solver != "em" && solver != "daem" && solver != "dqaem")
        throw ConfigError("solver: expected one of em, daem, dqaem, got '" + solver + "'");
    if (solver == "em") {
        s.forbid("schedule", "is not used by solver em");
        s.forbid("beads", "is not used by solver em");
    }
    if (solver == "daem") s.forbid("beads", "is not used by solver daem");

    const Section d = s.sub("data", {"csv", "truth"});
    const fs::path csv = input_file(d, "csv");
    const fs::path truth_path = d.has("truth") ? input_file(d, "truth") : fs::path();
    const Section o = s.sub("output", {"trace", "params", "wall_time"});
    const fs::path trace_path = output_file(o, "trace");
    const fs::path params_path = output_file(o, "params");
    const bool wall_time = o.get("wall_time", true);

    const int max_iter = s.get("max_iter", 5000);
    const double tol = s.get("tol", 1e-7);
    if (max_iter < 0) throw ConfigError("max_iter: must be >= 0");
    if (!(tol >= 0.0)) throw ConfigError("tol: must be >= 0");
    const int beads = s.get("beads", 128);
    if (beads < 1) throw ConfigError("beads: must be >= 1");
    AnnealSchedule defaults;
    if (solver == "daem") {
        defaults.gamma_init = 0.0;
        defaults.beta_init = 0.5;
        defaults.beta_rule = BetaRule::LinearToOne;
    }
    const AnnealSchedule schedule = solver == "em" ? defaults : parse_schedule(s, defaults);
    if (solver == "daem" && schedule.gamma_init != 0.0) throw ConfigError("schedule.gamma_init: must be 0 for solver daem");
    harness::SuccessCriterion crit{s.get("threshold_factor", 0.2)};
    crit.validate();

    const Dataset data = io::load_dataset(csv, truth_path);

    MfaParams init;
    const bool diag = s.get("diagonal_noise", true);
    if (s.has("init") && s.raw("init").is_object()) {
        init = io::params_from_json(s.raw("init"));
        if (init.observed_dim() != data.dim()) throw ConfigError("init: dimension does not match the dataset");
        if (s.has("components") && s.require<int>("components") != init.components())
            throw ConfigError("components: does not match init");
        if (s.has("latent_dim") && s.require<int>("latent_dim") != init.latent_dim())
            throw ConfigError("latent_dim: does not match init");
    } else {
        if (s.has("init") && s.get<std::string>("init", "") != "random")
            throw ConfigError("init: expected \"random\" or a parameter object");
        const auto seed = s.require<std::uint64_t>("seed");
        const int m = s.get("components", 3);
        const int k = s.get("latent_dim", 2);
        if (m < 1 || k < 1) throw ConfigError("components and latent_dim must be >= 1");
        init = random_init(data, m, k, seed, diag);
    }

    FitTrace trace;
    if (solver == "em")
        trace = run_em(data, init, max_iter, tol);
    else if (solver == "daem")
        trace = run_daem(data, init, schedule, max_iter, tol);
    else
        trace = run_dqaem(data, init, schedule, beads, max_iter, tol);

    std::ostringstream csv_out;
    io::write_trace_csv(trace, csv_out, wall_time);
    io::write_text(trace_path, csv_out.str());
    if (!trace.iterations.empty()) io::write_text(params_path, io::params_to_json(trace.final_params()).dump(2) + "\n");

    out << "solver: " << solver << "\noutcome: " << to_string(trace.outcome) << '\n';
    if (!trace.failure_reason.empty()) out << "reason: " << trace.failure_reason << '\n';
    if (!trace.iterations.empty())
        out << "iterations: " << trace.last().iteration << "\nobjective: " << io::format_double(trace.last().objective)
            << '\n';
    for (const auto& w : trace.warnings) out << "warning: " << w << '\n';
    if (data.truth && !trace.iterations.empty() && data.truth->params.components() == trace.final_params().components()) {
        const auto r = harness::evaluate_success(trace.final_params(), data.truth->params, crit);
        out << "success: " << (r.success ? "yes" : "no") << '\n';
    }

    switch (trace.outcome) {
        case FitOutcome::Converged: return kOk;
        case FitOutcome::MaxIterations: return kMaxIterations;
        case FitOutcome::NumericalFailure: return kNumericalFailure;
    }
    return kNumericalFailure;
}

namespace {

int run_comparison_experiment(const Section& s, const harness::DataSpec& data, int threads, const fs::path& dir,
                              std::ostream& out) {
    const Section c = s.sub("comparison", {"trials", "init_seed", "components", "latent_dim", "diagonal_noise", "beads",
                                           "em_max_iter", "dqaem_max_iter", "tol", "threshold_factor", "schedule",
                                           "keep_traces"});
    harness::TrialConfig cfg;
    cfg.data = data;
    cfg.threads = threads;
    cfg.trials = c.get("trials", cfg.trials);
    cfg.init_seed = c.get("init_seed", data.seed);
    cfg.solver.components = c.get("components", cfg.solver.components);
    cfg.solver.latent_dim = c.get("latent_dim", cfg.solver.latent_dim);
    cfg.solver.diagonal_noise = c.get("diagonal_noise", cfg.solver.diagonal_noise);
    cfg.solver.beads = c.get("beads", cfg.solver.beads);
    cfg.solver.em_max_iter = c.get("em_max_iter", cfg.solver.em_max_iter);
    cfg.solver.dqaem_max_iter = c.get("dqaem_max_iter", cfg.solver.dqaem_max_iter);
    cfg.solver.tol = c.get("tol", cfg.solver.tol);
    cfg.solver.schedule = parse_schedule(c, cfg.solver.schedule);
    cfg.criterion.threshold_factor = c.get("threshold_factor", cfg.criterion.threshold_factor);
    cfg.keep_traces = c.get("keep_traces", false);
    cfg.validate();

    const fs::path trace_dir = dir / "traces";
    if (cfg.keep_traces) {
        std::error_code ec;
        fs::create_directories(trace_dir, ec);
        if (ec) throw ConfigError("output_dir: cannot create '" + trace_dir.string() + "': " + ec.message());
    }

    const auto result = harness::run_comparison(cfg);

    io::write_text(dir / "comparison.json", report::comparison_json(cfg, result).dump(2) + "\n");
    io::write_text(dir / "comparison.md", report::comparison_markdown(cfg, result));
    io::write_text(dir / "contingency.txt", report::contingency_text(result.table));
    std::ostringstream trials;
    trials << "trial,data_seed,init_seed,em_success,em_outcome,em_iterations,em_iterations_to_success,"
              "dqaem_success,dqaem_outcome,dqaem_iterations,dqaem_iterations_to_success\n";
    for (const auto& r : result.trials) {
        trials << r.trial << ',' << r.data_seed << ',' << r.init_seed << ',' << int(r.em.success) << ','
               << to_string(r.em.outcome) << ',' << r.em.iterations << ',' << opt_int(r.em.iterations_to_success) << ','
               << int(r.dqaem.success) << ',' << to_string(r.dqaem.outcome) << ',' << r.dqaem.iterations << ','
               << opt_int(r.dqaem.iterations_to_success) << '\n';
        if (!cfg.keep_traces) continue;
        char stem[32];
        std::snprintf(stem, sizeof stem, "trial_%04d", r.trial);
        for (const auto& [tag, tr] : {std::pair{"em", &r.em_trace}, std::pair{"dqaem", &r.dqaem_trace}}) {
            if (!*tr) continue;
            std::ostringstream os;
            io::write_trace_csv(**tr, os);
            io::write_text(trace_dir / (std::string(stem) + "_" + tag + ".csv"), os.str());
        }
    }
    io::write_text(dir / "trials.csv", trials.str());

    out << report::contingency_text(result.table);
    out << "report: " << (dir / "comparison.md").string() << '\n';
    return kOk;
}

int run_monotonicity_experiment(const Section& s, const harness::DataSpec& data, int threads, const fs::path& dir,
                                std::ostream& out) {
    const Section c = s.sub("monotonicity", {"models", "latent_dim", "diagonal_noise", "beta", "gamma", "beads", "iters",
                                             "restarts", "init_seed", "tol", "tolerance", "convex_spread_tolerance"});
    harness::MonotonicityConfig cfg;
    cfg.data = data;
    cfg.threads = threads;
    cfg.models = c.get("models", cfg.models);
    cfg.latent_dim = c.get("latent_dim", cfg.latent_dim);
    cfg.diagonal_noise = c.get("diagonal_noise", cfg.diagonal_noise);
    cfg.anneal.beta = c.get("beta", cfg.anneal.beta);
    cfg.anneal.gamma = c.get("gamma", cfg.anneal.gamma);
    cfg.anneal.beads = c.get("beads", cfg.anneal.beads);
    cfg.iters = c.get("iters", cfg.iters);
    cfg.restarts = c.get("restarts", cfg.restarts);
    cfg.init_seed = c.get("init_seed", data.seed);
    cfg.tol = c.get("tol", cfg.tol);
    cfg.tolerance = c.get("tolerance", cfg.tolerance);
    cfg.convex_spread_tolerance = c.get("convex_spread_tolerance", cfg.convex_spread_tolerance);
    cfg.validate();

    const auto result = harness::run_monotonicity(cfg);

    io::write_text(dir / "monotonicity.json", report::monotonicity_json(cfg, result).dump(2) + "\n");
    io::write_text(dir / "monotonicity.md", report::monotonicity_markdown(cfg, result));
    io::write_text(dir / "monotonicity.csv", report::monotonicity_csv(result));

    for (const auto& m : result.models)
        out << "m = " << m.components << ": max dF " << io::format_double(m.max_delta) << ", violations "
            << m.violations << (m.passed ? "" : "  FAIL") << '\n';
    for (const auto& r : result.runs)
        if (r.first_violation >= 0)
            out << "violation: m = " << r.components << ", restart " << r.restart << ", iteration " << r.first_violation
                << '\n';
    out << "monotonicity: " << (result.passed ? "pass" : "FAIL") << '\n';
    return result.passed ? kOk : kVerificationFailure;
}

}  // namespace

int cmd_experiment(const json& config, std::ostream& out) {
    const Section s(config, "", {"experiment", "seed", "threads", "output_dir", "data", "comparison", "monotonicity"});
    const std::string kind = s.require<std::string>("experiment");
    if (kind != "comparison" && kind != "monotonicity")
        throw ConfigError("experiment: expected comparison or monotonicity, got '" + kind + "'");
    s.forbid(kind == "comparison" ? "monotonicity" : "comparison", "does not apply to experiment " + kind);

    harness::DataSpec data;
    data.seed = s.require<std::uint64_t>("seed");
    const Section d = s.sub("data", {"truth", "variance", "n", "fresh_per_trial"});
    data.truth = parse_truth(d, 0.1);
    data.n = d.get("n", data.n);
    data.fresh_per_trial = d.get("fresh_per_trial", data.fresh_per_trial);
    if (kind == "monotonicity") d.forbid("fresh_per_trial", "does not apply to experiment monotonicity");
    const int threads = s.get("threads", 0);
    if (threads < 0) throw ConfigError("threads: must be >= 0");

    const fs::path dir = s.require<std::string>("output_dir");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("output_dir: cannot create '" + dir.string() + "'");

    return kind == "comparison" ? run_comparison_experiment(s, data, threads, dir, out)
                                : run_monotonicity_experiment(s, data, threads, dir, out);
}

int cmd_verify(const json& config, std::ostream& out) {
    const Section s(config, "", {"gates", "instances", "seed", "inject_log_partition_error", "output"});
    verify::VerifyConfig cfg;
    cfg.gates = s.get("gates", cfg.gates);
    cfg.instances = s.get("instances", cfg.instances);
    cfg.seed = s.get("seed", cfg.seed);
    cfg.inject_log_partition_error = s.get("inject_log_partition_error", 0.0);
    const fs::path output = s.has("output") ? output_file(s, "output") : fs::path();
    cfg.validate();

    const auto rep = verify::run_verification(cfg);
    if (!output.empty()) io::write_text(output, report::verify_json(rep).dump(2) + "\n");
    for (const auto& g : rep.gates) {
        char line[256];
        std::snprintf(line, sizeof line, "%-20s %s  checks %4d  max error %.3e  tol %.1e", g.name.c_str(),
                      g.passed ? "pass" : "FAIL", g.checks, g.max_error, g.tolerance);
        out << line << '\n';
        if (!g.passed && !g.detail.empty()) out << "  worst: " << g.detail << '\n';
    }
    for (const auto& w : rep.warnings) out << "warning: " << w << '\n';
    out << "verify: " << (rep.passed() ? "pass" : "FAIL") << '\n';
    return rep.passed() ? kOk : kVerificationFailure;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Classic, beta-annealed and quantum-annealed EM for mixtures of factor analyzers"};
    app.require_subcommand(1);

    using Handler = int (*)(const json&, std::ostream&);
    const std::vector<std::tuple<std::string, std::string, Handler>> commands{
        {"generate", "sample a dataset from a mixture of factor analyzers", cmd_generate},
        {"fit", "fit a dataset with em, daem or dqaem", cmd_fit},
        {"experiment", "run the comparison or monotonicity experiment", cmd_experiment},
        {"verify", "check the bead-chain engine against brute-force oracles", cmd_verify},
    };
    std::string config_path;
    std::vector<std::string> sets;
    for (const auto& [name, help, _] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--set", sets, "override a config key: dotted.key=value (value parsed as JSON)")
            ->expected(1)
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    }

    // CLI11 consumes a reversed argument list without the program name
    std::vector<std::string> rev;
    if (!args.empty()) rev.assign(args.rbegin(), args.rend() - 1);
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        json config = json::object();
        if (!config_path.empty()) {
            try {
                config = json::parse(io::read_text(config_path));
            } catch (const json::parse_error& e) {
                throw ConfigError(config_path + ": " + e.what());
            }
            if (!config.is_object()) throw ConfigError(config_path + ": top level must be an object");
        }
        for (const auto& s : sets) apply_override(config, s);

        for (const auto& [name, _, handler] : commands)
            if (app.got_subcommand(name)) return handler(config, out);
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kNumericalFailure;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const ParameterError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const io::IoError& e) {
        err << "i/o error: " << e.what() << '\n';
        return kConfigError;
    } catch (const json::exception& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    }
    return kConfigError;
}

}  // namespace dqaem::cli
