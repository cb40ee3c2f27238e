#include "dqaem/verify.hpp"

#include "dqaem/classic_em.hpp"
#include "dqaem/oracle.hpp"
#include "dqaem/quantum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace dqaem::verify {

void VerifyConfig::validate() const {
    for (const auto& g : gates)
        if (std::find(kAllGates.begin(), kAllGates.end(), g) == kAllGates.end())
            throw ParameterError("verify: unknown gate '" + g + "'");
    if (instances < 1) throw ParameterError("verify: instances must be >= 1");
    if (!std::isfinite(inject_log_partition_error)) throw ParameterError("verify: injected error must be finite");
}

bool VerifyReport::passed() const {
    return std::all_of(gates.begin(), gates.end(), [](const GateResult& g) { return g.passed; });
}

double mixed_error(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1.0); }

MfaParams random_instance(std::mt19937_64& rng, int d, int k, int m) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    MfaParams p;
    p.weights.resize(m);
    for (int w = 0; w < m; ++w) p.weights[w] = 0.5 + unit(rng);
    p.weights /= p.weights.sum();
    for (int w = 0; w < m; ++w) {
        Vector mu(d);
        for (int i = 0; i < d; ++i) mu[i] = 0.5 * normal(rng);
        Matrix load(d, k);
        for (int c = 0; c < k; ++c)
            for (int r = 0; r < d; ++r) load(r, c) = 0.5 * normal(rng);
        p.means.push_back(mu);
        p.loadings.push_back(load);
    }
    Vector diag(d);
    for (int i = 0; i < d; ++i) diag[i] = 0.5 + unit(rng);
    p.noise_cov = diag.asDiagonal();
    p.diagonal_noise = true;
    return p;
}

double dense_log_partition(const Vector& y, int w, const MfaParams& params, double beta, double gamma, int beads) {
    const int k = params.latent_dim();
    const int d = params.observed_dim();
    const double M = beads;
    const Matrix& load = params.loadings[static_cast<std::size_t>(w)];
    const Matrix phi_inv = params.noise_cov.inverse();
    const Matrix P = Matrix::Identity(k, k) + load.transpose() * phi_inv * load;
    const Vector r = y - params.means[static_cast<std::size_t>(w)];
    const Vector b = load.transpose() * phi_inv * r;
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    // log p(y, x = 0 | w)
    const double c0 = -0.5 * (d * log_2pi + std::log(params.noise_cov.determinant()) + r.dot(phi_inv * r)) - 0.5 * k * log_2pi;

    const int dim = beads * k;
    Matrix A = Matrix::Zero(dim, dim);
    Vector B(dim);
    const double spring = M / (beta * gamma);
    for (int j = 0; j < beads; ++j) {
        const int next = (j + 1) % beads;
        A.block(j * k, j * k, k, k) += beta / M * P;
        // (x_next - x_j)^2 contributes +1 to both diagonals and -1 to both off-diagonals.
        A.block(j * k, j * k, k, k) += spring * Matrix::Identity(k, k);
        A.block(next * k, next * k, k, k) += spring * Matrix::Identity(k, k);
        A.block(j * k, next * k, k, k) -= spring * Matrix::Identity(k, k);
        A.block(next * k, j * k, k, k) -= spring * Matrix::Identity(k, k);
        B.segment(j * k, k) = beta / M * b;
    }
    Eigen::LLT<Matrix> chol(A);
    if (chol.info() != Eigen::Success) throw NumericalError("dense_log_partition: bead precision not SPD", w);
    const double log_det = 2.0 * Matrix(chol.matrixL()).diagonal().array().log().sum();
    const double two_pi_bg = 2.0 * std::numbers::pi * beta * gamma;
    return 0.5 * dim * std::log(M / two_pi_bg) + 0.5 * k * std::log(two_pi_bg) + 0.5 * dim * log_2pi - 0.5 * log_det +
           0.5 * B.dot(chol.solve(B)) + beta * c0;
}

namespace {

std::mt19937_64 gate_rng(const VerifyConfig& cfg, std::uint64_t salt) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(salt)};
    return std::mt19937_64(seq);
}

Vector draw_point(std::mt19937_64& rng, const MfaParams& p) {
    return sample_dataset(p, 1, rng()).point(0);
}

void track(GateResult& g, double err, const std::string& what) {
    ++g.checks;
    if (err > g.max_error || !std::isfinite(err)) {
        g.max_error = std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
        g.detail = what;
    }
    if (!(err <= g.tolerance)) g.passed = false;
}

oracle::GridSpec grid_for(int beads) {
    switch (beads) {
        case 1: return {-8.0, 8.0, 1025};
        case 2: return {-8.0, 8.0, 401};
        default: return {-8.0, 8.0, 81};
    }
}

AnnealState gate_state(int instance, int beads) {
    return AnnealState{instance % 2 == 0 ? 1.0 : 0.8, instance % 3 == 0 ? 0.5 : 1.0, beads, 0};
}

std::string label(int inst, int beads, int w, const char* quantity) {
    std::ostringstream os;
    os << "instance " << inst << ", M=" << beads << ", w=" << w + 1 << ": " << quantity;
    return os.str();
}

GateResult gate_reduction(const VerifyConfig& cfg) {
    GateResult g{"reduction", true, 0, 0.0, 1e-10, ""};
    auto rng = gate_rng(cfg, 1);
    for (int inst = 0; inst < 2 * cfg.instances; ++inst) {
        const int d = 1 + static_cast<int>(rng() % 3), k = 1 + static_cast<int>(rng() % 2), m = 1 + static_cast<int>(rng() % 3);
        const MfaParams p = random_instance(rng, d, k, m);
        const Dataset data = sample_dataset(p, 15, rng());
        const double f = free_energy(data, p, AnnealState{1.0, 0.0, 1, 0});
        track(g, std::abs(f + incomplete_log_likelihood(data, p)), "instance " + std::to_string(inst));
    }
    return g;
}

GateResult gate_oracle_chain(const VerifyConfig& cfg) {
    GateResult g{"oracle_chain", true, 0, 0.0, 1e-6, ""};
    auto rng = gate_rng(cfg, 2);
    for (int inst = 0; inst < cfg.instances; ++inst) {
        const int m = 1 + inst % 2, d = 1 + (inst / 2) % 2;
        const MfaParams p = random_instance(rng, d, 1, m);
        const Vector y = draw_point(rng, p);
        for (int beads : {1, 2, 4}) {
            const AnnealState s = gate_state(inst, beads);
            const DatumBeadPosterior eng = bead_posterior(y, p, s);
            for (int w = 0; w < m; ++w) {
                const oracle::ChainQuadrature q = oracle::brute_force_chain(y, w, p, s, grid_for(beads));
                track(g, mixed_error(eng.log_partition[w] + cfg.inject_log_partition_error, q.log_partition),
                      label(inst, beads, w, "log_partition"));
                track(g, mixed_error(eng.bead_mean[static_cast<std::size_t>(w)][0], q.bead_mean), label(inst, beads, w, "bead_mean"));
                track(g, mixed_error(eng.bead_second_moment[static_cast<std::size_t>(w)](0, 0), q.bead_second_moment),
                      label(inst, beads, w, "bead_second_moment"));
            }
        }
    }
    return g;
}

GateResult gate_oracle_free_energy(const VerifyConfig& cfg) {
    GateResult g{"oracle_free_energy", true, 0, 0.0, 1e-6, ""};
    auto rng = gate_rng(cfg, 3);
    for (int inst = 0; inst < cfg.instances; ++inst) {
        const int m = 1 + (inst + 1) % 2, d = 1 + inst % 2;
        const MfaParams p = random_instance(rng, d, 1, m);
        const Dataset data = sample_dataset(p, 2, rng());
        for (int beads : {1, 2, 4}) {
            const AnnealState s = gate_state(inst, beads);
            const double engine = free_energy(data, p, s);
            const double brute = oracle::brute_force_free_energy(data, p, s, grid_for(beads));
            track(g, mixed_error(engine, brute), label(inst, beads, 0, "free_energy"));
        }
    }
    return g;
}

GateResult gate_oracle_u_function(const VerifyConfig& cfg) {
    GateResult g{"oracle_u_function", true, 0, 0.0, 1e-6, ""};
    auto rng = gate_rng(cfg, 4);
    std::normal_distribution<double> jitter(0.0, 0.2);
    for (int inst = 0; inst < cfg.instances; ++inst) {
        const int m = 1 + inst % 2, d = 1 + (inst / 2) % 2;
        const MfaParams p = random_instance(rng, d, 1, m);
        MfaParams cand = p;
        for (auto& mu : cand.means)
            for (Eigen::Index i = 0; i < mu.size(); ++i) mu[i] += jitter(rng);
        for (auto& l : cand.loadings)
            for (Eigen::Index i = 0; i < l.size(); ++i) l.data()[i] += jitter(rng);
        cand.noise_cov.diagonal().array() += 0.1;
        const Vector y = draw_point(rng, p);
        Dataset single;
        single.points = y.transpose();
        for (int beads : {1, 2}) {
            const AnnealState s = gate_state(inst, beads);
            const BeadPosterior post = quantum_e_step(single, p, s);
            const double engine = u_function(single, post, cand);
            double brute = 0.0;
            for (int w = 0; w < m; ++w) {
                const double e = oracle::brute_force_expectation(y, w, p, s, grid_for(beads), [&](std::span<const double> xs) {
                    double acc = 0.0;
                    Vector x(1);
                    for (double v : xs) {
                        x[0] = v;
                        acc += complete_log_pdf(y, x, w, cand);
                    }
                    return -acc / static_cast<double>(xs.size());
                });
                brute += post.responsibilities(0, w) * e;
            }
            track(g, mixed_error(engine, brute), label(inst, beads, 0, "u_function"));
        }
    }
    return g;
}

GateResult gate_mode_logdet(const VerifyConfig& cfg) {
    GateResult g{"mode_logdet", true, 0, 0.0, 1e-8, ""};
    auto rng = gate_rng(cfg, 5);
    for (int inst = 0; inst < cfg.instances; ++inst) {
        const int k = 1 + inst % 2, d = k + static_cast<int>(rng() % 2), m = 1 + inst % 3;
        const MfaParams p = random_instance(rng, d, k, m);
        const Vector y = draw_point(rng, p);
        for (int beads = 1; beads <= 8; ++beads) {
            const AnnealState s{inst % 2 == 0 ? 1.0 : 0.6, 0.25 + 0.5 * (inst % 4), beads, 0};
            const DatumBeadPosterior eng = bead_posterior(y, p, s);
            for (int w = 0; w < m; ++w)
                track(g, mixed_error(eng.log_partition[w], dense_log_partition(y, w, p, s.beta, s.gamma, beads)),
                      label(inst, beads, w, "log_partition"));
        }
    }
    return g;
}

GateResult gate_gamma_limit(const VerifyConfig& cfg) {
    GateResult g{"gamma_limit", true, 0, 0.0, 1e-4, ""};
    auto rng = gate_rng(cfg, 6);
    for (int inst = 0; inst < cfg.instances; ++inst) {
        const int d = 1 + inst % 3, k = 1 + inst % 2, m = 1 + inst % 3;
        const MfaParams p = random_instance(rng, d, k, m);
        const Dataset data = sample_dataset(p, 5, rng());
        const ClassicPosterior classic = e_step(data, p);
        const BeadPosterior bead = quantum_e_step(data, p, AnnealState{1.0, 1e-8, 8, 0});
        for (int i = 0; i < data.size(); ++i)
            for (int w = 0; w < m; ++w) {
                const double mean_err = (bead.mean(i, w) - classic.mean(i, w)).cwiseAbs().maxCoeff();
                const double second_err = (bead.second_moment(i, w) - classic.second_moment(i, w)).cwiseAbs().maxCoeff();
                track(g, std::max(mean_err, second_err), label(inst, 8, w, "moments"));
            }
    }
    return g;
}

}  // namespace

GateResult run_gate(const std::string& name, const VerifyConfig& cfg) {
    if (name == "reduction") return gate_reduction(cfg);
    if (name == "oracle_chain") return gate_oracle_chain(cfg);
    if (name == "oracle_free_energy") return gate_oracle_free_energy(cfg);
    if (name == "oracle_u_function") return gate_oracle_u_function(cfg);
    if (name == "mode_logdet") return gate_mode_logdet(cfg);
    if (name == "gamma_limit") return gate_gamma_limit(cfg);
    throw ParameterError("verify: unknown gate '" + name + "'");
}

VerifyReport run_verification(const VerifyConfig& cfg) {
    cfg.validate();
    VerifyReport report;
    if (cfg.gates.empty()) report.warnings.push_back("no gates run");
    for (const auto& name : cfg.gates) report.gates.push_back(run_gate(name, cfg));
    return report;
}

}  // namespace dqaem::verify
