#include "support.hpp"

#include "dqaem/classic_em.hpp"
#include "dqaem/harness.hpp"
#include "dqaem/oracle.hpp"
#include "dqaem/quantum.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>

using namespace dqaem;
using testing::vec;

namespace {

Matrix ring_laplacian(int M) {
    Matrix l = Matrix::Zero(M, M);
    for (int j = 0; j < M; ++j) {
        const int prev = (j + M - 1) % M;
        l(j, j) += 1;
        l(prev, prev) += 1;
        l(j, prev) -= 1;
        l(prev, j) -= 1;
    }
    return l;
}

struct DenseChain {
    double log_partition;
    Vector bead_mean;
    Matrix bead_second_moment;
};

// The stacked bead weight as one (M k)-dimensional Gaussian, integrated with a dense Cholesky.
DenseChain dense_chain(const Vector& y, int w, const MfaParams& p, double beta, double gamma, int M) {
    const int k = p.latent_dim();
    const int d = p.observed_dim();
    const Matrix phi_inv = p.noise_cov.inverse();
    const Matrix& lam = p.loadings[static_cast<std::size_t>(w)];
    const Matrix P = Matrix::Identity(k, k) + lam.transpose() * phi_inv * lam;
    const Vector r = y - p.means[static_cast<std::size_t>(w)];
    const Matrix lap = ring_laplacian(M);

    Matrix A = Matrix::Zero(M * k, M * k);
    Vector b(M * k);
    for (int j = 0; j < M; ++j) {
        A.block(j * k, j * k, k, k) += beta / M * P;
        b.segment(j * k, k) = beta / M * lam.transpose() * phi_inv * r;
        for (int i = 0; i < M; ++i) A.block(j * k, i * k, k, k) += M / (beta * gamma) * lap(j, i) * Matrix::Identity(k, k);
    }
    Eigen::LLT<Matrix> llt(A);
    const Vector mean = llt.solve(b);
    const Matrix cov = llt.solve(Matrix::Identity(M * k, M * k));
    const double log_det_a = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
    const double c = 0.5 * (d + k) * testing::kLog2Pi + 0.5 * std::log(p.noise_cov.determinant());
    const double constant = -beta * (0.5 * r.dot(phi_inv * r) + c);
    const double prefactor = 0.5 * M * k * std::log(M / (2 * M_PI * beta * gamma)) + 0.5 * k * std::log(2 * M_PI * beta * gamma);

    DenseChain out;
    out.log_partition = constant + 0.5 * b.dot(mean) + 0.5 * M * k * testing::kLog2Pi - 0.5 * log_det_a + prefactor;
    out.bead_mean = mean.segment(0, k);
    out.bead_second_moment = Matrix::Zero(k, k);
    for (int j = 0; j < M; ++j) {
        const Vector mj = mean.segment(j * k, k);
        out.bead_second_moment += (cov.block(j * k, j * k, k, k) + mj * mj.transpose()) / M;
    }
    return out;
}

std::vector<std::function<void(MfaParams&, double)>> coordinates(const MfaParams& p) {
    std::vector<std::function<void(MfaParams&, double)>> out;
    const int m = p.components();
    for (int w = 0; w < m; ++w) {
        for (int j = 0; j < p.observed_dim(); ++j) out.push_back([=](MfaParams& q, double h) { q.means[w][j] += h; });
        for (int j = 0; j < p.observed_dim(); ++j)
            for (int c = 0; c < p.latent_dim(); ++c)
                out.push_back([=](MfaParams& q, double h) { q.loadings[w](j, c) += h; });
        if (w + 1 < m)
            out.push_back([=](MfaParams& q, double h) {
                q.weights[w] += h;
                q.weights[m - 1] -= h;
            });
    }
    for (int j = 0; j < p.observed_dim(); ++j) out.push_back([=](MfaParams& q, double h) { q.noise_cov(j, j) += h; });
    return out;
}

Vector fd_gradient(const std::function<double(const MfaParams&)>& f, const MfaParams& at, double h = 1e-5) {
    const auto coords = coordinates(at);
    Vector g(static_cast<Eigen::Index>(coords.size()));
    for (std::size_t c = 0; c < coords.size(); ++c) {
        MfaParams plus = at, minus = at;
        coords[c](plus, h);
        coords[c](minus, -h);
        g[static_cast<Eigen::Index>(c)] = (f(plus) - f(minus)) / (2 * h);
    }
    return g;
}

Dataset single(const Vector& y) {
    Dataset d;
    d.points = y.transpose();
    return d;
}

}  // namespace

TEST_CASE("chain mode eigenvalues") {
    CHECK(chain_mode_eigenvalues(1) == std::vector<double>{0.0});
    for (int M : {2, 3, 4, 7, 8}) {
        auto got = chain_mode_eigenvalues(M);
        REQUIRE(got.size() == static_cast<std::size_t>(M));
        Eigen::SelfAdjointEigenSolver<Matrix> eig(ring_laplacian(M));
        std::sort(got.begin(), got.end());
        for (int n = 0; n < M; ++n) CHECK(std::abs(got[static_cast<std::size_t>(n)] - eig.eigenvalues()[n]) < 1e-12);
    }
    const auto four = chain_mode_eigenvalues(4);
    CHECK(four[0] == doctest::Approx(0.0));
    CHECK(four[1] == doctest::Approx(2.0));
    CHECK(four[2] == doctest::Approx(4.0));
    CHECK(four[3] == doctest::Approx(2.0));
    CHECK_THROWS_AS(chain_mode_eigenvalues(0), ParameterError);
}

TEST_CASE("pure prior gives zero bead means") {
    const auto p = MfaParams::isotropic(vec({0.5, 0.5}), {vec({0.0, 0.0}), vec({0.0, 0.0})}, 2, 1.0);
    const auto post = bead_posterior(vec({0.0, 0.0}), p, {1.0, 0.7, 8, 0});
    for (const auto& mu : post.bead_mean) CHECK(mu.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("bead posterior matches the dense chain integral") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    for (int M = 1; M <= 8; ++M) {
        for (int k : {1, 2}) {
            const auto p = testing::random_params(rng, 3, k, 2);
            const Vector y = vec({g(rng), g(rng), g(rng)});
            const double beta = M % 2 ? 1.0 : 0.6;
            const double gamma = 0.3 + 0.2 * M;
            const auto post = bead_posterior(y, p, {beta, gamma, M, 0});
            for (int w = 0; w < 2; ++w) {
                const auto dense = dense_chain(y, w, p, beta, gamma, M);
                CHECK(std::abs(post.log_partition[w] - dense.log_partition) < 1e-8);
                CHECK((post.bead_mean[static_cast<std::size_t>(w)] - dense.bead_mean).cwiseAbs().maxCoeff() < 1e-10);
                CHECK((post.bead_second_moment[static_cast<std::size_t>(w)] - dense.bead_second_moment).cwiseAbs().maxCoeff() < 1e-10);
            }
        }
    }
}

TEST_CASE("bead posterior matches grid quadrature at k = 1, M = 2") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g;
    for (int rep = 0; rep < 3; ++rep) {
        const auto p = testing::random_params(rng, 2, 1, 1);
        const Vector y = vec({g(rng), g(rng)});
        const AnnealState s{1.0, 0.5 + rep * 0.5, 2, 0};
        const auto post = bead_posterior(y, p, s);
        const auto q = oracle::brute_force_chain(y, 0, p, s, {-8.0, 8.0, 401});
        CHECK(testing::rel(post.log_partition[0], q.log_partition) < 1e-6);
        CHECK(testing::rel(post.bead_mean[0][0], q.bead_mean) < 1e-6);
        CHECK(testing::rel(post.bead_second_moment[0](0, 0), q.bead_second_moment) < 1e-6);
    }
}

TEST_CASE("small Gamma recovers the classic posterior") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 5; ++rep) {
        const auto p = testing::random_params(rng, 2, 2, 3);
        const Dataset data = sample_dataset(p, 5, 70 + rep);
        const auto classic = e_step(data, p);
        for (int i = 0; i < data.size(); ++i) {
            const auto post = bead_posterior(data.point(i), p, {1.0, 1e-8, 8, 0});
            for (int w = 0; w < 3; ++w) {
                CHECK((post.bead_mean[static_cast<std::size_t>(w)] - classic.mean(i, w)).cwiseAbs().maxCoeff() < 1e-4);
                CHECK((post.bead_second_moment[static_cast<std::size_t>(w)] - classic.second_moment(i, w)).cwiseAbs().maxCoeff() < 1e-4);
                CHECK(std::abs(post.responsibilities[w] - classic.responsibilities(i, w)) < 1e-4);
            }
        }
    }
}

TEST_CASE("bead means do not depend on Gamma; bead covariance grows with it") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    for (int rep = 0; rep < 5; ++rep) {
        const auto p = testing::random_params(rng, 3, 2, 2);
        const Vector y = vec({g(rng), g(rng), g(rng)});
        const auto lo = bead_posterior(y, p, {0.8, 0.2, 16, 0});
        const auto hi = bead_posterior(y, p, {0.8, 2.0, 16, 0});
        for (int w = 0; w < 2; ++w) {
            const auto& m1 = lo.bead_mean[static_cast<std::size_t>(w)];
            const auto& m2 = hi.bead_mean[static_cast<std::size_t>(w)];
            CHECK((m1 - m2).cwiseAbs().maxCoeff() < 1e-10);
            const Matrix c1 = lo.bead_second_moment[static_cast<std::size_t>(w)] - m1 * m1.transpose();
            const Matrix c2 = hi.bead_second_moment[static_cast<std::size_t>(w)] - m2 * m2.transpose();
            CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(c2 - c1).eigenvalues().minCoeff() >= -1e-10);
            CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(c1).eigenvalues().minCoeff() >= -1e-10);
        }
    }
}

TEST_CASE("Gamma shifts log responsibilities by a datum-independent amount") {
    // The quantum term only reweights components; it cannot move responsibilities of individual points
    // toward or away from each other.
    std::mt19937_64 rng(9);
    const auto p = testing::random_params(rng, 2, 1, 2);
    const Dataset data = sample_dataset(p, 20, 3);
    const auto a = quantum_e_step(data, p, {1.0, 0.1, 8, 0});
    const auto b = quantum_e_step(data, p, {1.0, 3.0, 8, 0});
    std::vector<double> shift;
    for (int i = 0; i < data.size(); ++i) {
        const double la = std::log(a.responsibilities(i, 0) / a.responsibilities(i, 1));
        const double lb = std::log(b.responsibilities(i, 0) / b.responsibilities(i, 1));
        shift.push_back(lb - la);
        CHECK(std::abs(a.responsibilities.row(i).sum() - 1.0) < 1e-10);
    }
    for (double s : shift) CHECK(std::abs(s - shift.front()) < 1e-10);
}

TEST_CASE("bead posterior preconditions") {
    std::mt19937_64 rng(10);
    const auto p = testing::random_params(rng, 2, 1, 2);
    CHECK_THROWS_AS(bead_posterior(vec({0.0, 0.0}), p, {1.0, 0.0, 8, 0}), ParameterError);
    CHECK_THROWS_AS(bead_posterior(vec({0.0}), p, {1.0, 1.0, 8, 0}), ParameterError);
    CHECK_THROWS_AS(quantum_e_step(sample_dataset(p, 3, 1), p, {0.0, 1.0, 8, 0}), ParameterError);
}

TEST_CASE("free energy") {
    SUBCASE("negative standard-normal log density") {
        const auto p = MfaParams::isotropic(vec({1.0}), {vec({0.0})}, 1, 1.0);
        CHECK(free_energy(single(vec({0.0})), p, {}) == doctest::Approx(0.5 * std::log(2 * M_PI)).epsilon(1e-14));
    }
    SUBCASE("equals the negative log likelihood at beta = 1, Gamma = 0") {
        std::mt19937_64 rng(11);
        for (int rep = 0; rep < 20; ++rep) {
            const int d = 1 + rep % 3, k = 1 + rep % 2, m = 1 + rep % 3;
            const auto p = testing::random_params(rng, d, k, m);
            const Dataset data = sample_dataset(p, 25, 200 + rep);
            CHECK(std::abs(free_energy(data, p, {}) + incomplete_log_likelihood(data, p)) < 1e-10);
        }
    }
    SUBCASE("matches quadrature for M = 1, 2") {
        std::mt19937_64 rng(12);
        for (int M : {1, 2}) {
            const auto p = testing::random_params(rng, 1, 1, 2);
            const Dataset data = sample_dataset(p, 2, 5);
            const AnnealState s{1.0, 0.5, M, 0};
            const double q = oracle::brute_force_free_energy(data, p, s, {-8.0, 8.0, M == 1 ? 1025 : 401});
            CHECK(testing::rel(free_energy(data, p, s), q) < 1e-6);
        }
    }
}

TEST_CASE("beta-tempered responsibilities match quadrature of p^beta") {
    std::mt19937_64 rng(13);
    for (double beta : {0.3, 0.7}) {
        const auto p = testing::random_params(rng, 1, 1, 3);
        const Dataset data = sample_dataset(p, 3, 9);
        const auto post = quantum_e_step(data, p, {beta, 0.0, 1, 0});
        for (int i = 0; i < data.size(); ++i) {
            const Vector y = data.point(i);
            std::vector<double> z;
            for (int w = 0; w < 3; ++w)
                z.push_back(testing::integrate([&](double x) { return std::exp(beta * testing::complete_log_pdf_k1(y, x, w, p)); }));
            const double total = z[0] + z[1] + z[2];
            for (int w = 0; w < 3; ++w) CHECK(std::abs(post.responsibilities(i, w) - z[static_cast<std::size_t>(w)] / total) < 1e-8);
        }
    }
}

TEST_CASE("tempering preserves symmetric responsibilities") {
    const auto p = MfaParams::isotropic(vec({0.5, 0.5}), {vec({-1.0}), vec({1.0})}, 1, 0.5);
    const auto post = quantum_e_step(single(vec({0.0})), p, {0.5, 0.0, 1, 0});
    CHECK(std::abs(post.responsibilities(0, 0) - 0.5) < 1e-12);
}

TEST_CASE("u_function") {
    SUBCASE("gradient agrees with classic -Q as Gamma vanishes") {
        std::mt19937_64 rng(14);
        const auto p = testing::random_params(rng, 2, 1, 2);
        const Dataset data = sample_dataset(p, 30, 4);
        const auto qpost = quantum_e_step(data, p, {1.0, 1e-10, 8, 0});
        const auto cpost = e_step(data, p);
        const auto cand = testing::random_params(rng, 2, 1, 2);
        const Vector gu = fd_gradient([&](const MfaParams& t) { return u_function(data, qpost, t); }, cand);
        const Vector gq = fd_gradient([&](const MfaParams& t) { return -expected_complete_log_likelihood(data, cpost, t); }, cand);
        CHECK((gu - gq).cwiseAbs().maxCoeff() < 1e-5);
    }
    SUBCASE("additive over data") {
        std::mt19937_64 rng(15);
        const auto p = testing::random_params(rng, 2, 2, 2);
        const Dataset data = sample_dataset(p, 12, 4);
        const AnnealState s{0.9, 0.6, 8, 0};
        Dataset rest, one;
        rest.points = data.points.topRows(11);
        one.points = data.points.bottomRows(1);
        const auto cand = testing::random_params(rng, 2, 2, 2);
        const double all = u_function(data, quantum_e_step(data, p, s), cand);
        const double part = u_function(rest, quantum_e_step(rest, p, s), cand);
        const double term = u_function(one, quantum_e_step(one, p, s), cand);
        CHECK(std::abs(all - part - term) < 1e-10 * std::abs(all));
    }
    SUBCASE("differences match quadrature of the bead-averaged log density") {
        std::mt19937_64 rng(16);
        for (int M : {1, 2}) {
            const auto p = testing::random_params(rng, 1, 1, 2);
            const Dataset data = sample_dataset(p, 2, 6);
            const AnnealState s{1.0, 0.8, M, 0};
            const oracle::GridSpec grid{-8.0, 8.0, M == 1 ? 1025 : 401};
            const auto a = testing::random_params(rng, 1, 1, 2);
            const auto b = testing::random_params(rng, 1, 1, 2);
            double expected = 0.0;
            for (int i = 0; i < data.size(); ++i) {
                const Vector y = data.point(i);
                Vector logits(2);
                for (int w = 0; w < 2; ++w)
                    logits[w] = std::log(p.weights[w]) + oracle::brute_force_chain(y, w, p, s, grid).log_partition;
                const Vector r = (logits.array() - log_sum_exp(logits)).exp();
                for (int w = 0; w < 2; ++w) {
                    const auto diff = [&](std::span<const double> xs) {
                        double acc = 0.0;
                        for (double x : xs)
                            acc -= (testing::complete_log_pdf_k1(y, x, w, a) - testing::complete_log_pdf_k1(y, x, w, b)) / M;
                        return acc;
                    };
                    expected += r[w] * oracle::brute_force_expectation(y, w, p, s, grid, diff);
                }
            }
            const auto post = quantum_e_step(data, p, s);
            const double got = u_function(data, post, a) - u_function(data, post, b);
            CHECK(testing::rel(got, expected) < 1e-6);
        }
    }
}

TEST_CASE("m_step_quantum") {
    std::mt19937_64 rng(17);
    SUBCASE("reduces to the classic m_step as Gamma vanishes") {
        const auto p = testing::random_params(rng, 2, 2, 3);
        const Dataset data = sample_dataset(p, 40, 4);
        const MfaParams classic = m_step(data, e_step(data, p));
        const MfaParams quantum = m_step_quantum(data, quantum_e_step(data, p, {1.0, 1e-10, 8, 0}));
        CHECK(max_abs_difference(classic, quantum) < 1e-8);
    }
    SUBCASE("single component with zero loadings gives the sample mean") {
        const auto p = MfaParams::isotropic(vec({1.0}), {vec({1.0, 2.0})}, 1, 0.4);
        const Dataset data = sample_dataset(p, 30, 4);
        for (double gamma : {0.1, 1.0, 10.0}) {
            const MfaParams next = m_step_quantum(data, quantum_e_step(data, p, {0.7, gamma, 8, 0}));
            CHECK((next.means[0] - data.points.colwise().mean().transpose()).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
    SUBCASE("zeroes the finite-difference gradient of U and decreases it") {
        for (int rep = 0; rep < 3; ++rep) {
            const auto p = testing::random_params(rng, 2, 1, 2);
            const Dataset data = sample_dataset(p, 30, 10 + rep);
            const auto post = quantum_e_step(data, p, {0.8, 0.5 + rep, 8, 0});
            const MfaParams next = m_step_quantum(data, post);
            const auto u = [&](const MfaParams& t) { return u_function(data, post, t); };
            CHECK(fd_gradient(u, next).cwiseAbs().maxCoeff() < 1e-4);
            CHECK(u(next) <= u(p));
        }
    }
}

TEST_CASE("entropy diagnostic equals the classic posterior entropy at beta = 1, Gamma = 0") {
    std::mt19937_64 rng(18);
    const auto p = testing::random_params(rng, 2, 2, 3);
    const Dataset data = sample_dataset(p, 15, 4);
    const auto post = e_step(data, p);
    double entropy = 0.0;
    for (int i = 0; i < data.size(); ++i)
        for (int w = 0; w < 3; ++w) {
            const double r = post.responsibilities(i, w);
            if (r > 0) entropy -= r * std::log(r);
            const Matrix c = post.latent_cov[static_cast<std::size_t>(w)];
            entropy += r * 0.5 * (2 * (1 + testing::kLog2Pi) + std::log(c.determinant()));
        }
    CHECK(entropy_diagnostic(data, p, {}) == doctest::Approx(entropy).epsilon(1e-9));
}

TEST_CASE("anneal schedule") {
    AnnealSchedule s;
    s.gamma_init = 2.0;
    s.beta_init = 0.5;
    s.beta_rule = BetaRule::LinearToOne;
    s.total_steps = 10;
    CHECK(s.at(0, 8).gamma == 2.0);
    CHECK(s.at(0, 8).beta == 0.5);
    CHECK(s.at(5, 8).gamma == doctest::Approx(1.0));
    CHECK(s.at(10, 8).gamma == 0.0);
    CHECK(s.at(10, 8).beta == 1.0);
    CHECK(s.at(50, 8).gamma == 0.0);
    CHECK(s.at(10, 8).beads == 1);
    CHECK(s.at(3, 8).beads == 8);
    CHECK(!s.settled(9));
    CHECK(s.settled(10));
    const auto f = AnnealSchedule::frozen(0.5, 0.3);
    CHECK(f.at(1000, 4).gamma == 0.3);
    CHECK(f.at(1000, 4).beta == 0.5);
    CHECK(f.settled(0));
    CHECK(parse_gamma_rule(to_string(GammaRule::Frozen)) == GammaRule::Frozen);
    CHECK(parse_beta_rule(to_string(BetaRule::LinearToOne)) == BetaRule::LinearToOne);
    CHECK_THROWS_AS(parse_beta_rule("cubic"), ParameterError);
    s.beta_init = 1.5;
    CHECK_THROWS_AS(s.validate(), ParameterError);
}

TEST_CASE("run_dqaem reductions") {
    const auto truth = harness::three_cluster_truth(0.1);
    const Dataset data = sample_dataset(truth, 90, 5);
    const auto init = random_init(data, 3, 2, 3);
    const FitTrace em = run_em(data, init, 300);
    SUBCASE("Gamma_init = 0, beta = 1 reproduces EM exactly") {
        AnnealSchedule s;
        s.gamma_init = 0.0;
        const FitTrace dq = run_dqaem(data, init, s, 16, 300);
        REQUIRE(dq.iterations.size() == em.iterations.size());
        for (std::size_t t = 0; t < em.iterations.size(); ++t) {
            CHECK(dq.iterations[t].objective == em.iterations[t].objective);
            CHECK(dq.iterations[t].beads == 1);
        }
        CHECK(max_abs_difference(dq.final_params(), em.final_params()) == 0.0);
    }
    SUBCASE("run_daem with beta fixed at one reproduces EM") {
        AnnealSchedule s;
        s.gamma_init = 0.0;
        const FitTrace da = run_daem(data, init, s, 300);
        REQUIRE(da.iterations.size() == em.iterations.size());
        for (std::size_t t = 0; t < em.iterations.size(); ++t) CHECK(da.iterations[t].objective == em.iterations[t].objective);
    }
}

TEST_CASE("frozen schedules never increase the free energy") {
    const auto truth = harness::three_cluster_truth(0.1);
    const Dataset data = sample_dataset(truth, 60, 5);
    for (const auto& [beta, gamma] : {std::pair{0.5, 0.5}, std::pair{1.0, 1.0}, std::pair{0.7, 0.1}}) {
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            const FitTrace tr = run_dqaem(data, random_init(data, 3, 2, seed), AnnealSchedule::frozen(beta, gamma), 8, 60, 1e-12);
            REQUIRE(tr.outcome != FitOutcome::NumericalFailure);
            for (std::size_t t = 1; t < tr.iterations.size(); ++t)
                CHECK(tr.iterations[t].objective >= tr.iterations[t - 1].objective - 1e-9);
            CHECK(tr.max_free_energy_increase() <= 1e-9);
        }
    }
}

TEST_CASE("annealed fit on separated data reaches the best EM optimum") {
    const auto truth = MfaParams::isotropic(vec({1.0 / 3, 1.0 / 3, 1.0 / 3}), {vec({-2.0, 0.0}), vec({0.0, 0.0}), vec({2.0, 0.0})}, 1, 0.1);
    const Dataset data = sample_dataset(truth, 300, 31);
    double best = -std::numeric_limits<double>::infinity();
    for (std::uint64_t seed = 1; seed <= 50; ++seed)
        best = std::max(best, run_em(data, random_init(data, 3, 1, 1000 + seed), 5000).last().objective);
    AnnealSchedule s;
    s.total_steps = 100;
    const FitTrace dq = run_dqaem(data, random_init(data, 3, 1, 1001), s, 8, 5000);
    CHECK(dq.outcome == FitOutcome::Converged);
    CHECK(std::abs(dq.last().objective - best) < 1e-3);
}
