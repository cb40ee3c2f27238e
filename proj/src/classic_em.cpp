#include "dqaem/classic_em.hpp"

#include "posterior_kernel.hpp"

#include <chrono>
#include <cmath>
#include <random>

namespace dqaem {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kWeightFloor = 1e-12;

}  // namespace

Matrix LatentPosterior::second_moment(int i, int w) const {
    const Vector mu = mean(i, w);
    return mu * mu.transpose() + latent_cov[static_cast<std::size_t>(w)];
}

ClassicPosterior e_step(const Dataset& data, const MfaParams& params) {
    auto kernel = detail::evaluate_kernels(data, params, 1.0, 0.0, 1);
    ClassicPosterior post;
    static_cast<LatentPosterior&>(post) = std::move(kernel.post);
    post.log_likelihood = kernel.log_normalizer;
    return post;
}

MfaParams m_step(const Dataset& data, const LatentPosterior& post, const MStepOptions& options,
                 std::vector<std::string>* warnings) {
    const int n = data.size();
    const int d = data.dim();
    const int m = post.components();
    if (post.size() != n) throw ParameterError("m_step: posterior size does not match data");
    if (m < 1 || post.latent_mean.size() != static_cast<std::size_t>(m))
        throw ParameterError("m_step: malformed posterior");
    const int k = static_cast<int>(post.latent_mean.front().cols());
    const Matrix& Y = data.points;

    MfaParams next;
    next.diagonal_noise = options.diagonal_noise;
    next.weights.resize(m);
    next.means.resize(static_cast<std::size_t>(m));
    next.loadings.resize(static_cast<std::size_t>(m));
    Matrix noise_sum = Matrix::Zero(d, d);
    bool floored = false;

    for (int w = 0; w < m; ++w) {
        const auto r = post.responsibilities.col(w);
        const Matrix& means = post.latent_mean[static_cast<std::size_t>(w)];
        const double mass = r.sum();

        // Augmented latent x~ = [x; 1] turns (Lambda_w, mu_w) into one linear solve.
        Matrix gram(k + 1, k + 1);
        const Matrix weighted_means = r.asDiagonal() * means;  // N x k
        gram.topLeftCorner(k, k) = means.transpose() * weighted_means + mass * post.latent_cov[static_cast<std::size_t>(w)];
        const Vector mean_sum = weighted_means.colwise().sum().transpose();
        gram.topRightCorner(k, 1) = mean_sum;
        gram.bottomLeftCorner(1, k) = mean_sum.transpose();
        gram(k, k) = mass;
        gram = 0.5 * (gram + gram.transpose());

        Matrix cross(d, k + 1);
        cross.leftCols(k) = Y.transpose() * weighted_means;
        cross.col(k) = Y.transpose() * r;

        Eigen::LDLT<Matrix> ldlt(gram);
        const double scale = gram.diagonal().cwiseAbs().maxCoeff();
        if (ldlt.info() != Eigen::Success || !(ldlt.rcond() > 1e-12) || !(scale > 0.0)) {
            const double ridge = 1e-10 * std::max(scale, 1.0);
            gram.diagonal().array() += ridge;
            ldlt.compute(gram);
            if (warnings)
                warnings->push_back("m_step: regularized normal equations for component " + std::to_string(w + 1));
        }
        const Matrix augmented = ldlt.solve(cross.transpose()).transpose();  // d x (k+1)
        if (!augmented.allFinite()) throw NumericalError("m_step: non-finite loading update", w);

        next.loadings[static_cast<std::size_t>(w)] = augmented.leftCols(k);
        next.means[static_cast<std::size_t>(w)] = augmented.col(k);
        next.weights[w] = mass / static_cast<double>(n);
        if (next.weights[w] < kWeightFloor) {
            next.weights[w] = kWeightFloor;
            floored = true;
        }

        // sum_i r_i E[(y - A x~)(y - A x~)^T]
        const Matrix fitted = augmented * cross.transpose();
        noise_sum += Y.transpose() * r.asDiagonal() * Y - fitted - fitted.transpose() + augmented * gram * augmented.transpose();
    }
    if (floored) {
        next.weights /= next.weights.sum();
        if (warnings) warnings->push_back("m_step: floored a vanishing mixture weight");
    }

    Matrix phi = noise_sum / static_cast<double>(n);
    phi = 0.5 * (phi + phi.transpose());
    if (options.diagonal_noise) {
        Vector diag = phi.diagonal().cwiseMax(options.noise_floor);
        phi = diag.asDiagonal();
    } else {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(phi);
        if (eig.eigenvalues().minCoeff() < options.noise_floor) {
            const Vector clamped = eig.eigenvalues().cwiseMax(options.noise_floor);
            phi = eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
            phi = 0.5 * (phi + phi.transpose());
        }
    }
    if (!phi.allFinite()) throw NumericalError("m_step: non-finite noise covariance");
    next.noise_cov = phi;
    return next;
}

double expected_complete_log_likelihood(const Dataset& data, const LatentPosterior& post, const MfaParams& params) {
    const int n = data.size();
    const int m = params.components();
    const int d = params.observed_dim();
    const int k = params.latent_dim();
    if (post.size() != n || post.components() != m || data.dim() != d)
        throw ParameterError("expected_complete_log_likelihood: dimension mismatch");
    Eigen::LLT<Matrix> chol(params.noise_cov);
    if (chol.info() != Eigen::Success) throw NumericalError("expected_complete_log_likelihood: noise_cov not SPD");
    const double log_det_phi = 2.0 * Matrix(chol.matrixL()).diagonal().array().log().sum();

    double total = 0.0;
    for (int w = 0; w < m; ++w) {
        const Matrix& load = params.loadings[static_cast<std::size_t>(w)];
        const Matrix phi_inv_load = chol.solve(load);
        const Matrix coupling = load.transpose() * phi_inv_load;  // Lambda^T Phi^{-1} Lambda
        const double constant = std::log(params.weights[w]) - 0.5 * (static_cast<double>(d + k) * kLog2Pi + log_det_phi);
        for (int i = 0; i < n; ++i) {
            const double r = post.responsibilities(i, w);
            if (r == 0.0) continue;
            const Vector resid = data.point(i) - params.means[static_cast<std::size_t>(w)];
            const Vector x = post.mean(i, w);
            const Matrix second = post.second_moment(i, w);
            const double quad = resid.dot(chol.solve(resid)) - 2.0 * resid.dot(phi_inv_load * x) +
                                (coupling.cwiseProduct(second)).sum();
            total += r * (constant - 0.5 * quad - 0.5 * second.trace());
        }
    }
    return total;
}

FitTrace run_em(const Dataset& data, const MfaParams& init, int max_iter, double tol) {
    if (max_iter < 1) throw ParameterError("run_em: max_iter must be >= 1");
    if (!(tol > 0.0)) throw ParameterError("run_em: tol must be > 0");
    init.validate();
    data.validate();

    FitTrace trace;
    const MStepOptions options{init.diagonal_noise};
    MfaParams current = init;
    const auto start = std::chrono::steady_clock::now();
    try {
        for (int t = 0;; ++t) {
            const ClassicPosterior post = e_step(data, current);
            IterationRecord rec;
            rec.iteration = t;
            rec.objective = post.log_likelihood;
            rec.params = current;
            if (t > 0) rec.audit_objective = post.log_likelihood;
            rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            const bool converged = t > 0 && std::abs(rec.objective - trace.last().objective) < tol;
            trace.iterations.push_back(std::move(rec));
            if (converged) {
                trace.outcome = FitOutcome::Converged;
                break;
            }
            if (t == max_iter) {
                trace.outcome = FitOutcome::MaxIterations;
                break;
            }
            current = m_step(data, post, options, &trace.warnings);
        }
    } catch (const NumericalError& err) {
        trace.outcome = FitOutcome::NumericalFailure;
        trace.failure_reason = err.what();
    }
    return trace;
}

MfaParams random_init(const Dataset& data, int components, int latent_dim, std::uint64_t seed, bool diagonal_noise) {
    if (components < 1 || latent_dim < 1) throw ParameterError("random_init: components and latent_dim must be >= 1");
    data.validate();
    const int d = data.dim();
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x1417u};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> loading_draw(0.0, std::sqrt(0.1));

    const Vector lo = data.points.colwise().minCoeff().transpose();
    const Vector hi = data.points.colwise().maxCoeff().transpose();
    const Vector mean = data.points.colwise().mean().transpose();
    const Matrix centered = data.points.rowwise() - mean.transpose();
    const Vector variance = (centered.array().square().colwise().sum() / static_cast<double>(data.size())).transpose();

    MfaParams p;
    p.diagonal_noise = diagonal_noise;
    p.weights = Vector::Constant(components, 1.0 / components);
    for (int w = 0; w < components; ++w) {
        Vector mu(d);
        for (int j = 0; j < d; ++j) mu[j] = lo[j] + (hi[j] - lo[j]) * unit(rng);
        Matrix load(d, latent_dim);
        for (int c = 0; c < latent_dim; ++c)
            for (int r = 0; r < d; ++r) load(r, c) = loading_draw(rng);
        p.means.push_back(std::move(mu));
        p.loadings.push_back(std::move(load));
    }
    p.noise_cov = variance.cwiseMax(1e-6).asDiagonal();
    return p;
}

}  // namespace dqaem
