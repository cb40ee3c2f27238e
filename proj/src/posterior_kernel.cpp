#include "posterior_kernel.hpp"

#include "dqaem/quantum.hpp"

#include <cmath>
#include <string>

namespace dqaem::detail {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

std::string component_label(int w) { return "component " + std::to_string(w + 1); }

}  // namespace

std::vector<ComponentKernel> build_kernels(const MfaParams& params, double beta, double gamma, int beads) {
    const int m = params.components();
    const int k = params.latent_dim();
    Eigen::LLT<Matrix> noise_chol(params.noise_cov);
    if (noise_chol.info() != Eigen::Success) throw NumericalError("noise covariance is not SPD");

    std::vector<double> lambdas;
    if (gamma > 0.0) lambdas = chain_mode_eigenvalues(beads);
    const double M = static_cast<double>(beads);

    std::vector<ComponentKernel> kernels(static_cast<std::size_t>(m));
    for (int w = 0; w < m; ++w) {
        auto& ker = kernels[static_cast<std::size_t>(w)];
        ker.marginal_chol.compute(params.marginal_covariance(w));
        if (ker.marginal_chol.info() != Eigen::Success)
            throw NumericalError("marginal covariance of " + component_label(w) + " is not SPD", w);
        const Matrix& L = ker.marginal_chol.matrixL();
        ker.marginal_log_det = 2.0 * L.diagonal().array().log().sum();

        const Matrix& load = params.loadings[static_cast<std::size_t>(w)];
        const Matrix phi_inv_load = noise_chol.solve(load);
        Matrix precision = Matrix::Identity(k, k) + load.transpose() * phi_inv_load;
        precision = 0.5 * (precision + precision.transpose());
        Eigen::SelfAdjointEigenSolver<Matrix> eig(precision);
        if (eig.info() != Eigen::Success || !(eig.eigenvalues().minCoeff() > 0.0))
            throw NumericalError("latent precision of " + component_label(w) + " is singular", w, 0);
        const Vector& ev = eig.eigenvalues();
        const Matrix& V = eig.eigenvectors();
        const double log_det_p = ev.array().log().sum();

        const Matrix precision_inv = V * ev.cwiseInverse().asDiagonal() * V.transpose();
        ker.gain = precision_inv * phi_inv_load.transpose();
        ker.latent_cov = precision_inv / beta;
        ker.log_offset = 0.5 * static_cast<double>(k) * (1.0 - beta) * kLog2Pi -
                         0.5 * static_cast<double>(k) * std::log(beta) + 0.5 * (beta - 1.0) * log_det_p;

        if (gamma > 0.0 && beads > 1) {
            Vector extra = Vector::Zero(k);
            double penalty = 0.0;
            for (int n = 1; n < beads; ++n) {
                const double stiffness = M * lambdas[static_cast<std::size_t>(n)] / (beta * gamma);
                const double ratio = beta * beta * gamma / (M * M * lambdas[static_cast<std::size_t>(n)]);
                for (int e = 0; e < k; ++e) {
                    const double mode_precision = beta / M * ev[e] + stiffness;
                    if (!(mode_precision > 0.0) || !std::isfinite(mode_precision))
                        throw NumericalError("bead mode precision of " + component_label(w) + " is not positive at mode " +
                                                 std::to_string(n),
                                             w, n);
                    extra[e] += 1.0 / mode_precision;
                    penalty += std::log1p(ratio * ev[e]);
                }
            }
            ker.latent_cov += V * (extra / M).asDiagonal() * V.transpose();
            ker.log_offset -= 0.5 * penalty;
        }
        ker.latent_cov = 0.5 * (ker.latent_cov + ker.latent_cov.transpose());
    }
    return kernels;
}

namespace {

template <bool WithMoments>
double run_kernels(const Dataset& data, const MfaParams& params, double beta, double gamma, int beads,
                   KernelResult* out) {
    if (data.dim() != params.observed_dim()) throw ParameterError("posterior: data dimension does not match params");
    const int n = data.size();
    const int m = params.components();
    const int d = params.observed_dim();
    const int k = params.latent_dim();
    const auto kernels = build_kernels(params, beta, gamma, beads);

    if constexpr (WithMoments) {
        out->log_partition.resize(n, m);
        out->post.responsibilities.resize(n, m);
        out->post.latent_mean.assign(static_cast<std::size_t>(m), Matrix(n, k));
        out->post.latent_cov.resize(static_cast<std::size_t>(m));
        for (int w = 0; w < m; ++w) out->post.latent_cov[static_cast<std::size_t>(w)] = kernels[static_cast<std::size_t>(w)].latent_cov;
    }

    Vector log_prior(m);
    for (int w = 0; w < m; ++w) log_prior[w] = beta * std::log(params.weights[w]);

    Vector scores(m);
    Vector resid(d);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int w = 0; w < m; ++w) {
            const auto& ker = kernels[static_cast<std::size_t>(w)];
            resid = data.points.row(i).transpose() - params.means[static_cast<std::size_t>(w)];
            const Vector z = ker.marginal_chol.matrixL().solve(resid);
            const double log_density = -0.5 * (static_cast<double>(d) * kLog2Pi + ker.marginal_log_det + z.squaredNorm());
            const double log_part = beta * log_density + ker.log_offset;
            scores[w] = log_prior[w] + log_part;
            if constexpr (WithMoments) {
                out->log_partition(i, w) = log_part;
                out->post.latent_mean[static_cast<std::size_t>(w)].row(i) = (ker.gain * resid).transpose();
            }
        }
        const double lse = log_sum_exp(scores);
        if (!std::isfinite(lse)) throw NumericalError("non-finite partition value at datum " + std::to_string(i + 1));
        total += lse;
        if constexpr (WithMoments) out->post.responsibilities.row(i) = (scores.array() - lse).exp().transpose();
    }
    if constexpr (WithMoments) out->log_normalizer = total;
    return total;
}

}  // namespace

KernelResult evaluate_kernels(const Dataset& data, const MfaParams& params, double beta, double gamma, int beads) {
    KernelResult result;
    run_kernels<true>(data, params, beta, gamma, beads, &result);
    return result;
}

double log_normalizer(const Dataset& data, const MfaParams& params, double beta, double gamma, int beads) {
    return run_kernels<false>(data, params, beta, gamma, beads, nullptr);
}

}  // namespace dqaem::detail
