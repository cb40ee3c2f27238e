#pragma once

// Classic EM for mixtures of factor analyzers with closed-form E and M steps.

#include "dqaem/model.hpp"
#include "dqaem/trace.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dqaem {

/// Posterior over (w, x) summarized by responsibilities and Gaussian latent moments.
/// The latent covariance of a component does not depend on the datum, so it is stored once per component.
struct LatentPosterior {
    Matrix responsibilities;          // N x m
    std::vector<Matrix> latent_mean;  // per component: N x k, row i = E[x | y_i, w]
    std::vector<Matrix> latent_cov;   // per component: k x k

    int size() const { return static_cast<int>(responsibilities.rows()); }
    int components() const { return static_cast<int>(responsibilities.cols()); }

    Vector mean(int i, int w) const { return latent_mean[static_cast<std::size_t>(w)].row(i).transpose(); }
    /// E[x x^T | y_i, w]
    Matrix second_moment(int i, int w) const;
};

struct ClassicPosterior : LatentPosterior {
    double log_likelihood = 0.0;  // L(Y; theta) at the parameters the posterior was computed from
};

struct MStepOptions {
    bool diagonal_noise = true;
    double noise_floor = 1e-6;  // eigenvalue clamp on Phi
};

ClassicPosterior e_step(const Dataset& data, const MfaParams& params);

/// Closed-form maximizer of the expected complete-data log likelihood given posterior moments.
/// Regularized solves and weight floors are reported through `warnings` when provided.
MfaParams m_step(const Dataset& data, const LatentPosterior& post, const MStepOptions& options = {},
                 std::vector<std::string>* warnings = nullptr);

/// Q(theta; theta') = sum_i sum_w r_iw E[log p(y_i, x, w; theta)], expectations from `post`.
double expected_complete_log_likelihood(const Dataset& data, const LatentPosterior& post, const MfaParams& params);

/// Alternates e_step/m_step until |Delta L| < tol or max_iter M-steps have run.
FitTrace run_em(const Dataset& data, const MfaParams& init, int max_iter, double tol = 1e-7);

/// Seeded starting point shared across solvers: means uniform in the data bounding box,
/// loading entries N(0, 0.1), Phi = diagonal sample covariance, uniform weights.
MfaParams random_init(const Dataset& data, int components, int latent_dim, std::uint64_t seed,
                      bool diagonal_noise = true);

}  // namespace dqaem
