#pragma once

// Shared E-step machinery for classic, tempered and bead-chain posteriors.
//
// For component w with P = I + Lambda^T Phi^{-1} Lambda the bead chain over (x_1..x_M) is Gaussian with
// precision (beta/M)(I_M (x) P) + (M/(beta Gamma))(L (x) I_k). Fourier modes of the ring Laplacian L
// block-diagonalize it, which gives
//   bead mean        = P^{-1} Lambda^T Phi^{-1} (y - mu)                         (every bead, every Gamma)
//   bead covariance  = P^{-1}/beta + (1/M) sum_{n>0} ((beta/M) P + (M lambda_n/(beta Gamma)) I)^{-1}
//   log partition    = log int p(y, x | w)^beta dx - 1/2 sum_{n>0} log det(I + beta^2 Gamma P / (M^2 lambda_n))
// The log partition is normalized by the free-ring trace so that Gamma -> 0 recovers the tempered value.

#include "dqaem/classic_em.hpp"
#include "dqaem/model.hpp"

#include <vector>

namespace dqaem::detail {

struct ComponentKernel {
    Eigen::LLT<Matrix> marginal_chol;
    double marginal_log_det = 0.0;
    Matrix gain;        // k x d, maps y - mu to the latent mean
    Matrix latent_cov;  // k x k, bead-averaged
    double log_offset = 0.0;  // everything in the log partition except beta * log N(y; mu, C)
};

/// gamma == 0 selects the tempered classic branch; `beads` is ignored there.
std::vector<ComponentKernel> build_kernels(const MfaParams& params, double beta, double gamma, int beads);

struct KernelResult {
    LatentPosterior post;
    Matrix log_partition;        // N x m, excludes beta * log pi_w
    double log_normalizer = 0.0; // sum_i log sum_w exp(beta log pi_w + log_partition(i, w))
};

KernelResult evaluate_kernels(const Dataset& data, const MfaParams& params, double beta, double gamma, int beads);

/// Only the log normalizer; skips moment assembly.
double log_normalizer(const Dataset& data, const MfaParams& params, double beta, double gamma, int beads);

}  // namespace dqaem::detail
