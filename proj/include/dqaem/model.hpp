#pragma once

// Mixture of factor analyzers: p(y, x, w) = pi_w N(y; mu_w + Lambda_w x, Phi) N(x; 0, I_k).
// A Gaussian mixture is the special case k = d with free loadings.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dqaem {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when parameters or inputs violate a documented precondition.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a computation loses positive definiteness or produces non-finite values.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what, int component = -1, int mode = -1)
        : std::runtime_error(what), component_(component), mode_(mode) {}

    int component() const noexcept { return component_; }
    int mode() const noexcept { return mode_; }

private:
    int component_;
    int mode_;
};

struct MfaParams {
    Vector weights;                // pi, size m
    std::vector<Vector> means;     // mu_w in R^d
    std::vector<Matrix> loadings;  // Lambda_w, d x k
    Matrix noise_cov;              // Phi, d x d
    bool diagonal_noise = true;

    int components() const { return static_cast<int>(weights.size()); }
    int observed_dim() const { return static_cast<int>(noise_cov.rows()); }
    int latent_dim() const { return loadings.empty() ? 0 : static_cast<int>(loadings.front().cols()); }

    /// Throws ParameterError describing the first violated invariant.
    void validate() const;

    /// Lambda_w Lambda_w^T + Phi.
    Matrix marginal_covariance(int w) const;

    /// Builds a parameter set with zero loadings of width k.
    static MfaParams isotropic(const Vector& weights, const std::vector<Vector>& means, int latent_dim,
                               double noise_variance);
};

/// Largest absolute difference over every parameter entry. Shapes must agree.
double max_abs_difference(const MfaParams& a, const MfaParams& b);

struct GroundTruth {
    MfaParams params;
    std::vector<int> labels;  // 1-based component index per point
};

struct Dataset {
    Matrix points;  // N x d, one observation per row
    std::optional<GroundTruth> truth;
    std::uint64_t seed = 0;

    int size() const { return static_cast<int>(points.rows()); }
    int dim() const { return static_cast<int>(points.cols()); }
    Vector point(int i) const { return points.row(i).transpose(); }

    void validate() const;
};

struct LatentPoint {
    Vector x;
    int w = 1;  // 1-based
};

/// Two-step generative draw: w ~ Cat(pi), x ~ N(0, I), y ~ N(mu_w + Lambda_w x, Phi).
/// The same (params, n, seed) always yields the same bytes.
Dataset sample_dataset(const MfaParams& params, int n, std::uint64_t seed);

/// log pi_w + log N(y; mu_w + Lambda_w x, Phi) + log N(x; 0, I). w is 0-based.
double complete_log_pdf(const Vector& y, const Vector& x, int w, const MfaParams& params);

/// Sum over points of log sum_w pi_w N(y; mu_w, Lambda_w Lambda_w^T + Phi).
double incomplete_log_likelihood(const Dataset& data, const MfaParams& params);

double log_sum_exp(const Eigen::Ref<const Vector>& values);

}  // namespace dqaem
