#include "dqaem/model.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace dqaem {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

bool all_finite(const Matrix& m) { return m.allFinite(); }

// log N(r; 0, cov) given the Cholesky factor of cov.
double gaussian_log_density(const Vector& r, const Eigen::LLT<Matrix>& chol) {
    const Matrix& L = chol.matrixL();
    double log_det = 2.0 * L.diagonal().array().log().sum();
    Vector z = chol.matrixL().solve(r);
    return -0.5 * (static_cast<double>(r.size()) * kLog2Pi + log_det + z.squaredNorm());
}

}  // namespace

void MfaParams::validate() const {
    const int m = components();
    if (m < 1) throw ParameterError("MfaParams: component count must be >= 1");
    if (static_cast<int>(means.size()) != m || static_cast<int>(loadings.size()) != m)
        throw ParameterError("MfaParams: means/loadings count does not match weights");
    const int d = observed_dim();
    if (d < 1 || noise_cov.cols() != d) throw ParameterError("MfaParams: noise_cov must be square with d >= 1");
    const int k = latent_dim();
    if (k < 1) throw ParameterError("MfaParams: latent dimension must be >= 1");
    double total = 0.0;
    for (int w = 0; w < m; ++w) {
        if (!(weights[w] > 0.0) || !std::isfinite(weights[w]))
            throw ParameterError("MfaParams: weight " + std::to_string(w + 1) + " is not positive");
        total += weights[w];
        if (means[w].size() != d || !all_finite(means[w]))
            throw ParameterError("MfaParams: mean " + std::to_string(w + 1) + " has wrong size or non-finite entries");
        if (loadings[w].rows() != d || loadings[w].cols() != k || !all_finite(loadings[w]))
            throw ParameterError("MfaParams: loading " + std::to_string(w + 1) + " has wrong shape or non-finite entries");
    }
    if (std::abs(total - 1.0) > 1e-12) throw ParameterError("MfaParams: weights do not sum to 1");
    if (!all_finite(noise_cov)) throw ParameterError("MfaParams: noise_cov has non-finite entries");
    if ((noise_cov - noise_cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + noise_cov.cwiseAbs().maxCoeff()))
        throw ParameterError("MfaParams: noise_cov is not symmetric");
    if (diagonal_noise) {
        Matrix off = noise_cov;
        off.diagonal().setZero();
        if (off.cwiseAbs().maxCoeff() != 0.0)
            throw ParameterError("MfaParams: diagonal noise_cov has non-zero off-diagonal entries");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(noise_cov, Eigen::EigenvaluesOnly);
    if (!(eig.eigenvalues().minCoeff() > 0.0)) throw ParameterError("MfaParams: noise_cov is not positive definite");
}

Matrix MfaParams::marginal_covariance(int w) const {
    return loadings[w] * loadings[w].transpose() + noise_cov;
}

MfaParams MfaParams::isotropic(const Vector& weights, const std::vector<Vector>& means, int latent_dim,
                               double noise_variance) {
    MfaParams p;
    p.weights = weights;
    p.means = means;
    const auto d = means.empty() ? 0 : means.front().size();
    p.loadings.assign(means.size(), Matrix::Zero(d, latent_dim));
    p.noise_cov = noise_variance * Matrix::Identity(d, d);
    p.diagonal_noise = true;
    return p;
}

double max_abs_difference(const MfaParams& a, const MfaParams& b) {
    if (a.components() != b.components() || a.observed_dim() != b.observed_dim() || a.latent_dim() != b.latent_dim())
        throw ParameterError("max_abs_difference: shape mismatch");
    double diff = (a.weights - b.weights).cwiseAbs().maxCoeff();
    for (int w = 0; w < a.components(); ++w) {
        diff = std::max(diff, (a.means[w] - b.means[w]).cwiseAbs().maxCoeff());
        diff = std::max(diff, (a.loadings[w] - b.loadings[w]).cwiseAbs().maxCoeff());
    }
    return std::max(diff, (a.noise_cov - b.noise_cov).cwiseAbs().maxCoeff());
}

void Dataset::validate() const {
    if (points.rows() < 1) throw ParameterError("Dataset: need at least one point");
    if (!points.allFinite()) throw ParameterError("Dataset: non-finite point");
    if (truth) {
        if (static_cast<int>(truth->labels.size()) != size())
            throw ParameterError("Dataset: label count does not match point count");
        const int m = truth->params.components();
        for (int label : truth->labels)
            if (label < 1 || label > m) throw ParameterError("Dataset: label out of range");
    }
}

Dataset sample_dataset(const MfaParams& params, int n, std::uint64_t seed) {
    if (n < 1) throw ParameterError("sample_dataset: n must be >= 1");
    params.validate();
    const int d = params.observed_dim();
    const int k = params.latent_dim();

    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::discrete_distribution<int> pick(params.weights.data(), params.weights.data() + params.weights.size());

    Eigen::LLT<Matrix> noise_chol(params.noise_cov);
    const Matrix noise_factor = noise_chol.matrixL();

    Dataset data;
    data.seed = seed;
    data.points.resize(n, d);
    GroundTruth truth{params, std::vector<int>(static_cast<std::size_t>(n))};
    Vector x(k), z(d);
    for (int i = 0; i < n; ++i) {
        const int w = pick(rng);
        for (int j = 0; j < k; ++j) x[j] = normal(rng);
        for (int j = 0; j < d; ++j) z[j] = normal(rng);
        data.points.row(i) = (params.means[w] + params.loadings[w] * x + noise_factor * z).transpose();
        truth.labels[static_cast<std::size_t>(i)] = w + 1;
    }
    data.truth = std::move(truth);
    return data;
}

double complete_log_pdf(const Vector& y, const Vector& x, int w, const MfaParams& params) {
    if (w < 0 || w >= params.components()) throw ParameterError("complete_log_pdf: component index out of range");
    if (y.size() != params.observed_dim() || x.size() != params.latent_dim())
        throw ParameterError("complete_log_pdf: dimension mismatch");
    Eigen::LLT<Matrix> chol(params.noise_cov);
    if (chol.info() != Eigen::Success) throw NumericalError("complete_log_pdf: noise_cov not SPD", w);
    const Vector r = y - params.means[w] - params.loadings[w] * x;
    const double prior = -0.5 * (static_cast<double>(x.size()) * kLog2Pi + x.squaredNorm());
    return std::log(params.weights[w]) + gaussian_log_density(r, chol) + prior;
}

double log_sum_exp(const Eigen::Ref<const Vector>& values) {
    const double top = values.maxCoeff();
    if (!std::isfinite(top)) return top;
    return top + std::log((values.array() - top).exp().sum());
}

double incomplete_log_likelihood(const Dataset& data, const MfaParams& params) {
    const int m = params.components();
    if (data.dim() != params.observed_dim()) throw ParameterError("incomplete_log_likelihood: dimension mismatch");
    std::vector<Eigen::LLT<Matrix>> chols;
    chols.reserve(static_cast<std::size_t>(m));
    for (int w = 0; w < m; ++w) {
        chols.emplace_back(params.marginal_covariance(w));
        if (chols.back().info() != Eigen::Success)
            throw NumericalError("incomplete_log_likelihood: marginal covariance of component " + std::to_string(w + 1) +
                                     " is not SPD",
                                 w);
    }
    Vector terms(m);
    double total = 0.0;
    for (int i = 0; i < data.size(); ++i) {
        const Vector y = data.point(i);
        for (int w = 0; w < m; ++w)
            terms[w] = std::log(params.weights[w]) + gaussian_log_density(y - params.means[w], chols[static_cast<std::size_t>(w)]);
        total += log_sum_exp(terms);
    }
    return total;
}

}  // namespace dqaem
