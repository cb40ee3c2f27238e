#pragma once

// Independent evaluators for tests. Nothing here calls into the library's density code.

#include "dqaem/model.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <unistd.h>

namespace testing {

using dqaem::Matrix;
using dqaem::MfaParams;
using dqaem::Vector;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

template <typename F>
double integrate(F f) {
    const double inf = std::numeric_limits<double>::infinity();
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -inf, inf, 15, 1e-14);
}

// log N(v; 0, S) through an explicit 2x2 or 1x1 formula.
inline double log_normal_small(const Vector& v, const Matrix& s) {
    if (v.size() == 1) return -0.5 * (kLog2Pi + std::log(s(0, 0)) + v[0] * v[0] / s(0, 0));
    const double det = s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0);
    const double q = (s(1, 1) * v[0] * v[0] - (s(0, 1) + s(1, 0)) * v[0] * v[1] + s(0, 0) * v[1] * v[1]) / det;
    return -0.5 * (2.0 * kLog2Pi + std::log(det) + q);
}

// log pi_w + log N(y; mu_w + Lambda_w x, Phi) + log N(x; 0, I) for d <= 2, k = 1.
inline double complete_log_pdf_k1(const Vector& y, double x, int w, const MfaParams& p) {
    const Vector r = y - p.means[w] - p.loadings[w].col(0) * x;
    return std::log(p.weights[w]) + log_normal_small(r, p.noise_cov) - 0.5 * (kLog2Pi + x * x);
}

inline MfaParams random_params(std::mt19937_64& rng, int d, int k, int m, bool diagonal = true) {
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.3, 1.2);
    MfaParams p;
    p.weights.resize(m);
    for (int w = 0; w < m; ++w) p.weights[w] = u(rng);
    p.weights /= p.weights.sum();
    for (int w = 0; w < m; ++w) {
        Vector mu(d);
        for (int j = 0; j < d; ++j) mu[j] = g(rng);
        p.means.push_back(mu);
        Matrix l(d, k);
        for (int j = 0; j < d; ++j)
            for (int c = 0; c < k; ++c) l(j, c) = 0.6 * g(rng);
        p.loadings.push_back(l);
    }
    p.noise_cov = Matrix::Zero(d, d);
    for (int j = 0; j < d; ++j) p.noise_cov(j, j) = u(rng);
    if (!diagonal && d > 1) {
        p.noise_cov(0, 1) = p.noise_cov(1, 0) = 0.2 * std::sqrt(p.noise_cov(0, 0) * p.noise_cov(1, 1));
        p.diagonal_noise = false;
    }
    return p;
}

inline Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1.0); }

// Fresh empty directory, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "dqaem_test_XXXXXX").string();
        if (!mkdtemp(tmpl.data())) std::abort();
        path = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace testing
