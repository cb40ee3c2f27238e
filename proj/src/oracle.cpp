#include "dqaem/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace dqaem::oracle {

void GridSpec::validate(int dims) const {
    if (!(lo < hi)) throw ParameterError("GridSpec: lo must be < hi");
    if (points_per_dim < 16) throw ParameterError("GridSpec: points_per_dim must be >= 16");
    if (std::pow(static_cast<double>(points_per_dim), dims) > kMaxGridPoints)
        throw ParameterError("GridSpec: grid exceeds the 1e8 point guard");
}

namespace {

struct Sums {
    long double z = 0, first = 0, second = 0, extra = 0;
};

struct GridResult {
    Sums fine, coarse;
    double log_shift = 0.0;  // log of the kinetic prefactor plus the potential reference
    bool has_coarse = false;
};

// Visits every node of the M-dimensional grid, accumulating sum w * exp(E) * {1, xbar, mean x_j^2, f(x)}.
template <class Extra>
GridResult integrate(const Vector& y, int w, const MfaParams& params, const AnnealState& anneal, const GridSpec& grid,
                     Extra&& extra) {
    anneal.validate();
    if (params.latent_dim() != 1) throw ParameterError("oracle: requires latent dimension 1");
    if (anneal.beads > 4) throw ParameterError("oracle: requires at most 4 beads");
    if (!(anneal.gamma > 0.0)) throw ParameterError("oracle: requires gamma > 0");
    if (w < 0 || w >= params.components()) throw ParameterError("oracle: component index out of range");
    const int beads = anneal.beads;
    grid.validate(beads);

    const int n = grid.points_per_dim;
    const double h = (grid.hi - grid.lo) / (n - 1);
    const double beta = anneal.beta;
    const double M = beads;
    const double spring = M / (2.0 * beta * anneal.gamma);

    std::vector<double> nodes(static_cast<std::size_t>(n)), potential(static_cast<std::size_t>(n));
    std::vector<double> fine_w(static_cast<std::size_t>(n)), coarse_w(static_cast<std::size_t>(n), 0.0);
    const double log_pi = std::log(params.weights[w]);
    double top = -std::numeric_limits<double>::infinity();
    Vector x(1);
    for (int a = 0; a < n; ++a) {
        nodes[static_cast<std::size_t>(a)] = grid.lo + h * a;
        x[0] = nodes[static_cast<std::size_t>(a)];
        potential[static_cast<std::size_t>(a)] = complete_log_pdf(y, x, w, params) - log_pi;
        top = std::max(top, potential[static_cast<std::size_t>(a)]);
        const bool end = a == 0 || a == n - 1;
        fine_w[static_cast<std::size_t>(a)] = end ? 0.5 * h : h;
    }
    GridResult res;
    res.has_coarse = (n - 1) % 2 == 0;
    if (res.has_coarse)
        for (int a = 0; a < n; a += 2) coarse_w[static_cast<std::size_t>(a)] = (a == 0 || a == n - 1) ? h : 2.0 * h;
    for (auto& p : potential) p = beta / M * (p - top);

    std::vector<int> idx(static_cast<std::size_t>(beads), 0);
    std::vector<double> partial(static_cast<std::size_t>(beads + 1), 0.0);
    std::vector<double> fw(static_cast<std::size_t>(beads + 1), 1.0), cw(static_cast<std::size_t>(beads + 1), 1.0);
    std::vector<double> point(static_cast<std::size_t>(beads));

    // Odometer over the grid; partial[j+1] holds the exponent contribution of beads 0..j.
    auto refresh = [&](int from) {
        for (int j = from; j < beads; ++j) {
            const auto a = static_cast<std::size_t>(idx[static_cast<std::size_t>(j)]);
            point[static_cast<std::size_t>(j)] = nodes[a];
            double e = partial[static_cast<std::size_t>(j)] + potential[a];
            if (j > 0) {
                const double diff = nodes[a] - point[static_cast<std::size_t>(j - 1)];
                e -= spring * diff * diff;
            }
            partial[static_cast<std::size_t>(j + 1)] = e;
            fw[static_cast<std::size_t>(j + 1)] = fw[static_cast<std::size_t>(j)] * fine_w[a];
            cw[static_cast<std::size_t>(j + 1)] = cw[static_cast<std::size_t>(j)] * coarse_w[a];
        }
    };
    refresh(0);
    while (true) {
        const double close = point.back() - point.front();  // periodic term x_0 = x_M
        const double exponent = partial.back() - spring * close * close;
        const double value = std::exp(exponent);
        double xbar = 0.0, x2 = 0.0;
        for (double v : point) {
            xbar += v;
            x2 += v * v;
        }
        xbar /= M;
        x2 /= M;
        const double f = extra(std::span<const double>(point));
        const long double wf = static_cast<long double>(fw.back()) * value;
        res.fine.z += wf;
        res.fine.first += wf * xbar;
        res.fine.second += wf * x2;
        res.fine.extra += wf * f;
        if (cw.back() != 0.0) {
            const long double wc = static_cast<long double>(cw.back()) * value;
            res.coarse.z += wc;
            res.coarse.first += wc * xbar;
            res.coarse.second += wc * x2;
            res.coarse.extra += wc * f;
        }
        int j = beads - 1;
        while (j >= 0 && ++idx[static_cast<std::size_t>(j)] == n) idx[static_cast<std::size_t>(j--)] = 0;
        if (j < 0) break;
        refresh(j);
    }

    const double two_pi_bg = 2.0 * std::numbers::pi * beta * anneal.gamma;
    res.log_shift = 0.5 * M * std::log(M / two_pi_bg) + 0.5 * std::log(two_pi_bg) + beta * top;
    return res;
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

ChainQuadrature brute_force_chain(const Vector& y, int w, const MfaParams& params, const AnnealState& anneal,
                                  const GridSpec& grid) {
    const GridResult r = integrate(y, w, params, anneal, grid, [](std::span<const double>) { return 0.0; });
    if (!(r.fine.z > 0)) throw NumericalError("oracle: integrand vanished on the grid", w);
    ChainQuadrature q;
    q.log_partition = std::log(static_cast<double>(r.fine.z)) + r.log_shift;
    q.bead_mean = static_cast<double>(r.fine.first / r.fine.z);
    q.bead_second_moment = static_cast<double>(r.fine.second / r.fine.z);
    if (r.has_coarse && r.coarse.z > 0) {
        q.log_partition_error = std::abs(std::log(static_cast<double>(r.fine.z / r.coarse.z)));
        q.bead_mean_error = std::abs(q.bead_mean - static_cast<double>(r.coarse.first / r.coarse.z));
        q.bead_second_moment_error = std::abs(q.bead_second_moment - static_cast<double>(r.coarse.second / r.coarse.z));
    } else {
        q.log_partition_error = q.bead_mean_error = q.bead_second_moment_error = nan();
    }
    return q;
}

double brute_force_expectation(const Vector& y, int w, const MfaParams& params, const AnnealState& anneal,
                               const GridSpec& grid, const std::function<double(std::span<const double>)>& f) {
    const GridResult r = integrate(y, w, params, anneal, grid, f);
    if (!(r.fine.z > 0)) throw NumericalError("oracle: integrand vanished on the grid", w);
    return static_cast<double>(r.fine.extra / r.fine.z);
}

double brute_force_free_energy(const Dataset& data, const MfaParams& params, const AnnealState& anneal,
                               const GridSpec& grid) {
    const int m = params.components();
    double total = 0.0;
    Vector scores(m);
    for (int i = 0; i < data.size(); ++i) {
        const Vector y = data.point(i);
        for (int w = 0; w < m; ++w)
            scores[w] = anneal.beta * std::log(params.weights[w]) + brute_force_chain(y, w, params, anneal, grid).log_partition;
        total += log_sum_exp(scores);
    }
    return -total / anneal.beta;
}

}  // namespace dqaem::oracle
