#pragma once

// Brute-force trapezoidal integration of the bead-chain weight over an M-dimensional grid.
// Only for k = 1 and M <= 4; used to check the closed-form engine, never by it.

#include "dqaem/model.hpp"
#include "dqaem/quantum.hpp"

#include <functional>
#include <span>

namespace dqaem::oracle {

struct GridSpec {
    double lo = -8.0;
    double hi = 8.0;
    int points_per_dim = 64;

    void validate(int dims) const;
};

inline constexpr double kMaxGridPoints = 1e8;

struct ChainQuadrature {
    double log_partition = 0.0;       // includes the (M / (2 pi beta Gamma))^{M/2} kinetic prefactor
    double bead_mean = 0.0;
    double bead_second_moment = 0.0;  // (1/M) sum_j E[x_j^2]
    // |fine - coarse| using every other grid node; NaN when points_per_dim - 1 is odd.
    double log_partition_error = 0.0;
    double bead_mean_error = 0.0;
    double bead_second_moment_error = 0.0;
};

/// Integrates exp(sum_j (beta/M) log p(y, x_j | w) - sum_j (M / (2 beta Gamma)) (x_j - x_{j-1})^2)
/// with x_0 = x_M. The kinetic prefactor is multiplied by sqrt(2 pi beta Gamma), the inverse free-ring
/// trace, so the result stays finite as Gamma -> 0. w is 0-based; log pi_w is not included.
ChainQuadrature brute_force_chain(const Vector& y, int w, const MfaParams& params, const AnnealState& anneal,
                                  const GridSpec& grid = {});

/// E[f(x_1..x_M)] under the normalized bead weight of component w.
double brute_force_expectation(const Vector& y, int w, const MfaParams& params, const AnnealState& anneal,
                               const GridSpec& grid, const std::function<double(std::span<const double>)>& f);

/// -(1/beta) sum_i log sum_w exp(beta log pi_w + log_partition(i, w)) with quadrature partitions.
double brute_force_free_energy(const Dataset& data, const MfaParams& params, const AnnealState& anneal,
                               const GridSpec& grid = {});

}  // namespace dqaem::oracle
