#pragma once

#include <cstdint>
#include <vector>

#include "compseg/vmf/kernel_bank.hpp"

namespace compseg::vmf {

struct KMeansResult {
    KernelBank bank;
    std::vector<int> assignments;
    /// sum_i (1 - cos(x_i, centre of x_i)) after each assignment step.
    std::vector<double> objective_trace;
    /// -sum_i cos(x_i, centre of x_i) at the final assignment.
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Spherical k-means on unit-norm rows: cosine assignment (lowest index wins
/// ties), mean-then-renormalize update, k-means++ seeding. Empty clusters are
/// re-seeded from the point farthest from its assigned centre. Returns the
/// current centres with converged = false if max_iters runs out.
KMeansResult init_kernels_kmeans(const RowMatrix& vectors, int count, int max_iters, std::uint64_t seed,
                                 double concentration = kDefaultConcentration);

}  // namespace compseg::vmf
