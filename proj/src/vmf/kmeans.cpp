#include "compseg/vmf/kmeans.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "compseg/vmf/vmf.hpp"

namespace compseg::vmf {

namespace {

RowMatrix seed_centres(const RowMatrix& x, int count, std::mt19937_64& rng) {
    const Eigen::Index n = x.rows();
    RowMatrix centres(count, x.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    centres.row(0) = x.row(first(rng));
    // Squared chordal distance 2(1 - cos) to the nearest chosen centre.
    Eigen::VectorXd dist = (2.0 * (1.0 - (x * centres.row(0).transpose()).array())).max(0.0).matrix();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int k = 1; k < count; ++k) {
        const double total = dist.sum();
        Eigen::Index pick = 0;
        if (total <= 0.0) {
            pick = first(rng);
        } else {
            const double target = unit(rng) * total;
            double acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (dist(i) <= 0.0) continue;
                pick = i;
                acc += dist(i);
                if (acc > target) break;
            }
        }
        centres.row(k) = x.row(pick);
        const Eigen::VectorXd d = (2.0 * (1.0 - (x * centres.row(k).transpose()).array())).max(0.0).matrix();
        dist = dist.cwiseMin(d);
    }
    return centres;
}

double assign(const RowMatrix& x, const RowMatrix& centres, std::vector<int>& labels, Eigen::VectorXd& cosines) {
    double cost = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const int j = best_kernel(centres, x.row(i).data());
        labels[static_cast<std::size_t>(i)] = j;
        cosines(i) = centres.row(j).dot(x.row(i));
        cost += 1.0 - cosines(i);
    }
    return cost;
}

}  // namespace

KMeansResult init_kernels_kmeans(const RowMatrix& vectors, int count, int max_iters, std::uint64_t seed,
                                 double concentration) {
    const Eigen::Index n = vectors.rows();
    if (count < 2) throw std::invalid_argument("init_kernels_kmeans: need at least 2 clusters");
    if (n < count)
        throw std::invalid_argument("init_kernels_kmeans: " + std::to_string(n) + " vectors for " +
                                    std::to_string(count) + " clusters");
    if (max_iters < 1) throw std::invalid_argument("init_kernels_kmeans: max_iters must be >= 1");
    for (Eigen::Index i = 0; i < n; ++i)
        if (std::abs(vectors.row(i).norm() - 1.0) > kUnitNormTolerance)
            throw std::invalid_argument("init_kernels_kmeans: row " + std::to_string(i) + " is not unit-norm");

    std::mt19937_64 rng(seed);
    RowMatrix centres = seed_centres(vectors, count, rng);
    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    std::vector<int> previous;
    Eigen::VectorXd cosines(n);

    KMeansResult result{KernelBank(centres, concentration), {}, {}, 0.0, 0, false};
    for (int iter = 0; iter < max_iters; ++iter) {
        result.objective_trace.push_back(assign(vectors, centres, labels, cosines));
        result.iterations = iter + 1;
        if (labels == previous) {
            result.converged = true;
            break;
        }
        previous = labels;

        RowMatrix sums = RowMatrix::Zero(count, vectors.cols());
        std::vector<int> sizes(static_cast<std::size_t>(count), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(labels[static_cast<std::size_t>(i)]) += vectors.row(i);
            ++sizes[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
        }
        std::vector<std::uint8_t> taken(static_cast<std::size_t>(n), 0);
        for (int j = 0; j < count; ++j) {
            if (sizes[static_cast<std::size_t>(j)] == 0) {
                Eigen::Index far = -1;
                for (Eigen::Index i = 0; i < n; ++i)
                    if (!taken[static_cast<std::size_t>(i)] && (far < 0 || cosines(i) < cosines(far))) far = i;
                taken[static_cast<std::size_t>(far)] = 1;
                centres.row(j) = vectors.row(far);
                continue;
            }
            const double norm = sums.row(j).norm();
            if (norm >= kNormFloor) centres.row(j) = sums.row(j) / norm;
        }
    }
    double cos_sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) cos_sum += centres.row(labels[static_cast<std::size_t>(i)]).dot(vectors.row(i));
    // The loop may exit right after an update; refresh assignments to match the returned centres.
    if (!result.converged) {
        assign(vectors, centres, labels, cosines);
        cos_sum = cosines.sum();
    }
    result.objective = -cos_sum;
    result.assignments = std::move(labels);
    result.bank = KernelBank(std::move(centres), concentration);
    return result;
}

}  // namespace compseg::vmf
