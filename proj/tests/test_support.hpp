#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iterator>
#include <set>
#include <random>
#include <vector>

#include "compseg/data/brats.hpp"
#include "compseg/data/nifti.hpp"
#include "compseg/metrics/metrics.hpp"
#include "compseg/tensor.hpp"
#include "compseg/vmf/kernel_bank.hpp"

namespace compseg::testing {

/// Central finite difference of f at x[index] with step h.
inline double central_difference(std::vector<double>& x, std::size_t index, const std::function<double()>& f,
                                 double h = 1e-5) {
    const double saved = x[index];
    x[index] = saved + h;
    const double plus = f();
    x[index] = saved - h;
    const double minus = f();
    x[index] = saved;
    return (plus - minus) / (2.0 * h);
}

/// |a - b| / max(|a|, |b|, floor). The floor keeps gradients that are zero
/// up to round-off from producing meaningless ratios.
inline double relative_error(double a, double b, double floor = 1e-7) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline vmf::RowMatrix random_unit_rows(int rows, int dim, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    vmf::RowMatrix m(rows, dim);
    for (int i = 0; i < rows; ++i) {
        for (int d = 0; d < dim; ++d) m(i, d) = n(rng);
        m.row(i).normalize();
    }
    return m;
}

inline Tensor random_tensor(int n, int c, int h, int w, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(n, c, h, w);
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.data()) v = u(rng);
    return t;
}

// Planted spherical clusters: unit centres along distinct axes (90 degrees
// apart), points within `max_angle_deg` of their centre.
inline vmf::RowMatrix planted_clusters(int clusters, int per_cluster, int dim, double max_angle_deg,
                                       std::mt19937_64& rng, std::vector<int>& truth) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> angle(0.0, max_angle_deg * M_PI / 180.0);
    vmf::RowMatrix x(clusters * per_cluster, dim);
    truth.clear();
    for (int c = 0; c < clusters; ++c) {
        Eigen::RowVectorXd centre = Eigen::RowVectorXd::Zero(dim);
        centre(c) = 1.0;
        for (int k = 0; k < per_cluster; ++k) {
            Eigen::RowVectorXd t(dim);
            for (int d = 0; d < dim; ++d) t(d) = n(rng);
            t -= centre * centre.dot(t);
            t.normalize();
            const double a = angle(rng);
            x.row(c * per_cluster + k) = std::cos(a) * centre + std::sin(a) * t;
            truth.push_back(c);
        }
    }
    return x;
}

inline metrics::MaskVolume random_mask(std::mt19937& rng, int s, int h, int w, double p) {
    metrics::MaskVolume m(s, h, w);
    std::bernoulli_distribution on(p);
    for (auto& v : m.voxels) v = on(rng);
    return m;
}

/// Direct set-arithmetic Dice.
inline double dice_oracle(const metrics::MaskVolume& p, const metrics::MaskVolume& g) {
    std::set<std::size_t> ps, gs, both;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p.voxels[i]) ps.insert(i);
        if (g.voxels[i]) gs.insert(i);
    }
    std::set_intersection(ps.begin(), ps.end(), gs.begin(), gs.end(), std::inserter(both, both.begin()));
    if (ps.empty() && gs.empty()) return 100.0;
    return 100.0 * 2.0 * static_cast<double>(both.size()) / static_cast<double>(ps.size() + gs.size());
}

struct Voxel {
    int s, y, x;
};

inline std::vector<Voxel> boundary_oracle(const metrics::MaskVolume& m) {
    std::vector<Voxel> out;
    const int ds[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (int s = 0; s < m.slices; ++s)
        for (int y = 0; y < m.height; ++y)
            for (int x = 0; x < m.width; ++x) {
                if (!m.voxels[m.index(s, y, x)]) continue;
                bool edge = false;
                for (const auto& d : ds) {
                    const int a = s + d[0], b = y + d[1], c = x + d[2];
                    const bool inside = a >= 0 && b >= 0 && c >= 0 && a < m.slices && b < m.height && c < m.width;
                    edge = edge || !inside || !m.voxels[m.index(a, b, c)];
                }
                if (edge) out.push_back({s, y, x});
            }
    return out;
}

inline double nearest(const Voxel& p, const std::vector<Voxel>& set) {
    double best = INFINITY;
    for (const auto& q : set) {
        const double d = std::sqrt(double((p.s - q.s) * (p.s - q.s) + (p.y - q.y) * (p.y - q.y) + (p.x - q.x) * (p.x - q.x)));
        best = std::min(best, d);
    }
    return best;
}

inline double p95_oracle(std::vector<double> d) {
    std::sort(d.begin(), d.end());
    const double h = 0.95 * static_cast<double>(d.size() - 1);
    const std::size_t i = static_cast<std::size_t>(h);
    if (i + 1 >= d.size()) return d.back();
    return d[i] + (h - static_cast<double>(i)) * (d[i + 1] - d[i]);
}

inline double hd95_oracle(const metrics::MaskVolume& p, const metrics::MaskVolume& g) {
    const auto bp = boundary_oracle(p);
    const auto bg = boundary_oracle(g);
    std::vector<double> pg, gp;
    for (const auto& v : bp) pg.push_back(nearest(v, bg));
    for (const auto& v : bg) gp.push_back(nearest(v, bp));
    return std::max(p95_oracle(pg), p95_oracle(gp));
}

/// Writes <root>/<id>/<id>_{t1,t1ce,t2,flair,seg}.nii.gz: a noisy brain
/// square and a box tumour (ED shell, ET core, NCR centre) on slices
/// [nz/3, 2nz/3], with a per-subject offset.
inline void write_brats_subject(const std::filesystem::path& root, const std::string& id, int n, int nz,
                                std::uint32_t seed) {
    const auto dir = root / id;
    std::filesystem::create_directories(dir);
    const auto paths = data::BratsPaths::for_subject(dir, id);
    std::mt19937 rng(seed);
    std::normal_distribution<float> noise(0.0f, 1.0f);
    const int shift = static_cast<int>(seed % 3);
    auto in_box = [&](int x, int y, int z, int r) {
        const int c = n / 2 + shift;
        return std::abs(x - c) < r && std::abs(y - c) < r && z >= nz / 3 && z <= 2 * nz / 3;
    };
    for (int m = 0; m < data::kModalities; ++m) {
        data::NiftiImage img{n, n, nz, {1.0f, 1.0f, 1.0f}, std::vector<float>(static_cast<std::size_t>(n) * n * nz)};
        for (int z = 0; z < nz; ++z)
            for (int y = n / 8; y < n - n / 8; ++y)
                for (int x = n / 8; x < n - n / 8; ++x)
                    img.data[img.index(x, y, z)] =
                        100.0f * (m + 1) + (in_box(x, y, z, n / 6) ? 80.0f : 0.0f) + 5.0f * noise(rng);
        data::write_nifti(img, paths.modalities[m]);
    }
    data::NiftiImage seg{n, n, nz, {1.0f, 1.0f, 1.0f}, std::vector<float>(static_cast<std::size_t>(n) * n * nz)};
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                float code = 0.0f;
                if (in_box(x, y, z, n / 6)) code = 2.0f;
                if (in_box(x, y, z, n / 9)) code = 4.0f;
                if (in_box(x, y, z, n / 16 + 1)) code = 1.0f;
                seg.data[seg.index(x, y, z)] = code;
            }
    data::write_nifti(seg, paths.mask, data::NiftiType::UInt8);
}

}  // namespace compseg::testing
