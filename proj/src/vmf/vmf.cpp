#include "compseg/vmf/vmf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace compseg::vmf {

namespace {

void require_matching_dim(const FeatureMap& features, const KernelBank& bank, const char* op) {
    if (features.dim != bank.dim())
        throw std::invalid_argument(std::string(op) + ": feature dimension " + std::to_string(features.dim) +
                                    " does not match kernel dimension " + std::to_string(bank.dim()));
    if (features.values.rows() != features.positions() || features.values.cols() != features.dim)
        throw std::invalid_argument(std::string(op) + ": feature matrix shape does not match header");
}

void require_normalized(const FeatureMap& features, const char* op) {
    if (!features.normalized) throw std::invalid_argument(std::string(op) + ": features are not normalized");
}

bool is_degenerate(const FeatureMap& f, Eigen::Index i) {
    return !f.degenerate.empty() && f.degenerate[static_cast<std::size_t>(i)] != 0;
}

}  // namespace

std::size_t FeatureMap::degenerate_count() const {
    return static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), std::uint8_t{1}));
}

FeatureMap feature_map_from_tensor(const Tensor& features, int b) {
    FeatureMap f;
    f.height = features.h();
    f.width = features.w();
    f.dim = features.c();
    f.values.resize(f.positions(), f.dim);
    const std::size_t plane = features.plane();
    for (int d = 0; d < f.dim; ++d) {
        const double* src = features.channel(b, d);
        for (std::size_t i = 0; i < plane; ++i) f.values(static_cast<Eigen::Index>(i), d) = src[i];
    }
    return f;
}

void write_activations(const VMFActivations& acts, Tensor& out, int b) {
    if (out.c() != acts.count || out.h() != acts.height || out.w() != acts.width)
        throw std::invalid_argument("write_activations: tensor shape mismatch");
    const std::size_t plane = out.plane();
    for (int j = 0; j < acts.count; ++j) {
        double* dst = out.channel(b, j);
        for (std::size_t i = 0; i < plane; ++i) dst[i] = acts.values(static_cast<Eigen::Index>(i), j);
    }
}

VMFActivations activations_from_tensor(const Tensor& acts, int b) {
    VMFActivations a;
    a.height = acts.h();
    a.width = acts.w();
    a.count = acts.c();
    a.values.resize(static_cast<Eigen::Index>(acts.plane()), a.count);
    for (int j = 0; j < a.count; ++j) {
        const double* src = acts.channel(b, j);
        for (std::size_t i = 0; i < acts.plane(); ++i) a.values(static_cast<Eigen::Index>(i), j) = src[i];
    }
    return a;
}

FeatureMap normalize_features(const FeatureMap& raw) {
    if (raw.values.rows() != raw.positions() || raw.values.cols() != raw.dim)
        throw std::invalid_argument("normalize_features: feature matrix shape does not match header");
    FeatureMap out = raw;
    out.normalized = true;
    out.degenerate.assign(static_cast<std::size_t>(raw.positions()), 0);
    for (Eigen::Index i = 0; i < out.values.rows(); ++i) {
        auto row = out.values.row(i);
        if (!row.allFinite())
            throw std::invalid_argument("normalize_features: non-finite value at position (y=" +
                                        std::to_string(i / raw.width) + ", x=" + std::to_string(i % raw.width) + ")");
        const double norm = row.norm();
        if (norm < kNormFloor) {
            row.setZero();
            out.degenerate[static_cast<std::size_t>(i)] = 1;
        } else {
            row /= norm;
        }
    }
    return out;
}

RowMatrix normalize_features_backward(const FeatureMap& raw, const FeatureMap& normalized,
                                      const RowMatrix& dnormalized) {
    RowMatrix draw = RowMatrix::Zero(raw.values.rows(), raw.values.cols());
    for (Eigen::Index i = 0; i < raw.values.rows(); ++i) {
        if (is_degenerate(normalized, i)) continue;
        const double norm = raw.values.row(i).norm();
        const auto z = normalized.values.row(i);
        const auto g = dnormalized.row(i);
        draw.row(i) = (g - z * z.dot(g)) / norm;
    }
    return draw;
}

int best_kernel(const RowMatrix& kernels, const double* z) {
    Eigen::Map<const Eigen::RowVectorXd> vec(z, kernels.cols());
    int best = 0;
    double best_dot = kernels.row(0).dot(vec);
    for (Eigen::Index j = 1; j < kernels.rows(); ++j) {
        const double d = kernels.row(j).dot(vec);
        if (d > best_dot) {
            best_dot = d;
            best = static_cast<int>(j);
        }
    }
    return best;
}

VMFActivations vmf_activations(const FeatureMap& features, const KernelBank& bank) {
    require_normalized(features, "vmf_activations");
    require_matching_dim(features, bank, "vmf_activations");
    VMFActivations acts;
    acts.height = features.height;
    acts.width = features.width;
    acts.count = bank.count();
    acts.values.noalias() = bank.concentration() * features.values * bank.kernels().transpose();
    const double uniform = 1.0 / bank.count();
    for (Eigen::Index i = 0; i < acts.values.rows(); ++i) {
        auto row = acts.values.row(i);
        if (is_degenerate(features, i)) {
            row.setConstant(uniform);
            continue;
        }
        row.array() = (row.array() - row.maxCoeff()).exp();
        row /= row.sum();
    }
    return acts;
}

ActivationGradients vmf_activations_backward(const FeatureMap& features, const KernelBank& bank,
                                             const VMFActivations& acts, const RowMatrix& dacts) {
    require_matching_dim(features, bank, "vmf_activations_backward");
    if (dacts.rows() != acts.values.rows() || dacts.cols() != acts.values.cols())
        throw std::invalid_argument("vmf_activations_backward: gradient shape mismatch");
    // d score_ij = a_ij (g_ij - sum_k a_ik g_ik); score_ij = sigma mu_j . z_i
    RowMatrix dscore(acts.values.rows(), acts.values.cols());
    for (Eigen::Index i = 0; i < dscore.rows(); ++i) {
        if (is_degenerate(features, i)) {
            dscore.row(i).setZero();
            continue;
        }
        const auto a = acts.values.row(i);
        const auto g = dacts.row(i);
        dscore.row(i) = a.cwiseProduct(g.array().matrix() - Eigen::RowVectorXd::Constant(a.size(), a.dot(g)));
    }
    dscore *= bank.concentration();
    ActivationGradients grads;
    grads.dfeatures.noalias() = dscore * bank.kernels();
    grads.dkernels.noalias() = dscore.transpose() * features.values;
    return grads;
}

double clustering_loss(const FeatureMap& features, const KernelBank& bank) {
    require_normalized(features, "clustering_loss");
    require_matching_dim(features, bank, "clustering_loss");
    const RowMatrix dots = features.values * bank.kernels().transpose();
    double total = 0.0;
    for (Eigen::Index i = 0; i < dots.rows(); ++i) {
        if (is_degenerate(features, i)) continue;
        total += dots.row(i).maxCoeff();
    }
    return -total / features.positions();
}

RowMatrix clustering_loss_gradient(const FeatureMap& features, const KernelBank& bank) {
    require_normalized(features, "clustering_loss_gradient");
    require_matching_dim(features, bank, "clustering_loss_gradient");
    RowMatrix grad = RowMatrix::Zero(bank.count(), bank.dim());
    const double scale = -1.0 / features.positions();
    for (Eigen::Index i = 0; i < features.values.rows(); ++i) {
        if (is_degenerate(features, i)) continue;
        const int j = best_kernel(bank.kernels(), features.values.row(i).data());
        grad.row(j) += scale * features.values.row(i);
    }
    return grad;
}

}  // namespace compseg::vmf
