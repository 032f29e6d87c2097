#pragma once

#include <cstdint>
#include <vector>

#include "compseg/tensor.hpp"
#include "compseg/vmf/kernel_bank.hpp"

namespace compseg::vmf {

/// Per-position feature vectors of one image, stored positions x D with the
/// position index i = y * width + x.
struct FeatureMap {
    int height = 0;
    int width = 0;
    int dim = 0;
    RowMatrix values;
    bool normalized = false;
    /// Set by normalize_features for positions whose raw norm fell below kNormFloor.
    std::vector<std::uint8_t> degenerate;

    int positions() const { return height * width; }
    std::size_t degenerate_count() const;
};

/// Per-position, per-kernel activations (positions x J), each row a
/// probability vector over kernels.
struct VMFActivations {
    int height = 0;
    int width = 0;
    int count = 0;
    RowMatrix values;
};

/// Gathers sample `b` of a B x D x H x W tensor into a raw FeatureMap.
FeatureMap feature_map_from_tensor(const Tensor& features, int b);
/// Scatters activations into sample `b` of a B x J x H x W tensor.
void write_activations(const VMFActivations& acts, Tensor& out, int b);
VMFActivations activations_from_tensor(const Tensor& acts, int b);

FeatureMap normalize_features(const FeatureMap& raw);
/// Gradient of normalize_features with respect to the raw vectors.
RowMatrix normalize_features_backward(const FeatureMap& raw, const FeatureMap& normalized,
                                      const RowMatrix& dnormalized);

/// Softmax over kernels of sigma * mu_j^T z_i, evaluated with max subtraction.
VMFActivations vmf_activations(const FeatureMap& features, const KernelBank& bank);

struct ActivationGradients {
    RowMatrix dfeatures;  // positions x D
    RowMatrix dkernels;   // J x D
};
ActivationGradients vmf_activations_backward(const FeatureMap& features, const KernelBank& bank,
                                             const VMFActivations& acts, const RowMatrix& dacts);

/// -(HW)^-1 sum_i max_j mu_j^T z_i. Degenerate positions contribute 0 but
/// still count in HW.
double clustering_loss(const FeatureMap& features, const KernelBank& bank);
/// Gradient with respect to the kernel rows only; features are constants.
RowMatrix clustering_loss_gradient(const FeatureMap& features, const KernelBank& bank);

/// Index of the kernel with the largest dot product; lowest index on ties.
int best_kernel(const RowMatrix& kernels, const double* z);

}  // namespace compseg::vmf
