#pragma once

#include <span>
#include <vector>

#include "compseg/data/samples.hpp"
#include "compseg/model/bundle.hpp"
#include "compseg/tensor.hpp"

namespace compseg::supervision {

inline constexpr double kDiceEpsilon = 1e-6;

/// Mean |predicted - target| over all B x K entries. Shapes must match.
double weak_loss(const Tensor& predicted, const Tensor& target);
/// Subgradient of weak_loss; 0 where predicted == target.
Tensor weak_loss_gradient(const Tensor& predicted, const Tensor& target);

/// 1 - mean over samples and foreground classes (c >= 1) of
/// (2 sum pq + eps) / (sum p + sum q + eps). `target` must be one-hot over C.
double dice_loss(const Tensor& predicted, const Tensor& target);
Tensor dice_loss_gradient(const Tensor& predicted, const Tensor& target);

/// Throws std::invalid_argument unless every position of `target` holds a
/// single 1 and zeros elsewhere.
void require_one_hot(const Tensor& target);

/// Images, one-hot masks (zeros where unavailable), pixel-label flags and weak labels of a minibatch.
struct Batch {
    Tensor images;                          // B x 4 x H x W
    Tensor targets;                         // B x C x H x W
    std::vector<std::uint8_t> has_pixel_label;
    Tensor weak;                            // B x K x 1 x 1

    int size() const { return images.n(); }
    int labeled() const;
};

Batch make_batch(std::span<const data::SliceSample* const> samples, int num_classes, int weak_width);

struct LossBreakdown {
    double clustering = 0.0;
    /// Mean Dice loss over pixel-labelled samples (0 when there are none).
    double dice = 0.0;
    double weak = 0.0;
    /// 1 if any sample in the batch carried a pixel mask, else 0.
    double lambda_dice = 0.0;
    double lambda_weak = 0.0;
    double total = 0.0;
    int labeled = 0;
    int samples = 0;
};

/// L = L_clu + L_Dice(labelled samples) + lambda_weak * L_weak. The clustering
/// term is the batch mean of the per-slice clustering loss.
LossBreakdown combine_losses(double clustering, double dice, double weak, int labeled, int samples,
                             double lambda_weak);

/// Forward pass and loss terms for one batch.
LossBreakdown total_loss(model::ModelBundle& bundle, const vmf::KernelBank& bank, const Batch& batch,
                         double lambda_weak);

struct ObjectiveResult {
    LossBreakdown loss;
    /// Gradient w.r.t. the kernel rows (clustering term plus activation path).
    vmf::RowMatrix dkernels;
};

/// Forward and backward for one batch. Network gradients accumulate into the
/// bundle's Param::grad. The clustering term does not back-propagate into the
/// feature extractor.
ObjectiveResult total_loss_backward(model::ModelBundle& bundle, const vmf::KernelBank& bank, const Batch& batch,
                                    double lambda_weak);

}  // namespace compseg::supervision
