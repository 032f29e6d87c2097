#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "compseg/model/networks.hpp"
#include "compseg/vmf/kmeans.hpp"

namespace compseg::model {

/// Random-access view over a set of B x 4 x S x S images.
struct ImageSet {
    std::size_t count = 0;
    std::function<Tensor(std::span<const std::size_t>)> load;
};

struct PretrainOptions {
    int epochs = 10;
    int batch_size = 32;
    double learning_rate = 1e-4;
    std::uint64_t seed = 0;
};

struct PretrainResult {
    FeatureExtractor extractor;
    double initial_mse = 0.0;
    /// Mean reconstruction error over the whole set after each epoch.
    std::vector<double> epoch_mse;
};

/// Trains a fresh feature extractor plus a 1x1 projection back to the input
/// channels under mean-squared error and returns the extractor.
PretrainResult pretrain_reconstruction(const ImageSet& images, const ModelConfig& config,
                                       const PretrainOptions& options);

/// Samples `per_image` non-degenerate, normalized feature vectors from every
/// image (fewer if an image has fewer valid positions). With `nonzero_only`
/// positions whose input is zero in every channel are skipped.
vmf::RowMatrix harvest_features(FeatureExtractor& extractor, const ImageSet& images, int per_image,
                                std::uint64_t seed, int batch_size = 32, bool nonzero_only = false);

}  // namespace compseg::model
