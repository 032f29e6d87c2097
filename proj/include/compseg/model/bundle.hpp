#pragma once

#include <cstdint>
#include <vector>

#include "compseg/model/networks.hpp"
#include "compseg/vmf/vmf.hpp"

namespace compseg::model {

/// Feature extractor, task head and weak classifier of the compositional model.
struct ModelBundle {
    ModelConfig config;
    FeatureExtractor feature_extractor;
    TaskHead task_head;
    WeakClassifier weak_classifier;

    explicit ModelBundle(const ModelConfig& cfg);
    /// Seeded initialization of all three networks.
    void init(std::uint64_t seed);
    nn::ParamList parameters();
};

/// Intermediates of one end-to-end forward pass, kept for backward().
struct ForwardPass {
    Tensor raw_features;                      // B x D x H x W
    std::vector<vmf::FeatureMap> raw_maps;    // per sample, unnormalized
    std::vector<vmf::FeatureMap> features;    // per sample, normalized
    std::vector<vmf::VMFActivations> vmf;     // per sample
    Tensor activations;                       // B x J x H x W
    Tensor soft_mask;                         // B x C x H x W
    Tensor presence;                          // B x K x 1 x 1
};

Tensor extract_features(ModelBundle& bundle, const Tensor& images);
/// Normalizes raw features and evaluates vMF activations for every sample.
void compute_activations(const vmf::KernelBank& bank, ForwardPass& pass);
Tensor predict_segmentation(ModelBundle& bundle, const Tensor& activations);
Tensor predict_presence(ModelBundle& bundle, const Tensor& soft_mask);

/// Full pipeline: features -> normalization -> vMF activations -> soft mask -> presence.
ForwardPass forward(ModelBundle& bundle, const vmf::KernelBank& bank, const Tensor& images);

/// Back-propagates gradients w.r.t. the soft mask and presence outputs into
/// all three networks (accumulating into their Param::grad) and returns the
/// gradient w.r.t. the kernel rows along the activation path.
vmf::RowMatrix backward(ModelBundle& bundle, const vmf::KernelBank& bank, ForwardPass& pass,
                        const Tensor& dsoft_mask, const Tensor& dpresence);

/// UNet baseline: the same feature extractor followed by a 1x1 classifier
/// and per-position softmax, trained on pixel labels only.
struct UNetBaseline {
    ModelConfig config;
    FeatureExtractor feature_extractor;
    nn::Conv2d classifier;

    explicit UNetBaseline(const ModelConfig& cfg);
    void init(std::uint64_t seed);
    Tensor forward(const Tensor& images);
    void backward(const Tensor& dsoft_mask);
    nn::ParamList parameters();

private:
    Tensor probs_;
};

}  // namespace compseg::model
