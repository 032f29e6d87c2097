#include "compseg/model/bundle.hpp"

#include <random>
#include <stdexcept>

namespace compseg::model {

ModelBundle::ModelBundle(const ModelConfig& cfg)
    : config(cfg), feature_extractor(cfg), task_head(cfg), weak_classifier(cfg) {}

void ModelBundle::init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    feature_extractor.init(rng);
    task_head.init(rng);
    weak_classifier.init(rng);
}

nn::ParamList ModelBundle::parameters() {
    nn::ParamList p = feature_extractor.parameters();
    for (auto* q : task_head.parameters()) p.push_back(q);
    for (auto* q : weak_classifier.parameters()) p.push_back(q);
    return p;
}

Tensor extract_features(ModelBundle& bundle, const Tensor& images) { return bundle.feature_extractor.forward(images); }

void compute_activations(const vmf::KernelBank& bank, ForwardPass& pass) {
    const Tensor& raw = pass.raw_features;
    if (raw.c() != bank.dim())
        throw std::invalid_argument("feature dimension " + std::to_string(raw.c()) + " does not match kernel bank D=" +
                                    std::to_string(bank.dim()));
    pass.raw_maps.clear();
    pass.features.clear();
    pass.vmf.clear();
    pass.activations = Tensor(raw.n(), bank.count(), raw.h(), raw.w());
    for (int b = 0; b < raw.n(); ++b) {
        pass.raw_maps.push_back(vmf::feature_map_from_tensor(raw, b));
        pass.features.push_back(vmf::normalize_features(pass.raw_maps.back()));
        pass.vmf.push_back(vmf::vmf_activations(pass.features.back(), bank));
        vmf::write_activations(pass.vmf.back(), pass.activations, b);
    }
}

Tensor predict_segmentation(ModelBundle& bundle, const Tensor& activations) {
    return bundle.task_head.forward(activations);
}

Tensor predict_presence(ModelBundle& bundle, const Tensor& soft_mask) {
    return bundle.weak_classifier.forward(soft_mask);
}

ForwardPass forward(ModelBundle& bundle, const vmf::KernelBank& bank, const Tensor& images) {
    bank.require_normalized();
    ForwardPass pass;
    pass.raw_features = extract_features(bundle, images);
    compute_activations(bank, pass);
    pass.soft_mask = predict_segmentation(bundle, pass.activations);
    pass.presence = predict_presence(bundle, pass.soft_mask);
    return pass;
}

vmf::RowMatrix backward(ModelBundle& bundle, const vmf::KernelBank& bank, ForwardPass& pass,
                        const Tensor& dsoft_mask, const Tensor& dpresence) {
    Tensor dmask = bundle.weak_classifier.backward(dpresence);
    if (!dmask.same_shape(dsoft_mask)) throw std::invalid_argument("backward: soft-mask gradient shape mismatch");
    for (std::size_t i = 0; i < dmask.size(); ++i) dmask.data()[i] += dsoft_mask.data()[i];
    const Tensor dacts = bundle.task_head.backward(dmask);

    const Tensor& raw = pass.raw_features;
    Tensor draw(raw.n(), raw.c(), raw.h(), raw.w());
    vmf::RowMatrix dkernels = vmf::RowMatrix::Zero(bank.count(), bank.dim());
    for (int b = 0; b < raw.n(); ++b) {
        const vmf::VMFActivations dact = vmf::activations_from_tensor(dacts, b);
        auto grads = vmf::vmf_activations_backward(pass.features[b], bank, pass.vmf[b], dact.values);
        dkernels += grads.dkernels;
        const vmf::RowMatrix dz = vmf::normalize_features_backward(pass.raw_maps[b], pass.features[b], grads.dfeatures);
        const std::size_t plane = raw.plane();
        for (int d = 0; d < raw.c(); ++d) {
            double* dst = draw.channel(b, d);
            for (std::size_t i = 0; i < plane; ++i) dst[i] = dz(static_cast<Eigen::Index>(i), d);
        }
    }
    bundle.feature_extractor.backward(draw);
    return dkernels;
}

UNetBaseline::UNetBaseline(const ModelConfig& cfg)
    : config(cfg), feature_extractor(cfg), classifier(cfg.feature_dim, cfg.num_classes, 1, 1, "unet.classifier") {}

void UNetBaseline::init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    feature_extractor.init(rng);
    classifier.init(rng);
}

Tensor UNetBaseline::forward(const Tensor& images) {
    probs_ = nn::softmax_channels(classifier.forward(feature_extractor.forward(images)));
    return probs_;
}

void UNetBaseline::backward(const Tensor& dsoft_mask) {
    feature_extractor.backward(classifier.backward(nn::softmax_channels_backward(probs_, dsoft_mask)));
}

nn::ParamList UNetBaseline::parameters() {
    nn::ParamList p = feature_extractor.parameters();
    for (auto* q : classifier.parameters()) p.push_back(q);
    return p;
}

}  // namespace compseg::model
