#include "compseg/model/networks.hpp"

#include <stdexcept>

namespace compseg::model {

namespace {

void append(nn::ParamList& dst, const nn::ParamList& src) { dst.insert(dst.end(), src.begin(), src.end()); }

}  // namespace

ConvBlock::ConvBlock(int in, int out, const std::string& name)
    : first_(in, out, 3, 1, name + ".conv1"), second_(out, out, 3, 1, name + ".conv2") {}

void ConvBlock::init(std::mt19937_64& rng) {
    first_.init(rng);
    second_.init(rng);
}

Tensor ConvBlock::forward(const Tensor& x) { return relu2_.forward(second_.forward(relu1_.forward(first_.forward(x)))); }

Tensor ConvBlock::backward(const Tensor& dy) {
    return first_.backward(relu1_.backward(second_.backward(relu2_.backward(dy))));
}

nn::ParamList ConvBlock::parameters() {
    nn::ParamList p = first_.parameters();
    append(p, second_.parameters());
    return p;
}

FeatureExtractor::FeatureExtractor(const ModelConfig& config)
    : image_size_(config.image_size), in_channels_(config.in_channels), feature_dim_(config.feature_dim),
      widths_(config.encoder_widths) {
    config.validate();
    const std::size_t levels = widths_.size();
    int in = in_channels_;
    for (std::size_t l = 0; l < levels; ++l) {
        encoder_.emplace_back(in, widths_[l], "extractor.enc" + std::to_string(l));
        in = widths_[l];
    }
    pools_.resize(levels - 1);
    ups_.resize(levels - 1);
    // decoder_[l] merges level l+1 (upsampled) into the level-l skip.
    for (std::size_t l = 0; l + 1 < levels; ++l)
        decoder_.emplace_back(widths_[l] + widths_[l + 1], widths_[l], "extractor.dec" + std::to_string(l));
    output_ = nn::Conv2d(widths_[0], feature_dim_, 1, 1, "extractor.out");
}

void FeatureExtractor::init(std::mt19937_64& rng) {
    for (auto& b : encoder_) b.init(rng);
    for (auto& b : decoder_) b.init(rng);
    output_.init(rng);
}

Tensor FeatureExtractor::forward(const Tensor& images) {
    if (images.c() != in_channels_)
        throw std::invalid_argument("extract_features: expected " + std::to_string(in_channels_) +
                                    " channels, got " + std::to_string(images.c()));
    if (images.h() != image_size_ || images.w() != image_size_)
        throw std::invalid_argument("extract_features: expected " + std::to_string(image_size_) + "x" +
                                    std::to_string(image_size_) + " images, got " + std::to_string(images.h()) +
                                    "x" + std::to_string(images.w()));
    const std::size_t levels = encoder_.size();
    std::vector<Tensor> skips(levels);
    Tensor x = images;
    for (std::size_t l = 0; l < levels; ++l) {
        skips[l] = encoder_[l].forward(l == 0 ? x : pools_[l - 1].forward(skips[l - 1]));
    }
    x = std::move(skips[levels - 1]);
    for (std::size_t l = levels - 1; l-- > 0;) {
        Tensor up = ups_[l].forward(x, skips[l].h(), skips[l].w());
        x = decoder_[l].forward(nn::concat_channels(skips[l], up));
    }
    return output_.forward(x);
}

Tensor FeatureExtractor::backward(const Tensor& dfeatures) {
    const std::size_t levels = encoder_.size();
    Tensor dx = output_.backward(dfeatures);
    std::vector<Tensor> dskips(levels);
    for (std::size_t l = 0; l + 1 < levels; ++l) {
        auto [dskip, dup] = nn::split_channels(decoder_[l].backward(dx), widths_[l]);
        dskips[l] = std::move(dskip);
        dx = ups_[l].backward(dup);
    }
    // dx now holds the gradient w.r.t. the deepest encoder output.
    for (std::size_t l = levels; l-- > 0;) {
        Tensor din = encoder_[l].backward(dx);
        if (l == 0) return din;
        dx = pools_[l - 1].backward(din);
        auto& acc = dskips[l - 1].data();
        for (std::size_t i = 0; i < acc.size(); ++i) dx.data()[i] += acc[i];
    }
    return dx;
}

nn::ParamList FeatureExtractor::parameters() {
    nn::ParamList p;
    for (auto& b : encoder_) append(p, b.parameters());
    for (auto& b : decoder_) append(p, b.parameters());
    append(p, output_.parameters());
    return p;
}

TaskHead::TaskHead(const ModelConfig& config)
    : conv1_(config.num_kernels, config.head_widths[0], 3, 1, "head.conv1"),
      conv2_(config.head_widths[0], config.head_widths[1], 3, 1, "head.conv2"),
      conv3_(config.head_widths[1], config.num_classes, 3, 1, "head.conv3") {}

void TaskHead::init(std::mt19937_64& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    conv3_.init(rng);
}

Tensor TaskHead::forward(const Tensor& activations) {
    if (activations.c() != conv1_.in_channels())
        throw std::invalid_argument("predict_segmentation: head trained for J=" + std::to_string(conv1_.in_channels()) +
                                    ", got " + std::to_string(activations.c()) + " activation channels");
    probs_ = nn::softmax_channels(conv3_.forward(relu2_.forward(conv2_.forward(relu1_.forward(conv1_.forward(activations))))));
    return probs_;
}

Tensor TaskHead::backward(const Tensor& dprobs) {
    Tensor d = nn::softmax_channels_backward(probs_, dprobs);
    return conv1_.backward(relu1_.backward(conv2_.backward(relu2_.backward(conv3_.backward(d)))));
}

nn::ParamList TaskHead::parameters() {
    nn::ParamList p = conv1_.parameters();
    append(p, conv2_.parameters());
    append(p, conv3_.parameters());
    return p;
}

WeakClassifier::WeakClassifier(const ModelConfig& config)
    : outputs_(config.weak_outputs),
      conv1_(config.num_classes, config.weak_widths[0], 3, 2, "weak.conv1"),
      conv2_(config.weak_widths[0], config.weak_widths[1], 3, 2, "weak.conv2"),
      fc_(config.weak_widths[1], config.weak_outputs, "weak.fc") {
    if (config.weak_outputs == 3 && config.num_classes != 4)
        throw std::invalid_argument("WeakClassifier: K=3 presence needs a 4-class soft mask");
}

void WeakClassifier::init(std::mt19937_64& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    fc_.init(rng);
}

Tensor WeakClassifier::forward(const Tensor& soft_mask) {
    if (soft_mask.c() != conv1_.in_channels())
        throw std::invalid_argument("predict_presence: classifier expects C=" + std::to_string(conv1_.in_channels()) +
                                    ", got " + std::to_string(soft_mask.c()));
    Tensor h = relu2_.forward(conv2_.forward(relu1_.forward(conv1_.forward(soft_mask))));
    pooled_h_ = h.h();
    pooled_w_ = h.w();
    presence_ = nn::sigmoid(fc_.forward(nn::global_avg_pool(h)));
    return presence_;
}

Tensor WeakClassifier::backward(const Tensor& dpresence) {
    Tensor d = fc_.backward(nn::sigmoid_backward(presence_, dpresence));
    d = nn::global_avg_pool_backward(d, pooled_h_, pooled_w_);
    return conv1_.backward(relu1_.backward(conv2_.backward(relu2_.backward(d))));
}

nn::ParamList WeakClassifier::parameters() {
    nn::ParamList p = conv1_.parameters();
    append(p, conv2_.parameters());
    append(p, fc_.parameters());
    return p;
}

}  // namespace compseg::model
