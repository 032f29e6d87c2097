#pragma once

#include <random>
#include <vector>

#include "compseg/model/config.hpp"
#include "compseg/nn/layers.hpp"

namespace compseg::model {

/// Two 3x3 convolutions, each followed by ReLU.
class ConvBlock {
public:
    ConvBlock() = default;
    ConvBlock(int in, int out, const std::string& name);
    void init(std::mt19937_64& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    nn::ParamList parameters();

private:
    nn::Conv2d first_, second_;
    nn::ReLU relu1_, relu2_;
};

/// Encoder-decoder with skip connections and a linear 1x1 output to D feature
/// channels (a UNet without its classification layer).
class FeatureExtractor {
public:
    FeatureExtractor() = default;
    explicit FeatureExtractor(const ModelConfig& config);
    void init(std::mt19937_64& rng);

    /// B x 4 x S x S images -> B x D x S x S raw features.
    Tensor forward(const Tensor& images);
    Tensor backward(const Tensor& dfeatures);
    nn::ParamList parameters();
    int feature_dim() const { return feature_dim_; }

private:
    int image_size_ = 0, in_channels_ = 0, feature_dim_ = 0;
    std::vector<ConvBlock> encoder_, decoder_;
    std::vector<nn::MaxPool2> pools_;
    std::vector<nn::Upsample2> ups_;
    std::vector<int> widths_;
    nn::Conv2d output_;
};

/// Shallow convolutional segmentation head: J -> h1 -> h2 -> C with ReLU in
/// between and a per-position softmax over classes.
class TaskHead {
public:
    TaskHead() = default;
    explicit TaskHead(const ModelConfig& config);
    void init(std::mt19937_64& rng);
    Tensor forward(const Tensor& activations);
    Tensor backward(const Tensor& dprobs);
    nn::ParamList parameters();
    int input_channels() const { return conv1_.in_channels(); }
    int num_classes() const { return conv3_.out_channels(); }

private:
    nn::Conv2d conv1_, conv2_, conv3_;
    nn::ReLU relu1_, relu2_;
    Tensor probs_;
};

/// Presence classifier on soft masks: two stride-2 convolutions, global
/// average pooling, affine map, sigmoid. Output is B x K x 1 x 1.
class WeakClassifier {
public:
    WeakClassifier() = default;
    explicit WeakClassifier(const ModelConfig& config);
    void init(std::mt19937_64& rng);
    Tensor forward(const Tensor& soft_mask);
    Tensor backward(const Tensor& dpresence);
    nn::ParamList parameters();
    int input_channels() const { return conv1_.in_channels(); }
    int outputs() const { return outputs_; }

private:
    int outputs_ = 0;
    nn::Conv2d conv1_, conv2_;
    nn::ReLU relu1_, relu2_;
    nn::Linear fc_;
    Tensor presence_;
    int pooled_h_ = 0, pooled_w_ = 0;
};

}  // namespace compseg::model
