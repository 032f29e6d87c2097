#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "compseg/tensor.hpp"

namespace compseg::nn {

/// A trainable array together with its accumulated gradient.
struct Param {
    std::string name;
    std::vector<double> value;
    std::vector<double> grad;

    Param() = default;
    Param(std::string n, std::size_t count) : name(std::move(n)), value(count, 0.0), grad(count, 0.0) {}
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

using ParamList = std::vector<Param*>;

/// 2D convolution with square kernel, zero padding kernel/2 and integer stride.
/// Weights are laid out [out][in][ky][kx].
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(int in_channels, int out_channels, int kernel, int stride, const std::string& name);

    /// Fan-in scaled normal initialization (std = sqrt(2 / fan_in)), zero bias.
    void init(std::mt19937_64& rng);

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);

    ParamList parameters() { return {&weight_, &bias_}; }
    int in_channels() const { return in_; }
    int out_channels() const { return out_; }
    int output_size(int input) const { return (input + 2 * (kernel_ / 2) - kernel_) / stride_ + 1; }

private:
    void im2col(const double* src, int h, int w, std::vector<double>& cols) const;
    void col2im(const std::vector<double>& cols, int h, int w, double* dst) const;

    int in_ = 0, out_ = 0, kernel_ = 1, stride_ = 1;
    Param weight_, bias_;
    Tensor input_;
};

class ReLU {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy) const;

private:
    std::vector<std::uint8_t> active_;
};

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
class MaxPool2 {
public:
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy) const;

private:
    std::vector<std::size_t> argmax_;
    int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
};

/// Nearest-neighbour 2x upsampling to an explicit target size.
class Upsample2 {
public:
    Tensor forward(const Tensor& x, int out_h, int out_w);
    Tensor backward(const Tensor& dy) const;

private:
    int in_h_ = 0, in_w_ = 0;
};

Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Splits a gradient produced for concat_channels(a, b) back into (da, db).
std::pair<Tensor, Tensor> split_channels(const Tensor& d, int channels_a);

/// Per-position softmax over the channel axis.
Tensor softmax_channels(const Tensor& logits);
Tensor softmax_channels_backward(const Tensor& probs, const Tensor& dprobs);

/// Spatial mean per channel: B x C x H x W -> B x C x 1 x 1.
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& dy, int h, int w);

/// Affine map on B x in (stored as B x in x 1 x 1).
class Linear {
public:
    Linear() = default;
    Linear(int in_features, int out_features, const std::string& name);
    void init(std::mt19937_64& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    ParamList parameters() { return {&weight_, &bias_}; }

private:
    int in_ = 0, out_ = 0;
    Param weight_, bias_;
    Tensor input_;
};

Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& y, const Tensor& dy);

void zero_grad(const ParamList& params);
std::size_t parameter_count(const ParamList& params);

}  // namespace compseg::nn
