#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace compseg {

/// Dense NCHW tensor of doubles. Every network activation in the project uses
/// this layout; per-position (channels-last) views live in vmf::FeatureMap.
class Tensor {
public:
    Tensor() = default;
    Tensor(int n, int c, int h, int w, double fill = 0.0)
        : n_(n), c_(c), h_(h), w_(w), data_(checked_size(n, c, h, w), fill) {}

    int n() const { return n_; }
    int c() const { return c_; }
    int h() const { return h_; }
    int w() const { return w_; }
    std::size_t size() const { return data_.size(); }
    std::size_t plane() const { return static_cast<std::size_t>(h_) * w_; }
    std::size_t sample_size() const { return static_cast<std::size_t>(c_) * plane(); }

    double& at(int b, int ch, int y, int x) { return data_[index(b, ch, y, x)]; }
    double at(int b, int ch, int y, int x) const { return data_[index(b, ch, y, x)]; }

    double* sample(int b) { return data_.data() + b * sample_size(); }
    const double* sample(int b) const { return data_.data() + b * sample_size(); }
    double* channel(int b, int ch) { return sample(b) + ch * plane(); }
    const double* channel(int b, int ch) const { return sample(b) + ch * plane(); }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Tensor& o) const {
        return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
    }
    std::string shape_string() const {
        return std::to_string(n_) + "x" + std::to_string(c_) + "x" + std::to_string(h_) + "x" +
               std::to_string(w_);
    }

private:
    static std::size_t checked_size(int n, int c, int h, int w) {
        if (n < 0 || c < 0 || h < 0 || w < 0) throw std::invalid_argument("negative tensor dimension");
        return static_cast<std::size_t>(n) * c * h * w;
    }
    std::size_t index(int b, int ch, int y, int x) const {
        return ((static_cast<std::size_t>(b) * c_ + ch) * h_ + y) * w_ + x;
    }

    int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
    std::vector<double> data_;
};

}  // namespace compseg
