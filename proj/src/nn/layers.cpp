#include "compseg/nn/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace compseg::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void fill_normal(std::vector<double>& v, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& x : v) x = dist(rng);
}

// Reductions with a summation order independent of buffer alignment, so
// results do not depend on where the allocator places a tensor.
double ordered_dot(const double* a, const double* b, std::size_t n) {
    double s[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        for (int k = 0; k < 4; ++k) s[k] += a[i + k] * b[i + k];
    for (; i < n; ++i) s[0] += a[i] * b[i];
    return (s[0] + s[1]) + (s[2] + s[3]);
}

double ordered_sum(const double* a, std::size_t n) {
    double s[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        for (int k = 0; k < 4; ++k) s[k] += a[i + k];
    for (; i < n; ++i) s[0] += a[i];
    return (s[0] + s[1]) + (s[2] + s[3]);
}

// Direct 3x3, stride 1, zero-padded convolution of one sample, faster than
// im2col + GEMM for narrow layers. Planes are laid out with a padded row
// pitch of w + 2 so that every tap becomes one contiguous multiply-add.
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

void pad_planes(const double* x, int channels, int h, int w, std::vector<double>& padded) {
    const int pitch = w + 2;
    const std::size_t stride = static_cast<std::size_t>(h + 2) * pitch + 2;
    padded.assign(stride * channels, 0.0);
    for (int c = 0; c < channels; ++c)
        for (int r = 0; r < h; ++r)
            std::copy_n(x + (static_cast<std::size_t>(c) * h + r) * w, w,
                        padded.data() + c * stride + static_cast<std::size_t>(r + 1) * pitch + 1);
}

void direct3x3_forward(const double* x, const double* weight, const double* bias, int in, int out, int h, int w,
                       double* y, std::vector<double>& padded, std::vector<double>& wide) {
    const int pitch = w + 2;
    const std::size_t stride = static_cast<std::size_t>(h + 2) * pitch + 2;
    const Eigen::Index span = static_cast<Eigen::Index>(h) * pitch;
    pad_planes(x, in, h, w, padded);
    wide.resize(static_cast<std::size_t>(span));
    for (int o = 0; o < out; ++o) {
        VecMap acc(wide.data(), span);
        acc.setConstant(bias[o]);
        for (int i = 0; i < in; ++i) {
            const double* src = padded.data() + i * stride;
            const double* wk = weight + (static_cast<std::size_t>(o) * in + i) * 9;
            for (int t = 0; t < 9; ++t)
                acc.noalias() += wk[t] * ConstVecMap(src + (t / 3) * pitch + t % 3, span);
        }
        double* yo = y + static_cast<std::size_t>(o) * h * w;
        for (int r = 0; r < h; ++r) std::copy_n(wide.data() + static_cast<std::size_t>(r) * pitch, w, yo + r * w);
    }
}

void direct3x3_backward(const double* x, const double* dy, const double* weight, int in, int out, int h, int w,
                        double* dx, double* dweight, double* dbias, std::vector<double>& padded,
                        std::vector<double>& wide, std::vector<double>& dpadded) {
    const int pitch = w + 2;
    const std::size_t stride = static_cast<std::size_t>(h + 2) * pitch + 2;
    const Eigen::Index span = static_cast<Eigen::Index>(h) * pitch;
    pad_planes(x, in, h, w, padded);
    dpadded.assign(stride * in, 0.0);
    wide.assign(static_cast<std::size_t>(span) * out, 0.0);
    for (int o = 0; o < out; ++o) {
        const double* g = dy + static_cast<std::size_t>(o) * h * w;
        double* go = wide.data() + o * span;
        for (int r = 0; r < h; ++r) std::copy_n(g + r * w, w, go + static_cast<std::size_t>(r) * pitch);
        dbias[o] += ordered_sum(g, static_cast<std::size_t>(h) * w);
    }
    for (int o = 0; o < out; ++o) {
        const ConstVecMap go(wide.data() + o * span, span);
        for (int i = 0; i < in; ++i) {
            const double* src = padded.data() + i * stride;
            double* dsrc = dpadded.data() + i * stride;
            const std::size_t base = (static_cast<std::size_t>(o) * in + i) * 9;
            for (int t = 0; t < 9; ++t) {
                const std::size_t off = static_cast<std::size_t>((t / 3) * pitch + t % 3);
                dweight[base + t] += ordered_dot(go.data(), src + off, static_cast<std::size_t>(span));
                VecMap(dsrc + off, span).noalias() += weight[base + t] * go;
            }
        }
    }
    for (int c = 0; c < in; ++c)
        for (int r = 0; r < h; ++r)
            std::copy_n(dpadded.data() + c * stride + static_cast<std::size_t>(r + 1) * pitch + 1, w,
                        dx + (static_cast<std::size_t>(c) * h + r) * w);
}

}  // namespace

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, const std::string& name)
    : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride),
      weight_(name + ".weight", static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel),
      bias_(name + ".bias", static_cast<std::size_t>(out_channels)) {
    if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || kernel % 2 == 0 || stride <= 0)
        throw std::invalid_argument("Conv2d " + name + ": invalid geometry");
}

void Conv2d::init(std::mt19937_64& rng) {
    fill_normal(weight_.value, std::sqrt(2.0 / (in_ * kernel_ * kernel_)), rng);
    std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

void Conv2d::im2col(const double* src, int h, int w, std::vector<double>& cols) const {
    const int pad = kernel_ / 2;
    const int ho = output_size(h), wo = output_size(w);
    const std::size_t positions = static_cast<std::size_t>(ho) * wo;
    cols.assign(static_cast<std::size_t>(in_) * kernel_ * kernel_ * positions, 0.0);
    std::size_t row = 0;
    for (int c = 0; c < in_; ++c) {
        const double* plane = src + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < kernel_; ++ky) {
            for (int kx = 0; kx < kernel_; ++kx, ++row) {
                double* out = cols.data() + row * positions;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride_ + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    const double* line = plane + static_cast<std::size_t>(iy) * w;
                    double* dst = out + static_cast<std::size_t>(oy) * wo;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride_ + kx - pad;
                        if (ix >= 0 && ix < w) dst[ox] = line[ix];
                    }
                }
            }
        }
    }
}

void Conv2d::col2im(const std::vector<double>& cols, int h, int w, double* dst) const {
    const int pad = kernel_ / 2;
    const int ho = output_size(h), wo = output_size(w);
    const std::size_t positions = static_cast<std::size_t>(ho) * wo;
    std::size_t row = 0;
    for (int c = 0; c < in_; ++c) {
        double* plane = dst + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < kernel_; ++ky) {
            for (int kx = 0; kx < kernel_; ++kx, ++row) {
                const double* src = cols.data() + row * positions;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride_ + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    double* line = plane + static_cast<std::size_t>(iy) * w;
                    const double* s = src + static_cast<std::size_t>(oy) * wo;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride_ + kx - pad;
                        if (ix >= 0 && ix < w) line[ix] += s[ox];
                    }
                }
            }
        }
    }
}

Tensor Conv2d::forward(const Tensor& x) {
    if (x.c() != in_)
        throw std::invalid_argument(weight_.name + ": expected " + std::to_string(in_) +
                                    " input channels, got " + std::to_string(x.c()));
    input_ = x;
    const int ho = output_size(x.h()), wo = output_size(x.w());
    const int positions = ho * wo;
    const int patch = in_ * kernel_ * kernel_;
    Tensor y(x.n(), out_, ho, wo);
    ConstMatrixMap weight(weight_.value.data(), out_, patch);
    Eigen::Map<const Eigen::VectorXd> bias(bias_.value.data(), out_);
    if (kernel_ == 3 && stride_ == 1 && out_ <= 16) {
        std::vector<double> padded, wide;
        for (int b = 0; b < x.n(); ++b)
            direct3x3_forward(x.sample(b), weight_.value.data(), bias_.value.data(), in_, out_, x.h(), x.w(), y.sample(b),
                              padded, wide);
        return y;
    }
    std::vector<double> cols;
    for (int b = 0; b < x.n(); ++b) {
        MatrixMap out(y.sample(b), out_, positions);
        if (kernel_ == 1 && stride_ == 1) {
            out.noalias() = weight * ConstMatrixMap(x.sample(b), in_, positions);
        } else {
            im2col(x.sample(b), x.h(), x.w(), cols);
            out.noalias() = weight * ConstMatrixMap(cols.data(), patch, positions);
        }
        out.colwise() += bias;
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
    const Tensor& x = input_;
    const int ho = output_size(x.h()), wo = output_size(x.w());
    if (dy.n() != x.n() || dy.c() != out_ || dy.h() != ho || dy.w() != wo)
        throw std::invalid_argument(weight_.name + ": gradient shape mismatch");
    const int positions = ho * wo;
    const int patch = in_ * kernel_ * kernel_;
    Tensor dx(x.n(), in_, x.h(), x.w());
    ConstMatrixMap weight(weight_.value.data(), out_, patch);
    MatrixMap dweight(weight_.grad.data(), out_, patch);
    Eigen::Map<Eigen::VectorXd> dbias(bias_.grad.data(), out_);
    if (kernel_ == 3 && stride_ == 1 && out_ <= 16) {
        std::vector<double> padded, wide, dpadded;
        for (int b = 0; b < x.n(); ++b)
            direct3x3_backward(x.sample(b), dy.sample(b), weight_.value.data(), in_, out_, x.h(), x.w(), dx.sample(b),
                               weight_.grad.data(), bias_.grad.data(), padded, wide, dpadded);
        return dx;
    }
    std::vector<double> cols, dcols(static_cast<std::size_t>(patch) * positions);
    for (int b = 0; b < x.n(); ++b) {
        ConstMatrixMap g(dy.sample(b), out_, positions);
        for (int o = 0; o < out_; ++o) dbias[o] += ordered_sum(dy.sample(b) + static_cast<std::size_t>(o) * positions, positions);
        if (kernel_ == 1 && stride_ == 1) {
            dweight.noalias() += g * ConstMatrixMap(x.sample(b), in_, positions).transpose();
            MatrixMap(dx.sample(b), in_, positions).noalias() = weight.transpose() * g;
        } else {
            im2col(x.sample(b), x.h(), x.w(), cols);
            dweight.noalias() += g * ConstMatrixMap(cols.data(), patch, positions).transpose();
            MatrixMap(dcols.data(), patch, positions).noalias() = weight.transpose() * g;
            col2im(dcols, x.h(), x.w(), dx.sample(b));
        }
    }
    return dx;
}

Tensor ReLU::forward(const Tensor& x) {
    Tensor y = x;
    active_.resize(y.size());
    auto& d = y.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        active_[i] = d[i] > 0.0;
        if (!active_[i]) d[i] = 0.0;
    }
    return y;
}

Tensor ReLU::backward(const Tensor& dy) const {
    if (dy.size() != active_.size()) throw std::invalid_argument("ReLU: gradient shape mismatch");
    Tensor dx = dy;
    auto& d = dx.data();
    for (std::size_t i = 0; i < d.size(); ++i)
        if (!active_[i]) d[i] = 0.0;
    return dx;
}

Tensor MaxPool2::forward(const Tensor& x) {
    n_ = x.n();
    c_ = x.c();
    h_ = x.h();
    w_ = x.w();
    const int ho = h_ / 2, wo = w_ / 2;
    if (ho == 0 || wo == 0) throw std::invalid_argument("MaxPool2: input smaller than 2x2");
    Tensor y(n_, c_, ho, wo);
    argmax_.assign(y.size(), 0);
    std::size_t o = 0;
    for (int b = 0; b < n_; ++b) {
        for (int c = 0; c < c_; ++c) {
            const std::size_t base = (static_cast<std::size_t>(b) * c_ + c) * h_ * w_;
            for (int oy = 0; oy < ho; ++oy) {
                for (int ox = 0; ox < wo; ++ox, ++o) {
                    std::size_t best = base + static_cast<std::size_t>(2 * oy) * w_ + 2 * ox;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::size_t idx = base + static_cast<std::size_t>(2 * oy + dy) * w_ + 2 * ox + dx;
                            if (x.data()[idx] > x.data()[best]) best = idx;
                        }
                    argmax_[o] = best;
                    y.data()[o] = x.data()[best];
                }
            }
        }
    }
    return y;
}

Tensor MaxPool2::backward(const Tensor& dy) const {
    if (dy.size() != argmax_.size()) throw std::invalid_argument("MaxPool2: gradient shape mismatch");
    Tensor dx(n_, c_, h_, w_);
    for (std::size_t o = 0; o < argmax_.size(); ++o) dx.data()[argmax_[o]] += dy.data()[o];
    return dx;
}

Tensor Upsample2::forward(const Tensor& x, int out_h, int out_w) {
    in_h_ = x.h();
    in_w_ = x.w();
    Tensor y(x.n(), x.c(), out_h, out_w);
    for (int b = 0; b < x.n(); ++b)
        for (int c = 0; c < x.c(); ++c) {
            const double* src = x.channel(b, c);
            double* dst = y.channel(b, c);
            for (int yy = 0; yy < out_h; ++yy) {
                const int sy = std::min(yy / 2, in_h_ - 1);
                for (int xx = 0; xx < out_w; ++xx) dst[yy * out_w + xx] = src[sy * in_w_ + std::min(xx / 2, in_w_ - 1)];
            }
        }
    return y;
}

Tensor Upsample2::backward(const Tensor& dy) const {
    Tensor dx(dy.n(), dy.c(), in_h_, in_w_);
    for (int b = 0; b < dy.n(); ++b)
        for (int c = 0; c < dy.c(); ++c) {
            const double* src = dy.channel(b, c);
            double* dst = dx.channel(b, c);
            for (int yy = 0; yy < dy.h(); ++yy) {
                const int sy = std::min(yy / 2, in_h_ - 1);
                for (int xx = 0; xx < dy.w(); ++xx) dst[sy * in_w_ + std::min(xx / 2, in_w_ - 1)] += src[yy * dy.w() + xx];
            }
        }
    return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
        throw std::invalid_argument("concat_channels: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
    Tensor y(a.n(), a.c() + b.c(), a.h(), a.w());
    for (int n = 0; n < a.n(); ++n) {
        std::copy(a.sample(n), a.sample(n) + a.sample_size(), y.sample(n));
        std::copy(b.sample(n), b.sample(n) + b.sample_size(), y.sample(n) + a.sample_size());
    }
    return y;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& d, int channels_a) {
    Tensor da(d.n(), channels_a, d.h(), d.w());
    Tensor db(d.n(), d.c() - channels_a, d.h(), d.w());
    for (int n = 0; n < d.n(); ++n) {
        std::copy(d.sample(n), d.sample(n) + da.sample_size(), da.sample(n));
        std::copy(d.sample(n) + da.sample_size(), d.sample(n) + d.sample_size(), db.sample(n));
    }
    return {std::move(da), std::move(db)};
}

Tensor softmax_channels(const Tensor& logits) {
    Tensor p(logits.n(), logits.c(), logits.h(), logits.w());
    const std::size_t plane = logits.plane();
    for (int b = 0; b < logits.n(); ++b) {
        const double* in = logits.sample(b);
        double* out = p.sample(b);
        for (std::size_t i = 0; i < plane; ++i) {
            double peak = in[i];
            for (int c = 1; c < logits.c(); ++c) peak = std::max(peak, in[c * plane + i]);
            double total = 0.0;
            for (int c = 0; c < logits.c(); ++c) total += out[c * plane + i] = std::exp(in[c * plane + i] - peak);
            for (int c = 0; c < logits.c(); ++c) out[c * plane + i] /= total;
        }
    }
    return p;
}

Tensor softmax_channels_backward(const Tensor& probs, const Tensor& dprobs) {
    if (!probs.same_shape(dprobs)) throw std::invalid_argument("softmax backward: shape mismatch");
    Tensor dl(probs.n(), probs.c(), probs.h(), probs.w());
    const std::size_t plane = probs.plane();
    for (int b = 0; b < probs.n(); ++b) {
        const double* p = probs.sample(b);
        const double* g = dprobs.sample(b);
        double* out = dl.sample(b);
        for (std::size_t i = 0; i < plane; ++i) {
            double dot = 0.0;
            for (int c = 0; c < probs.c(); ++c) dot += p[c * plane + i] * g[c * plane + i];
            for (int c = 0; c < probs.c(); ++c) out[c * plane + i] = p[c * plane + i] * (g[c * plane + i] - dot);
        }
    }
    return dl;
}

Tensor global_avg_pool(const Tensor& x) {
    Tensor y(x.n(), x.c(), 1, 1);
    const double area = static_cast<double>(x.plane());
    for (int b = 0; b < x.n(); ++b)
        for (int c = 0; c < x.c(); ++c) {
            const double* p = x.channel(b, c);
            double s = 0.0;
            for (std::size_t i = 0; i < x.plane(); ++i) s += p[i];
            y.at(b, c, 0, 0) = s / area;
        }
    return y;
}

Tensor global_avg_pool_backward(const Tensor& dy, int h, int w) {
    Tensor dx(dy.n(), dy.c(), h, w);
    const double area = static_cast<double>(h) * w;
    for (int b = 0; b < dy.n(); ++b)
        for (int c = 0; c < dy.c(); ++c) {
            const double g = dy.at(b, c, 0, 0) / area;
            std::fill(dx.channel(b, c), dx.channel(b, c) + dx.plane(), g);
        }
    return dx;
}

Linear::Linear(int in_features, int out_features, const std::string& name)
    : in_(in_features), out_(out_features),
      weight_(name + ".weight", static_cast<std::size_t>(in_features) * out_features),
      bias_(name + ".bias", static_cast<std::size_t>(out_features)) {
    if (in_features <= 0 || out_features <= 0) throw std::invalid_argument("Linear " + name + ": invalid size");
}

void Linear::init(std::mt19937_64& rng) {
    fill_normal(weight_.value, std::sqrt(1.0 / in_), rng);
    std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

Tensor Linear::forward(const Tensor& x) {
    if (static_cast<int>(x.sample_size()) != in_) throw std::invalid_argument(weight_.name + ": input size mismatch");
    input_ = x;
    Tensor y(x.n(), out_, 1, 1);
    ConstMatrixMap weight(weight_.value.data(), out_, in_);
    ConstMatrixMap in(x.data().data(), x.n(), in_);
    MatrixMap out(y.data().data(), x.n(), out_);
    out.noalias() = in * weight.transpose();
    out.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias_.value.data(), out_);
    return y;
}

Tensor Linear::backward(const Tensor& dy) {
    ConstMatrixMap weight(weight_.value.data(), out_, in_);
    ConstMatrixMap in(input_.data().data(), input_.n(), in_);
    ConstMatrixMap g(dy.data().data(), dy.n(), out_);
    MatrixMap(weight_.grad.data(), out_, in_).noalias() += g.transpose() * in;
    Eigen::Map<Eigen::RowVectorXd>(bias_.grad.data(), out_) += g.colwise().sum();
    Tensor dx(input_.n(), input_.c(), input_.h(), input_.w());
    MatrixMap(dx.data().data(), input_.n(), in_).noalias() = g * weight;
    return dx;
}

Tensor sigmoid(const Tensor& x) {
    Tensor y = x;
    for (auto& v : y.data()) v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& dy) {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data()[i] *= y.data()[i] * (1.0 - y.data()[i]);
    return dx;
}

void zero_grad(const ParamList& params) {
    for (auto* p : params) p->zero_grad();
}

std::size_t parameter_count(const ParamList& params) {
    std::size_t n = 0;
    for (const auto* p : params) n += p->value.size();
    return n;
}

}  // namespace compseg::nn
