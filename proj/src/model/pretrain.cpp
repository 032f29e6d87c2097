#include "compseg/model/pretrain.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

#include "compseg/nn/adam.hpp"
#include "compseg/vmf/vmf.hpp"

namespace compseg::model {

namespace {

std::vector<std::size_t> iota_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

double reconstruction_error(FeatureExtractor& extractor, nn::Conv2d& projection, const ImageSet& images,
                            int batch_size) {
    const auto all = iota_indices(images.count);
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t start = 0; start < all.size(); start += batch_size) {
        const std::size_t end = std::min(all.size(), start + batch_size);
        const Tensor x = images.load(std::span(all).subspan(start, end - start));
        const Tensor y = projection.forward(extractor.forward(x));
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = y.data()[i] - x.data()[i];
            total += d * d;
        }
        n += x.size();
    }
    return total / static_cast<double>(n);
}

}  // namespace

PretrainResult pretrain_reconstruction(const ImageSet& images, const ModelConfig& config,
                                       const PretrainOptions& options) {
    if (images.count == 0) throw std::invalid_argument("pretrain_reconstruction: empty training set");
    if (options.epochs < 0 || options.batch_size <= 0) throw std::invalid_argument("pretrain_reconstruction: bad options");
    PretrainResult result{FeatureExtractor(config), 0.0, {}};
    std::mt19937_64 rng(options.seed);
    result.extractor.init(rng);
    nn::Conv2d projection(config.feature_dim, config.in_channels, 1, 1, "reconstruction.projection");
    projection.init(rng);
    result.initial_mse = reconstruction_error(result.extractor, projection, images, options.batch_size);
    if (options.epochs == 0) return result;

    nn::ParamList params = result.extractor.parameters();
    for (auto* p : projection.parameters()) params.push_back(p);
    nn::Adam adam(params, {.learning_rate = options.learning_rate});
    auto order = iota_indices(images.count);
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t end = std::min(order.size(), start + options.batch_size);
            const Tensor x = images.load(std::span(order).subspan(start, end - start));
            const Tensor y = projection.forward(result.extractor.forward(x));
            Tensor dy(y.n(), y.c(), y.h(), y.w());
            const double scale = 2.0 / static_cast<double>(y.size());
            for (std::size_t i = 0; i < y.size(); ++i) dy.data()[i] = scale * (y.data()[i] - x.data()[i]);
            adam.zero_grad();
            result.extractor.backward(projection.backward(dy));
            adam.step();
        }
        result.epoch_mse.push_back(reconstruction_error(result.extractor, projection, images, options.batch_size));
    }
    return result;
}

vmf::RowMatrix harvest_features(FeatureExtractor& extractor, const ImageSet& images, int per_image,
                                std::uint64_t seed, int batch_size, bool nonzero_only) {
    if (images.count == 0) throw std::invalid_argument("harvest_features: empty image set");
    if (per_image <= 0) throw std::invalid_argument("harvest_features: per_image must be positive");
    std::mt19937_64 rng(seed);
    std::vector<Eigen::RowVectorXd> rows;
    const auto all = iota_indices(images.count);
    for (std::size_t start = 0; start < all.size(); start += batch_size) {
        const std::size_t end = std::min(all.size(), start + batch_size);
        const Tensor input = images.load(std::span(all).subspan(start, end - start));
        const Tensor raw = extractor.forward(input);
        if (nonzero_only && (input.h() != raw.h() || input.w() != raw.w())) throw std::invalid_argument("harvest_features: nonzero_only needs full-resolution features");
        for (int b = 0; b < raw.n(); ++b) {
            const vmf::FeatureMap f = vmf::normalize_features(vmf::feature_map_from_tensor(raw, b));
            auto inside = [&](Eigen::Index i) {
                for (int c = 0; c < input.c(); ++c)
                    if (input.channel(b, c)[i] != 0.0) return true;
                return false;
            };
            std::vector<Eigen::Index> valid;
            for (Eigen::Index i = 0; i < f.values.rows(); ++i)
                if (!f.degenerate[static_cast<std::size_t>(i)] && (!nonzero_only || inside(i))) valid.push_back(i);
            std::shuffle(valid.begin(), valid.end(), rng);
            const std::size_t take = std::min<std::size_t>(valid.size(), static_cast<std::size_t>(per_image));
            for (std::size_t k = 0; k < take; ++k) rows.push_back(f.values.row(valid[k]));
        }
    }
    vmf::RowMatrix out(static_cast<Eigen::Index>(rows.size()), extractor.feature_dim());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows[i];
    return out;
}

}  // namespace compseg::model
