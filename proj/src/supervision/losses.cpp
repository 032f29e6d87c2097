#include "compseg/supervision/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace compseg::supervision {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

struct DiceTerms {
    double intersection = 0.0;
    double denominator = 0.0;
};

DiceTerms dice_terms(const Tensor& p, const Tensor& q, int b, int c) {
    DiceTerms t;
    const double* pp = p.channel(b, c);
    const double* qq = q.channel(b, c);
    for (std::size_t i = 0; i < p.plane(); ++i) {
        t.intersection += pp[i] * qq[i];
        t.denominator += pp[i] + qq[i];
    }
    return t;
}

void require_dice_inputs(const Tensor& predicted, const Tensor& target) {
    require_same(predicted, target, "dice_loss");
    if (predicted.c() < 2) throw std::invalid_argument("dice_loss: need a background and at least one foreground class");
    if (predicted.n() < 1) throw std::invalid_argument("dice_loss: empty batch");
    require_one_hot(target);
}

Tensor select_samples(const Tensor& t, const std::vector<int>& rows) {
    Tensor out(static_cast<int>(rows.size()), t.c(), t.h(), t.w());
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy_n(t.sample(rows[r]), t.sample_size(), out.sample(static_cast<int>(r)));
    return out;
}

std::vector<int> labeled_rows(const Batch& batch) {
    std::vector<int> rows;
    for (int b = 0; b < batch.size(); ++b)
        if (batch.has_pixel_label[b]) rows.push_back(b);
    return rows;
}

void validate_batch(const Batch& batch) {
    if (batch.size() == 0) throw std::invalid_argument("total_loss: batch has no samples");
    if (batch.has_pixel_label.size() != static_cast<std::size_t>(batch.size()) || batch.targets.n() != batch.size() ||
        batch.weak.n() != batch.size())
        throw std::invalid_argument("total_loss: batch fields disagree on the sample count");
}

}  // namespace

double weak_loss(const Tensor& predicted, const Tensor& target) {
    require_same(predicted, target, "weak_loss");
    if (predicted.size() == 0) throw std::invalid_argument("weak_loss: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) sum += std::abs(predicted.data()[i] - target.data()[i]);
    return sum / static_cast<double>(predicted.size());
}

Tensor weak_loss_gradient(const Tensor& predicted, const Tensor& target) {
    require_same(predicted, target, "weak_loss");
    Tensor g(predicted.n(), predicted.c(), predicted.h(), predicted.w());
    const double scale = 1.0 / static_cast<double>(predicted.size());
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double d = predicted.data()[i] - target.data()[i];
        g.data()[i] = d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0);
    }
    return g;
}

void require_one_hot(const Tensor& target) {
    for (int b = 0; b < target.n(); ++b)
        for (std::size_t i = 0; i < target.plane(); ++i) {
            int ones = 0;
            for (int c = 0; c < target.c(); ++c) {
                const double v = target.channel(b, c)[i];
                if (v == 1.0)
                    ++ones;
                else if (v != 0.0)
                    throw std::invalid_argument("dice_loss: target is not one-hot (value " + std::to_string(v) + ")");
            }
            if (ones != 1) throw std::invalid_argument("dice_loss: target is not one-hot at sample " + std::to_string(b));
        }
}

double dice_loss(const Tensor& predicted, const Tensor& target) {
    require_dice_inputs(predicted, target);
    double sum = 0.0;
    for (int b = 0; b < predicted.n(); ++b)
        for (int c = 1; c < predicted.c(); ++c) {
            const auto t = dice_terms(predicted, target, b, c);
            sum += (2.0 * t.intersection + kDiceEpsilon) / (t.denominator + kDiceEpsilon);
        }
    return 1.0 - sum / (static_cast<double>(predicted.n()) * (predicted.c() - 1));
}

Tensor dice_loss_gradient(const Tensor& predicted, const Tensor& target) {
    require_dice_inputs(predicted, target);
    Tensor g(predicted.n(), predicted.c(), predicted.h(), predicted.w());
    const double scale = 1.0 / (static_cast<double>(predicted.n()) * (predicted.c() - 1));
    for (int b = 0; b < predicted.n(); ++b)
        for (int c = 1; c < predicted.c(); ++c) {
            const auto t = dice_terms(predicted, target, b, c);
            const double num = 2.0 * t.intersection + kDiceEpsilon;
            const double den = t.denominator + kDiceEpsilon;
            const double* q = target.channel(b, c);
            double* gg = g.channel(b, c);
            for (std::size_t i = 0; i < predicted.plane(); ++i) gg[i] = -scale * (2.0 * q[i] * den - num) / (den * den);
        }
    return g;
}

int Batch::labeled() const {
    return static_cast<int>(std::count(has_pixel_label.begin(), has_pixel_label.end(), std::uint8_t{1}));
}

Batch make_batch(std::span<const data::SliceSample* const> samples, int num_classes, int weak_width) {
    if (samples.empty()) throw std::invalid_argument("make_batch: no samples");
    const auto& first = *samples.front();
    Batch batch;
    const int n = static_cast<int>(samples.size());
    batch.images = Tensor(n, data::kModalities, first.height, first.width);
    batch.targets = Tensor(n, num_classes, first.height, first.width);
    batch.weak = Tensor(n, weak_width, 1, 1);
    for (int b = 0; b < n; ++b) {
        const auto& s = *samples[b];
        if (s.height != first.height || s.width != first.width)
            throw std::invalid_argument("make_batch: slices of different sizes");
        if (s.num_classes != num_classes || s.weak_label.width() != weak_width)
            throw std::invalid_argument("make_batch: sample " + s.volume_id + ":" + std::to_string(s.slice_index) +
                                        " does not match the task (C, K)");
        std::copy(s.image.begin(), s.image.end(), batch.images.sample(b));
        if (s.has_pixel_label) {
            const auto y = s.one_hot();
            std::copy(y.begin(), y.end(), batch.targets.sample(b));
        }
        batch.has_pixel_label.push_back(s.has_pixel_label);
        for (int k = 0; k < weak_width; ++k) batch.weak.sample(b)[k] = s.weak_label.values[k];
    }
    return batch;
}

LossBreakdown combine_losses(double clustering, double dice, double weak, int labeled, int samples,
                             double lambda_weak) {
    LossBreakdown l;
    l.clustering = clustering;
    l.labeled = labeled;
    l.samples = samples;
    l.lambda_dice = labeled > 0 ? 1.0 : 0.0;
    l.dice = labeled > 0 ? dice : 0.0;
    l.weak = weak;
    l.lambda_weak = lambda_weak;
    l.total = clustering + l.lambda_dice * l.dice + lambda_weak * weak;
    return l;
}

namespace {

struct BatchLosses {
    model::ForwardPass pass;
    std::vector<int> rows;
    Tensor labeled_pred;
    Tensor labeled_target;
    LossBreakdown loss;
};

BatchLosses evaluate(model::ModelBundle& bundle, const vmf::KernelBank& bank, const Batch& batch, double lambda_weak) {
    validate_batch(batch);
    if (lambda_weak < 0.0 || !std::isfinite(lambda_weak)) throw std::invalid_argument("lambda_weak must be >= 0");
    BatchLosses r;
    r.pass = model::forward(bundle, bank, batch.images);
    double clustering = 0.0;
    for (const auto& f : r.pass.features) clustering += vmf::clustering_loss(f, bank);
    clustering /= batch.size();
    r.rows = labeled_rows(batch);
    double dice = 0.0;
    if (!r.rows.empty()) {
        r.labeled_pred = select_samples(r.pass.soft_mask, r.rows);
        r.labeled_target = select_samples(batch.targets, r.rows);
        dice = dice_loss(r.labeled_pred, r.labeled_target);
    }
    const double weak = weak_loss(r.pass.presence, batch.weak);
    r.loss = combine_losses(clustering, dice, weak, static_cast<int>(r.rows.size()), batch.size(), lambda_weak);
    return r;
}

}  // namespace

LossBreakdown total_loss(model::ModelBundle& bundle, const vmf::KernelBank& bank, const Batch& batch,
                         double lambda_weak) {
    return evaluate(bundle, bank, batch, lambda_weak).loss;
}

ObjectiveResult total_loss_backward(model::ModelBundle& bundle, const vmf::KernelBank& bank, const Batch& batch,
                                    double lambda_weak) {
    BatchLosses r = evaluate(bundle, bank, batch, lambda_weak);
    const Tensor& mask = r.pass.soft_mask;
    Tensor dmask(mask.n(), mask.c(), mask.h(), mask.w());
    if (!r.rows.empty()) {
        const Tensor g = dice_loss_gradient(r.labeled_pred, r.labeled_target);
        for (std::size_t i = 0; i < r.rows.size(); ++i)
            std::copy_n(g.sample(static_cast<int>(i)), g.sample_size(), dmask.sample(r.rows[i]));
    }
    Tensor dpresence = weak_loss_gradient(r.pass.presence, batch.weak);
    for (auto& v : dpresence.data()) v *= lambda_weak;

    ObjectiveResult out;
    out.loss = r.loss;
    out.dkernels = model::backward(bundle, bank, r.pass, dmask, dpresence);
    for (const auto& f : r.pass.features) out.dkernels += vmf::clustering_loss_gradient(f, bank) / batch.size();
    return out;
}

}  // namespace compseg::supervision
