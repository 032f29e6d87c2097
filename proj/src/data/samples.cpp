#include "compseg/data/samples.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace compseg::data {

std::vector<Structure> weak_structures(int width) {
    if (width == 1) return {Structure::WholeTumour};
    if (width == 3) return {Structure::Edema, Structure::Enhancing, Structure::Necrotic};
    throw std::invalid_argument("weak label width must be 1 or 3");
}

WeakLabel weak_label_from_annotations(const VolumeRecord& volume, int slice, int width) {
    WeakLabel c;
    for (Structure s : weak_structures(width))
        c.values.push_back(static_cast<std::uint8_t>(supervision::presence_from_two_point(volume.annotation(s), slice, volume.slices)));
    return c;
}

WeakLabel weak_label_from_mask(std::span<const std::uint8_t> slice_mask, int width) {
    WeakLabel c;
    for (Structure s : weak_structures(width))
        c.values.push_back(std::any_of(slice_mask.begin(), slice_mask.end(), [s](std::uint8_t v) { return contains(s, v); }));
    return c;
}

std::vector<double> SliceSample::one_hot() const {
    std::vector<double> y(static_cast<std::size_t>(num_classes) * plane(), 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) y[labels[i] * plane() + i] = 1.0;
    return y;
}

bool SliceSample::has_foreground() const {
    return std::any_of(labels.begin(), labels.end(), [](std::uint8_t v) { return v != 0; });
}

std::uint8_t task_class(std::uint8_t voxel_label, TaskMode mode) {
    if (voxel_label > labels::kNecrotic) throw std::invalid_argument("invalid voxel label " + std::to_string(voxel_label));
    if (mode == TaskMode::WholeTumour) return voxel_label == labels::kBackground ? 0 : 1;
    return voxel_label;
}

std::vector<SliceSample> make_slice_samples(const VolumeRecord& volume, TaskMode mode, int weak_width) {
    volume.validate();
    if (weak_width == 0) weak_width = mode == TaskMode::WholeTumour ? 1 : 3;
    if (weak_width == 3 && mode != TaskMode::SubRegion)
        throw std::invalid_argument("sub-region weak labels need the sub-region task");
    std::vector<SliceSample> out;
    out.reserve(static_cast<std::size_t>(volume.slices));
    const std::size_t plane = volume.plane();
    for (int s = 0; s < volume.slices; ++s) {
        SliceSample x;
        x.volume_id = volume.subject_id;
        x.slice_index = s;
        x.height = volume.height;
        x.width = volume.width;
        x.num_classes = class_count(mode);
        x.image.resize(kModalities * plane);
        for (int m = 0; m < kModalities; ++m)
            std::copy(volume.modality_slice(m, s), volume.modality_slice(m, s) + plane, x.image.begin() + m * plane);
        x.labels.resize(plane);
        const std::uint8_t* mask = volume.mask_slice(s);
        for (std::size_t i = 0; i < plane; ++i) x.labels[i] = task_class(mask[i], mode);
        x.weak_label = weak_label_from_annotations(volume, s, weak_width);
        out.push_back(std::move(x));
    }
    return out;
}

std::size_t labeled_count(std::size_t total, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("label fraction must be in (0, 1]");
    // Guard against products like 0.07 * 100 = 7.000000000000001.
    const double exact = fraction * static_cast<double>(total);
    return std::min(total, static_cast<std::size_t>(std::ceil(exact - 1e-9 * std::max(1.0, exact))));
}

void sample_labeled_subset(std::vector<SliceSample>& samples, double fraction, std::uint64_t seed) {
    const std::size_t take = labeled_count(samples.size(), fraction);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    for (auto& s : samples) s.has_pixel_label = false;
    for (std::size_t k = 0; k < take; ++k) samples[order[k]].has_pixel_label = true;
}

}  // namespace compseg::data
