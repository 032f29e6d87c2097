#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "compseg/data/volume.hpp"

namespace compseg::data {

/// Slice-level presence vector c: one entry (whole tumour) or three (ED, ET, NE).
struct WeakLabel {
    std::vector<std::uint8_t> values;
    int width() const { return static_cast<int>(values.size()); }
    bool operator==(const WeakLabel&) const = default;
};

/// Structures scored by a weak label of the given width, in entry order.
std::vector<Structure> weak_structures(int width);

/// Presence from the 2-point annotations of `volume` at `slice`.
WeakLabel weak_label_from_annotations(const VolumeRecord& volume, int slice, int width);
/// Presence from the pixels of the slice itself (1 iff any voxel of the structure).
WeakLabel weak_label_from_mask(std::span<const std::uint8_t> slice_mask, int width);

/// One 2D slice with its four modalities, the class-index map behind the
/// one-hot pixel mask Y, and the weak label c.
struct SliceSample {
    std::string volume_id;
    int slice_index = 0;
    int height = 0;
    int width = 0;
    std::vector<float> image;         // 4 x H x W
    std::vector<std::uint8_t> labels;  // H x W class indices in [0, C)
    int num_classes = 2;
    WeakLabel weak_label;
    /// Whether the pixel mask may be used for supervision.
    bool has_pixel_label = false;

    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    /// C x H x W one-hot expansion of `labels`.
    std::vector<double> one_hot() const;
    bool has_foreground() const;
};

/// Maps internal voxel labels to class indices for the task: whole tumour
/// collapses ED/ET/NE into class 1; sub-region keeps 1/2/3.
std::uint8_t task_class(std::uint8_t voxel_label, TaskMode mode);

/// One sample per slice. `weak_width` defaults to 1 for whole-tumour and 3
/// for sub-region mode; pass 1 with SubRegion for whole-tumour weak labels on
/// the sub-region task.
std::vector<SliceSample> make_slice_samples(const VolumeRecord& volume, TaskMode mode, int weak_width = 0);

/// Marks ceil(fraction * N) samples as pixel-labelled: a seeded permutation
/// of all samples whose prefix is taken, so smaller fractions give subsets of
/// larger ones under the same seed.
void sample_labeled_subset(std::vector<SliceSample>& samples, double fraction, std::uint64_t seed);
std::size_t labeled_count(std::size_t total, double fraction);

}  // namespace compseg::data
