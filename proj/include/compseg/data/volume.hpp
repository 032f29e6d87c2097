#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "compseg/supervision/annotation.hpp"

namespace compseg::data {

enum class Split { Train, Val, Test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

inline constexpr int kModalities = 4;  // T1, T1Gd, T2, FLAIR
inline constexpr std::array<const char*, kModalities> kModalityNames{"t1", "t1gd", "t2", "flair"};
/// Subject counts of the reference train/val/test split.
inline constexpr std::array<int, 3> kReferenceSplit{938, 62, 251};

/// One subject: 4 x S x H x W modalities, S x H x W internal labels and the
/// 2-point annotations (whole tumour, ED, ET, NE in that order).
struct VolumeRecord {
    std::string subject_id;
    Split split = Split::Train;
    int slices = 0;
    int height = 0;
    int width = 0;
    std::vector<float> modalities;
    std::vector<std::uint8_t> mask;
    std::vector<supervision::TwoPointAnnotation> annotations;

    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    const float* modality_slice(int m, int s) const {
        return modalities.data() + (static_cast<std::size_t>(m) * slices + s) * plane();
    }
    const std::uint8_t* mask_slice(int s) const { return mask.data() + static_cast<std::size_t>(s) * plane(); }
    const supervision::TwoPointAnnotation& annotation(Structure s) const;

    /// Recomputes annotations from the mask.
    void annotate_from_mask();
    /// Shape, label range and annotation bounds.
    void validate() const;
    /// Rescales each modality to zero mean / unit variance over its nonzero voxels.
    void standardize_intensities();
};

/// In-place zero mean / unit variance over the nonzero entries; zeros stay zero.
void standardize_nonzero(std::span<float> values);
/// Applies VolumeRecord::standardize_intensities to every volume.
void standardize_intensities(std::vector<VolumeRecord>& volumes);

/// Ratio-rounded split sizes (largest remainder) for `total` subjects; every
/// split gets at least one subject when total >= 3.
std::array<int, 3> split_counts(int total);

}  // namespace compseg::data
