#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "compseg/data/volume.hpp"

namespace compseg::data {

struct BratsPaths {
    /// T1, T1Gd, T2, FLAIR.
    std::array<std::filesystem::path, kModalities> modalities;
    std::filesystem::path mask;

    /// <dir>/<subject>_{t1,t1ce,t2,flair,seg}.nii.gz, the BraTS 2021 naming.
    static BratsPaths for_subject(const std::filesystem::path& dir, const std::string& subject);
};

struct BratsOptions {
    int output_size = 128;
    /// Required slice count; 0 accepts any.
    int expected_slices = 155;
};

/// BraTS file label code -> internal code (NCR -> NE, ED -> ED, ET -> ET).
const std::map<int, std::uint8_t>& brats_label_map();

/// Loads one subject: checks matching shapes, remaps labels, normalizes each
/// modality to zero mean / unit variance over its nonzero voxels, then
/// downsamples in-plane with area interpolation (images) and nearest
/// neighbour (mask).
VolumeRecord load_brats_volume(const BratsPaths& paths, const std::string& subject_id,
                               const BratsOptions& options = {});

/// Sorted ids of the subject directories <root>/<id>/ that hold <id>_seg.nii.gz.
std::vector<std::string> find_brats_subjects(const std::filesystem::path& root);

/// Loads the first `max_subjects` subjects (all when 0) and assigns a seeded
/// random train/val/test split at the reference ratio.
std::vector<VolumeRecord> load_brats_dataset(const std::filesystem::path& root, const BratsOptions& options,
                                             std::uint64_t seed, int max_subjects = 0);

/// In-plane resampling helpers, exposed for testing. Inputs are S x H x W.
std::vector<float> area_downsample(const std::vector<float>& src, int slices, int h, int w, int out_h, int out_w);
std::vector<std::uint8_t> nearest_downsample(const std::vector<std::uint8_t>& src, int slices, int h, int w, int out_h,
                                             int out_w);

}  // namespace compseg::data
