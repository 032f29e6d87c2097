#include "compseg/data/volume.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace compseg::data {

std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw std::invalid_argument("unknown split '" + s + "'");
}

const supervision::TwoPointAnnotation& VolumeRecord::annotation(Structure s) const {
    for (const auto& a : annotations)
        if (a.structure == s) return a;
    throw std::out_of_range(subject_id + ": no annotation for " + to_string(s));
}

void VolumeRecord::annotate_from_mask() {
    annotations.clear();
    for (Structure s : {Structure::WholeTumour, Structure::Edema, Structure::Enhancing, Structure::Necrotic})
        annotations.push_back(supervision::two_point_from_mask(mask, slices, height, width, s));
}

void VolumeRecord::validate() const {
    if (slices <= 0 || height <= 0 || width <= 0) throw std::invalid_argument(subject_id + ": empty volume");
    if (modalities.size() != plane() * slices * kModalities)
        throw std::invalid_argument(subject_id + ": modality array does not match 4 x S x H x W");
    if (mask.size() != plane() * slices) throw std::invalid_argument(subject_id + ": mask does not match S x H x W");
    if (std::any_of(mask.begin(), mask.end(), [](std::uint8_t v) { return v > labels::kNecrotic; }))
        throw std::invalid_argument(subject_id + ": mask label outside {0,1,2,3}");
    for (const auto& a : annotations) a.validate(slices);
}

std::array<int, 3> split_counts(int total) {
    if (total <= 0) throw std::invalid_argument("split_counts: need at least one subject");
    const double sum = kReferenceSplit[0] + kReferenceSplit[1] + kReferenceSplit[2];
    std::array<int, 3> counts{};
    std::array<double, 3> remainder{};
    int assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double quota = total * kReferenceSplit[i] / sum;
        counts[i] = static_cast<int>(quota);
        remainder[i] = quota - counts[i];
        assigned += counts[i];
    }
    while (assigned < total) {
        const auto i = static_cast<std::size_t>(std::max_element(remainder.begin(), remainder.end()) - remainder.begin());
        ++counts[i];
        remainder[i] = -1.0;
        ++assigned;
    }
    if (total >= 3) {
        for (int i = 1; i < 3; ++i) {
            if (counts[i] > 0) continue;
            // Take from the largest split.
            const auto donor = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
            --counts[donor];
            ++counts[i];
        }
    }
    return counts;
}

void standardize_nonzero(std::span<float> values) {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (float x : values)
        if (x != 0.0f) {
            sum += x;
            sq += static_cast<double>(x) * x;
            ++n;
        }
    if (n == 0) return;
    const double mean = sum / n;
    const double sd = std::sqrt(std::max(0.0, sq / n - mean * mean));
    const double inv = sd > 0.0 ? 1.0 / sd : 1.0;
    for (float& x : values)
        if (x != 0.0f) x = static_cast<float>((x - mean) * inv);
}

void VolumeRecord::standardize_intensities() {
    const std::size_t n = static_cast<std::size_t>(slices) * plane();
    for (int m = 0; m < kModalities; ++m)
        standardize_nonzero(std::span<float>(modalities.data() + m * n, n));
}

void standardize_intensities(std::vector<VolumeRecord>& volumes) {
    for (auto& v : volumes) v.standardize_intensities();
}

}  // namespace compseg::data
