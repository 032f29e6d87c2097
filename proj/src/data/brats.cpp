#include "compseg/data/brats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "compseg/data/nifti.hpp"

namespace compseg::data {

namespace {

// Per-output-index list of (source index, weight) for area interpolation.
std::vector<std::vector<std::pair<int, double>>> area_weights(int in, int out) {
    std::vector<std::vector<std::pair<int, double>>> w(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        const double lo = o * scale, hi = (o + 1) * scale;
        for (int i = static_cast<int>(std::floor(lo)); i < std::min(in, static_cast<int>(std::ceil(hi))); ++i) {
            const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
            if (overlap > 0) w[static_cast<std::size_t>(o)].emplace_back(i, overlap / scale);
        }
    }
    return w;
}

}  // namespace

BratsPaths BratsPaths::for_subject(const std::filesystem::path& dir, const std::string& subject) {
    BratsPaths p;
    const std::array<const char*, kModalities> suffix{"t1", "t1ce", "t2", "flair"};
    for (int m = 0; m < kModalities; ++m) p.modalities[m] = dir / (subject + "_" + suffix[m] + ".nii.gz");
    p.mask = dir / (subject + "_seg.nii.gz");
    return p;
}

const std::map<int, std::uint8_t>& brats_label_map() {
    static const std::map<int, std::uint8_t> m{
        {0, labels::kBackground}, {1, labels::kNecrotic}, {2, labels::kEdema}, {4, labels::kEnhancing}};
    return m;
}

std::vector<float> area_downsample(const std::vector<float>& src, int slices, int h, int w, int out_h, int out_w) {
    const auto wy = area_weights(h, out_h), wx = area_weights(w, out_w);
    std::vector<float> out(static_cast<std::size_t>(slices) * out_h * out_w);
    std::vector<double> rows(static_cast<std::size_t>(out_h) * w);
    for (int s = 0; s < slices; ++s) {
        const float* in = src.data() + static_cast<std::size_t>(s) * h * w;
        std::fill(rows.begin(), rows.end(), 0.0);
        for (int oy = 0; oy < out_h; ++oy)
            for (auto [y, wt] : wy[static_cast<std::size_t>(oy)])
                for (int x = 0; x < w; ++x) rows[static_cast<std::size_t>(oy) * w + x] += wt * in[static_cast<std::size_t>(y) * w + x];
        float* dst = out.data() + static_cast<std::size_t>(s) * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy)
            for (int ox = 0; ox < out_w; ++ox) {
                double v = 0.0;
                for (auto [x, wt] : wx[static_cast<std::size_t>(ox)]) v += wt * rows[static_cast<std::size_t>(oy) * w + x];
                dst[static_cast<std::size_t>(oy) * out_w + ox] = static_cast<float>(v);
            }
    }
    return out;
}

std::vector<std::uint8_t> nearest_downsample(const std::vector<std::uint8_t>& src, int slices, int h, int w, int out_h,
                                             int out_w) {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(slices) * out_h * out_w);
    for (int s = 0; s < slices; ++s)
        for (int oy = 0; oy < out_h; ++oy) {
            const int y = std::min(h - 1, static_cast<int>((oy + 0.5) * h / out_h));
            for (int ox = 0; ox < out_w; ++ox) {
                const int x = std::min(w - 1, static_cast<int>((ox + 0.5) * w / out_w));
                out[(static_cast<std::size_t>(s) * out_h + oy) * out_w + ox] = src[(static_cast<std::size_t>(s) * h + y) * w + x];
            }
        }
    return out;
}

VolumeRecord load_brats_volume(const BratsPaths& paths, const std::string& subject_id, const BratsOptions& options) {
    if (options.output_size <= 0) throw std::invalid_argument("load_brats_volume: output size must be positive");
    std::array<NiftiImage, kModalities> images;
    for (int m = 0; m < kModalities; ++m) images[m] = read_nifti(paths.modalities[m]);
    const NiftiImage seg = read_nifti(paths.mask);
    const int nx = images[0].nx, ny = images[0].ny, nz = images[0].nz;
    for (int m = 1; m < kModalities; ++m)
        if (images[m].nx != nx || images[m].ny != ny || images[m].nz != nz)
            throw std::runtime_error(paths.modalities[m].string() + ": shape differs from " + paths.modalities[0].string());
    if (seg.nx != nx || seg.ny != ny || seg.nz != nz)
        throw std::runtime_error(paths.mask.string() + ": mask shape differs from the modality volumes");
    if (options.expected_slices > 0 && nz != options.expected_slices)
        throw std::runtime_error(paths.modalities[0].string() + ": expected " + std::to_string(options.expected_slices) +
                                 " slices, found " + std::to_string(nz));

    VolumeRecord v;
    v.subject_id = subject_id;
    v.slices = nz;
    v.height = v.width = options.output_size;
    v.modalities.reserve(static_cast<std::size_t>(kModalities) * nz * v.plane());
    for (int m = 0; m < kModalities; ++m) {
        // NIfTI stores x fastest, so the raw buffer is already S x H x W with H = y, W = x.
        std::vector<float>& vol = images[m].data;
        standardize_nonzero(vol);
        const auto small = area_downsample(vol, nz, ny, nx, v.height, v.width);
        v.modalities.insert(v.modalities.end(), small.begin(), small.end());
    }

    std::vector<std::uint8_t> mask(seg.data.size());
    const auto& table = brats_label_map();
    for (std::size_t i = 0; i < seg.data.size(); ++i) {
        const float code = seg.data[i];
        const auto it = table.find(static_cast<int>(std::lround(code)));
        if (it == table.end() || std::abs(code - std::round(code)) > 1e-3f)
            throw std::runtime_error(paths.mask.string() + ": unknown label code " + std::to_string(code));
        mask[i] = it->second;
    }
    v.mask = nearest_downsample(mask, nz, ny, nx, v.height, v.width);
    v.annotate_from_mask();
    v.validate();
    return v;
}

std::vector<std::string> find_brats_subjects(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root)) throw std::runtime_error(root.string() + ": not a directory");
    std::vector<std::string> ids;
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        const std::string id = entry.path().filename().string();
        if (std::filesystem::exists(entry.path() / (id + "_seg.nii.gz"))) ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<VolumeRecord> load_brats_dataset(const std::filesystem::path& root, const BratsOptions& options,
                                             std::uint64_t seed, int max_subjects) {
    std::vector<std::string> ids = find_brats_subjects(root);
    if (max_subjects > 0 && static_cast<int>(ids.size()) > max_subjects) ids.resize(static_cast<std::size_t>(max_subjects));
    if (ids.size() < 3) throw std::runtime_error(root.string() + ": need at least 3 BraTS subjects, found " +
                                                 std::to_string(ids.size()));
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto counts = split_counts(static_cast<int>(ids.size()));

    std::vector<VolumeRecord> volumes(ids.size());
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const std::size_t i = order[rank];
        VolumeRecord v = load_brats_volume(BratsPaths::for_subject(root / ids[i], ids[i]), ids[i], options);
        const int r = static_cast<int>(rank);
        v.split = r < counts[0] ? Split::Train : r < counts[0] + counts[1] ? Split::Val : Split::Test;
        volumes[i] = std::move(v);
    }
    return volumes;
}

}  // namespace compseg::data
