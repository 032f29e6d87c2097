#include "compseg/data/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>

namespace compseg::data {

namespace {

constexpr int kHeaderSize = 348;
constexpr float kVoxOffset = 352.0f;

struct GzCloser {
    void operator()(gzFile f) const { gzclose(f); }
};
using GzHandle = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

template <typename T>
T load(const unsigned char* p, bool swap) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, p, sizeof(T));
    if (swap) std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

template <typename T>
void store(unsigned char* p, T v) {
    std::memcpy(p, &v, sizeof(T));
}

int bytes_per_voxel(std::int16_t type) {
    switch (static_cast<NiftiType>(type)) {
        case NiftiType::UInt8:
        case NiftiType::Int8: return 1;
        case NiftiType::Int16:
        case NiftiType::UInt16: return 2;
        case NiftiType::Int32:
        case NiftiType::Float32: return 4;
        case NiftiType::Float64: return 8;
    }
    return 0;
}

double decode(const unsigned char* p, std::int16_t type, bool swap) {
    switch (static_cast<NiftiType>(type)) {
        case NiftiType::UInt8: return *p;
        case NiftiType::Int8: return static_cast<std::int8_t>(*p);
        case NiftiType::Int16: return load<std::int16_t>(p, swap);
        case NiftiType::UInt16: return load<std::uint16_t>(p, swap);
        case NiftiType::Int32: return load<std::int32_t>(p, swap);
        case NiftiType::Float32: return load<float>(p, swap);
        case NiftiType::Float64: return load<double>(p, swap);
    }
    return 0.0;
}

void encode(unsigned char* p, double v, NiftiType type) {
    switch (type) {
        case NiftiType::UInt8: *p = static_cast<std::uint8_t>(std::lround(v)); break;
        case NiftiType::Int8: store(p, static_cast<std::int8_t>(std::lround(v))); break;
        case NiftiType::Int16: store(p, static_cast<std::int16_t>(std::lround(v))); break;
        case NiftiType::UInt16: store(p, static_cast<std::uint16_t>(std::lround(v))); break;
        case NiftiType::Int32: store(p, static_cast<std::int32_t>(std::lround(v))); break;
        case NiftiType::Float32: store(p, static_cast<float>(v)); break;
        case NiftiType::Float64: store(p, v); break;
    }
}

void read_exact(gzFile f, void* dst, std::size_t n, const std::filesystem::path& path) {
    auto* out = static_cast<unsigned char*>(dst);
    while (n > 0) {
        const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
        const int got = gzread(f, out, chunk);
        if (got <= 0) throw std::runtime_error(path.string() + ": truncated NIfTI file");
        out += got;
        n -= static_cast<std::size_t>(got);
    }
}

}  // namespace

NiftiImage read_nifti(const std::filesystem::path& path) {
    GzHandle f(gzopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open NIfTI file " + path.string());
    unsigned char h[kHeaderSize];
    read_exact(f.get(), h, kHeaderSize, path);
    bool swap = false;
    if (load<std::int32_t>(h, false) != kHeaderSize) {
        if (load<std::int32_t>(h, true) != kHeaderSize) throw std::runtime_error(path.string() + ": not a NIfTI-1 file");
        swap = true;
    }
    if (std::memcmp(h + 344, "n+1", 4) != 0 && std::memcmp(h + 344, "ni1", 4) != 0)
        throw std::runtime_error(path.string() + ": missing NIfTI-1 magic");
    if (std::memcmp(h + 344, "n+1", 4) != 0) throw std::runtime_error(path.string() + ": two-file NIfTI is not supported");

    const auto ndim = load<std::int16_t>(h + 40, swap);
    if (ndim < 1 || ndim > 7) throw std::runtime_error(path.string() + ": invalid dimension count");
    NiftiImage img;
    std::array<int, 3> dims{1, 1, 1};
    for (int i = 0; i < 3 && i < ndim; ++i) dims[i] = load<std::int16_t>(h + 42 + 2 * i, swap);
    for (int i = 3; i < ndim; ++i)
        if (load<std::int16_t>(h + 42 + 2 * i, swap) > 1) throw std::runtime_error(path.string() + ": only 3D images are supported");
    img.nx = dims[0];
    img.ny = dims[1];
    img.nz = dims[2];
    if (img.nx <= 0 || img.ny <= 0 || img.nz <= 0) throw std::runtime_error(path.string() + ": invalid image size");
    for (int i = 0; i < 3; ++i) img.spacing[i] = load<float>(h + 80 + 4 * i, swap);

    const auto type = load<std::int16_t>(h + 70, swap);
    const int bpv = bytes_per_voxel(type);
    if (bpv == 0) throw std::runtime_error(path.string() + ": unsupported NIfTI datatype " + std::to_string(type));
    const float vox_offset = load<float>(h + 108, swap);
    float slope = load<float>(h + 112, swap);
    const float inter = load<float>(h + 116, swap);
    if (slope == 0.0f || !std::isfinite(slope)) slope = 1.0f;

    const long skip = static_cast<long>(vox_offset) - kHeaderSize;
    if (skip < 0) throw std::runtime_error(path.string() + ": invalid vox_offset");
    std::vector<unsigned char> pad(static_cast<std::size_t>(skip));
    if (skip > 0) read_exact(f.get(), pad.data(), pad.size(), path);

    const std::size_t count = static_cast<std::size_t>(img.nx) * img.ny * img.nz;
    std::vector<unsigned char> raw(count * bpv);
    read_exact(f.get(), raw.data(), raw.size(), path);
    img.data.resize(count);
    for (std::size_t i = 0; i < count; ++i)
        img.data[i] = static_cast<float>(decode(raw.data() + i * bpv, type, swap) * slope + inter);
    return img;
}

void write_nifti(const NiftiImage& image, const std::filesystem::path& path, NiftiType type) {
    const std::size_t count = static_cast<std::size_t>(image.nx) * image.ny * image.nz;
    if (image.data.size() != count) throw std::invalid_argument("write_nifti: data size does not match dimensions");
    unsigned char h[kHeaderSize + 4] = {};
    store<std::int32_t>(h, kHeaderSize);
    h[38] = 'r';
    const std::int16_t dims[8] = {3, static_cast<std::int16_t>(image.nx), static_cast<std::int16_t>(image.ny),
                                  static_cast<std::int16_t>(image.nz), 1, 1, 1, 1};
    for (int i = 0; i < 8; ++i) store(h + 40 + 2 * i, dims[i]);
    store(h + 70, static_cast<std::int16_t>(type));
    store(h + 72, static_cast<std::int16_t>(8 * bytes_per_voxel(static_cast<std::int16_t>(type))));
    const float pixdim[4] = {1.0f, image.spacing[0], image.spacing[1], image.spacing[2]};
    for (int i = 0; i < 4; ++i) store(h + 76 + 4 * i, pixdim[i]);
    store(h + 108, kVoxOffset);
    store(h + 112, 1.0f);
    h[123] = 2;  // millimetres
    std::memcpy(h + 344, "n+1", 4);

    const bool gz = path.extension() == ".gz";
    GzHandle f(gzopen(path.c_str(), gz ? "wb6" : "wbT"));
    if (!f) throw std::runtime_error("cannot write NIfTI file " + path.string());
    const int bpv = bytes_per_voxel(static_cast<std::int16_t>(type));
    std::vector<unsigned char> raw(count * bpv);
    for (std::size_t i = 0; i < count; ++i) encode(raw.data() + i * bpv, image.data[i], type);
    if (gzwrite(f.get(), h, sizeof h) != static_cast<int>(sizeof h) ||
        gzwrite(f.get(), raw.data(), static_cast<unsigned>(raw.size())) != static_cast<int>(raw.size()))
        throw std::runtime_error("failed writing NIfTI file " + path.string());
}

}  // namespace compseg::data
