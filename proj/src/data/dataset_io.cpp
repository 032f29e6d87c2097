#include "compseg/data/dataset_io.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "compseg/model/config.hpp"

namespace compseg::data {

namespace {

constexpr char kVolumeMagic[8] = {'C', 'S', 'V', 'O', 'L', '0', '0', '1'};

nlohmann::json annotation_json(const supervision::TwoPointAnnotation& a) {
    if (!a.present()) return nullptr;
    return {*a.bottom_slice, *a.top_slice};
}

supervision::TwoPointAnnotation annotation_from_json(Structure s, const nlohmann::json& j) {
    supervision::TwoPointAnnotation a{s, std::nullopt, std::nullopt};
    if (j.is_null()) return a;
    const auto r = j.get<std::vector<int>>();
    if (r.size() != 2) throw std::runtime_error("manifest: annotation must be [bottom, top] or null");
    a.bottom_slice = r[0];
    a.top_slice = r[1];
    return a;
}

constexpr Structure kAnnotated[] = {Structure::WholeTumour, Structure::Edema, Structure::Enhancing, Structure::Necrotic};

}  // namespace

std::vector<const VolumeRecord*> LoadedDataset::split(Split s) const {
    std::vector<const VolumeRecord*> out;
    for (const auto& v : volumes)
        if (v.split == s) out.push_back(&v);
    return out;
}

std::uint64_t content_checksum(const VolumeRecord& v) {
    std::string bytes(reinterpret_cast<const char*>(v.modalities.data()), v.modalities.size() * sizeof(float));
    bytes.append(reinterpret_cast<const char*>(v.mask.data()), v.mask.size());
    return model::fnv1a(bytes);
}

std::string manifest_text(const std::vector<VolumeRecord>& volumes, const nlohmann::json& source) {
    nlohmann::json m;
    m["format"] = "compseg.dataset";
    m["format_version"] = kManifestVersion;
    m["source"] = source;
    nlohmann::json subjects = nlohmann::json::array();
    for (const auto& v : volumes) {
        nlohmann::json ann;
        for (Structure s : kAnnotated) ann[to_string(s)] = annotation_json(v.annotation(s));
        subjects.push_back({{"id", v.subject_id},
                            {"split", to_string(v.split)},
                            {"file", to_string(v.split) + "/" + v.subject_id + ".vol"},
                            {"slices", v.slices},
                            {"height", v.height},
                            {"width", v.width},
                            {"checksum", model::hex64(content_checksum(v))},
                            {"annotations", ann}});
    }
    m["subjects"] = subjects;
    return m.dump(2) + "\n";
}

void write_volume_file(const VolumeRecord& v, const std::filesystem::path& path) {
    v.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write volume file " + path.string());
    out.write(kVolumeMagic, sizeof kVolumeMagic);
    const std::uint32_t dims[3] = {static_cast<std::uint32_t>(v.slices), static_cast<std::uint32_t>(v.height),
                                   static_cast<std::uint32_t>(v.width)};
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    out.write(reinterpret_cast<const char*>(v.modalities.data()), static_cast<std::streamsize>(v.modalities.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(v.mask.data()), static_cast<std::streamsize>(v.mask.size()));
    if (!out) throw std::runtime_error("failed writing volume file " + path.string());
}

VolumeRecord read_volume_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open volume file " + path.string());
    char magic[8];
    std::uint32_t dims[3];
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(dims), sizeof dims);
    if (!in || std::memcmp(magic, kVolumeMagic, sizeof magic) != 0)
        throw std::runtime_error(path.string() + " is not a compseg volume file");
    VolumeRecord v;
    v.slices = static_cast<int>(dims[0]);
    v.height = static_cast<int>(dims[1]);
    v.width = static_cast<int>(dims[2]);
    v.modalities.resize(static_cast<std::size_t>(kModalities) * v.slices * v.plane());
    v.mask.resize(static_cast<std::size_t>(v.slices) * v.plane());
    in.read(reinterpret_cast<char*>(v.modalities.data()), static_cast<std::streamsize>(v.modalities.size() * sizeof(float)));
    in.read(reinterpret_cast<char*>(v.mask.data()), static_cast<std::streamsize>(v.mask.size()));
    if (!in) throw std::runtime_error(path.string() + ": truncated volume file");
    return v;
}

void save_dataset(const std::filesystem::path& dir, const std::vector<VolumeRecord>& volumes,
                  const nlohmann::json& source) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    for (const char* s : {"train", "val", "test"}) std::filesystem::create_directories(dir / s, ec);
    if (ec) throw std::runtime_error("cannot create dataset directory " + dir.string() + ": " + ec.message());
    for (const auto& v : volumes) write_volume_file(v, dir / to_string(v.split) / (v.subject_id + ".vol"));
    std::ofstream out(dir / "manifest.json");
    if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
    out << manifest_text(volumes, source);
}

LoadedDataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("no dataset manifest at " + manifest_path.string());
    LoadedDataset ds;
    ds.manifest = nlohmann::json::parse(in);
    if (ds.manifest.value("format", "") != "compseg.dataset" || ds.manifest.value("format_version", 0) != kManifestVersion)
        throw std::runtime_error(manifest_path.string() + ": unsupported dataset manifest");
    for (const auto& s : ds.manifest.at("subjects")) {
        VolumeRecord v = read_volume_file(dir / s.at("file").get<std::string>());
        v.subject_id = s.at("id").get<std::string>();
        v.split = split_from_string(s.at("split").get<std::string>());
        for (Structure st : kAnnotated) v.annotations.push_back(annotation_from_json(st, s.at("annotations").at(to_string(st))));
        v.validate();
        if (s.contains("checksum") && s.at("checksum").get<std::string>() != model::hex64(content_checksum(v)))
            throw std::runtime_error(dir.string() + ": checksum mismatch for subject " + v.subject_id);
        ds.volumes.push_back(std::move(v));
    }
    return ds;
}

}  // namespace compseg::data
