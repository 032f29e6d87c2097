#include "compseg/model/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace compseg::model {

namespace {

constexpr char kMagic[8] = {'C', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};

std::vector<NamedArray> snapshot(const nn::ParamList& params) {
    std::vector<NamedArray> out;
    for (const auto* p : params) out.push_back({p->name, p->value});
    return out;
}

void copy_into(const std::vector<NamedArray>& arrays, const nn::ParamList& params, std::size_t offset) {
    if (arrays.size() < offset + params.size()) throw std::runtime_error("checkpoint: missing parameter arrays");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& a = arrays[offset + i];
        if (a.name != params[i]->name || a.values.size() != params[i]->value.size())
            throw std::runtime_error("checkpoint: array '" + a.name + "' does not match parameter '" + params[i]->name + "'");
        params[i]->value = a.values;
    }
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

}  // namespace

std::string to_string(ModelKind kind) { return kind == ModelKind::UNet ? "unet" : "compositional"; }

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "compositional") return ModelKind::Compositional;
    if (s == "unet") return ModelKind::UNet;
    throw std::invalid_argument("unknown model kind '" + s + "'");
}

Checkpoint make_checkpoint(ModelBundle& bundle, const vmf::KernelBank& bank, nlohmann::json metadata) {
    Checkpoint c;
    c.kind = ModelKind::Compositional;
    c.config = bundle.config;
    if (!metadata.is_null()) c.metadata = std::move(metadata);
    c.arrays = snapshot(bundle.parameters());
    c.bank = bank;
    return c;
}

Checkpoint make_checkpoint(UNetBaseline& unet, nlohmann::json metadata) {
    Checkpoint c;
    c.kind = ModelKind::UNet;
    c.config = unet.config;
    if (!metadata.is_null()) c.metadata = std::move(metadata);
    c.arrays = snapshot(unet.parameters());
    return c;
}

void restore(const Checkpoint& ckpt, ModelBundle& bundle) {
    if (ckpt.kind != ModelKind::Compositional) throw std::runtime_error("checkpoint holds a UNet baseline");
    if (ckpt.config.hash() != bundle.config.hash()) throw std::runtime_error("checkpoint config hash mismatch");
    copy_into(ckpt.arrays, bundle.parameters(), 0);
}

void restore(const Checkpoint& ckpt, UNetBaseline& unet) {
    if (ckpt.kind != ModelKind::UNet) throw std::runtime_error("checkpoint holds a compositional model");
    if (ckpt.config.hash() != unet.config.hash()) throw std::runtime_error("checkpoint config hash mismatch");
    copy_into(ckpt.arrays, unet.parameters(), 0);
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::vector<NamedArray> arrays = ckpt.arrays;
    nlohmann::json header;
    header["kind"] = to_string(ckpt.kind);
    header["model"] = ckpt.config.to_json();
    header["config_hash"] = hex64(ckpt.config.hash());
    header["metadata"] = ckpt.metadata;
    if (ckpt.bank) {
        header["kernel_bank"] = {{"count", ckpt.bank->count()},
                                 {"dim", ckpt.bank->dim()},
                                 {"concentration", ckpt.bank->concentration()}};
        const auto& k = ckpt.bank->kernels();
        arrays.push_back({"kernel_bank.kernels", std::vector<double>(k.data(), k.data() + k.size())});
    }
    nlohmann::json table = nlohmann::json::array();
    for (const auto& a : arrays) table.push_back({{"name", a.name}, {"size", a.values.size()}});
    header["arrays"] = table;
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    write_pod(out, kCheckpointVersion);
    write_pod(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& a : arrays)
        out.write(reinterpret_cast<const char*>(a.values.data()), static_cast<std::streamsize>(a.values.size() * sizeof(double)));
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw std::runtime_error(path.string() + " is not a compseg checkpoint");
    if (read_pod<std::uint32_t>(in) != kCheckpointVersion)
        throw std::runtime_error(path.string() + ": unsupported checkpoint version");
    const auto length = read_pod<std::uint64_t>(in);
    std::string text(length, '\0');
    in.read(text.data(), static_cast<std::streamsize>(length));
    if (!in) throw std::runtime_error(path.string() + ": truncated header");
    const auto header = nlohmann::json::parse(text);

    Checkpoint c;
    c.kind = model_kind_from_string(header.at("kind").get<std::string>());
    c.config = ModelConfig::from_json(header.at("model"));
    if (header.at("config_hash").get<std::string>() != hex64(c.config.hash()))
        throw std::runtime_error(path.string() + ": stored config hash does not match stored config");
    c.metadata = header.value("metadata", nlohmann::json::object());
    for (const auto& entry : header.at("arrays")) {
        NamedArray a{entry.at("name").get<std::string>(), std::vector<double>(entry.at("size").get<std::size_t>())};
        in.read(reinterpret_cast<char*>(a.values.data()), static_cast<std::streamsize>(a.values.size() * sizeof(double)));
        if (!in) throw std::runtime_error(path.string() + ": truncated array " + a.name);
        c.arrays.push_back(std::move(a));
    }
    if (header.contains("kernel_bank")) {
        const auto& kb = header["kernel_bank"];
        if (c.arrays.empty() || c.arrays.back().name != "kernel_bank.kernels")
            throw std::runtime_error(path.string() + ": kernel bank array missing");
        const int count = kb.at("count").get<int>(), dim = kb.at("dim").get<int>();
        const auto& vals = c.arrays.back().values;
        if (vals.size() != static_cast<std::size_t>(count) * dim) throw std::runtime_error(path.string() + ": kernel bank size mismatch");
        c.bank = vmf::KernelBank(Eigen::Map<const vmf::RowMatrix>(vals.data(), count, dim), kb.at("concentration").get<double>());
        c.arrays.pop_back();
    }
    return c;
}

}  // namespace compseg::model
