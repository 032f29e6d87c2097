#include "compseg/vmf/kernel_bank.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <stdexcept>
#include <string>

namespace compseg::vmf {

KernelBank::KernelBank(RowMatrix kernels, double concentration)
    : kernels_(std::move(kernels)), concentration_(concentration) {
    if (kernels_.rows() < 2) throw std::invalid_argument("KernelBank: need at least 2 kernels");
    if (kernels_.cols() < 2) throw std::invalid_argument("KernelBank: feature dimension must be >= 2");
    if (!(concentration_ > 0.0) || !std::isfinite(concentration_))
        throw std::invalid_argument("KernelBank: concentration must be positive");
    if (!kernels_.allFinite()) throw std::invalid_argument("KernelBank: non-finite kernel entries");
}

bool KernelBank::is_normalized(double tolerance) const {
    for (Eigen::Index j = 0; j < kernels_.rows(); ++j)
        if (std::abs(kernels_.row(j).norm() - 1.0) > tolerance) return false;
    return true;
}

void KernelBank::require_normalized() const {
    for (Eigen::Index j = 0; j < kernels_.rows(); ++j) {
        const double norm = kernels_.row(j).norm();
        if (std::abs(norm - 1.0) > kUnitNormTolerance)
            throw std::invalid_argument("KernelBank: kernel " + std::to_string(j) + " has norm " +
                                        std::to_string(norm) + ", expected 1");
    }
}

void renormalize_rows(RowMatrix& rows) {
    for (Eigen::Index j = 0; j < rows.rows(); ++j) {
        const double norm = rows.row(j).norm();
        if (!(norm >= kNormFloor))
            throw std::invalid_argument("renormalize_kernels: kernel " + std::to_string(j) + " has near-zero norm");
        rows.row(j) /= norm;
    }
}

KernelBank renormalize_kernels(const KernelBank& bank) {
    RowMatrix rows = bank.kernels();
    renormalize_rows(rows);
    return KernelBank(std::move(rows), bank.concentration());
}

void save_kernel_bank(const KernelBank& bank, const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["format"] = "compseg.kernel_bank";
    doc["format_version"] = kKernelBankFormatVersion;
    doc["count"] = bank.count();
    doc["dim"] = bank.dim();
    doc["concentration"] = bank.concentration();
    const auto& k = bank.kernels();
    doc["kernels"] = std::vector<double>(k.data(), k.data() + k.size());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write kernel bank to " + path.string());
    out << doc.dump(1) << '\n';
}

KernelBank load_kernel_bank(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open kernel bank " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed kernel bank " + path.string() + ": " + e.what());
    }
    if (doc.value("format", "") != "compseg.kernel_bank")
        throw std::runtime_error(path.string() + " is not a kernel bank file");
    if (doc.value("format_version", 0) != kKernelBankFormatVersion)
        throw std::runtime_error(path.string() + ": unsupported kernel bank version");
    const int count = doc.at("count").get<int>();
    const int dim = doc.at("dim").get<int>();
    const auto values = doc.at("kernels").get<std::vector<double>>();
    if (count <= 0 || dim <= 0 || values.size() != static_cast<std::size_t>(count) * dim)
        throw std::runtime_error(path.string() + ": kernel matrix size does not match count x dim");
    RowMatrix rows = Eigen::Map<const RowMatrix>(values.data(), count, dim);
    return KernelBank(std::move(rows), doc.at("concentration").get<double>());
}

}  // namespace compseg::vmf
