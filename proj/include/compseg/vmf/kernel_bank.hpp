#pragma once

#include <Eigen/Core>
#include <filesystem>

namespace compseg::vmf {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kDefaultConcentration = 30.0;
inline constexpr double kUnitNormTolerance = 1e-6;
/// Rows or feature vectors with a norm below this are treated as zero.
inline constexpr double kNormFloor = 1e-8;
inline constexpr int kKernelBankFormatVersion = 1;

/// J kernel means (rows) on the unit sphere of R^D sharing one concentration.
///
/// The rows are only guaranteed to be unit-norm after renormalize_kernels()
/// or init_kernels_kmeans(); optimizer steps write through mutable_kernels()
/// and must be followed by a renormalization.
class KernelBank {
public:
    KernelBank(RowMatrix kernels, double concentration);

    int count() const { return static_cast<int>(kernels_.rows()); }
    int dim() const { return static_cast<int>(kernels_.cols()); }
    double concentration() const { return concentration_; }
    const RowMatrix& kernels() const { return kernels_; }
    RowMatrix& mutable_kernels() { return kernels_; }

    bool is_normalized(double tolerance = kUnitNormTolerance) const;
    /// Throws std::invalid_argument naming the first row off the unit sphere.
    void require_normalized() const;

private:
    RowMatrix kernels_;
    double concentration_;
};

/// Projects every row onto the unit sphere; a row with norm < kNormFloor is
/// rejected with its index.
KernelBank renormalize_kernels(const KernelBank& bank);
void renormalize_rows(RowMatrix& rows);

void save_kernel_bank(const KernelBank& bank, const std::filesystem::path& path);
KernelBank load_kernel_bank(const std::filesystem::path& path);

}  // namespace compseg::vmf
