#pragma once

#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "compseg/model/bundle.hpp"
#include "compseg/vmf/kernel_bank.hpp"

namespace compseg::acceptance {

enum class Status { Pass, Fail, Skip };

struct Outcome {
    Status status = Status::Fail;
    std::string detail;
    /// Seconds to compare against the criterion's runtime budget, when it has one.
    double budget_seconds = 0.0;
};

/// Collects named checks; the criterion passes when every check holds.
class Checks {
public:
    void expect(bool ok, const std::string& what) {
        ok_ = ok_ && ok;
        if (!ok) failures_.push_back(what);
    }
    void note(const std::string& text) { notes_.push_back(text); }
    bool ok() const { return ok_; }
    Outcome outcome() const;

private:
    bool ok_ = true;
    std::vector<std::string> failures_;
    std::vector<std::string> notes_;
};

template <typename T>
std::string fmt(const T& v) {
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

/// A trained compositional model kept for the interpretability check.
struct TrainedCompositional {
    std::unique_ptr<model::ModelBundle> bundle;
    vmf::KernelBank bank;
};

Outcome gradient_correctness();
Outcome invariant_suite();
Outcome metric_oracles();
Outcome spherical_kmeans();
Outcome weak_label_construction();
/// Fills `models` with the weakly supervised runs for tumour_kernel_emergence.
Outcome whole_tumour_ordering(std::vector<TrainedCompositional>& models);
Outcome tumour_kernel_emergence(std::vector<TrainedCompositional>& models);
Outcome sub_region_ordering();
Outcome brats_smoke();

}  // namespace compseg::acceptance
