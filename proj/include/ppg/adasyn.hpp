#pragma once

#include <cstdint>

#include "ppg/dataset.hpp"

namespace ppg {

struct AdasynConfig {
    std::size_t k_neighbors = 5;
    double beta = 1.0;          // balance level, 1 = full parity
    double d_threshold = 1.0;   // skip when minority/majority ratio >= threshold
    std::uint64_t seed = 1;

    void validate() const;
};

// ADASYN oversampling of the minority class. Appends G = round((m_l-m_s)*beta)
// synthetic rows, allocated per minority seed by the majority share of its k
// nearest neighbors (largest-remainder rounding, so the total is exactly G).
// Original rows are never touched; synthetic rows carry synthetic=true.
PulseDataset adasyn(const PulseDataset& train, const AdasynConfig& cfg);

}  // namespace ppg
