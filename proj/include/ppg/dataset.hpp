#pragma once

#include <string>
#include <vector>

#include "ppg/signal.hpp"

namespace ppg {

struct PulseRow {
    std::vector<double> values;  // 256, normalized
    int label = -1;              // 0 normal, 1 artifact, -1 unlabeled
    std::string source_id;
    bool synthetic = false;      // ADASYN-generated
    double raw_range = 0.0;      // pre-normalization amplitude range
};

struct PulseDataset {
    std::vector<PulseRow> rows;

    std::size_t size() const { return rows.size(); }
    std::size_t count_label(int label) const;
    PulseDataset subset(const std::vector<std::size_t>& indices) const;

    static PulseDataset from_pulses(const std::vector<CanonicalPulse>& pulses);
};

// `source_id,label,s000..s255`, floats at 9 significant digits
void write_pulse_csv(const std::string& path, const PulseDataset& ds);
PulseDataset read_pulse_csv(const std::string& path);

// raw signal CSV: header `t_s,ppg`
void write_signal_csv(const std::string& path, const SignalFrame& frame);
SignalFrame read_signal_csv(const std::string& path);

}  // namespace ppg
