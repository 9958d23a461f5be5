#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

namespace ppg {

struct SignalFrame {
    std::vector<double> samples;
    double sample_rate_hz = 128.0;
    double start_time_s = 0.0;
    std::string id;
};

struct BandpassSpec {
    double low_hz = 0.5;
    double high_hz = 5.0;
    std::size_t order = 4;  // analog prototype order, doubled by the bandpass transform

    void validate(double fs_hz) const;
};

struct Biquad {
    double b0, b1, b2;  // numerator
    double a1, a2;      // denominator (a0 = 1)
};

struct FilterCascade {
    std::vector<Biquad> sections;
    // overall digital order
    std::size_t order() const { return 2 * sections.size(); }
};

// One segmented heartbeat, endpoints at consecutive local minima.
struct Pulse {
    std::vector<double> raw_samples;
    std::size_t start_index = 0;
    double duration_s = 0.0;
};

struct CanonicalPulse {
    std::vector<double> samples;  // exactly 256, min-max normalized to [0,1]
    int label = -1;               // 0 normal, 1 artifact, -1 unlabeled
    std::string source_id;
    bool degenerate = false;
    double raw_range = 0.0;  // pre-normalization max - min
    double start_s = 0.0;    // within the parent frame
    double duration_s = 0.0;
};

struct RejectionReport {
    std::size_t too_short = 0;
    std::size_t too_long = 0;
    std::size_t degenerate = 0;
    std::size_t total_rejected() const { return too_short + too_long; }
};

constexpr double kMinPulseDurationS = 0.2;  // 300 bpm
constexpr double kMaxPulseDurationS = 2.0;  // 30 bpm

// Digital Butterworth bandpass as cascaded biquads (bilinear transform with
// pre-warped edges); unit gain at the geometric-mean center frequency.
FilterCascade design_bandpass(const BandpassSpec& spec, double fs_hz);

// Complex frequency response of the cascade at freq_hz.
std::complex<double> cascade_response(const FilterCascade& cascade, double freq_hz, double fs_hz);

// Forward-backward zero-phase filtering with odd-reflection edge padding of
// length 3 x filter order.
SignalFrame filtfilt(const SignalFrame& frame, const FilterCascade& cascade);

// Pulses between consecutive local minima; plateau ties resolve leftmost.
// Pulses outside the duration gate are dropped and counted in the report.
std::vector<Pulse> segment_pulses(const SignalFrame& frame, RejectionReport* report = nullptr);

// Indices of local minima (x[i-1] > x[i] <= x[i+1], leftmost of a plateau).
std::vector<std::size_t> find_local_minima(const std::vector<double>& x);

std::vector<double> resample_to_256(const Pulse& pulse);

CanonicalPulse normalize_pulse(const std::vector<double>& samples);

// Full Steps 1-4 composition: filter, segment, resample, normalize.
std::vector<CanonicalPulse> preprocess(const SignalFrame& frame, const BandpassSpec& spec,
                                       RejectionReport* report = nullptr);

}  // namespace ppg
