#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ppg/dataset.hpp"
#include "ppg/signal.hpp"

namespace ppg {

enum class ArtifactKind { Spike, Flatline, BaselineJump, AmplitudeBurst };

std::string artifact_kind_name(ArtifactKind k);
ArtifactKind artifact_kind_from_name(const std::string& name);

struct ArtifactInterval {
    double start_s = 0.0;
    double end_s = 0.0;
    ArtifactKind kind = ArtifactKind::Spike;
};

struct GeneratorConfig {
    double duration_s = 30.0;
    double sample_rate_hz = 128.0;
    double heart_rate_bpm = 90.0;
    double heart_rate_std_bpm = 4.0;
    double baseline_wander_amp = 0.3;
    double baseline_wander_freq_hz = 0.25;
    double noise_std = 0.02;
    double artifact_rate = 0.175;  // target fraction of artifact pulses
    // mix weights over {spike, flatline, baseline_jump, amplitude_burst}
    std::vector<double> artifact_mix = {1.0, 1.0, 1.0, 1.0};
    std::uint64_t seed = 1;

    void validate() const;
};

struct AnnotatedFrame {
    SignalFrame frame;
    std::vector<ArtifactInterval> intervals;
};

// Beat train (systolic + dicrotic Gaussian lobes, jittered period) plus
// baseline wander and white noise, with artifact intervals injected so the
// pulse-level prevalence lands near cfg.artifact_rate. Deterministic per seed.
AnnotatedFrame generate_frame(const GeneratorConfig& cfg);

// Ground-truth labels: artifact iff the pulse overlaps an interval by more
// than 10% of the pulse duration.
std::vector<CanonicalPulse> label_pulses(const AnnotatedFrame& annotated,
                                         std::vector<CanonicalPulse> pulses);

struct AnnotatorConfig {
    double correlation_threshold = 0.8;
    double range_zscore_threshold = 3.0;
};

// Template-based second annotator: flags pulses whose correlation with the
// iterated mean-pulse template falls below threshold, or whose raw amplitude
// range is a >3-sigma outlier.
std::vector<bool> statistical_annotator(const PulseDataset& dataset,
                                        const AnnotatorConfig& cfg = {});

void write_intervals_json(const std::string& path, const std::vector<ArtifactInterval>& intervals);
std::vector<ArtifactInterval> read_intervals_json(const std::string& path);

}  // namespace ppg
