#include "ppg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "ppg/errors.hpp"
#include "ppg/rng.hpp"

namespace ppg {

namespace {
constexpr double kPi = 3.14159265358979323846;

struct Beat {
    double start_s;
    double period_s;
    bool artifact = false;
};
}  // namespace

std::string artifact_kind_name(ArtifactKind k) {
    switch (k) {
        case ArtifactKind::Spike: return "spike";
        case ArtifactKind::Flatline: return "flatline";
        case ArtifactKind::BaselineJump: return "baseline_jump";
        case ArtifactKind::AmplitudeBurst: return "amplitude_burst";
    }
    return "spike";
}

ArtifactKind artifact_kind_from_name(const std::string& name) {
    if (name == "spike") return ArtifactKind::Spike;
    if (name == "flatline") return ArtifactKind::Flatline;
    if (name == "baseline_jump") return ArtifactKind::BaselineJump;
    if (name == "amplitude_burst") return ArtifactKind::AmplitudeBurst;
    throw ConfigError("unknown artifact kind: " + name);
}

void GeneratorConfig::validate() const {
    if (duration_s <= 0.0) throw ConfigError("generator: duration must be positive");
    if (sample_rate_hz <= 10.0) throw ConfigError("generator: sample rate must exceed 10 Hz");
    if (artifact_rate < 0.0 || artifact_rate > 0.5)
        throw ConfigError("generator: artifact_rate must be in [0, 0.5], got " +
                          std::to_string(artifact_rate));
    if (heart_rate_bpm < 30.0 || heart_rate_bpm > 300.0)
        throw ConfigError("generator: heart rate outside 30-300 bpm");
    if (artifact_mix.size() != 4) throw ConfigError("generator: artifact_mix needs 4 weights");
    double total = 0.0;
    for (double w : artifact_mix) {
        if (w < 0.0) throw ConfigError("generator: negative artifact_mix weight");
        total += w;
    }
    if (artifact_rate > 0.0 && total <= 0.0)
        throw ConfigError("generator: artifact_mix weights all zero");
}

namespace {

ArtifactKind draw_kind(const GeneratorConfig& cfg, Rng& rng) {
    const double total =
        std::accumulate(cfg.artifact_mix.begin(), cfg.artifact_mix.end(), 0.0);
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < 4; ++i) {
        u -= cfg.artifact_mix[i];
        if (u < 0.0) return static_cast<ArtifactKind>(i);
    }
    return ArtifactKind::AmplitudeBurst;
}

void apply_artifact(std::vector<double>& x, double fs, const ArtifactInterval& iv, Rng& rng) {
    const std::size_t i0 = static_cast<std::size_t>(std::max(0.0, iv.start_s * fs));
    const std::size_t i1 = std::min(x.size(), static_cast<std::size_t>(iv.end_s * fs));
    if (i1 <= i0 + 2) return;
    const std::size_t len = i1 - i0;
    switch (iv.kind) {
        case ArtifactKind::Spike: {
            const int bumps = 2 + static_cast<int>(rng.index(2));
            for (int b = 0; b < bumps; ++b) {
                const double center = static_cast<double>(i0) + rng.uniform() * static_cast<double>(len);
                const double sigma = rng.uniform(0.02, 0.045) * fs;
                const double amp = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(1.5, 3.0);
                const std::size_t lo = static_cast<std::size_t>(
                    std::max(0.0, center - 4.0 * sigma));
                const std::size_t hi =
                    std::min(x.size(), static_cast<std::size_t>(center + 4.0 * sigma) + 1);
                for (std::size_t i = lo; i < hi; ++i) {
                    const double d = (static_cast<double>(i) - center) / sigma;
                    x[i] += amp * std::exp(-0.5 * d * d);
                }
            }
            break;
        }
        case ArtifactKind::Flatline: {
            const std::size_t hold = std::min(len, static_cast<std::size_t>(0.4 * fs));
            const std::size_t start = i0 + rng.index(len - hold + 1);
            const double held = x[start];
            for (std::size_t i = start; i < start + hold; ++i) x[i] = held;
            break;
        }
        case ArtifactKind::BaselineJump: {
            const double step = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(1.0, 2.0);
            for (std::size_t i = i0; i < i1; ++i) x[i] += step;
            break;
        }
        case ArtifactKind::AmplitudeBurst: {
            double mean = 0.0;
            for (std::size_t i = i0; i < i1; ++i) mean += x[i];
            mean /= static_cast<double>(len);
            const double gain = rng.uniform(2.5, 4.0);
            for (std::size_t i = i0; i < i1; ++i) {
                const double prog = static_cast<double>(i - i0) / static_cast<double>(len);
                const double g = 1.0 + (gain - 1.0) * std::sin(kPi * prog);
                x[i] = mean + g * (x[i] - mean);
            }
            break;
        }
    }
}

}  // namespace

AnnotatedFrame generate_frame(const GeneratorConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, "synth"));
    const double fs = cfg.sample_rate_hz;
    const std::size_t n = static_cast<std::size_t>(cfg.duration_s * fs);

    // beat schedule with jittered period
    std::vector<Beat> beats;
    double t = 0.0;
    while (t < cfg.duration_s) {
        double hr = cfg.heart_rate_bpm + cfg.heart_rate_std_bpm * rng.normal();
        hr = std::clamp(hr, 35.0, 290.0);
        beats.push_back({t, 60.0 / hr});
        t += beats.back().period_s;
    }

    // clean beat train: systolic lobe + smaller delayed diastolic lobe
    std::vector<double> x(n, 0.0);
    for (const Beat& b : beats) {
        const double T = b.period_s;
        // diastolic lobe close and wide enough that the sum stays unimodal:
        // a dicrotic shoulder, not a second peak the minima detector would cut
        const double centers[2] = {b.start_s + 0.30 * T, b.start_s + 0.55 * T};
        const double sigmas[2] = {0.11 * T, 0.18 * T};
        const double amps[2] = {1.0, 0.35};
        for (int lobe = 0; lobe < 2; ++lobe) {
            const std::size_t lo = static_cast<std::size_t>(
                std::max(0.0, (centers[lobe] - 4.0 * sigmas[lobe]) * fs));
            const std::size_t hi = std::min(
                n, static_cast<std::size_t>((centers[lobe] + 4.0 * sigmas[lobe]) * fs) + 1);
            for (std::size_t i = lo; i < hi; ++i) {
                const double d = (static_cast<double>(i) / fs - centers[lobe]) / sigmas[lobe];
                x[i] += amps[lobe] * std::exp(-0.5 * d * d);
            }
        }
    }

    // baseline wander + white noise
    const double phase = rng.uniform() * 2.0 * kPi;
    for (std::size_t i = 0; i < n; ++i) {
        const double ti = static_cast<double>(i) / fs;
        x[i] += cfg.baseline_wander_amp * std::sin(2.0 * kPi * cfg.baseline_wander_freq_hz * ti + phase);
        x[i] += cfg.noise_std * rng.normal();
    }

    // mark round(rate * n_beats) beats as artifacted (interior beats only)
    AnnotatedFrame out;
    if (cfg.artifact_rate > 0.0 && beats.size() > 2) {
        std::vector<std::size_t> candidates;
        for (std::size_t i = 1; i + 1 < beats.size(); ++i) candidates.push_back(i);
        rng.shuffle(candidates);
        // an artifacted beat splits into ~1.5 labeled pulses on average (new
        // minima inside the distorted region), so mark fewer beats than the
        // requested pulse-level rate; the yield factor is measured empirically
        constexpr double kPulseYieldPerBeat = 1.65;
        const std::size_t n_art = std::min(
            candidates.size(),
            static_cast<std::size_t>(std::lround(
                cfg.artifact_rate / kPulseYieldPerBeat * static_cast<double>(beats.size()))));
        for (std::size_t i = 0; i < n_art; ++i) beats[candidates[i]].artifact = true;

        // contiguous artifact runs become one interval, margins keep the
        // contamination away from neighboring pulses
        std::size_t i = 0;
        while (i < beats.size()) {
            if (!beats[i].artifact) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j + 1 < beats.size() && beats[j + 1].artifact) ++j;
            ArtifactInterval iv;
            iv.start_s = beats[i].start_s + 0.25 * beats[i].period_s;
            iv.end_s = beats[j].start_s + 0.75 * beats[j].period_s;
            iv.kind = draw_kind(cfg, rng);
            apply_artifact(x, fs, iv, rng);
            out.intervals.push_back(iv);
            i = j + 1;
        }
    }

    out.frame.samples = std::move(x);
    out.frame.sample_rate_hz = fs;
    out.frame.start_time_s = 0.0;
    out.frame.id = "synth-" + std::to_string(cfg.seed);
    return out;
}

std::vector<CanonicalPulse> label_pulses(const AnnotatedFrame& annotated,
                                         std::vector<CanonicalPulse> pulses) {
    const double frame_start = annotated.frame.start_time_s;
    const double frame_end =
        frame_start + static_cast<double>(annotated.frame.samples.size()) /
                          annotated.frame.sample_rate_hz;
    for (CanonicalPulse& p : pulses) {
        const double a = p.start_s, b = p.start_s + p.duration_s;
        if (a < frame_start - 1e-9 || b > frame_end + 1e-9)
            throw DataError("label_pulses: pulse [" + std::to_string(a) + "," +
                            std::to_string(b) + "] outside frame bounds");
        double best_overlap = 0.0;
        for (const ArtifactInterval& iv : annotated.intervals) {
            const double o = std::min(b, iv.end_s) - std::max(a, iv.start_s);
            best_overlap = std::max(best_overlap, o);
        }
        p.label = best_overlap > 0.10 * p.duration_s ? 1 : 0;
    }
    return pulses;
}

namespace {

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va <= 0.0 || vb <= 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

std::vector<double> mean_pulse(const PulseDataset& ds, const std::vector<bool>& keep) {
    std::vector<double> tmpl(256, 0.0);
    std::size_t n = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (!keep[i]) continue;
        for (std::size_t j = 0; j < 256; ++j) tmpl[j] += ds.rows[i].values[j];
        ++n;
    }
    if (n == 0) return tmpl;
    for (double& v : tmpl) v /= static_cast<double>(n);
    return tmpl;
}

}  // namespace

std::vector<bool> statistical_annotator(const PulseDataset& dataset, const AnnotatorConfig& cfg) {
    if (dataset.size() < 20)
        throw DataError("statistical_annotator: need at least 20 pulses, got " +
                        std::to_string(dataset.size()));
    const std::size_t n = dataset.size();

    // template: global mean, drop poorly correlated pulses, recompute once
    std::vector<bool> keep(n, true);
    std::vector<double> tmpl = mean_pulse(dataset, keep);
    for (std::size_t i = 0; i < n; ++i)
        keep[i] = pearson(dataset.rows[i].values, tmpl) >= cfg.correlation_threshold;
    if (std::count(keep.begin(), keep.end(), true) > 0) tmpl = mean_pulse(dataset, keep);

    // amplitude-range statistics over the raw (pre-normalization) ranges
    double mean_r = 0.0;
    for (const PulseRow& r : dataset.rows) mean_r += r.raw_range;
    mean_r /= static_cast<double>(n);
    double var_r = 0.0;
    for (const PulseRow& r : dataset.rows) var_r += (r.raw_range - mean_r) * (r.raw_range - mean_r);
    var_r /= static_cast<double>(n);
    const double std_r = std::sqrt(var_r);

    std::vector<bool> flags(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        const bool low_corr =
            pearson(dataset.rows[i].values, tmpl) < cfg.correlation_threshold;
        const bool range_outlier =
            std_r > 0.0 &&
            std::abs(dataset.rows[i].raw_range - mean_r) / std_r > cfg.range_zscore_threshold;
        flags[i] = low_corr || range_outlier;
    }
    return flags;
}

void write_intervals_json(const std::string& path, const std::vector<ArtifactInterval>& intervals) {
    nlohmann::json arr = nlohmann::json::array();
    for (const ArtifactInterval& iv : intervals)
        arr.push_back({{"start_s", iv.start_s}, {"end_s", iv.end_s},
                       {"kind", artifact_kind_name(iv.kind)}});
    std::ofstream f(path);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << arr.dump(2) << "\n";
}

std::vector<ArtifactInterval> read_intervals_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open: " + path);
    nlohmann::json arr = nlohmann::json::parse(f);
    std::vector<ArtifactInterval> out;
    for (const auto& item : arr) {
        ArtifactInterval iv;
        iv.start_s = item.at("start_s").get<double>();
        iv.end_s = item.at("end_s").get<double>();
        iv.kind = artifact_kind_from_name(item.at("kind").get<std::string>());
        out.push_back(iv);
    }
    return out;
}

}  // namespace ppg
