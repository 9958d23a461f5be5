#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ppg/errors.hpp"
#include "ppg/rng.hpp"
#include "ppg/signal.hpp"
#include "ppg/synth.hpp"

using namespace ppg;

namespace {

constexpr double kPi = 3.14159265358979323846;

SignalFrame sine_frame(double freq_hz, double fs, double duration_s) {
    SignalFrame f;
    f.sample_rate_hz = fs;
    const std::size_t n = static_cast<std::size_t>(duration_s * fs);
    f.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        f.samples[i] = std::sin(2.0 * kPi * freq_hz * static_cast<double>(i) / fs);
    return f;
}

// cross-correlation argmax lag between two equal-length signals
long xcorr_peak_lag(const std::vector<double>& a, const std::vector<double>& b, long max_lag) {
    double best = -1e300;
    long best_lag = 0;
    const long n = static_cast<long>(a.size());
    for (long lag = -max_lag; lag <= max_lag; ++lag) {
        double s = 0.0;
        for (long i = std::max(0L, -lag); i < std::min(n, n - lag); ++i)
            s += a[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(i + lag)];
        if (s > best) {
            best = s;
            best_lag = lag;
        }
    }
    return best_lag;
}

}  // namespace

TEST_CASE("bandpass design meets the response contract") {
    FilterCascade c = design_bandpass(BandpassSpec{0.5, 5.0, 4}, 128.0);
    CHECK(c.sections.size() == 4);
    CHECK(std::abs(cascade_response(c, 2.0, 128.0)) >= 0.9);
    CHECK(std::abs(cascade_response(c, 0.05, 128.0)) <= 0.1);
    CHECK(std::abs(cascade_response(c, 20.0, 128.0)) <= 0.1);
    // unit gain at the geometric-mean center
    CHECK(std::abs(cascade_response(c, std::sqrt(0.5 * 5.0), 128.0)) ==
          doctest::Approx(1.0).epsilon(1e-9));
    // DC is fully rejected (zeros at z=1)
    CHECK(std::abs(cascade_response(c, 0.0, 128.0)) < 1e-12);
}

TEST_CASE("bandpass magnitude is monotone in the stopbands") {
    FilterCascade c = design_bandpass(BandpassSpec{0.5, 5.0, 4}, 128.0);
    double prev = std::abs(cascade_response(c, 0.01, 128.0));
    for (double f = 0.02; f < 0.45; f += 0.01) {
        const double cur = std::abs(cascade_response(c, f, 128.0));
        CHECK(cur >= prev - 1e-12);
        prev = cur;
    }
    prev = std::abs(cascade_response(c, 6.0, 128.0));
    for (double f = 6.5; f < 60.0; f += 0.5) {
        const double cur = std::abs(cascade_response(c, f, 128.0));
        CHECK(cur <= prev + 1e-12);
        prev = cur;
    }
}

TEST_CASE("bandpass rejects inverted band edges") {
    CHECK_THROWS_AS(design_bandpass(BandpassSpec{5.0, 0.5, 4}, 128.0), ConfigError);
    CHECK_THROWS_AS(design_bandpass(BandpassSpec{0.5, 70.0, 4}, 128.0), ConfigError);
}

TEST_CASE("filtfilt kills DC after the transient") {
    FilterCascade c = design_bandpass(BandpassSpec{0.5, 5.0, 4}, 128.0);
    SignalFrame f;
    f.sample_rate_hz = 128.0;
    f.samples.assign(3840, 1.0);
    SignalFrame y = filtfilt(f, c);
    // central region, clear of both transients
    double max_abs = 0.0;
    for (std::size_t i = 1000; i < 2840; ++i) max_abs = std::max(max_abs, std::abs(y.samples[i]));
    CHECK(max_abs < 1e-3);
}

TEST_CASE("filtfilt is zero phase for an in-band sinusoid") {
    FilterCascade c = design_bandpass(BandpassSpec{0.5, 5.0, 4}, 128.0);
    SignalFrame f = sine_frame(2.0, 128.0, 30.0);
    SignalFrame y = filtfilt(f, c);
    CHECK(xcorr_peak_lag(f.samples, y.samples, 32) == 0);
}

TEST_CASE("filtfilt amplitude follows |H|^2") {
    FilterCascade c = design_bandpass(BandpassSpec{0.5, 5.0, 4}, 128.0);
    SignalFrame f = sine_frame(2.0, 128.0, 30.0);
    SignalFrame y = filtfilt(f, c);
    const double expected = std::pow(std::abs(cascade_response(c, 2.0, 128.0)), 2);
    // peak amplitude over the central 20 s
    double in_amp = 0.0, out_amp = 0.0;
    for (std::size_t i = 640; i < 3200; ++i) {
        in_amp = std::max(in_amp, std::abs(f.samples[i]));
        out_amp = std::max(out_amp, std::abs(y.samples[i]));
    }
    CHECK(out_amp / in_amp == doctest::Approx(expected).epsilon(0.02));
}

TEST_CASE("filtfilt of zeros is zeros, and too-short frames error") {
    FilterCascade c = design_bandpass(BandpassSpec{0.5, 5.0, 4}, 128.0);
    SignalFrame f;
    f.sample_rate_hz = 128.0;
    f.samples.assign(512, 0.0);
    SignalFrame y = filtfilt(f, c);
    for (double v : y.samples) CHECK(v == doctest::Approx(0.0));
    f.samples.assign(30, 0.0);
    CHECK_THROWS_AS(filtfilt(f, c), DataError);
}

TEST_CASE("filtfilt is linear") {
    FilterCascade c = design_bandpass(BandpassSpec{0.5, 5.0, 4}, 128.0);
    Rng rng(5);
    SignalFrame f = sine_frame(1.5, 128.0, 10.0);
    SignalFrame g = sine_frame(2.5, 128.0, 10.0);
    for (double& v : g.samples) v += 0.1 * rng.normal();
    SignalFrame sum = f;
    for (std::size_t i = 0; i < sum.samples.size(); ++i)
        sum.samples[i] = 2.0 * f.samples[i] + g.samples[i];
    SignalFrame lhs = filtfilt(sum, c);
    SignalFrame ff = filtfilt(f, c);
    SignalFrame fg = filtfilt(g, c);
    for (std::size_t i = 0; i < lhs.samples.size(); ++i)
        CHECK(std::abs(lhs.samples[i] - (2.0 * ff.samples[i] + fg.samples[i])) < 1e-9);
}

TEST_CASE("segmentation of a pure sine finds one pulse per period") {
    SignalFrame f = sine_frame(1.0, 128.0, 5.0);
    auto pulses = segment_pulses(f);
    CHECK(pulses.size() == 4);
    for (const Pulse& p : pulses) {
        CHECK(p.raw_samples.size() >= 128);
        CHECK(p.raw_samples.size() <= 130);
    }
}

TEST_CASE("segmentation: monotone ramp has no pulses") {
    SignalFrame f;
    f.sample_rate_hz = 128.0;
    for (int i = 0; i < 1000; ++i) f.samples.push_back(i);
    CHECK(segment_pulses(f).empty());
}

TEST_CASE("plateau minima resolve to the leftmost sample") {
    const std::vector<double> x = {3, 1, 1, 1, 3};
    const auto minima = find_local_minima(x);
    REQUIRE(minima.size() == 1);
    CHECK(minima[0] == 1);
}

TEST_CASE("segmentation is scale and offset invariant") {
    SignalFrame f = sine_frame(1.3, 128.0, 8.0);
    Rng rng(9);
    for (double& v : f.samples) v += 0.05 * rng.normal();
    const auto base = segment_pulses(f);
    SignalFrame g = f;
    for (double& v : g.samples) v = 2.5 * v + 10.0;
    const auto scaled = segment_pulses(g);
    REQUIRE(base.size() == scaled.size());
    for (std::size_t i = 0; i < base.size(); ++i)
        CHECK(base[i].start_index == scaled[i].start_index);
}

TEST_CASE("duration gate rejects and reports out-of-range pulses") {
    // 0.1 s period -> pulses below the 0.2 s gate
    SignalFrame fast = sine_frame(10.0, 128.0, 2.0);
    RejectionReport report;
    CHECK(segment_pulses(fast, &report).empty());
    CHECK(report.too_short > 0);
}

TEST_CASE("resample_to_256 is exact on lines") {
    Pulse p;
    for (int i = 0; i < 100; ++i) p.raw_samples.push_back(i);
    const auto out = resample_to_256(p);
    CHECK(out[0] == doctest::Approx(0.0));
    CHECK(out[255] == doctest::Approx(99.0));
    for (std::size_t j = 0; j < 256; ++j)
        CHECK(out[j] == doctest::Approx(static_cast<double>(j) * 99.0 / 255.0).epsilon(1e-12));
}

TEST_CASE("resample_to_256 is the identity on length-256 pulses") {
    Pulse p;
    Rng rng(2);
    for (int i = 0; i < 256; ++i) p.raw_samples.push_back(rng.normal());
    const auto out = resample_to_256(p);
    for (std::size_t j = 0; j < 256; ++j)
        CHECK(out[j] == doctest::Approx(p.raw_samples[j]).epsilon(1e-12));
}

TEST_CASE("resample_to_256 interpolates a 3-sample peak") {
    Pulse p;
    p.raw_samples = {0, 1, 0};
    const auto out = resample_to_256(p);
    const double peak = *std::max_element(out.begin(), out.end());
    CHECK(peak == doctest::Approx(127.0 * 2.0 / 255.0).epsilon(1e-9));
    CHECK(out[127] == doctest::Approx(peak));
    CHECK(out[128] == doctest::Approx(peak));
    Pulse degenerate;
    degenerate.raw_samples = {1.0};
    CHECK_THROWS_AS(resample_to_256(degenerate), DataError);
}

TEST_CASE("normalize_pulse maps to [0,1] and flags flat pulses") {
    std::vector<double> ramp(256);
    for (int i = 0; i < 256; ++i) ramp[i] = -2.0 + 4.0 * i / 255.0;
    CanonicalPulse cp = normalize_pulse(ramp);
    CHECK(cp.samples.front() == doctest::Approx(0.0));
    CHECK(cp.samples.back() == doctest::Approx(1.0));
    CHECK_FALSE(cp.degenerate);

    CanonicalPulse flat = normalize_pulse(std::vector<double>(256, 7.0));
    CHECK(flat.degenerate);
    for (double v : flat.samples) CHECK(v == 0.0);

    std::vector<double> bad(256, 0.0);
    bad[3] = std::nan("");
    CHECK_THROWS_AS(normalize_pulse(bad), DataError);
}

TEST_CASE("preprocess on clean 30 s synthetic PPG at 75 bpm") {
    GeneratorConfig cfg;
    cfg.duration_s = 30.0;
    cfg.heart_rate_bpm = 75.0;
    cfg.heart_rate_std_bpm = 0.0;
    cfg.artifact_rate = 0.0;
    cfg.noise_std = 0.0;
    cfg.seed = 4;
    AnnotatedFrame af = generate_frame(cfg);
    RejectionReport report;
    auto pulses = preprocess(af.frame, BandpassSpec{}, &report);
    CHECK(pulses.size() >= 35);
    CHECK(pulses.size() <= 39);
    for (const auto& p : pulses) {
        CHECK(p.samples.size() == 256);
        for (double v : p.samples) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("preprocess of an all-zero frame yields nothing") {
    SignalFrame f;
    f.sample_rate_hz = 128.0;
    f.samples.assign(3840, 0.0);
    RejectionReport report;
    CHECK(preprocess(f, BandpassSpec{}, &report).empty());
    CHECK(report.total_rejected() == 0);
}

TEST_CASE("a long flatline produces duration rejections") {
    GeneratorConfig cfg;
    cfg.duration_s = 30.0;
    cfg.heart_rate_bpm = 75.0;
    cfg.heart_rate_std_bpm = 0.0;
    cfg.artifact_rate = 0.0;
    cfg.noise_std = 0.0;
    cfg.seed = 4;
    AnnotatedFrame af = generate_frame(cfg);
    // overwrite 3 s with a flat segment before filtering
    std::fill(af.frame.samples.begin() + 1280, af.frame.samples.begin() + 1664, 0.5);
    RejectionReport report;
    auto pulses = preprocess(af.frame, BandpassSpec{}, &report);
    CHECK(pulses.size() < 38);
    CHECK(report.total_rejected() > 0);
}
