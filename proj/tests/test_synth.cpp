#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "ppg/errors.hpp"
#include "ppg/signal.hpp"
#include "ppg/synth.hpp"

using namespace ppg;

namespace {

std::vector<CanonicalPulse> labeled_pulses(const GeneratorConfig& cfg) {
    AnnotatedFrame af = generate_frame(cfg);
    return label_pulses(af, preprocess(af.frame, BandpassSpec{}));
}

double prevalence(const std::vector<CanonicalPulse>& pulses) {
    std::size_t pos = 0;
    for (const auto& p : pulses) pos += (p.label == 1);
    return static_cast<double>(pos) / static_cast<double>(pulses.size());
}

}  // namespace

TEST_CASE("generate_frame is deterministic per seed") {
    GeneratorConfig cfg;
    cfg.seed = 77;
    AnnotatedFrame a = generate_frame(cfg);
    AnnotatedFrame b = generate_frame(cfg);
    REQUIRE(a.frame.samples.size() == b.frame.samples.size());
    CHECK(a.frame.samples == b.frame.samples);
    REQUIRE(a.intervals.size() == b.intervals.size());
    for (std::size_t i = 0; i < a.intervals.size(); ++i) {
        CHECK(a.intervals[i].start_s == b.intervals[i].start_s);
        CHECK(a.intervals[i].end_s == b.intervals[i].end_s);
        CHECK(a.intervals[i].kind == b.intervals[i].kind);
    }
    cfg.seed = 78;
    AnnotatedFrame c = generate_frame(cfg);
    CHECK(a.frame.samples != c.frame.samples);
}

TEST_CASE("artifact_rate 0 produces a clean frame") {
    GeneratorConfig cfg;
    cfg.artifact_rate = 0.0;
    cfg.seed = 3;
    AnnotatedFrame af = generate_frame(cfg);
    CHECK(af.intervals.empty());
    auto pulses = labeled_pulses(cfg);
    CHECK(!pulses.empty());
    for (const auto& p : pulses) CHECK(p.label == 0);
}

TEST_CASE("intervals are ordered, disjoint, and inside the frame") {
    GeneratorConfig cfg;
    cfg.duration_s = 120.0;
    cfg.seed = 11;
    AnnotatedFrame af = generate_frame(cfg);
    CHECK(!af.intervals.empty());
    double prev_end = 0.0;
    for (const auto& iv : af.intervals) {
        CHECK(iv.start_s >= prev_end);
        CHECK(iv.end_s > iv.start_s);
        CHECK(iv.end_s <= cfg.duration_s);
        prev_end = iv.end_s;
    }
}

TEST_CASE("realized prevalence tracks the configured rate") {
    GeneratorConfig cfg;
    cfg.duration_s = 600.0;
    cfg.artifact_rate = 0.175;
    std::size_t total = 0, pos = 0;
    for (std::uint64_t seed : {101, 102, 103}) {
        cfg.seed = seed;
        auto pulses = labeled_pulses(cfg);
        total += pulses.size();
        for (const auto& p : pulses) pos += (p.label == 1);
    }
    const double prev = static_cast<double>(pos) / static_cast<double>(total);
    CHECK(prev >= 0.155);
    CHECK(prev <= 0.195);
}

TEST_CASE("clean beats survive segmentation at high rate") {
    // even at the default rate, clean pulse count stays close to the expected
    // beat count: artifacts must not destroy their neighbors
    GeneratorConfig cfg;
    cfg.duration_s = 60.0;
    cfg.seed = 21;
    auto pulses = labeled_pulses(cfg);
    const double expected_beats = cfg.duration_s * cfg.heart_rate_bpm / 60.0;
    CHECK(static_cast<double>(pulses.size()) >= 0.9 * expected_beats);
}

TEST_CASE("label_pulses applies the 10% overlap rule") {
    GeneratorConfig cfg;
    cfg.duration_s = 60.0;
    cfg.seed = 31;
    AnnotatedFrame af = generate_frame(cfg);
    auto pulses = label_pulses(af, preprocess(af.frame, BandpassSpec{}));
    for (const auto& p : pulses) {
        double overlap = 0.0;
        for (const auto& iv : af.intervals) {
            const double lo = std::max(p.start_s, iv.start_s);
            const double hi = std::min(p.start_s + p.duration_s, iv.end_s);
            if (hi > lo) overlap += hi - lo;
        }
        const int expected = overlap > 0.1 * p.duration_s ? 1 : 0;
        CHECK(p.label == expected);
    }
}

TEST_CASE("label_pulses rejects out-of-bounds pulses") {
    GeneratorConfig cfg;
    cfg.seed = 5;
    AnnotatedFrame af = generate_frame(cfg);
    CanonicalPulse stray;
    stray.samples.assign(256, 0.5);
    stray.start_s = cfg.duration_s + 1.0;
    stray.duration_s = 0.8;
    CHECK_THROWS_AS(label_pulses(af, {stray}), DataError);
}

TEST_CASE("generator config validation") {
    GeneratorConfig cfg;
    cfg.artifact_rate = 0.9;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.duration_s = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.artifact_mix = {1.0, 1.0};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("statistical annotator agrees with ground truth on clear data") {
    GeneratorConfig cfg;
    cfg.duration_s = 300.0;
    cfg.seed = 41;
    auto pulses = labeled_pulses(cfg);
    PulseDataset ds = PulseDataset::from_pulses(pulses);
    const auto flags = statistical_annotator(ds);
    REQUIRE(flags.size() == ds.size());
    std::size_t agree = 0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        agree += (flags[i] ? 1 : 0) == ds.rows[i].label;
    CHECK(static_cast<double>(agree) / static_cast<double>(ds.size()) >= 0.8);
}

TEST_CASE("statistical annotator passes identical pulses and flags an outlier") {
    PulseDataset ds;
    std::vector<double> shape(256);
    for (int i = 0; i < 256; ++i) {
        const double t = i / 255.0;
        shape[i] = std::exp(-std::pow((t - 0.3) / 0.12, 2));
    }
    for (int r = 0; r < 30; ++r) {
        PulseRow row;
        row.values = shape;
        row.raw_range = 1.0;
        ds.rows.push_back(row);
    }
    auto flags = statistical_annotator(ds);
    for (bool f : flags) CHECK_FALSE(f);

    // an inverted pulse anti-correlates with the template
    PulseRow inverted;
    inverted.values.resize(256);
    for (int i = 0; i < 256; ++i) inverted.values[i] = 1.0 - shape[i];
    inverted.raw_range = 1.0;
    ds.rows.push_back(inverted);
    flags = statistical_annotator(ds);
    CHECK(flags.back());
    for (std::size_t i = 0; i + 1 < flags.size(); ++i) CHECK_FALSE(flags[i]);
}

TEST_CASE("statistical annotator requires at least 20 pulses") {
    PulseDataset ds;
    PulseRow row;
    row.values.assign(256, 0.5);
    for (int i = 0; i < 19; ++i) ds.rows.push_back(row);
    CHECK_THROWS_AS(statistical_annotator(ds), DataError);
}

TEST_CASE("intervals JSON round-trip") {
    std::vector<ArtifactInterval> intervals = {
        {1.25, 2.5, ArtifactKind::Spike},
        {10.0, 10.4, ArtifactKind::Flatline},
        {20.0, 23.75, ArtifactKind::AmplitudeBurst},
    };
    const std::string path = "test_intervals_tmp.json";
    write_intervals_json(path, intervals);
    const auto back = read_intervals_json(path);
    std::remove(path.c_str());
    REQUIRE(back.size() == intervals.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].start_s == doctest::Approx(intervals[i].start_s));
        CHECK(back[i].end_s == doctest::Approx(intervals[i].end_s));
        CHECK(back[i].kind == intervals[i].kind);
    }
}

TEST_CASE("artifact kind names round-trip and bad names throw") {
    for (ArtifactKind k : {ArtifactKind::Spike, ArtifactKind::Flatline, ArtifactKind::BaselineJump,
                           ArtifactKind::AmplitudeBurst})
        CHECK(artifact_kind_from_name(artifact_kind_name(k)) == k);
    CHECK_THROWS_AS(artifact_kind_from_name("wobble"), ConfigError);
}
