#include "ppg/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ppg/errors.hpp"

namespace ppg {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void BandpassSpec::validate(double fs_hz) const {
    if (order == 0 || order % 2 != 0)
        throw ConfigError("bandpass: prototype order must be a positive even integer");
    if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < fs_hz / 2.0))
        throw ConfigError("bandpass: need 0 < low (" + std::to_string(low_hz) + ") < high (" +
                          std::to_string(high_hz) + ") < fs/2 (" + std::to_string(fs_hz / 2.0) +
                          ")");
}

FilterCascade design_bandpass(const BandpassSpec& spec, double fs_hz) {
    spec.validate(fs_hz);
    if (fs_hz <= 2.0 * spec.high_hz) throw ConfigError("bandpass: sample rate below 2*high");
    using cd = std::complex<double>;
    const std::size_t n = spec.order;
    const double fs2 = 2.0 * fs_hz;
    // pre-warped analog edges
    const double wl = fs2 * std::tan(kPi * spec.low_hz / fs_hz);
    const double wh = fs2 * std::tan(kPi * spec.high_hz / fs_hz);
    const double w0 = std::sqrt(wl * wh);
    const double bw = wh - wl;

    // Butterworth lowpass prototype poles, then lowpass->bandpass transform.
    std::vector<cd> analog_poles;
    for (std::size_t k = 1; k <= n; ++k) {
        const double theta = kPi * (2.0 * static_cast<double>(k) + static_cast<double>(n) - 1.0) /
                             (2.0 * static_cast<double>(n));
        const cd p = std::polar(1.0, theta);
        const cd a = p * (bw / 2.0);
        const cd root = std::sqrt(a * a - cd(w0 * w0, 0.0));
        analog_poles.push_back(a + root);
        analog_poles.push_back(a - root);
    }

    // bilinear transform; n zeros land on z=+1 and n on z=-1
    std::vector<cd> digital_poles;
    for (const cd& s : analog_poles) digital_poles.push_back((cd(fs2, 0) + s) / (cd(fs2, 0) - s));

    // pair conjugates into biquads, numerator (1, 0, -1) = zeros at +1/-1
    std::vector<cd> upper;
    for (const cd& p : digital_poles)
        if (p.imag() > 0.0) upper.push_back(p);
    std::sort(upper.begin(), upper.end(),
              [](const cd& a, const cd& b) { return std::abs(a) < std::abs(b); });

    FilterCascade cascade;
    for (const cd& p : upper) {
        Biquad s;
        s.b0 = 1.0;
        s.b1 = 0.0;
        s.b2 = -1.0;
        s.a1 = -2.0 * p.real();
        s.a2 = std::norm(p);
        cascade.sections.push_back(s);
    }

    // normalize to unit gain at the geometric-mean center frequency
    const double fc = std::sqrt(spec.low_hz * spec.high_hz);
    const double g = std::abs(cascade_response(cascade, fc, fs_hz));
    if (!(g > 0.0)) throw NumericError("bandpass: degenerate gain at center frequency");
    cascade.sections.front().b0 /= g;
    cascade.sections.front().b1 /= g;
    cascade.sections.front().b2 /= g;
    return cascade;
}

std::complex<double> cascade_response(const FilterCascade& cascade, double freq_hz, double fs_hz) {
    using cd = std::complex<double>;
    const double w = 2.0 * kPi * freq_hz / fs_hz;
    const cd z1 = std::polar(1.0, -w);
    const cd z2 = z1 * z1;
    cd h(1.0, 0.0);
    for (const Biquad& s : cascade.sections)
        h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
    return h;
}

namespace {

// one biquad pass, direct form II transposed, with initial conditions scaled
// to the steady-state step response of the section
void sosfilt_section(const Biquad& s, std::vector<double>& x, double x0_scale) {
    // steady-state zi for unit step input
    const double dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    double z1 = (dc - s.b0) * x0_scale;
    double z2 = (s.b2 - s.a2 * dc) * x0_scale;
    for (double& v : x) {
        const double in = v;
        const double y = s.b0 * in + z1;
        z1 = s.b1 * in - s.a1 * y + z2;
        z2 = s.b2 * in - s.a2 * y;
        v = y;
    }
}

void sosfilt_cascade(const FilterCascade& cascade, std::vector<double>& x) {
    for (const Biquad& s : cascade.sections) {
        const double x0 = x.empty() ? 0.0 : x.front();
        sosfilt_section(s, x, x0);
    }
}

}  // namespace

SignalFrame filtfilt(const SignalFrame& frame, const FilterCascade& cascade) {
    const std::size_t n = frame.samples.size();
    const std::size_t pad = 3 * cascade.order();
    if (n <= 3 * pad)
        throw DataError("filtfilt: frame of " + std::to_string(n) +
                        " samples too short for padding " + std::to_string(pad));
    // odd reflection on both edges
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = 0; i < pad; ++i)
        ext.push_back(2.0 * frame.samples.front() - frame.samples[pad - i]);
    ext.insert(ext.end(), frame.samples.begin(), frame.samples.end());
    for (std::size_t i = 0; i < pad; ++i)
        ext.push_back(2.0 * frame.samples.back() - frame.samples[n - 2 - i]);

    sosfilt_cascade(cascade, ext);
    std::reverse(ext.begin(), ext.end());
    sosfilt_cascade(cascade, ext);
    std::reverse(ext.begin(), ext.end());

    SignalFrame out = frame;
    out.samples.assign(ext.begin() + static_cast<long>(pad),
                       ext.begin() + static_cast<long>(pad + n));
    return out;
}

std::vector<std::size_t> find_local_minima(const std::vector<double>& x) {
    std::vector<std::size_t> minima;
    for (std::size_t i = 1; i + 1 < x.size(); ++i)
        if (x[i - 1] > x[i] && x[i] <= x[i + 1]) minima.push_back(i);
    return minima;
}

std::vector<Pulse> segment_pulses(const SignalFrame& frame, RejectionReport* report) {
    const auto minima = find_local_minima(frame.samples);
    std::vector<Pulse> pulses;
    for (std::size_t m = 0; m + 1 < minima.size(); ++m) {
        const std::size_t a = minima[m], b = minima[m + 1];
        const double duration = static_cast<double>(b - a) / frame.sample_rate_hz;
        if (duration < kMinPulseDurationS) {
            if (report) ++report->too_short;
            continue;
        }
        if (duration > kMaxPulseDurationS) {
            if (report) ++report->too_long;
            continue;
        }
        Pulse p;
        p.raw_samples.assign(frame.samples.begin() + static_cast<long>(a),
                             frame.samples.begin() + static_cast<long>(b + 1));
        p.start_index = a;
        p.duration_s = duration;
        pulses.push_back(std::move(p));
    }
    return pulses;
}

std::vector<double> resample_to_256(const Pulse& pulse) {
    const std::size_t n = pulse.raw_samples.size();
    if (n < 2) throw DataError("resample: degenerate pulse of " + std::to_string(n) + " samples");
    std::vector<double> out(256);
    for (std::size_t j = 0; j < 256; ++j) {
        const double pos = static_cast<double>(j) * static_cast<double>(n - 1) / 255.0;
        const std::size_t i0 = std::min(static_cast<std::size_t>(pos), n - 2);
        const double frac = pos - static_cast<double>(i0);
        out[j] = pulse.raw_samples[i0] * (1.0 - frac) + pulse.raw_samples[i0 + 1] * frac;
    }
    return out;
}

CanonicalPulse normalize_pulse(const std::vector<double>& samples) {
    if (samples.size() != 256)
        throw DataError("normalize: expected 256 samples, got " + std::to_string(samples.size()));
    for (double v : samples)
        if (!std::isfinite(v)) throw DataError("normalize: non-finite sample value");
    const auto [mn_it, mx_it] = std::minmax_element(samples.begin(), samples.end());
    const double mn = *mn_it, mx = *mx_it;
    CanonicalPulse cp;
    cp.raw_range = mx - mn;
    if (cp.raw_range < 1e-12) {
        cp.samples.assign(256, 0.0);
        cp.degenerate = true;
        return cp;
    }
    cp.samples.resize(256);
    for (std::size_t i = 0; i < 256; ++i) cp.samples[i] = (samples[i] - mn) / cp.raw_range;
    return cp;
}

std::vector<CanonicalPulse> preprocess(const SignalFrame& frame, const BandpassSpec& spec,
                                       RejectionReport* report) {
    const FilterCascade cascade = design_bandpass(spec, frame.sample_rate_hz);
    const SignalFrame filtered = filtfilt(frame, cascade);
    RejectionReport local;
    RejectionReport* rep = report ? report : &local;
    const auto pulses = segment_pulses(filtered, rep);
    std::vector<CanonicalPulse> out;
    out.reserve(pulses.size());
    std::size_t idx = 0;
    for (const Pulse& p : pulses) {
        CanonicalPulse cp = normalize_pulse(resample_to_256(p));
        if (cp.degenerate && rep) ++rep->degenerate;
        cp.source_id = frame.id + ":" + std::to_string(idx++);
        cp.start_s = frame.start_time_s + static_cast<double>(p.start_index) / frame.sample_rate_hz;
        cp.duration_s = p.duration_s;
        out.push_back(std::move(cp));
    }
    return out;
}

}  // namespace ppg
