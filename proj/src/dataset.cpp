#include "ppg/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ppg/errors.hpp"

namespace ppg {

std::size_t PulseDataset::count_label(int label) const {
    std::size_t n = 0;
    for (const PulseRow& r : rows) n += r.label == label ? 1 : 0;
    return n;
}

PulseDataset PulseDataset::subset(const std::vector<std::size_t>& indices) const {
    PulseDataset out;
    out.rows.reserve(indices.size());
    for (std::size_t i : indices) out.rows.push_back(rows.at(i));
    return out;
}

PulseDataset PulseDataset::from_pulses(const std::vector<CanonicalPulse>& pulses) {
    PulseDataset ds;
    ds.rows.reserve(pulses.size());
    for (const CanonicalPulse& p : pulses) {
        PulseRow r;
        r.values = p.samples;
        r.label = p.label;
        r.source_id = p.source_id;
        r.raw_range = p.raw_range;
        ds.rows.push_back(std::move(r));
    }
    return ds;
}

namespace {

std::string fmt9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

void write_pulse_csv(const std::string& path, const PulseDataset& ds) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << "source_id,label";
    for (int i = 0; i < 256; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), ",s%03d", i);
        f << buf;
    }
    f << "\n";
    for (const PulseRow& r : ds.rows) {
        f << r.source_id << "," << r.label;
        for (double v : r.values) f << "," << fmt9(v);
        f << "\n";
    }
    if (!f) throw DataError("write failed: " + path);
}

PulseDataset read_pulse_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open: " + path);
    std::string line;
    if (!std::getline(f, line)) throw DataError("empty pulse CSV: " + path);
    if (line.rfind("source_id,label,", 0) != 0)
        throw DataError("bad pulse CSV header in " + path);
    PulseDataset ds;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        PulseRow r;
        std::string field;
        if (!std::getline(ss, r.source_id, ',')) continue;
        if (!std::getline(ss, field, ','))
            throw DataError(path + ":" + std::to_string(lineno) + ": missing label");
        r.label = std::stoi(field);
        r.values.reserve(256);
        while (std::getline(ss, field, ',')) r.values.push_back(std::stod(field));
        if (r.values.size() != 256)
            throw DataError(path + ":" + std::to_string(lineno) + ": expected 256 samples, got " +
                            std::to_string(r.values.size()));
        ds.rows.push_back(std::move(r));
    }
    return ds;
}

void write_signal_csv(const std::string& path, const SignalFrame& frame) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot open for writing: " + path);
    f << "t_s,ppg\n";
    for (std::size_t i = 0; i < frame.samples.size(); ++i) {
        const double t = frame.start_time_s + static_cast<double>(i) / frame.sample_rate_hz;
        f << fmt9(t) << "," << fmt9(frame.samples[i]) << "\n";
    }
    if (!f) throw DataError("write failed: " + path);
}

SignalFrame read_signal_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open: " + path);
    std::string line;
    if (!std::getline(f, line)) throw DataError("empty signal CSV: " + path);
    if (line.rfind("t_s,ppg", 0) != 0) throw DataError("bad signal CSV header in " + path);
    std::vector<double> ts, vs;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw DataError("bad row in " + path);
        ts.push_back(std::stod(line.substr(0, comma)));
        vs.push_back(std::stod(line.substr(comma + 1)));
    }
    if (vs.size() < 2) throw DataError("signal CSV needs at least 2 samples: " + path);
    SignalFrame frame;
    frame.samples = std::move(vs);
    frame.start_time_s = ts.front();
    frame.sample_rate_hz = static_cast<double>(ts.size() - 1) / (ts.back() - ts.front());
    frame.id = path;
    return frame;
}

}  // namespace ppg
