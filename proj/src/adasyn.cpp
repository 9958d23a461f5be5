#include "ppg/adasyn.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "ppg/errors.hpp"
#include "ppg/rng.hpp"

namespace ppg {

void AdasynConfig::validate() const {
    if (k_neighbors < 1) throw ConfigError("adasyn: k must be >= 1");
    if (beta < 0.0 || beta > 1.0) throw ConfigError("adasyn: beta must be in [0,1]");
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        d += diff * diff;
    }
    return d;
}

// indices of the k nearest rows to `query` among `pool` (excluding exclude_idx)
std::vector<std::size_t> k_nearest(const PulseDataset& ds, const std::vector<std::size_t>& pool,
                                   std::size_t query_idx, std::size_t k) {
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(pool.size());
    for (std::size_t i : pool) {
        if (i == query_idx) continue;
        dist.emplace_back(sq_dist(ds.rows[i].values, ds.rows[query_idx].values), i);
    }
    k = std::min(k, dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k), dist.end());
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(dist[i].second);
    return out;
}

// largest-remainder apportionment of G over weights
std::vector<std::size_t> apportion(const std::vector<double>& weights, std::size_t G) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<std::size_t> alloc(weights.size(), 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = total > 0.0
                                 ? weights[i] / total * static_cast<double>(G)
                                 : static_cast<double>(G) / static_cast<double>(weights.size());
        alloc[i] = static_cast<std::size_t>(exact);
        assigned += alloc[i];
        remainders.emplace_back(-(exact - std::floor(exact)), i);  // descending remainder
    }
    std::sort(remainders.begin(), remainders.end());
    for (std::size_t r = 0; assigned < G; ++r, ++assigned) ++alloc[remainders[r % remainders.size()].second];
    return alloc;
}

}  // namespace

PulseDataset adasyn(const PulseDataset& train, const AdasynConfig& cfg) {
    cfg.validate();
    std::vector<std::size_t> minority, majority, all;
    for (std::size_t i = 0; i < train.size(); ++i) {
        all.push_back(i);
        if (train.rows[i].label == 1)
            minority.push_back(i);
        else if (train.rows[i].label == 0)
            majority.push_back(i);
        else
            throw DataError("adasyn: unlabeled row " + train.rows[i].source_id);
    }
    bool swapped = false;
    if (minority.size() > majority.size()) {
        std::swap(minority, majority);
        swapped = true;
    }
    if (minority.empty() || majority.empty())
        throw DataError("adasyn: both classes must be present");

    const double d_ratio =
        static_cast<double>(minority.size()) / static_cast<double>(majority.size());
    if (d_ratio >= cfg.d_threshold) return train;  // already balanced enough

    const std::size_t G = static_cast<std::size_t>(std::lround(
        static_cast<double>(majority.size() - minority.size()) * cfg.beta));
    if (G == 0) return train;

    std::size_t k = cfg.k_neighbors;
    if (minority.size() <= 1) throw DataError("adasyn: minority class needs at least 2 samples");
    if (minority.size() <= k) {
        k = minority.size() - 1;
        std::cerr << "adasyn: reducing k to " << k << " (minority class has only "
                  << minority.size() << " samples)\n";
    }

    const int minority_label = swapped ? 0 : 1;

    // density weights: majority share among each seed's k nearest neighbors
    std::vector<double> r(minority.size(), 0.0);
    for (std::size_t m = 0; m < minority.size(); ++m) {
        const auto nn = k_nearest(train, all, minority[m], k);
        std::size_t maj = 0;
        for (std::size_t i : nn) maj += train.rows[i].label != minority_label ? 1 : 0;
        r[m] = static_cast<double>(maj) / static_cast<double>(nn.size());
    }
    const std::vector<std::size_t> g = apportion(r, G);

    Rng rng(derive_seed(cfg.seed, "adasyn"));
    PulseDataset out = train;
    out.rows.reserve(train.size() + G);
    for (std::size_t m = 0; m < minority.size(); ++m) {
        if (g[m] == 0) continue;
        const auto nn_min = k_nearest(train, minority, minority[m], k);
        const PulseRow& seed_row = train.rows[minority[m]];
        for (std::size_t j = 0; j < g[m]; ++j) {
            const PulseRow& nb = train.rows[nn_min[rng.index(nn_min.size())]];
            const double lambda = rng.uniform();
            PulseRow s;
            s.values.resize(seed_row.values.size());
            for (std::size_t i = 0; i < s.values.size(); ++i)
                s.values[i] =
                    seed_row.values[i] + lambda * (nb.values[i] - seed_row.values[i]);
            s.label = minority_label;
            s.synthetic = true;
            s.raw_range = seed_row.raw_range + lambda * (nb.raw_range - seed_row.raw_range);
            s.source_id = "adasyn:" + std::to_string(m) + ":" + std::to_string(j);
            out.rows.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace ppg
