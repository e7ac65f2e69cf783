#pragma once

// Thought-length statistics, Pearson correlation over subsets, and word-level z-statistics.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "tomeval/error.hpp"
#include "tomeval/runner.hpp"

namespace tomeval {

// ---------------------------------------------------------------------------
// Lengths

struct Histogram {
    int bin_width = 20;
    // Bin i covers [edges[i], edges[i+1]).
    std::vector<int> edges;
    std::vector<std::size_t> counts;
};

struct LengthStats {
    std::string method;
    std::size_t n = 0;
    double mean_tokens = 0.0;
    // Population standard deviation.
    double std_tokens = 0.0;
    Histogram histogram;
};

inline Histogram histogram(const std::vector<int>& values, int bin_width = 20) {
    if (bin_width < 1) throw ConfigError("histogram bin width must be >= 1");
    Histogram h;
    h.bin_width = bin_width;
    const int hi = values.empty() ? 0 : *std::max_element(values.begin(), values.end());
    const std::size_t bins = static_cast<std::size_t>(std::max(0, hi) / bin_width) + 1;
    h.counts.assign(bins, 0);
    for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(static_cast<int>(i) * bin_width);
    for (int v : values) {
        if (v < 0) throw Error("negative token count");
        ++h.counts[static_cast<std::size_t>(v / bin_width)];
    }
    return h;
}

inline LengthStats length_stats(const std::vector<int>& counts, int bin_width = 20, std::string method = {}) {
    if (counts.empty()) throw Error("length_stats needs at least one item");
    LengthStats s;
    s.method = std::move(method);
    // Welford's update.
    double mean = 0.0, m2 = 0.0;
    std::size_t n = 0;
    for (int c : counts) {
        ++n;
        const double d = c - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (c - mean);
    }
    s.n = n;
    s.mean_tokens = mean;
    s.std_tokens = std::sqrt(std::max(0.0, m2 / static_cast<double>(n)));
    s.histogram = histogram(counts, bin_width);
    return s;
}

inline LengthStats length_stats(const std::vector<ItemResult>& items, int bin_width = 20) {
    std::vector<int> counts;
    counts.reserve(items.size());
    for (const auto& i : items) counts.push_back(i.thought_token_count);
    return length_stats(counts, bin_width, items.empty() ? std::string() : items.front().method);
}

// Recounts with the given tokenizer instead of the logged counts.
inline LengthStats length_stats(const std::vector<ItemResult>& items, const TokenCounter& tokenizer,
                                int bin_width = 20) {
    std::vector<int> counts;
    counts.reserve(items.size());
    for (const auto& i : items) counts.push_back(tokenizer.count(i.thought));
    return length_stats(counts, bin_width, items.empty() ? std::string() : items.front().method);
}

inline std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    std::string out = buf;
    if (out == "-0.0" || out == "-0.00" || out == "-0") out.erase(0, 1);
    return out;
}

// "173.0±42.6"
inline std::string format_mean_std(double mean, double sd) {
    return format_fixed(mean, 1) + "±" + format_fixed(sd, 1);
}

inline std::string format_mean_std(const LengthStats& s) { return format_mean_std(s.mean_tokens, s.std_tokens); }

// ---------------------------------------------------------------------------
// Correlation

struct ScatterPoint {
    std::string label;
    double x = 0.0;
    double y = 0.0;
};

// Product-moment correlation; nullopt with fewer than two points or zero variance.
inline std::optional<double> pearson(const std::vector<ScatterPoint>& points) {
    if (points.size() < 2) return std::nullopt;
    const double n = static_cast<double>(points.size());
    double mx = 0.0, my = 0.0;
    for (const auto& p : points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw Error("non-finite scatter point " + p.label);
        mx += p.x;
        my += p.y;
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (const auto& p : points) {
        const double dx = p.x - mx, dy = p.y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    const double r = sxy / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

inline std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw Error("pearson: vectors differ in length");
    std::vector<ScatterPoint> pts;
    for (std::size_t i = 0; i < x.size(); ++i) pts.push_back({std::to_string(i), x[i], y[i]});
    return pearson(pts);
}

inline double accuracy_delta(double soo, double cot) { return soo - cot; }

// y = accuracy(soo) - accuracy(cot) per subset; x looked up by subset label.
// Subsets with an undefined accuracy on either side are skipped.
inline std::vector<ScatterPoint> accuracy_deltas(const std::vector<SubsetStats>& soo,
                                                 const std::vector<SubsetStats>& cot,
                                                 const std::map<std::string, double>& x_by_label) {
    std::map<std::string, const SubsetStats*> by_label;
    for (const auto& s : cot) by_label.emplace(s.subset.label(), &s);
    if (by_label.size() != soo.size()) throw Error("accuracy_deltas: subsets differ between methods");
    std::vector<ScatterPoint> out;
    for (const auto& s : soo) {
        const auto label = s.subset.label();
        auto it = by_label.find(label);
        if (it == by_label.end()) throw Error("accuracy_deltas: subset " + label + " missing for the baseline");
        if (!s.mean || !it->second->mean) continue;
        auto x = x_by_label.find(label);
        if (x == x_by_label.end()) continue;
        out.push_back({label, x->second, accuracy_delta(*s.mean, *it->second->mean)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Word-level z-statistics

struct WordStat {
    std::string word;
    // Thoughts containing the word, both methods pooled.
    std::size_t n = 0;
    // Of those, thoughts from the first corpus.
    std::size_t k = 0;
    double p_hat = 0.0;
    double z = 0.0;
    bool significant = false;
};

// Lowercased words split at ASCII non-alphanumerics. Bytes of multi-byte UTF-8
// sequences count as word characters.
inline std::set<std::string> word_set(std::string_view text) {
    std::set<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c >= 0x80) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            out.insert(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.insert(std::move(cur));
    return out;
}

inline double z_score(std::size_t n, std::size_t k, double p0 = 0.5) {
    const double p_hat = static_cast<double>(k) / static_cast<double>(n);
    return (p_hat - p0) / std::sqrt(p0 * (1.0 - p0) / static_cast<double>(n));
}

// Chance rate: 1/2 for equally sized corpora, otherwise the first corpus's share.
inline double chance_rate(std::size_t first, std::size_t second) {
    if (first == second) return 0.5;
    return static_cast<double>(first) / static_cast<double>(first + second);
}

// Sorted by n descending, then word ascending.
inline std::vector<WordStat> z_statistics(const std::vector<std::string>& thoughts_soo,
                                          const std::vector<std::string>& thoughts_cot, std::size_t min_count = 20,
                                          double z_crit = 1.96) {
    if (thoughts_soo.empty() || thoughts_cot.empty()) throw Error("z_statistics needs two non-empty corpora");
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
    for (const auto& t : thoughts_soo)
        for (const auto& w : word_set(t)) ++counts[w].first;
    for (const auto& t : thoughts_cot)
        for (const auto& w : word_set(t)) ++counts[w].second;

    const double p0 = chance_rate(thoughts_soo.size(), thoughts_cot.size());
    std::vector<WordStat> out;
    for (const auto& [word, c] : counts) {
        WordStat s;
        s.word = word;
        s.k = c.first;
        s.n = c.first + c.second;
        if (s.n < min_count || s.n == 0) continue;
        s.p_hat = static_cast<double>(s.k) / static_cast<double>(s.n);
        s.z = z_score(s.n, s.k, p0);
        s.significant = std::fabs(s.z) > z_crit;
        out.push_back(std::move(s));
    }
    std::stable_sort(out.begin(), out.end(), [](const WordStat& a, const WordStat& b) {
        if (a.n != b.n) return a.n > b.n;
        return a.word < b.word;
    });
    return out;
}

} // namespace tomeval
