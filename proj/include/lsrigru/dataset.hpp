#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "lsrigru/error.hpp"
#include "lsrigru/marketdata.hpp"
#include "lsrigru/relgraph.hpp"

namespace lsrigru {

/// How the relation graphs are derived.
struct GraphOptions {
    std::size_t lookback = 15;
    EdgePolicy short_policy = TopKPolicy{10};
    ShortSignal signal = ShortSignal::raw_open;
};

/// Static long-term edges plus one short-term edge set per calendar day.
struct GraphSet {
    RelationMatrix long_matrix;
    EdgeSet long_edges;
    std::vector<EdgeSet> short_edges;
};

/// Short-term matrix for calendar day `t`, shortening the window near the start of history.
inline RelationMatrix short_matrix_at(const PriceGrid& opens, const PriceGrid& closes, std::size_t t,
                                      const GraphOptions& opt) {
    if (opt.signal == ShortSignal::overnight_gap) {
        if (t == 0) return short_matrix_from_windows(Matrix(opens.values.cols, 0), opens.dates[0]);
        return build_short_matrix(opens, t, std::min(opt.lookback, t), opt.signal, &closes);
    }
    return build_short_matrix(opens, t, std::min(opt.lookback, t + 1), opt.signal, &closes);
}

inline GraphSet build_graphs(const Panel& panel, const Universe& u, const GraphOptions& opt) {
    GraphSet g;
    g.long_matrix = build_long_matrix(u);
    g.long_edges = to_edge_set(g.long_matrix, ThresholdPolicy{0.5});
    const auto opens = price_grid(panel, u, &StockBar::open);
    const auto closes = price_grid(panel, u, &StockBar::close);
    g.short_edges.reserve(opens.dates.size());
    for (std::size_t t = 0; t < opens.dates.size(); ++t)
        g.short_edges.push_back(to_edge_set(short_matrix_at(opens, closes, t, opt), opt.short_policy));
    return g;
}

/// Everything the model reads: normalized features, labels and graphs on one calendar.
struct MarketData {
    Universe universe;
    FeaturePanel features;
    LabelPanel labels;
    GraphSet graphs;

    const std::vector<Date>& calendar() const { return features.dates; }
};

/// One training instance: stock, calendar index of the last window day, and its label.
struct SequenceSample {
    std::size_t stock = 0;
    std::size_t end = 0;
    double label = 0.0;

    friend bool operator==(const SequenceSample&, const SequenceSample&) = default;
};

struct SplitRanges {
    DateRange train;
    DateRange valid;
    DateRange test;
};

struct SampleSplit {
    std::vector<SequenceSample> train;
    std::vector<SequenceSample> valid;
    std::vector<SequenceSample> test;
};

inline void check_ranges(const SplitRanges& r) {
    const DateRange* seq[] = {&r.train, &r.valid, &r.test};
    const DateRange* prev = nullptr;
    for (const DateRange* cur : seq) {
        if (cur->empty()) continue;
        if (prev && !(prev->last < cur->first))
            throw ArgumentError("split ranges overlap or are out of order");
        prev = cur;
    }
}

/// True when the stock has a bar on every day of [end − window + 1, end].
inline bool window_complete(const FeaturePanel& fp, std::size_t stock, std::size_t end, std::size_t window) {
    if (end + 1 < window) return false;
    for (std::size_t s = end + 1 - window; s <= end; ++s)
        if (!fp.is_present(s, stock)) return false;
    return true;
}

/// Samples whose whole window and label date (end + horizon) lie inside `range`.
inline std::vector<SequenceSample> samples_in_range(const MarketData& data, std::size_t window,
                                                    const DateRange& range) {
    if (window < 1) throw ArgumentError("window must be >= 1");
    std::vector<SequenceSample> out;
    if (range.empty()) return out;
    const auto& cal = data.calendar();
    for (std::size_t i = 0; i < data.universe.m(); ++i) {
        for (std::size_t e = window - 1; e + kLabelHorizon < cal.size(); ++e) {
            if (!range.contains(cal[e + 1 - window]) || !range.contains(cal[e + kLabelHorizon])) continue;
            if (!data.labels.has(e, i) || !window_complete(data.features, i, e, window)) continue;
            out.push_back({i, e, data.labels.labels(e, i)});
        }
    }
    return out;
}

/// Chronological split with no window or label crossing a range boundary.
inline SampleSplit split_chronological(const MarketData& data, std::size_t window, const SplitRanges& ranges) {
    check_ranges(ranges);
    return {samples_in_range(data, window, ranges.train), samples_in_range(data, window, ranges.valid),
            samples_in_range(data, window, ranges.test)};
}

/// Scoring instances for every stock-day whose end date lies in `range` and whose
/// window is complete. Labels are not required; windows may start before the range.
inline std::vector<SequenceSample> scoring_samples(const MarketData& data, std::size_t window,
                                                   const DateRange& range) {
    std::vector<SequenceSample> out;
    const auto& cal = data.calendar();
    for (std::size_t e = 0; e < cal.size(); ++e) {
        if (!range.contains(cal[e])) continue;
        for (std::size_t i = 0; i < data.universe.m(); ++i) {
            if (!window_complete(data.features, i, e, window)) continue;
            const double y = data.labels.has(e, i) ? data.labels.labels(e, i) : kMissing;
            out.push_back({i, e, y});
        }
    }
    return out;
}

/// Splits the calendar into consecutive train/valid/test ranges by fraction.
inline SplitRanges split_by_fraction(const std::vector<Date>& cal, double train_frac, double valid_frac) {
    if (!(train_frac > 0.0) || valid_frac < 0.0 || train_frac + valid_frac > 1.0)
        throw ArgumentError("split fractions must satisfy 0 < train, 0 <= valid, train + valid <= 1");
    SplitRanges r;
    if (cal.empty()) return r;
    const auto n = cal.size();
    const auto n_train = std::max<std::size_t>(1, static_cast<std::size_t>(train_frac * static_cast<double>(n)));
    const auto n_valid = static_cast<std::size_t>(valid_frac * static_cast<double>(n));
    r.train = {cal.front(), cal[std::min(n, n_train) - 1]};
    if (n_valid > 0 && n_train < n) r.valid = {cal[n_train], cal[std::min(n, n_train + n_valid) - 1]};
    if (n_train + n_valid < n) r.test = {cal[n_train + n_valid], cal.back()};
    return r;
}

/// Normalizes with training-range statistics, computes labels and graphs.
inline MarketData prepare_market_data(const Panel& panel, const DateRange& stats_window, const GraphOptions& opt) {
    MarketData md;
    md.universe = Universe::from_panel(panel);
    md.features = normalize(panel, md.universe, stats_window);
    md.labels = compute_labels(panel, md.universe);
    md.graphs = build_graphs(panel, md.universe, opt);
    return md;
}

}  // namespace lsrigru
