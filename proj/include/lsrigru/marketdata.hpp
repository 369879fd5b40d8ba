#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lsrigru/csv.hpp"
#include "lsrigru/date.hpp"
#include "lsrigru/error.hpp"
#include "lsrigru/log.hpp"
#include "lsrigru/tensor.hpp"

namespace lsrigru {

/// One stock-day record.
struct StockBar {
    std::string stock_id;
    Date date;
    double open = 0.0;
    double close = 0.0;
    double high = 0.0;
    double low = 0.0;
    double volume = 0.0;
    double turnover = 0.0;
    std::string primary_industry;
    std::string secondary_industry;
};

/// Feature order used everywhere a per-node feature vector appears.
inline constexpr std::array<std::string_view, 6> kFeatureNames = {"open",   "close",  "high",
                                                                  "low",    "volume", "turnover"};
inline constexpr std::size_t kNumFeatures = kFeatureNames.size();

inline std::array<double, kNumFeatures> raw_features(const StockBar& b) {
    return {b.open, b.close, b.high, b.low, b.volume, b.turnover};
}

/// Bars grouped by stock (ascending id), each series sorted by date.
struct Panel {
    struct Series {
        std::string stock_id;
        std::vector<StockBar> bars;
    };
    std::vector<Series> series;

    /// Sorted union of all dates in the panel; this is the trading calendar.
    std::vector<Date> calendar() const {
        std::set<Date> all;
        for (const auto& s : series)
            for (const auto& b : s.bars) all.insert(b.date);
        return {all.begin(), all.end()};
    }

    std::size_t bar_count() const {
        std::size_t n = 0;
        for (const auto& s : series) n += s.bars.size();
        return n;
    }

    /// Builds a panel from loose bars: groups, sorts, rejects duplicate (stock, date) keys.
    static Panel from_bars(std::vector<StockBar> bars) {
        std::stable_sort(bars.begin(), bars.end(), [](const StockBar& a, const StockBar& b) {
            if (a.stock_id != b.stock_id) return a.stock_id < b.stock_id;
            return a.date < b.date;
        });
        Panel p;
        for (auto& b : bars) {
            if (p.series.empty() || p.series.back().stock_id != b.stock_id)
                p.series.push_back({b.stock_id, {}});
            auto& s = p.series.back();
            if (!s.bars.empty() && s.bars.back().date == b.date)
                throw DataError("duplicate key (" + b.stock_id + ", " + b.date.str() + ")");
            s.bars.push_back(std::move(b));
        }
        return p;
    }
};

/// Node layout over stocks and the two industry levels.
///
/// Nodes are ordered stocks first, then primary industries, then secondary
/// industries, so `d = m + n + n'`. Industry codes of each stock are kept as
/// strings so that a universe with an unknown code can still be represented
/// and rejected when a graph is built from it.
class Universe {
public:
    std::vector<std::string> stocks;
    std::vector<std::string> stock_primary;    // code per stock
    std::vector<std::string> stock_secondary;  // code per stock
    std::vector<std::string> primaries;
    std::vector<std::string> secondaries;
    std::vector<std::string> secondary_parent;  // primary code per secondary

    std::size_t m() const { return stocks.size(); }
    std::size_t n() const { return primaries.size(); }
    std::size_t n_prime() const { return secondaries.size(); }
    std::size_t d() const { return m() + n() + n_prime(); }

    std::size_t primary_node(std::size_t p) const { return m() + p; }
    std::size_t secondary_node(std::size_t s) const { return m() + n() + s; }

    enum class Kind { stock, primary, secondary };
    Kind kind(std::size_t node) const {
        if (node < m()) return Kind::stock;
        if (node < m() + n()) return Kind::primary;
        return Kind::secondary;
    }

    std::string node_name(std::size_t node) const {
        switch (kind(node)) {
            case Kind::stock: return stocks[node];
            case Kind::primary: return "industry1:" + primaries[node - m()];
            case Kind::secondary: return "industry2:" + secondaries[node - m() - n()];
        }
        return {};
    }

    std::optional<std::size_t> stock_index(std::string_view id) const { return find(stocks, id); }
    std::optional<std::size_t> primary_index(std::string_view code) const { return find(primaries, code); }
    std::optional<std::size_t> secondary_index(std::string_view code) const {
        return find(secondaries, code);
    }

    /// Derives the universe from a panel. Each stock must keep one industry pair
    /// and each secondary code must sit under exactly one primary code.
    static Universe from_panel(const Panel& panel) {
        Universe u;
        std::map<std::string, std::string> parent;
        std::set<std::string> prim;
        for (const auto& s : panel.series) {
            if (s.bars.empty()) continue;
            const auto& first = s.bars.front();
            for (const auto& b : s.bars) {
                if (b.primary_industry != first.primary_industry ||
                    b.secondary_industry != first.secondary_industry)
                    throw DataError("stock " + s.stock_id + " changes industry codes on " + b.date.str());
            }
            auto [it, inserted] = parent.emplace(first.secondary_industry, first.primary_industry);
            if (!inserted && it->second != first.primary_industry)
                throw DataError("secondary industry " + first.secondary_industry +
                                " maps to more than one primary industry (" + it->second + ", " +
                                first.primary_industry + ")");
            prim.insert(first.primary_industry);
            u.stocks.push_back(s.stock_id);
            u.stock_primary.push_back(first.primary_industry);
            u.stock_secondary.push_back(first.secondary_industry);
        }
        u.primaries.assign(prim.begin(), prim.end());
        for (const auto& [sec, pri] : parent) {
            u.secondaries.push_back(sec);
            u.secondary_parent.push_back(pri);
        }
        return u;
    }

private:
    static std::optional<std::size_t> find(const std::vector<std::string>& v, std::string_view key) {
        const auto it = std::find(v.begin(), v.end(), key);
        if (it == v.end()) return std::nullopt;
        return static_cast<std::size_t>(it - v.begin());
    }
};

/// Per-stock membership lists for every industry node, in node order.
inline std::vector<std::vector<std::size_t>> industry_constituents(const Universe& u) {
    std::vector<std::vector<std::size_t>> members(u.n() + u.n_prime());
    for (std::size_t i = 0; i < u.m(); ++i) {
        if (auto p = u.primary_index(u.stock_primary[i])) members[*p].push_back(i);
        if (auto s = u.secondary_index(u.stock_secondary[i])) members[u.n() + *s].push_back(i);
    }
    return members;
}

/// Per-(date, node) feature vectors of dimension F plus a presence mask.
struct FeaturePanel {
    std::vector<Date> dates;
    std::size_t nodes = 0;
    std::size_t features = kNumFeatures;
    std::vector<double> values;       // [date][node][feature]
    std::vector<std::uint8_t> present;  // [date][node]
    std::vector<std::string> warnings;

    FeaturePanel() = default;
    FeaturePanel(std::vector<Date> ds, std::size_t d, std::size_t f)
        : dates(std::move(ds)), nodes(d), features(f), values(dates.size() * d * f, 0.0),
          present(dates.size() * d, 0) {}

    std::span<double> at(std::size_t t, std::size_t node) {
        return {values.data() + (t * nodes + node) * features, features};
    }
    std::span<const double> at(std::size_t t, std::size_t node) const {
        return {values.data() + (t * nodes + node) * features, features};
    }
    bool is_present(std::size_t t, std::size_t node) const { return present[t * nodes + node] != 0; }

    /// d×F matrix of one day's node features.
    Matrix day(std::size_t t) const {
        Matrix out(nodes, features);
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(t * nodes * features),
                    nodes * features, out.data.begin());
        return out;
    }
};

/// Per-(date, node) raw price grid; NaN marks a missing stock-day.
/// Industry nodes carry the mean of their present constituents.
struct PriceGrid {
    std::vector<Date> dates;
    Matrix values;  // rows = dates, cols = nodes
};

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// Column index of `d` in `calendar`, which must be sorted.
inline std::optional<std::size_t> date_index(const std::vector<Date>& calendar, Date d) {
    const auto it = std::lower_bound(calendar.begin(), calendar.end(), d);
    if (it == calendar.end() || *it != d) return std::nullopt;
    return static_cast<std::size_t>(it - calendar.begin());
}

/// Raw price grid for one bar field (`open` or `close`) over all d nodes.
inline PriceGrid price_grid(const Panel& panel, const Universe& u, double StockBar::*field) {
    PriceGrid g{panel.calendar(), {}};
    g.values = Matrix(g.dates.size(), u.d(), kMissing);
    for (const auto& s : panel.series) {
        const auto i = u.stock_index(s.stock_id);
        if (!i) throw DataError("stock " + s.stock_id + " not in universe");
        for (const auto& b : s.bars) g.values(*date_index(g.dates, b.date), *i) = b.*field;
    }
    const auto members = industry_constituents(u);
    for (std::size_t t = 0; t < g.dates.size(); ++t) {
        for (std::size_t k = 0; k < members.size(); ++k) {
            double sum = 0.0;
            std::size_t count = 0;
            for (std::size_t i : members[k]) {
                const double v = g.values(t, i);
                if (std::isnan(v)) continue;
                sum += v;
                ++count;
            }
            if (count > 0) g.values(t, u.m() + k) = sum / static_cast<double>(count);
        }
    }
    return g;
}

/// Column names of an input CSV. Defaults are the canonical header names.
struct ColumnMap {
    std::string stock_id = "stock_id";
    std::string date = "date";
    std::string open = "open";
    std::string close = "close";
    std::string high = "high";
    std::string low = "low";
    std::string volume = "volume";
    std::string turnover = "turnover";
    std::string industry1 = "industry1";
    std::string industry2 = "industry2";
};

inline constexpr std::string_view kPanelHeader =
    "stock_id,date,open,close,high,low,volume,turnover,industry1,industry2";

/// Checks the per-bar invariants: positive prices, low ≤ open/close ≤ high, non-negative volume.
inline void validate_bar(const StockBar& b, std::size_t row) {
    const std::string where = " (" + b.stock_id + ", " + b.date.str() + ", row " + std::to_string(row) + ")";
    for (double p : {b.open, b.close, b.high, b.low})
        if (!(p > 0.0) || !std::isfinite(p)) throw ValidationError("non-positive price" + where);
    if (!(b.volume >= 0.0) || !(b.turnover >= 0.0))
        throw ValidationError("negative volume or turnover" + where);
    if (b.low > b.open || b.open > b.high || b.low > b.close || b.close > b.high)
        throw ValidationError("OHLC ordering violated" + where);
}

/// Parses CSV text in the panel schema. Rows are numbered from 1 at the header.
inline Panel ingest_csv_text(std::string_view text, const ColumnMap& schema = {}) {
    std::vector<std::string_view> lines;
    {
        std::size_t start = 0;
        while (start <= text.size()) {
            auto pos = text.find('\n', start);
            if (pos == std::string_view::npos) pos = text.size();
            auto line = text.substr(start, pos - start);
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            lines.push_back(line);
            start = pos + 1;
        }
    }
    while (!lines.empty() && csv::trim(lines.back()).empty()) lines.pop_back();
    if (lines.empty()) throw ParseError("empty input, header expected", 1);

    const auto header = csv::split(lines[0]);
    auto column = [&](const std::string& name) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (csv::trim(header[i]) == name) return i;
        throw ParseError("missing column '" + name + "'", 1);
    };
    const std::array<std::size_t, 10> idx = {
        column(schema.stock_id), column(schema.date),   column(schema.open),
        column(schema.close),    column(schema.high),   column(schema.low),
        column(schema.volume),   column(schema.turnover), column(schema.industry1),
        column(schema.industry2)};

    std::vector<StockBar> bars;
    bars.reserve(lines.size());
    std::map<std::pair<std::string, int>, std::size_t> seen;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const std::size_t row = r + 1;
        if (csv::trim(lines[r]).empty()) continue;
        const auto f = csv::split(lines[r]);
        if (f.size() != header.size())
            throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                                 std::to_string(f.size()),
                             row);
        StockBar b;
        b.stock_id = std::string(csv::trim(f[idx[0]]));
        if (b.stock_id.empty()) throw ParseError("empty stock_id", row);
        try {
            b.date = Date::parse(csv::trim(f[idx[1]]));
        } catch (const ParseError& e) {
            throw ParseError(e.what(), row);
        }
        b.open = csv::parse_double(f[idx[2]], row, "open");
        b.close = csv::parse_double(f[idx[3]], row, "close");
        b.high = csv::parse_double(f[idx[4]], row, "high");
        b.low = csv::parse_double(f[idx[5]], row, "low");
        b.volume = csv::parse_double(f[idx[6]], row, "volume");
        b.turnover = csv::parse_double(f[idx[7]], row, "turnover");
        b.primary_industry = std::string(csv::trim(f[idx[8]]));
        b.secondary_industry = std::string(csv::trim(f[idx[9]]));
        if (b.primary_industry.empty() || b.secondary_industry.empty())
            throw ParseError("empty industry code", row);
        validate_bar(b, row);
        auto [it, inserted] = seen.emplace(std::make_pair(b.stock_id, b.date.days), row);
        if (!inserted)
            throw DataError("duplicate key (" + b.stock_id + ", " + b.date.str() + ") at rows " +
                            std::to_string(it->second) + " and " + std::to_string(row));
        bars.push_back(std::move(b));
    }
    return Panel::from_bars(std::move(bars));
}

inline Panel ingest_csv(const std::string& path, const ColumnMap& schema = {}) {
    const auto lines = csv::read_lines(path);
    std::string text;
    for (const auto& l : lines) {
        text += l;
        text += '\n';
    }
    return ingest_csv_text(text, schema);
}

/// Serializes a panel in the input schema; numbers use shortest round-trip form.
inline std::string write_panel_csv(const Panel& panel) {
    std::string out(kPanelHeader);
    out += '\n';
    for (const auto& s : panel.series) {
        for (const auto& b : s.bars) {
            out += b.stock_id + ',' + b.date.str() + ',' + csv::fmt(b.open) + ',' + csv::fmt(b.close) +
                   ',' + csv::fmt(b.high) + ',' + csv::fmt(b.low) + ',' + csv::fmt(b.volume) + ',' +
                   csv::fmt(b.turnover) + ',' + b.primary_industry + ',' + b.secondary_industry + '\n';
        }
    }
    return out;
}

inline constexpr double kOutlierClip = 5.0;

/// Z-scores every stock feature with statistics from `stats_window` only, clips at ±5,
/// then fills industry nodes with the mean of their present constituents.
inline FeaturePanel normalize(const Panel& panel, const Universe& u, const DateRange& stats_window) {
    FeaturePanel fp(panel.calendar(), u.d(), kNumFeatures);
    for (const auto& s : panel.series) {
        const auto i = u.stock_index(s.stock_id);
        if (!i) throw DataError("stock " + s.stock_id + " not in universe");

        std::array<double, kNumFeatures> mean{}, sd{};
        std::size_t count = 0;
        for (const auto& b : s.bars) {
            if (!stats_window.contains(b.date)) continue;
            const auto x = raw_features(b);
            for (std::size_t f = 0; f < kNumFeatures; ++f) mean[f] += x[f];
            ++count;
        }
        if (count > 0)
            for (auto& v : mean) v /= static_cast<double>(count);
        for (const auto& b : s.bars) {
            if (!stats_window.contains(b.date)) continue;
            const auto x = raw_features(b);
            for (std::size_t f = 0; f < kNumFeatures; ++f) sd[f] += (x[f] - mean[f]) * (x[f] - mean[f]);
        }
        for (std::size_t f = 0; f < kNumFeatures; ++f) {
            sd[f] = count > 0 ? std::sqrt(sd[f] / static_cast<double>(count)) : 0.0;
            if (!(sd[f] > 0.0)) {
                std::string msg = "zero std for feature " + std::string(kFeatureNames[f]) + " of " +
                                  s.stock_id + "; mapped to 0";
                log::debug(msg);
                fp.warnings.push_back(std::move(msg));
            }
        }

        for (const auto& b : s.bars) {
            const std::size_t t = *date_index(fp.dates, b.date);
            const auto x = raw_features(b);
            auto out = fp.at(t, *i);
            for (std::size_t f = 0; f < kNumFeatures; ++f) {
                const double z = sd[f] > 0.0 ? (x[f] - mean[f]) / sd[f] : 0.0;
                out[f] = std::clamp(z, -kOutlierClip, kOutlierClip);
            }
            fp.present[t * fp.nodes + *i] = 1;
        }
    }

    const auto members = industry_constituents(u);
    for (std::size_t t = 0; t < fp.dates.size(); ++t) {
        for (std::size_t k = 0; k < members.size(); ++k) {
            const std::size_t node = u.m() + k;
            auto out = fp.at(t, node);
            std::size_t count = 0;
            for (std::size_t i : members[k]) {
                if (!fp.is_present(t, i)) continue;
                const auto x = fp.at(t, i);
                for (std::size_t f = 0; f < kNumFeatures; ++f) out[f] += x[f];
                ++count;
            }
            if (count == 0) continue;
            for (auto& v : out) v /= static_cast<double>(count);
            fp.present[t * fp.nodes + node] = 1;
        }
    }
    return fp;
}

/// Serializes a feature panel: one row per present (node, date).
inline std::string write_feature_csv(const FeaturePanel& fp, const Universe& u) {
    std::string out = "node_id,date";
    for (auto name : kFeatureNames) out += "," + std::string(name);
    out += '\n';
    for (std::size_t node = 0; node < fp.nodes; ++node) {
        const std::string name = u.node_name(node);
        for (std::size_t t = 0; t < fp.dates.size(); ++t) {
            if (!fp.is_present(t, node)) continue;
            out += name + ',' + fp.dates[t].str();
            for (double v : fp.at(t, node)) out += ',' + csv::fmt(v);
            out += '\n';
        }
    }
    return out;
}

/// Cross-sectional percentile of each value: rank 0 → 0, rank n−1 → 1, ties share
/// their mean rank position, a single value maps to 0.5.
inline Vec percentile_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    Vec out(n, 0.5);
    if (n < 2) return out;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double mean_rank = 0.5 * static_cast<double>(i + j);
        for (std::size_t k = i; k <= j; ++k) out[order[k]] = mean_rank / static_cast<double>(n - 1);
        i = j + 1;
    }
    return out;
}

/// Trading days between the scoring close and the label's exit open.
inline constexpr std::size_t kLabelHorizon = 2;

/// Label and raw target return per (date, stock); NaN where undefined.
struct LabelPanel {
    std::vector<Date> dates;
    Matrix labels;   // rows = dates, cols = stocks
    Matrix returns;  // open-to-open return realized from t+1 open to t+2 open

    bool has(std::size_t t, std::size_t stock) const { return !std::isnan(labels(t, stock)); }
};

/// Labels at date t: percentile rank of open_{t+2}/open_{t+1} − 1 among the stocks
/// present on t, t+1 and t+2.
inline LabelPanel compute_labels(const Panel& panel, const Universe& u) {
    for (const auto& s : panel.series)
        if (s.bars.size() < 2) throw DataError("stock " + s.stock_id + " has fewer than 2 dates");
    const auto opens = price_grid(panel, u, &StockBar::open);
    const std::size_t T = opens.dates.size();
    LabelPanel lp{opens.dates, Matrix(T, u.m(), kMissing), Matrix(T, u.m(), kMissing)};
    for (std::size_t t = 0; t + kLabelHorizon < T; ++t) {
        std::vector<std::size_t> who;
        Vec rets;
        for (std::size_t i = 0; i < u.m(); ++i) {
            const double o0 = opens.values(t, i);
            const double o1 = opens.values(t + 1, i);
            const double o2 = opens.values(t + 2, i);
            if (std::isnan(o0) || std::isnan(o1) || std::isnan(o2)) continue;
            who.push_back(i);
            rets.push_back(o2 / o1 - 1.0);
        }
        const auto pct = percentile_ranks(rets);
        for (std::size_t k = 0; k < who.size(); ++k) {
            lp.labels(t, who[k]) = pct[k];
            lp.returns(t, who[k]) = rets[k];
        }
    }
    return lp;
}

}  // namespace lsrigru
