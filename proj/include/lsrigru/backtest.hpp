#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lsrigru/csv.hpp"
#include "lsrigru/date.hpp"
#include "lsrigru/error.hpp"
#include "lsrigru/log.hpp"
#include "lsrigru/marketdata.hpp"

namespace lsrigru {

/// Model score per (date, stock), computed at that date's close.
struct ScoreTable {
    std::map<Date, std::map<std::string, double>> by_date;

    void add(Date d, const std::string& stock, double score) { by_date[d][stock] = score; }
    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& [d, m] : by_date) n += m.size();
        return n;
    }
};

/// Open prices per stock per date.
struct OpenPrices {
    std::vector<Date> calendar;
    std::map<std::string, std::map<Date, double>> by_stock;

    static OpenPrices from_panel(const Panel& panel) {
        OpenPrices p;
        p.calendar = panel.calendar();
        for (const auto& s : panel.series) {
            auto& m = p.by_stock[s.stock_id];
            for (const auto& b : s.bars) m[b.date] = b.open;
        }
        return p;
    }

    std::optional<double> open(const std::string& stock, Date d) const {
        const auto it = by_stock.find(stock);
        if (it == by_stock.end()) return std::nullopt;
        const auto jt = it->second.find(d);
        if (jt == it->second.end()) return std::nullopt;
        return jt->second;
    }
};

/// One rebalance: scores at `signal_date` close, buy at `trade_date` open, value at `exit_date` open.
struct LedgerDay {
    Date signal_date;
    Date trade_date;
    Date exit_date;
    std::vector<std::string> holdings;
    std::vector<std::string> carried;  // subset of holdings also held the previous day
    double ret = 0.0;
    double benchmark = 0.0;
    double value = 1.0;
};

struct BacktestLedger {
    std::vector<LedgerDay> days;
    std::vector<std::string> warnings;

    std::vector<double> returns() const {
        std::vector<double> r;
        for (const auto& d : days) r.push_back(d.ret);
        return r;
    }
    std::vector<double> benchmark_returns() const {
        std::vector<double> r;
        for (const auto& d : days) r.push_back(d.benchmark);
        return r;
    }
    /// Portfolio values with the initial 1.0 prepended.
    std::vector<double> values() const {
        std::vector<double> v{1.0};
        for (const auto& d : days) v.push_back(d.value);
        return v;
    }
};

/// Top-k by score descending, ties broken by ascending stock id.
inline std::vector<std::string> select_top_k(const std::map<std::string, double>& scores, std::size_t k) {
    std::vector<std::pair<std::string, double>> v(scores.begin(), scores.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(k, v.size()); ++i) out.push_back(v[i].first);
    return out;
}

/// Buy-hold-sell simulation with daily top-k equal-weight rebalancing and no costs.
///
/// Names re-selected on consecutive days are carried rather than re-bought; with
/// equal weights and no costs this changes only the `carried` bookkeeping. The
/// benchmark defaults to the equal-weight open-to-open return of every stock with
/// both opens; `benchmark` overrides it by trade date.
inline BacktestLedger run_bhs(const ScoreTable& scores, const OpenPrices& prices, std::size_t k,
                              const std::map<Date, double>* benchmark = nullptr) {
    if (k < 1) throw ArgumentError("top-k needs k >= 1");
    BacktestLedger ledger;
    const auto& cal = prices.calendar;
    std::set<std::string> previous;
    double value = 1.0;
    for (const auto& [signal, day_scores] : scores.by_date) {
        const auto ti = date_index(cal, signal);
        if (!ti) {
            ledger.warnings.push_back("scores on " + signal.str() + " which is not a trading day; skipped");
            continue;
        }
        if (*ti + 2 >= cal.size()) continue;
        const Date entry = cal[*ti + 1], exit = cal[*ti + 2];

        std::map<std::string, double> tradable;
        for (const auto& [stock, s] : day_scores)
            if (prices.open(stock, entry)) tradable.emplace(stock, s);
        if (tradable.empty()) {
            ledger.warnings.push_back("no tradable scored stocks on " + signal.str() + "; skipped");
            continue;
        }
        if (tradable.size() < k)
            ledger.warnings.push_back("only " + std::to_string(tradable.size()) + " scored stocks on " +
                                      signal.str() + "; holding all");

        LedgerDay day;
        day.signal_date = signal;
        day.trade_date = entry;
        day.exit_date = exit;
        day.holdings = select_top_k(tradable, k);
        double acc = 0.0;
        for (const auto& stock : day.holdings) {
            if (previous.contains(stock)) day.carried.push_back(stock);
            const double o1 = *prices.open(stock, entry);
            const auto o2 = prices.open(stock, exit);
            if (!o2) {
                ledger.warnings.push_back("no open for " + stock + " on " + exit.str() +
                                          "; position closed at last available open");
                continue;
            }
            acc += *o2 / o1 - 1.0;
        }
        day.ret = acc / static_cast<double>(day.holdings.size());

        if (benchmark) {
            const auto it = benchmark->find(entry);
            if (it == benchmark->end()) throw DataError("benchmark has no return for " + entry.str());
            day.benchmark = it->second;
        } else {
            double bsum = 0.0;
            std::size_t bn = 0;
            for (const auto& [stock, opens] : prices.by_stock) {
                const auto a = opens.find(entry), b = opens.find(exit);
                if (a == opens.end() || b == opens.end()) continue;
                bsum += b->second / a->second - 1.0;
                ++bn;
            }
            day.benchmark = bn ? bsum / static_cast<double>(bn) : 0.0;
        }
        value *= 1.0 + day.ret;
        day.value = value;
        previous = {day.holdings.begin(), day.holdings.end()};
        ledger.days.push_back(std::move(day));
    }
    for (const auto& w : ledger.warnings) log::warn(w);
    return ledger;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Annualized metrics. A ratio whose denominator is zero is left undefined.
struct MetricReport {
    double arr = 0.0;
    double avol = 0.0;
    double mdd = 0.0;
    std::optional<double> asr;
    std::optional<double> cr;
    std::optional<double> ir;
};

inline double mean(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v;
    return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

/// Sample (n−1) standard deviation; exactly 0 for a constant series.
inline double sample_std(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); })) return 0.0;
    const double mu = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - mu) * (v - mu);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

/// Largest peak-to-trough decline as a (non-positive) fraction of the running peak.
inline double max_drawdown(std::span<const double> values) {
    double peak = -std::numeric_limits<double>::infinity();
    double mdd = 0.0;
    for (double v : values) {
        peak = std::max(peak, v);
        mdd = std::min(mdd, (v - peak) / peak);
    }
    return mdd;
}

inline MetricReport compute_metrics(const BacktestLedger& ledger, std::size_t trading_days_per_year = 252) {
    if (ledger.days.size() < 2) throw ArgumentError("metrics need at least 2 ledger days");
    const auto r = ledger.returns();
    const auto b = ledger.benchmark_returns();
    const double ann = static_cast<double>(trading_days_per_year);
    MetricReport m;
    m.arr = mean(r) * ann;
    m.avol = sample_std(r) * std::sqrt(ann);
    m.mdd = max_drawdown(ledger.values());
    if (m.avol > 0.0) m.asr = m.arr / m.avol;
    if (m.mdd < 0.0) m.cr = m.arr / std::abs(m.mdd);
    std::vector<double> excess(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) excess[i] = r[i] - b[i];
    const double te = sample_std(excess);
    if (te > 0.0) m.ir = mean(excess) / te * std::sqrt(ann);
    return m;
}

// ---------------------------------------------------------------------------
// CSV formats
// ---------------------------------------------------------------------------

inline std::string join(const std::vector<std::string>& v, char sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += v[i];
    }
    return out;
}

inline std::vector<std::string> split_list(std::string_view s, char sep) {
    std::vector<std::string> out;
    if (s.empty()) return out;
    for (auto p : csv::split(s, sep)) out.emplace_back(p);
    return out;
}

inline std::string write_scores_csv(const ScoreTable& t) {
    std::string out = "date,stock_id,score\n";
    for (const auto& [d, m] : t.by_date)
        for (const auto& [s, v] : m) out += d.str() + ',' + s + ',' + csv::fmt(v) + '\n';
    return out;
}

inline ScoreTable read_scores_csv(const std::string& path) {
    const auto lines = csv::read_lines(path);
    if (lines.empty() || csv::trim(lines[0]) != "date,stock_id,score")
        throw ParseError("scores file must start with header date,stock_id,score", 1);
    ScoreTable t;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (csv::trim(lines[r]).empty()) continue;
        const auto f = csv::split(lines[r]);
        if (f.size() != 3) throw ParseError("expected 3 fields", r + 1);
        Date d;
        try {
            d = Date::parse(csv::trim(f[0]));
        } catch (const ParseError& e) {
            throw ParseError(e.what(), r + 1);
        }
        t.add(d, std::string(csv::trim(f[1])), csv::parse_double(f[2], r + 1, "score"));
    }
    return t;
}

/// Benchmark file `date,return`, keyed by trade date.
inline std::map<Date, double> read_benchmark_csv(const std::string& path) {
    const auto lines = csv::read_lines(path);
    if (lines.empty()) throw ParseError("empty benchmark file", 1);
    std::map<Date, double> out;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (csv::trim(lines[r]).empty()) continue;
        const auto f = csv::split(lines[r]);
        if (f.size() != 2) throw ParseError("expected date,return", r + 1);
        try {
            out[Date::parse(csv::trim(f[0]))] = csv::parse_double(f[1], r + 1, "return");
        } catch (const ParseError& e) {
            throw ParseError(e.what(), r + 1);
        }
    }
    return out;
}

inline constexpr std::string_view kLedgerHeader = "signal_date,trade_date,exit_date,ret,benchmark,value,holdings,carried";

inline std::string write_ledger_csv(const BacktestLedger& l) {
    std::string out(kLedgerHeader);
    out += '\n';
    for (const auto& d : l.days)
        out += d.signal_date.str() + ',' + d.trade_date.str() + ',' + d.exit_date.str() + ',' + csv::fmt(d.ret) + ',' +
               csv::fmt(d.benchmark) + ',' + csv::fmt(d.value) + ',' + join(d.holdings, ';') + ',' +
               join(d.carried, ';') + '\n';
    return out;
}

inline BacktestLedger read_ledger_csv(const std::string& path) {
    const auto lines = csv::read_lines(path);
    if (lines.empty() || csv::trim(lines[0]) != kLedgerHeader) throw ParseError("bad ledger header", 1);
    BacktestLedger l;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (csv::trim(lines[r]).empty()) continue;
        const auto f = csv::split(lines[r]);
        if (f.size() != 8) throw ParseError("expected 8 ledger fields", r + 1);
        LedgerDay d;
        d.signal_date = Date::parse(f[0]);
        d.trade_date = Date::parse(f[1]);
        d.exit_date = Date::parse(f[2]);
        d.ret = csv::parse_double(f[3], r + 1, "ret");
        d.benchmark = csv::parse_double(f[4], r + 1, "benchmark");
        d.value = csv::parse_double(f[5], r + 1, "value");
        d.holdings = split_list(f[6], ';');
        d.carried = split_list(f[7], ';');
        l.days.push_back(std::move(d));
    }
    return l;
}

inline std::string format_metric(const std::optional<double>& v) { return v ? csv::fmt(*v) : "undefined"; }

inline std::string write_metrics_csv(const MetricReport& m) {
    std::string out = "metric,value\n";
    out += "ARR," + csv::fmt(m.arr) + '\n';
    out += "AVoL," + csv::fmt(m.avol) + '\n';
    out += "MDD," + csv::fmt(m.mdd) + '\n';
    out += "ASR," + format_metric(m.asr) + '\n';
    out += "CR," + format_metric(m.cr) + '\n';
    out += "IR," + format_metric(m.ir) + '\n';
    return out;
}

inline MetricReport read_metrics_csv(const std::string& path) {
    const auto lines = csv::read_lines(path);
    MetricReport m;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (csv::trim(lines[r]).empty()) continue;
        const auto f = csv::split(lines[r]);
        if (f.size() != 2) throw ParseError("expected metric,value", r + 1);
        const auto key = csv::trim(f[0]);
        std::optional<double> v;
        if (csv::trim(f[1]) != "undefined") v = csv::parse_double(f[1], r + 1, key);
        if (key == "ARR") m.arr = v.value_or(0.0);
        else if (key == "AVoL") m.avol = v.value_or(0.0);
        else if (key == "MDD") m.mdd = v.value_or(0.0);
        else if (key == "ASR") m.asr = v;
        else if (key == "CR") m.cr = v;
        else if (key == "IR") m.ir = v;
        else throw ParseError("unknown metric '" + std::string(key) + "'", r + 1);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct EquityPoint {
    Date date;
    double value = 1.0;
    double benchmark = 1.0;
    double excess = 0.0;           // value / benchmark − 1
    double excess_drawdown = 0.0;  // ≤ 0
};

/// Equity, benchmark and excess curves dated by each rebalance's exit open.
inline std::vector<EquityPoint> equity_curve(const BacktestLedger& l) {
    std::vector<EquityPoint> out;
    double bench = 1.0, peak = 1.0;
    for (const auto& d : l.days) {
        bench *= 1.0 + d.benchmark;
        const double ratio = d.value / bench;
        peak = std::max(peak, ratio);
        out.push_back({d.exit_date, d.value, bench, ratio - 1.0, std::min(0.0, ratio / peak - 1.0)});
    }
    return out;
}

inline std::string write_equity_csv(const std::vector<EquityPoint>& curve) {
    std::string out = "date,portfolio_value,benchmark_cumulative,excess_cumulative,excess_drawdown\n";
    for (const auto& p : curve)
        out += p.date.str() + ',' + csv::fmt(p.value) + ',' + csv::fmt(p.benchmark) + ',' + csv::fmt(p.excess) + ',' +
               csv::fmt(p.excess_drawdown) + '\n';
    return out;
}

inline std::string write_holdings_csv(const BacktestLedger& l) {
    std::string out = "signal_date,trade_date,stock_id,carried\n";
    for (const auto& d : l.days)
        for (const auto& s : d.holdings) {
            const bool carried = std::find(d.carried.begin(), d.carried.end(), s) != d.carried.end();
            out += d.signal_date.str() + ',' + d.trade_date.str() + ',' + s + ',' + (carried ? "1" : "0") + '\n';
        }
    return out;
}

/// Minimal SVG line chart of portfolio value and benchmark.
inline std::string equity_svg(const std::vector<EquityPoint>& curve) {
    constexpr double W = 800, H = 400, pad = 40;
    double lo = 1.0, hi = 1.0;
    for (const auto& p : curve) {
        lo = std::min({lo, p.value, p.benchmark});
        hi = std::max({hi, p.value, p.benchmark});
    }
    if (hi == lo) hi = lo + 1.0;
    const double n = std::max<double>(1.0, static_cast<double>(curve.size()) - 1.0);
    auto line = [&](auto get, const char* colour) {
        std::string pts;
        for (std::size_t i = 0; i < curve.size(); ++i) {
            const double x = pad + (W - 2 * pad) * static_cast<double>(i) / n;
            const double y = H - pad - (H - 2 * pad) * (get(curve[i]) - lo) / (hi - lo);
            pts += csv::fmt(x) + ',' + csv::fmt(y) + ' ';
        }
        return "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" points=\"" + pts + "\"/>\n";
    };
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"400\">\n";
    svg += line([](const EquityPoint& p) { return p.value; }, "red");
    svg += line([](const EquityPoint& p) { return p.benchmark; }, "blue");
    svg += "</svg>\n";
    return svg;
}

/// Writes equity_curve.csv, metrics.csv, holdings.csv (and equity_curve.svg when `plot`).
inline std::vector<std::string> report(const BacktestLedger& ledger, const MetricReport& metrics,
                                       const std::string& out_dir, bool plot = false) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory", out_dir);
    const auto base = std::filesystem::path(out_dir);
    std::vector<std::string> written;
    auto put = [&](const std::string& name, const std::string& body) {
        const auto p = (base / name).string();
        csv::write_file(p, body);
        written.push_back(p);
    };
    const auto curve = equity_curve(ledger);
    put("equity_curve.csv", write_equity_csv(curve));
    put("metrics.csv", write_metrics_csv(metrics));
    put("holdings.csv", write_holdings_csv(ledger));
    if (plot) put("equity_curve.svg", equity_svg(curve));
    return written;
}

}  // namespace lsrigru
