#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>

#include "lsrigru/marketdata.hpp"

namespace lsrigru {

/// Volatilities of the synthetic return components (daily, log scale).
///
/// Each stock's open-to-open log return is the sum of a market factor, its
/// primary-industry factor, its secondary-industry factor and idiosyncratic
/// noise. The secondary factor is AR(1) with `secondary_persistence`, so the
/// industry average carries a forecastable component that a single noisy
/// stock series reveals only weakly. Closes realise `intraday_share` of the
/// day's move.
///
/// With `deviation_vol` > 0 each stock's log price also carries an AR(1)
/// deviation from its industry path (stationary std `deviation_vol`, persistence
/// `deviation_persistence`). The gap to the peers then forecasts a reversion.
struct SynthOptions {
    double market_vol = 0.004;
    double primary_vol = 0.004;
    double secondary_vol = 0.006;
    double secondary_persistence = 0.6;
    double idio_vol = 0.015;
    double intraday_share = 0.6;
    double deviation_vol = 0.0;
    double deviation_persistence = 0.7;
    Date start = Date::from_ymd(2020, 1, 1);
};

/// Generates a deterministic desk-scale universe: m stocks over n primary and n'
/// secondary industries, `days` weekdays of bars.
inline std::pair<Panel, Universe> synth_universe(std::size_t m, std::size_t n, std::size_t n_prime,
                                                 std::size_t days, std::uint64_t seed,
                                                 const SynthOptions& opt = {}) {
    if (n < 1) throw ArgumentError("synth: need at least one primary industry");
    if (n_prime < n) throw ArgumentError("synth: n' must be >= n");
    if (m < n_prime) throw ArgumentError("synth: m must be >= n'");
    if (days < 20) throw ArgumentError("synth: days must be >= 20");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    auto pad = [](std::size_t v, int width) {
        std::string s = std::to_string(v);
        return std::string(static_cast<std::size_t>(width) - std::min<std::size_t>(s.size(), width), '0') + s;
    };
    // Secondary s sits under primary s % n; stock i under secondary i % n'.
    std::vector<std::string> primary_code(n), secondary_code(n_prime);
    std::vector<std::size_t> parent(n_prime);
    for (std::size_t p = 0; p < n; ++p) primary_code[p] = "P" + pad(p, 2);
    for (std::size_t s = 0; s < n_prime; ++s) {
        parent[s] = s % n;
        secondary_code[s] = primary_code[parent[s]] + "S" + pad(s, 2);
    }

    std::vector<Date> dates;
    for (Date d = opt.start; dates.size() < days; d.days += 1)
        if (d.iso_weekday_index() < 5) dates.push_back(d);

    std::vector<double> open(m);
    for (auto& o : open) o = 10.0 + 40.0 * unit(rng);
    std::vector<double> sec_state(n_prime, 0.0);
    const double innovation = opt.secondary_vol * std::sqrt(1.0 - opt.secondary_persistence * opt.secondary_persistence);
    std::vector<double> deviation(m, 0.0);
    const double dev_innovation =
        opt.deviation_vol * std::sqrt(1.0 - opt.deviation_persistence * opt.deviation_persistence);

    std::vector<StockBar> bars;
    bars.reserve(m * days);
    for (std::size_t t = 0; t < days; ++t) {
        const double market = opt.market_vol * gauss(rng);
        std::vector<double> prim(n);
        for (auto& p : prim) p = opt.primary_vol * gauss(rng);
        for (auto& g : sec_state) g = opt.secondary_persistence * g + innovation * gauss(rng);
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t s = i % n_prime;
            double r = market + prim[parent[s]] + sec_state[s] + opt.idio_vol * gauss(rng);
            if (opt.deviation_vol > 0.0) {
                const double next = opt.deviation_persistence * deviation[i] + dev_innovation * gauss(rng);
                r += next - deviation[i];
                deviation[i] = next;
            }
            StockBar b;
            b.stock_id = "S" + pad(i, 3);
            b.date = dates[t];
            b.open = open[i];
            b.close = open[i] * std::exp(opt.intraday_share * r + 0.002 * gauss(rng));
            b.high = std::max(b.open, b.close) * std::exp(0.003 * std::abs(gauss(rng)));
            b.low = std::min(b.open, b.close) * std::exp(-0.003 * std::abs(gauss(rng)));
            b.volume = std::round(1e6 * std::exp(0.3 * gauss(rng)));
            b.turnover = b.volume * 0.5 * (b.open + b.close);
            b.primary_industry = primary_code[parent[s]];
            b.secondary_industry = secondary_code[s];
            bars.push_back(std::move(b));
            open[i] *= std::exp(r);
        }
    }
    Panel panel = Panel::from_bars(std::move(bars));
    Universe universe = Universe::from_panel(panel);
    return {std::move(panel), std::move(universe)};
}

}  // namespace lsrigru
