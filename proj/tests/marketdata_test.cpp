#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "test_support.hpp"

namespace lsrigru {
namespace {

using testing::bar;

constexpr const char* kHeader = "stock_id,date,open,close,high,low,volume,turnover,industry1,industry2\n";

TEST(IngestCsv, SortsBarsByDate) {
    const std::string text = std::string(kHeader) +
                             "A,2024-01-03,10,11,12,9,100,1000,P0,P0S0\n"
                             "A,2024-01-01,10,11,12,9,100,1000,P0,P0S0\n"
                             "A,2024-01-02,10,11,12,9,100,1000,P0,P0S0\n";
    const Panel p = ingest_csv_text(text);
    ASSERT_EQ(p.series.size(), 1u);
    ASSERT_EQ(p.series[0].bars.size(), 3u);
    EXPECT_EQ(p.series[0].bars[0].date.str(), "2024-01-01");
    EXPECT_EQ(p.series[0].bars[1].date.str(), "2024-01-02");
    EXPECT_EQ(p.series[0].bars[2].date.str(), "2024-01-03");
}

TEST(IngestCsv, RejectsNegativeOpen) {
    const std::string text = std::string(kHeader) + "A,2024-01-01,-1,11,12,9,100,1000,P0,P0S0\n";
    EXPECT_THROW(ingest_csv_text(text), ValidationError);
}

TEST(IngestCsv, RejectsOhlcOrdering) {
    const std::string text = std::string(kHeader) + "A,2024-01-01,13,11,12,9,100,1000,P0,P0S0\n";
    EXPECT_THROW(ingest_csv_text(text), ValidationError);
}

TEST(IngestCsv, DuplicateKeyNamesTheKey) {
    const std::string text = std::string(kHeader) +
                             "A,2024-01-01,10,11,12,9,100,1000,P0,P0S0\n"
                             "A,2024-01-01,10,11,12,9,100,1000,P0,P0S0\n";
    try {
        ingest_csv_text(text);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("(A, 2024-01-01)"), std::string::npos) << e.what();
    }
}

TEST(IngestCsv, MalformedRowReportsRowNumber) {
    const std::string text = std::string(kHeader) +
                             "A,2024-01-01,10,11,12,9,100,1000,P0,P0S0\n"
                             "A,2024-01-02,10,eleven,12,9,100,1000,P0,P0S0\n";
    try {
        ingest_csv_text(text);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.row(), 3u);
    }
    EXPECT_THROW(ingest_csv_text(std::string(kHeader) + "A,2024-13-01,10,11,12,9,100,1000,P0,P0S0\n"), ParseError);
    EXPECT_THROW(ingest_csv_text(std::string(kHeader) + "A,2024-01-01,10,11\n"), ParseError);
}

TEST(IngestCsv, CustomColumnMapAndReorderedColumns) {
    ColumnMap schema;
    schema.stock_id = "ticker";
    const std::string text =
        "date,ticker,open,close,high,low,volume,turnover,industry1,industry2\n"
        "2024-01-01,A,10,11,12,9,100,1000,P0,P0S0\n";
    const Panel p = ingest_csv_text(text, schema);
    ASSERT_EQ(p.series.size(), 1u);
    EXPECT_EQ(p.series[0].stock_id, "A");
}

TEST(IngestCsv, WriteThenIngestIsIdentity) {
    auto [panel, u] = synth_universe(6, 2, 3, 25, 3);
    const auto text = write_panel_csv(panel);
    EXPECT_EQ(write_panel_csv(ingest_csv_text(text)), text);
}

TEST(Universe, SecondaryUnderTwoPrimariesIsRejected) {
    std::vector<StockBar> bars = {bar("A", "2024-01-01", 10, 10, "P0", "S"), bar("B", "2024-01-01", 10, 10, "P1", "S")};
    EXPECT_THROW(Universe::from_panel(Panel::from_bars(bars)), DataError);
}

TEST(Universe, NodeOrderingIsStocksPrimariesSecondaries) {
    auto [panel, u] = synth_universe(12, 2, 4, 20, 1);
    EXPECT_EQ(u.d(), 18u);
    EXPECT_EQ(u.kind(11), Universe::Kind::stock);
    EXPECT_EQ(u.kind(12), Universe::Kind::primary);
    EXPECT_EQ(u.kind(13), Universe::Kind::primary);
    EXPECT_EQ(u.kind(14), Universe::Kind::secondary);
    EXPECT_EQ(u.kind(17), Universe::Kind::secondary);
}

TEST(Normalize, ConstantVolumeMapsToZero) {
    std::vector<StockBar> bars = {bar("A", "2024-01-01", 10, 10), bar("A", "2024-01-02", 20, 20),
                                  bar("A", "2024-01-03", 30, 30)};
    const Panel p = Panel::from_bars(bars);
    const auto u = Universe::from_panel(p);
    const auto fp = normalize(p, u, {Date::parse("2024-01-01"), Date::parse("2024-01-03")});
    for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(fp.at(t, 0)[4], 0.0);
    EXPECT_FALSE(fp.warnings.empty());
}

TEST(Normalize, ZScoresWithPopulationStd) {
    std::vector<StockBar> bars = {bar("A", "2024-01-01", 10, 10), bar("A", "2024-01-02", 20, 20),
                                  bar("A", "2024-01-03", 30, 30)};
    const Panel p = Panel::from_bars(bars);
    const auto u = Universe::from_panel(p);
    const auto fp = normalize(p, u, {Date::parse("2024-01-01"), Date::parse("2024-01-03")});
    // mean 20, population std sqrt(200/3) = 8.1650
    EXPECT_NEAR(fp.at(0, 0)[1], -1.2247, 1e-4);
    EXPECT_NEAR(fp.at(1, 0)[1], 0.0, 1e-4);
    EXPECT_NEAR(fp.at(2, 0)[1], 1.2247, 1e-4);
}

TEST(Normalize, ClipsOutliersAtFiveSigma) {
    std::vector<StockBar> bars;
    for (int d = 1; d <= 20; ++d) {
        char date[16];
        std::snprintf(date, sizeof date, "2024-01-%02d", d);
        bars.push_back(bar("A", date, 10 + (d % 2), 10 + (d % 2)));
    }
    bars.push_back(bar("A", "2024-02-01", 1000, 1000));
    const Panel p = Panel::from_bars(bars);
    const auto u = Universe::from_panel(p);
    const auto fp = normalize(p, u, {Date::parse("2024-01-01"), Date::parse("2024-01-20")});
    EXPECT_EQ(fp.at(20, 0)[0], 5.0);
}

TEST(Normalize, IndustryNodeIsMeanOfTwoConstituents) {
    std::vector<StockBar> bars = {bar("A", "2024-01-01", 10, 10), bar("A", "2024-01-02", 12, 12),
                                  bar("A", "2024-01-03", 13, 13), bar("B", "2024-01-01", 30, 30),
                                  bar("B", "2024-01-02", 20, 20), bar("B", "2024-01-03", 50, 50)};
    const Panel p = Panel::from_bars(bars);
    const auto u = Universe::from_panel(p);
    const auto fp = normalize(p, u, {Date::parse("2024-01-01"), Date::parse("2024-01-03")});
    const std::size_t sec = u.secondary_node(0);
    for (std::size_t t = 0; t < 3; ++t)
        EXPECT_NEAR(fp.at(t, sec)[1], 0.5 * (fp.at(t, 0)[1] + fp.at(t, 1)[1]), 1e-12);
}

TEST(Normalize, IndustryFeaturesAreConstituentMeansOnEveryDate) {
    auto [panel, u] = synth_universe(12, 2, 4, 40, 5);
    // Suspend two stock-days so industry means run over a changing membership.
    panel.series[1].bars.erase(panel.series[1].bars.begin() + 7);
    panel.series[5].bars.erase(panel.series[5].bars.begin() + 12);
    const auto cal = panel.calendar();
    const auto fp = normalize(panel, u, {cal.front(), cal[25]});
    const auto members = industry_constituents(u);
    for (std::size_t t = 0; t < fp.dates.size(); ++t) {
        for (std::size_t k = 0; k < members.size(); ++k) {
            for (std::size_t f = 0; f < fp.features; ++f) {
                double sum = 0.0;
                int count = 0;
                for (std::size_t i : members[k])
                    if (fp.is_present(t, i)) {
                        sum += fp.at(t, i)[f];
                        ++count;
                    }
                ASSERT_GT(count, 0);
                EXPECT_NEAR(fp.at(t, u.m() + k)[f], sum / count, 1e-9);
            }
        }
    }
    EXPECT_FALSE(fp.is_present(7, 1));
}

TEST(Normalize, StatisticsIgnoreRowsOutsideTrainingRange) {
    auto [panel, u] = synth_universe(6, 2, 3, 40, 9);
    const auto cal = panel.calendar();
    const DateRange train{cal.front(), cal[24]};
    const auto before = normalize(panel, u, train);
    // Mutate a test-split row heavily.
    auto& b = panel.series[2].bars[35];
    b.open *= 3.0;
    b.close *= 3.0;
    b.high *= 3.0;
    b.low *= 3.0;
    b.volume *= 10.0;
    const auto after = normalize(panel, u, train);
    for (std::size_t t = 0; t <= 24; ++t)
        for (std::size_t node = 0; node < u.d(); ++node)
            for (std::size_t f = 0; f < kNumFeatures; ++f) EXPECT_EQ(before.at(t, node)[f], after.at(t, node)[f]);
}

TEST(PercentileRanks, OrderingConvention) {
    const Vec r = percentile_ranks(std::vector<double>{0.05, 0.01, -0.02});
    EXPECT_EQ(r, (Vec{1.0, 0.5, 0.0}));
}

TEST(PercentileRanks, TiesShareMeanRank) {
    EXPECT_EQ(percentile_ranks(std::vector<double>{0.03, 0.03}), (Vec{0.5, 0.5}));
    // ranks 0, {1,2} tied, 3 → 0, 0.5, 0.5, 1
    EXPECT_EQ(percentile_ranks(std::vector<double>{-1.0, 2.0, 2.0, 5.0}), (Vec{0.0, 0.5, 0.5, 1.0}));
}

TEST(PercentileRanks, SingleStockIsHalf) { EXPECT_EQ(percentile_ranks(std::vector<double>{0.7}), (Vec{0.5})); }

TEST(PercentileRanks, PermutationInvariant) {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> coarse(-5, 5);  // coarse grid forces ties
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng() % 12;
        Vec v(n);
        for (auto& x : v) x = coarse(rng) * 0.01;
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Vec shuffled(n);
        for (std::size_t i = 0; i < n; ++i) shuffled[i] = v[perm[i]];
        const auto a = percentile_ranks(v);
        const auto b = percentile_ranks(shuffled);
        for (std::size_t i = 0; i < n; ++i) {
            EXPECT_EQ(b[i], a[perm[i]]);
            EXPECT_GE(a[i], 0.0);
            EXPECT_LE(a[i], 1.0);
        }
    }
}

TEST(ComputeLabels, UsesNextOpenToOpenReturn) {
    // Day 0 label for each stock ranks open[2]/open[1] − 1.
    std::vector<StockBar> bars = {
        bar("A", "2024-01-01", 10, 10), bar("A", "2024-01-02", 10, 10), bar("A", "2024-01-03", 10.5, 10.5),
        bar("B", "2024-01-01", 10, 10), bar("B", "2024-01-02", 10, 10), bar("B", "2024-01-03", 10.1, 10.1),
        bar("C", "2024-01-01", 10, 10), bar("C", "2024-01-02", 10, 10), bar("C", "2024-01-03", 9.8, 9.8),
    };
    const Panel p = Panel::from_bars(bars);
    const auto u = Universe::from_panel(p);
    const auto lp = compute_labels(p, u);
    EXPECT_EQ(lp.labels(0, 0), 1.0);
    EXPECT_EQ(lp.labels(0, 1), 0.5);
    EXPECT_EQ(lp.labels(0, 2), 0.0);
    EXPECT_NEAR(lp.returns(0, 0), 0.05, 1e-12);
    EXPECT_FALSE(lp.has(1, 0));
    EXPECT_FALSE(lp.has(2, 0));
}

TEST(ComputeLabels, SingleStockDateIsHalf) {
    std::vector<StockBar> bars = {bar("A", "2024-01-01", 10, 10), bar("A", "2024-01-02", 11, 11),
                                  bar("A", "2024-01-03", 12, 12)};
    const Panel p = Panel::from_bars(bars);
    const auto lp = compute_labels(p, Universe::from_panel(p));
    EXPECT_EQ(lp.labels(0, 0), 0.5);
}

TEST(ComputeLabels, SuspendedStockDropsFromCrossSection) {
    std::vector<StockBar> bars = {
        bar("A", "2024-01-01", 10, 10), bar("A", "2024-01-02", 10, 10), bar("A", "2024-01-03", 11, 11),
        bar("B", "2024-01-01", 10, 10), bar("B", "2024-01-03", 12, 12),  // missing 01-02
        bar("C", "2024-01-01", 10, 10), bar("C", "2024-01-02", 10, 10), bar("C", "2024-01-03", 9, 9),
    };
    const Panel p = Panel::from_bars(bars);
    const auto lp = compute_labels(p, Universe::from_panel(p));
    EXPECT_FALSE(lp.has(0, 1));
    EXPECT_EQ(lp.labels(0, 0), 1.0);
    EXPECT_EQ(lp.labels(0, 2), 0.0);
}

TEST(ComputeLabels, TooFewDatesIsAnError) {
    const Panel p = Panel::from_bars({bar("A", "2024-01-01", 10, 10)});
    EXPECT_THROW(compute_labels(p, Universe::from_panel(p)), DataError);
}

TEST(SynthUniverse, DeterministicForSeed) {
    auto [p1, u1] = synth_universe(12, 2, 4, 60, 7);
    auto [p2, u2] = synth_universe(12, 2, 4, 60, 7);
    EXPECT_EQ(write_panel_csv(p1), write_panel_csv(p2));
    auto [p3, u3] = synth_universe(12, 2, 4, 60, 8);
    EXPECT_NE(write_panel_csv(p1), write_panel_csv(p3));
}

TEST(SynthUniverse, PricesPositiveAndBarsValid) {
    auto [p, u] = synth_universe(20, 3, 5, 250, 11);
    EXPECT_EQ(p.bar_count(), 20u * 250u);
    for (const auto& s : p.series)
        for (const auto& b : s.bars) EXPECT_NO_THROW(validate_bar(b, 0));
}

TEST(SynthUniverse, ArgumentValidation) {
    EXPECT_THROW(synth_universe(12, 3, 2, 60, 1), ArgumentError);   // n' < n
    EXPECT_THROW(synth_universe(3, 2, 4, 60, 1), ArgumentError);    // m < n'
    EXPECT_THROW(synth_universe(12, 2, 4, 19, 1), ArgumentError);   // days < 20
}

double pearson(const Vec& a, const Vec& b) {
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / b.size();
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += (a[i] - ma) * (b[i] - mb);
        aa += (a[i] - ma) * (a[i] - ma);
        bb += (b[i] - mb) * (b[i] - mb);
    }
    return ab / std::sqrt(aa * bb);
}

TEST(SynthUniverse, IntraIndustryCorrelationExceedsCrossIndustry) {
    auto [p, u] = synth_universe(12, 2, 4, 60, 7);
    std::vector<Vec> rets;
    for (const auto& s : p.series) {
        Vec r;
        for (std::size_t t = 1; t < s.bars.size(); ++t) r.push_back(std::log(s.bars[t].open / s.bars[t - 1].open));
        rets.push_back(std::move(r));
    }
    double intra = 0, cross = 0;
    int n_intra = 0, n_cross = 0;
    for (std::size_t i = 0; i < u.m(); ++i)
        for (std::size_t j = i + 1; j < u.m(); ++j) {
            const double c = pearson(rets[i], rets[j]);
            if (u.stock_secondary[i] == u.stock_secondary[j]) {
                intra += c;
                ++n_intra;
            } else if (u.stock_primary[i] != u.stock_primary[j]) {
                cross += c;
                ++n_cross;
            }
        }
    ASSERT_GT(n_intra, 0);
    ASSERT_GT(n_cross, 0);
    EXPECT_GT(intra / n_intra, cross / n_cross);
}

double gap_reversion(const SynthOptions& o) {
    auto [p, u] = synth_universe(20, 2, 4, 200, 3, o);
    // log price relative to the first open, so per-stock levels line up
    std::vector<Vec> lp;
    for (const auto& s : p.series) {
        Vec v;
        for (const auto& b : s.bars) v.push_back(std::log(b.open / s.bars[0].open));
        lp.push_back(std::move(v));
    }
    Vec gap, next;
    for (std::size_t i = 0; i < u.m(); ++i)
        for (std::size_t t = 0; t + 1 < lp[i].size(); ++t) {
            double peers = 0;
            int n = 0;
            for (std::size_t j = 0; j < u.m(); ++j)
                if (j != i && u.stock_secondary[j] == u.stock_secondary[i]) {
                    peers += lp[j][t];
                    ++n;
                }
            gap.push_back(lp[i][t] - peers / n);
            next.push_back(lp[i][t + 1] - lp[i][t]);
        }
    return pearson(gap, next);
}

TEST(SynthUniverse, DeviationGapToPeersReverts) {
    SynthOptions o;
    o.secondary_persistence = 0.0;
    o.idio_vol = 0.005;
    const double without = gap_reversion(o);
    o.deviation_vol = 0.03;
    const double with = gap_reversion(o);
    EXPECT_LT(with, -0.1);
    EXPECT_GT(without, -0.05);
}

TEST(SynthUniverse, ZeroDeviationKeepsDefaultStream) {
    SynthOptions o;
    o.deviation_persistence = 0.3;
    auto [a, ua] = synth_universe(12, 2, 4, 30, 4);
    auto [b, ub] = synth_universe(12, 2, 4, 30, 4, o);
    EXPECT_EQ(write_panel_csv(a), write_panel_csv(b));
}

}  // namespace
}  // namespace lsrigru
