#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "lsrigru/backtest.hpp"
#include "lsrigru/config.hpp"
#include "lsrigru/dataset.hpp"
#include "lsrigru/train.hpp"

namespace lsrigru {

/// Scores every sample into a (date, stock) table.
inline ScoreTable score_table(const Model& model, const MarketData& data, std::span<const SequenceSample> samples,
                              std::size_t window) {
    ScoreTable t;
    if (samples.empty()) return t;
    const auto scores = predict_scores(model, data, samples, window);
    for (std::size_t i = 0; i < samples.size(); ++i)
        t.add(data.calendar()[samples[i].end], data.universe.stocks[samples[i].stock], scores[i]);
    return t;
}

/// Train on the training range, score the test range, trade it.
struct Experiment {
    MarketData data;
    SplitRanges ranges;
    SampleSplit split;
    TrainResult trained;
    ScoreTable test_scores;
    BacktestLedger ledger;
    std::optional<MetricReport> metrics;
};

inline Experiment run_experiment(const PipelineConfig& cfg, const Panel& panel,
                                 const std::map<Date, double>* benchmark = nullptr) {
    Experiment e;
    e.ranges = cfg.ranges(panel.calendar());
    e.data = prepare_market_data(panel, e.ranges.train, cfg.graph);
    e.split = split_chronological(e.data, cfg.train.window, e.ranges);
    e.trained = train_epochs(cfg.train, e.data, e.split.train, e.split.valid);
    if (!e.ranges.test.empty()) {
        const auto samples = scoring_samples(e.data, cfg.train.window, e.ranges.test);
        e.test_scores = score_table(e.trained.model, e.data, samples, cfg.train.window);
        e.ledger = run_bhs(e.test_scores, OpenPrices::from_panel(panel), cfg.topk, benchmark);
        if (e.ledger.days.size() >= 2) e.metrics = compute_metrics(e.ledger);
    }
    return e;
}

}  // namespace lsrigru
