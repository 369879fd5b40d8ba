#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

namespace lsrigru {
namespace {

using testing::synthetic_fixture;

TrainConfig small_config(std::uint64_t seed = 7) {
    TrainConfig c;
    c.window = 5;
    c.batch_size = 16;
    c.learning_rate = 0.005;
    c.epochs = 2;
    c.seed = seed;
    c.arch.gat_widths = {8, 4};
    c.arch.gru_widths = {6, 4};
    c.arch.head_hidden = 4;
    return c;
}

TEST(Split, SixtyDayPanelGivesFortyFourSamplesPerStock) {
    auto f = synthetic_fixture(5, 1, 2, 60, 3);
    const auto s = samples_in_range(f.data, 15, f.all);
    EXPECT_EQ(s.size(), 5u * 44u);
    for (std::size_t i = 0; i < 5; ++i)
        EXPECT_EQ(std::count_if(s.begin(), s.end(), [&](const SequenceSample& x) { return x.stock == i; }), 44);
}

TEST(Split, NoWindowOrLabelCrossesABoundary) {
    auto f = synthetic_fixture(4, 1, 2, 60, 4);
    const auto& cal = f.data.calendar();
    SplitRanges r{{cal[0], cal[29]}, {cal[30], cal[44]}, {cal[45], cal[59]}};
    const auto split = split_chronological(f.data, 5, r);
    // Window ending on the last training day needs a label from validation: excluded.
    for (const auto& s : split.train) EXPECT_LE(s.end + kLabelHorizon, 29u);
    EXPECT_EQ(split.train.size(), 4u * (30 - 5 - 2 + 1));
    for (const auto* part : {&split.valid, &split.test})
        for (const auto& s : *part) {
            const auto& range = part == &split.valid ? r.valid : r.test;
            EXPECT_TRUE(range.contains(cal[s.end + 1 - 5]));
            EXPECT_TRUE(range.contains(cal[s.end + kLabelHorizon]));
        }
}

TEST(Split, EmptyValidationRangeGivesEmptySet) {
    auto f = synthetic_fixture(4, 1, 2, 40, 5);
    const auto& cal = f.data.calendar();
    SplitRanges r{{cal[0], cal[29]}, {}, {cal[30], cal[39]}};
    r.valid = {cal[1], cal[0]};
    const auto split = split_chronological(f.data, 5, r);
    EXPECT_TRUE(split.valid.empty());
    EXPECT_FALSE(split.train.empty());
}

TEST(Split, OverlappingRangesAreRejected) {
    auto f = synthetic_fixture(4, 1, 2, 40, 5);
    const auto& cal = f.data.calendar();
    SplitRanges r{{cal[0], cal[20]}, {cal[20], cal[30]}, {cal[31], cal[39]}};
    EXPECT_THROW(split_chronological(f.data, 5, r), ArgumentError);
}

TEST(Split, FractionsPartitionTheCalendar) {
    auto f = synthetic_fixture(4, 1, 2, 100, 6);
    const auto r = split_by_fraction(f.data.calendar(), 0.6, 0.2);
    EXPECT_EQ(r.train.last.days + 1 <= r.valid.first.days, true);
    EXPECT_EQ(r.valid.last < r.test.first, true);
    EXPECT_THROW(split_by_fraction(f.data.calendar(), 0.9, 0.2), ArgumentError);
}

TEST(Adam, ZeroGradientsLeaveParametersUnchanged) {
    Vec p{1.0, -2.0}, g{0.0, 0.0}, m{0.0, 0.0}, v{0.0, 0.0};
    adam_step(p, g, m, v, 1, {});
    EXPECT_EQ(p, (Vec{1.0, -2.0}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
    // m̂ = g, v̂ = g², so the first step is lr · g / (|g| + eps).
    const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
    for (double g : {0.5, -3.0, 1e-3}) {
        Vec p{2.0}, gr{g}, m{0.0}, v{0.0};
        adam_step(p, gr, m, v, 1, cfg);
        EXPECT_NEAR(p[0], 2.0 - 0.01 * g / (std::abs(g) + 1e-8), 1e-15);
        EXPECT_NEAR(m[0], 0.1 * g, 1e-15);
        EXPECT_NEAR(v[0], 0.001 * g * g, 1e-15);
    }
}

TEST(Adam, ConstantGradientStepsDoNotGrow) {
    const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
    Vec p{0.0}, g{0.7}, m{0.0}, v{0.0};
    adam_step(p, g, m, v, 1, cfg);
    const double first = std::abs(p[0]);
    const double before = p[0];
    adam_step(p, g, m, v, 2, cfg);
    EXPECT_LE(std::abs(p[0] - before), first * (1.0 + 1e-6));
    EXPECT_THROW(adam_step(p, g, m, v, 0, cfg), ArgumentError);
}

TEST(Ablation, ParsingAndWiring) {
    EXPECT_EQ(parse_ablation("all"), (Branches{true, true}));
    EXPECT_EQ(parse_ablation("long"), (Branches{true, false}));
    EXPECT_EQ(parse_ablation("short, long"), (Branches{true, true}));
    EXPECT_EQ(parse_ablation("temporal-only"), (Branches{false, false}));
    EXPECT_THROW(parse_ablation(""), ArgumentError);
    EXPECT_THROW(parse_ablation(" , "), ArgumentError);
    EXPECT_THROW(parse_ablation("medium"), ArgumentError);

    Architecture arch;
    arch.branches = parse_ablation("temporal-only");
    auto m = ablation_wire(arch);
    for (const auto& t : m.tensors()) EXPECT_EQ(t.name.find("gat"), std::string::npos) << t.name;
    EXPECT_EQ(m.gru.input_dim(), 36u);
}

TEST(Ablation, LongOnlyEqualsFullModelWithZeroShortBranch) {
    auto f = synthetic_fixture(6, 2, 3, 30, 8);
    auto cfg = small_config();
    std::mt19937_64 rng(1);
    Model full = Model::zeros(cfg.arch);
    full.init_uniform(rng);
    for (auto& l : full.short_gat->layers) {
        l.projection.zero();
        std::fill(l.attention.begin(), l.attention.end(), 0.0);
    }
    auto arch = cfg.arch;
    arch.branches = {true, false};
    Model long_only = Model::zeros(arch);
    long_only.long_gat = full.long_gat;
    long_only.gru = full.gru;
    long_only.head = full.head;
    const auto samples = samples_in_range(f.data, cfg.window, f.all);
    EXPECT_EQ(predict_scores(full, f.data, samples, cfg.window),
              predict_scores(long_only, f.data, samples, cfg.window));
}

TEST(Training, ReducesLossAndIsDeterministic) {
    auto f = synthetic_fixture(8, 2, 4, 50, 9);
    const auto cfg = small_config();
    const auto samples = samples_in_range(f.data, cfg.window, f.all);
    const auto a = train_epochs(cfg, f.data, samples);
    const auto b = train_epochs(cfg, f.data, samples);
    EXPECT_EQ(write_loss_log_csv(a), write_loss_log_csv(b));
    EXPECT_LT(a.log.back().train_mse, a.initial_train_mse);
    PipelineConfig pc;
    pc.train = cfg;
    EXPECT_EQ(serialize_checkpoint({pc, a.model, a.rng_state}), serialize_checkpoint({pc, b.model, b.rng_state}));
    auto c = cfg;
    c.seed = 8;
    EXPECT_NE(write_loss_log_csv(train_epochs(c, f.data, samples)), write_loss_log_csv(a));
}

TEST(Training, TestRowsDoNotAffectTheCheckpoint) {
    auto [panel, u] = synth_universe(8, 2, 4, 60, 10);
    const auto cal = panel.calendar();
    const DateRange train{cal[0], cal[39]};
    GraphOptions opt;
    opt.lookback = 5;
    auto cfg = small_config();
    cfg.epochs = 1;

    std::vector<StockBar> kept;
    for (const auto& s : panel.series)
        for (const auto& b : s.bars)
            if (!(cal[45] <= b.date)) kept.push_back(b);
    const auto trimmed = Panel::from_bars(kept);

    const auto full_data = prepare_market_data(panel, train, opt);
    const auto trim_data = prepare_market_data(trimmed, train, opt);
    const auto a = train_epochs(cfg, full_data, samples_in_range(full_data, cfg.window, train));
    const auto b = train_epochs(cfg, trim_data, samples_in_range(trim_data, cfg.window, train));
    PipelineConfig pc;
    pc.train = cfg;
    EXPECT_EQ(serialize_checkpoint({pc, a.model, a.rng_state}), serialize_checkpoint({pc, b.model, b.rng_state}));
}

TEST(Training, EmptyTrainingSetIsArgumentError) {
    auto f = synthetic_fixture(4, 1, 2, 30, 11);
    EXPECT_THROW(train_epochs(small_config(), f.data, {}), ArgumentError);
    auto bad = small_config();
    bad.learning_rate = 0.0;
    const auto s = samples_in_range(f.data, bad.window, f.all);
    EXPECT_THROW(train_epochs(bad, f.data, s), ArgumentError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    auto f = synthetic_fixture(6, 2, 3, 30, 12);
    PipelineConfig pc;
    pc.train = small_config();
    pc.train.arch.branches = {true, false};
    std::mt19937_64 rng(3);
    Model m = Model::zeros(pc.train.arch);
    m.init_uniform(rng);
    const Checkpoint ck{pc, m, rng_state_text(rng)};
    const auto bytes = serialize_checkpoint(ck);
    EXPECT_EQ(bytes.substr(0, 8), "LSRIGRU1");
    const auto back = deserialize_checkpoint(bytes);
    EXPECT_EQ(serialize_checkpoint(back), bytes);
    EXPECT_EQ(back.rng_state, ck.rng_state);
    const auto samples = samples_in_range(f.data, pc.train.window, f.all);
    const auto s1 = predict_scores(m, f.data, samples, pc.train.window);
    const auto s2 = predict_scores(back.model, f.data, samples, pc.train.window);
    for (std::size_t i = 0; i < s1.size(); ++i) EXPECT_LE(std::abs(s1[i] - s2[i]), 1e-15);

    EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), DataError);
    EXPECT_THROW(deserialize_checkpoint("NOTACKPT" + bytes.substr(8)), DataError);
    EXPECT_THROW(deserialize_checkpoint(bytes + "x"), DataError);
}

TEST(Backprop, EndToEndMatchesFiniteDifferences) {
    auto f = synthetic_fixture(6, 2, 3, 20, 13);
    TrainConfig cfg = small_config();
    cfg.arch.gat_widths = {5, 3};
    cfg.arch.gru_widths = {4, 3};
    std::mt19937_64 rng(5);
    Model model = Model::zeros(cfg.arch);
    model.init_uniform(rng);
    auto samples = samples_in_range(f.data, cfg.window, f.all);
    samples.resize(8);
    Model grads = Model::zeros(cfg.arch);
    evaluate_batch(model, f.data, samples, cfg.window, &grads);
    auto loss = [&] { return evaluate_batch(model, f.data, samples, cfg.window).loss; };
    const auto r = testing::finite_difference_check(model, grads, loss, 1u << 20);
    EXPECT_EQ(r.checked, model.parameter_count());
    EXPECT_LE(r.worst, 1e-4) << r.worst_name;
}

TEST(Config, TextRoundTripAndPrecedence) {
    PipelineConfig c;
    apply_config_text(c, "# comment\nwindow = 10\nablation = long # trailing\n\npolicy = threshold:0.8\n"
                         "gat_widths = 20;10\nlearning_rate = 0.001\ntrain_end = 2020-06-30\n");
    EXPECT_EQ(c.train.window, 10u);
    EXPECT_EQ(c.train.arch.branches, (Branches{true, false}));
    EXPECT_EQ(c.train.arch.gat_widths, (std::vector<std::size_t>{20, 10}));
    EXPECT_EQ(c.train.learning_rate, 0.001);
    EXPECT_EQ(c.train_end->str(), "2020-06-30");
    PipelineConfig d;
    apply_config_text(d, config_text(c));
    EXPECT_EQ(config_text(d), config_text(c));
    apply_setting(d, "window", "12");  // a later setting wins
    EXPECT_EQ(d.train.window, 12u);
    EXPECT_THROW(apply_config_text(d, "bogus = 1\n"), ArgumentError);
    try {
        apply_config_text(d, "window = 3\nwindow = abc\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.row(), 2u);
    }
}

}  // namespace
}  // namespace lsrigru
