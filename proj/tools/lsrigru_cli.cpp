// lsrigru command-line pipeline: synth/ingest → build-graphs → train → predict → backtest → report, plus sweeps.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "lsrigru/lsrigru.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace lsrigru;

namespace {

#ifndef LSRIGRU_VERSION
#define LSRIGRU_VERSION "0.0.0"
#endif

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading", path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Collects inputs, artifacts and timings, then writes manifest.json into the output directory.
class Run {
public:
    Run(std::string command, std::string out_dir) : command_(std::move(command)), out_(std::move(out_dir)) {}

    const std::string& out() const { return out_; }

    void ensure_out() {
        std::error_code ec;
        fs::create_directories(out_, ec);
        if (ec) throw IoError("cannot create output directory", out_);
    }

    void input(const std::string& role, const std::string& path) {
        inputs_.push_back({{"role", role}, {"path", path}, {"sha256", sha256_hex(read_file(path))}});
    }

    std::string put(const std::string& name, const std::string& body) {
        ensure_out();
        const auto path = (fs::path(out_) / name).string();
        csv::write_file(path, body);
        artifacts_.push_back({{"path", path}, {"sha256", sha256_hex(body)}});
        return path;
    }

    void add_artifact(const std::string& path) {
        artifacts_.push_back({{"path", path}, {"sha256", sha256_hex(read_file(path))}});
    }

    template <class F>
    auto timed(const std::string& stage, F&& f) {
        const auto t0 = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            timings_[stage] = seconds_since(t0);
        } else {
            auto r = f();
            timings_[stage] = seconds_since(t0);
            return r;
        }
    }

    void record(const std::string& stage, double seconds) { timings_[stage] = seconds; }

    void set_config(const PipelineConfig& c) {
        config_ = json::object();
        std::istringstream in(config_text(c));
        for (std::string line; std::getline(in, line);) {
            const auto eq = line.find(" = ");
            if (eq != std::string::npos) config_[line.substr(0, eq)] = line.substr(eq + 3);
        }
        seed_ = c.train.seed;
    }

    void write_manifest(const std::string& status, const std::string& message, double total) {
        json m;
        m["tool"] = "lsrigru";
        m["version"] = LSRIGRU_VERSION;
        m["command"] = command_;
        m["status"] = status;
        if (!message.empty()) m["error"] = message;
        m["seed"] = seed_;
        m["config"] = config_;
        m["inputs"] = inputs_;
        m["artifacts"] = artifacts_;
        json t = timings_;
        t["total_seconds"] = total;
        m["timings"] = t;
        std::error_code ec;
        fs::create_directories(out_, ec);
        if (ec) return;
        std::ofstream f(fs::path(out_) / "manifest.json");
        f << m.dump(2) << '\n';
    }

private:
    std::string command_, out_;
    json inputs_ = json::array(), artifacts_ = json::array(), config_ = json::object();
    std::map<std::string, double> timings_;
    std::uint64_t seed_ = 0;
};

/// Flags shared by every subcommand. Values are kept as text and applied through the
/// config parser only when given, so the precedence is flag > config file > default.
struct Globals {
    std::string config_path;
    std::string out = "out";
    std::vector<std::pair<std::string, CLI::Option*>> settings;
    std::map<std::string, std::string> values;

    void add(CLI::App& app, const std::string& flag, const std::string& key, const std::string& help) {
        auto* opt = app.add_option(flag, values[key], help);
        settings.emplace_back(key, opt);
    }

    PipelineConfig resolve() const {
        PipelineConfig c;
        if (!config_path.empty()) apply_config_text(c, read_file(config_path));
        for (const auto& [key, opt] : settings)
            if (opt->count() > 0) apply_setting(c, key, values.at(key));
        return c;
    }
};

PipelineConfig resolved(const Globals& g, Run& run) {
    auto c = g.resolve();
    if (!g.config_path.empty()) run.input("config", g.config_path);
    run.set_config(c);
    return c;
}

Panel load_panel(const std::string& path, Run& run) {
    run.input("panel", path);
    return run.timed("ingest", [&] { return ingest_csv(path); });
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct SynthArgs {
    std::size_t stocks = 12, industries = 2, sub_industries = 4, days = 120;
    SynthOptions options;
};

void cmd_synth(const Globals& g, const SynthArgs& a, Run& run) {
    const auto c = resolved(g, run);
    auto [panel, u] = run.timed("synth", [&] {
        return synth_universe(a.stocks, a.industries, a.sub_industries, a.days, c.train.seed, a.options);
    });
    run.put("panel.csv", write_panel_csv(panel));
}

ColumnMap parse_columns(const std::string& text) {
    ColumnMap m;
    for (auto item : csv::split(text)) {
        item = csv::trim(item);
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string_view::npos) throw ArgumentError("--columns expects field=column pairs");
        const auto field = csv::trim(item.substr(0, eq));
        const std::string col(csv::trim(item.substr(eq + 1)));
        std::string* slot = nullptr;
        if (field == "stock_id") slot = &m.stock_id;
        else if (field == "date") slot = &m.date;
        else if (field == "open") slot = &m.open;
        else if (field == "close") slot = &m.close;
        else if (field == "high") slot = &m.high;
        else if (field == "low") slot = &m.low;
        else if (field == "volume") slot = &m.volume;
        else if (field == "turnover") slot = &m.turnover;
        else if (field == "industry1") slot = &m.industry1;
        else if (field == "industry2") slot = &m.industry2;
        else throw ArgumentError("unknown panel field '" + std::string(field) + "' in --columns");
        *slot = col;
    }
    return m;
}

void cmd_ingest(const Globals& g, const std::string& input, const std::string& columns, Run& run) {
    const auto c = resolved(g, run);
    run.input("raw", input);
    const auto panel = run.timed("ingest", [&] { return ingest_csv(input, parse_columns(columns)); });
    const auto u = Universe::from_panel(panel);
    const auto ranges = c.ranges(panel.calendar());
    const auto fp = run.timed("normalize", [&] { return normalize(panel, u, ranges.train); });
    for (const auto& w : fp.warnings) log::warn(w);
    run.put("panel.csv", write_panel_csv(panel));
    run.put("features.csv", write_feature_csv(fp, u));
}

void cmd_build_graphs(const Globals& g, const std::string& panel_path, Run& run) {
    const auto c = resolved(g, run);
    const auto panel = load_panel(panel_path, run);
    const auto u = Universe::from_panel(panel);
    const auto graphs = run.timed("graphs", [&] { return build_graphs(panel, u, c.graph); });
    std::string nodes = "index,node_id\n";
    for (std::size_t i = 0; i < u.d(); ++i) nodes += std::to_string(i) + ',' + u.node_name(i) + '\n';
    run.put("nodes.csv", nodes);
    run.put("long_matrix.csv", write_dense_csv(graphs.long_matrix));
    std::string edges = "date,i,j,weight\n";
    const auto cal = panel.calendar();
    for (std::size_t t = 0; t < cal.size(); ++t)
        for (std::size_t i = 0; i < u.d(); ++i)
            for (const auto& e : graphs.short_edges[t].neighbors[i])
                edges += cal[t].str() + ',' + std::to_string(i) + ',' + std::to_string(e.node) + ',' +
                         csv::fmt(e.weight) + '\n';
    run.put("short_edges.csv", edges);
}

void cmd_train(const Globals& g, const std::string& panel_path, Run& run) {
    const auto c = resolved(g, run);
    const auto panel = load_panel(panel_path, run);
    const auto ranges = c.ranges(panel.calendar());
    const auto data = run.timed("prepare", [&] { return prepare_market_data(panel, ranges.train, c.graph); });
    const auto split = split_chronological(data, c.train.window, ranges);
    log::info("train samples " + std::to_string(split.train.size()) + ", valid " + std::to_string(split.valid.size()));
    const auto result = run.timed("train", [&] { return train_epochs(c.train, data, split.train, split.valid); });
    run.ensure_out();
    const auto ck_path = (fs::path(run.out()) / "model.ckpt").string();
    save_checkpoint({c, result.model, result.rng_state}, ck_path);
    run.add_artifact(ck_path);
    run.put("loss_log.csv", write_loss_log_csv(result));
    run.put("config.txt", config_text(c));
}

void cmd_predict(const Globals& g, const std::string& panel_path, const std::string& model_path,
                 const std::string& range_name, Run& run) {
    run.input("model", model_path);
    const auto ck = load_checkpoint(model_path);
    // The trained model fixes window, widths and split; only the output directory comes from flags.
    run.set_config(ck.config);
    (void)g;
    const auto panel = load_panel(panel_path, run);
    const auto ranges = ck.config.ranges(panel.calendar());
    const auto data = run.timed("prepare", [&] { return prepare_market_data(panel, ranges.train, ck.config.graph); });
    DateRange range;
    const auto& cal = panel.calendar();
    if (range_name == "test") range = ranges.test;
    else if (range_name == "valid") range = ranges.valid;
    else if (range_name == "train") range = ranges.train;
    else if (range_name == "all") range = {cal.front(), cal.back()};
    else throw ArgumentError("--range must be one of train, valid, test, all");
    const auto samples = scoring_samples(data, ck.config.train.window, range);
    if (samples.empty()) throw ValidationError("no complete windows end inside the requested range");
    const auto table = run.timed("predict", [&] { return score_table(ck.model, data, samples, ck.config.train.window); });
    run.put("scores.csv", write_scores_csv(table));
}

void cmd_backtest(const Globals& g, const std::string& scores_path, const std::string& prices_path,
                  const std::string& bench_path, Run& run) {
    const auto c = resolved(g, run);
    run.input("scores", scores_path);
    const auto scores = read_scores_csv(scores_path);
    const auto panel = load_panel(prices_path, run);
    std::map<Date, double> bench;
    if (!bench_path.empty()) {
        run.input("benchmark", bench_path);
        bench = read_benchmark_csv(bench_path);
    }
    const auto ledger = run.timed("backtest", [&] {
        return run_bhs(scores, OpenPrices::from_panel(panel), c.topk, bench_path.empty() ? nullptr : &bench);
    });
    run.put("ledger.csv", write_ledger_csv(ledger));
    run.put("metrics.csv", write_metrics_csv(compute_metrics(ledger)));
}

void cmd_report(const Globals& g, const std::string& ledger_path, bool plot, Run& run) {
    resolved(g, run);
    run.input("ledger", ledger_path);
    const auto ledger = read_ledger_csv(ledger_path);
    const auto metrics = compute_metrics(ledger);
    const auto curve = equity_curve(ledger);
    run.put("equity_curve.csv", write_equity_csv(curve));
    run.put("metrics.csv", write_metrics_csv(metrics));
    run.put("holdings.csv", write_holdings_csv(ledger));
    if (plot) run.put("equity_curve.svg", equity_svg(curve));
}

std::vector<std::string> default_axis_values(const std::string& axis) {
    if (axis == "window") return {"5", "10", "15", "20", "25"};
    if (axis == "epochs") return {"1", "2", "3", "4", "5", "6"};
    if (axis == "gat-layers" || axis == "gru-layers") return {"1", "2", "3", "4"};
    if (axis == "ablation") return {"all", "long", "short", "temporal-only"};
    throw ArgumentError("--axis must be one of window, epochs, gat-layers, gru-layers, ablation");
}

void cmd_sweep(const Globals& g, const std::string& panel_path, const std::string& axis,
               std::vector<std::string> values, Run& run) {
    const auto base = resolved(g, run);
    if (values.empty()) values = default_axis_values(axis);
    else default_axis_values(axis);  // validates the axis name
    const auto panel = load_panel(panel_path, run);
    std::string out = "axis,value,train_mse,valid_mse,test_mse,ARR,AVoL,MDD,ASR,CR,IR\n";
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& v : values) {
        auto c = base;
        if (axis == "window") apply_setting(c, "window", v);
        else if (axis == "epochs") apply_setting(c, "epochs", v);
        else if (axis == "ablation") apply_setting(c, "ablation", v);
        else {
            const auto layers = detail::parse_count(v, axis);
            auto& w = axis == "gat-layers" ? c.train.arch.gat_widths : c.train.arch.gru_widths;
            w = layer_widths(layers, w.front(), w.back());
        }
        log::info("sweep " + axis + " = " + v);
        const auto e = run_experiment(c, panel);
        const auto& last = e.trained.log.empty() ? EpochLog{} : e.trained.log.back();
        std::string test_mse;
        if (!e.split.test.empty()) test_mse = csv::fmt(dataset_loss(e.trained.model, e.data, e.split.test, c.train.window));
        out += axis + ',' + v + ',' + csv::fmt(last.train_mse) + ',' +
               (std::isnan(last.valid_mse) ? std::string() : csv::fmt(last.valid_mse)) + ',' + test_mse;
        if (e.metrics) {
            const auto& m = *e.metrics;
            out += ',' + csv::fmt(m.arr) + ',' + csv::fmt(m.avol) + ',' + csv::fmt(m.mdd) + ',' + format_metric(m.asr) +
                   ',' + format_metric(m.cr) + ',' + format_metric(m.ir);
        } else {
            out += ",,,,,,";
        }
        out += '\n';
    }
    run.record("sweep", seconds_since(t0));
    run.put("sweep.csv", out);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LSR-IGRU stock ranking pipeline: relation graphs, attention encoders, improved GRU, top-k backtest"};
    app.set_version_flag("--version", std::string(LSRIGRU_VERSION));
    app.require_subcommand(1);

    Globals g;
    app.add_option("--config", g.config_path, "Config file of `key = value` lines (flags override it)");
    app.add_option("--out", g.out, "Output directory")->capture_default_str();
    g.add(app, "--seed", "seed", "Seed for every random draw");
    g.add(app, "--window", "window", "Sequence window in days (default 15)");
    g.add(app, "--topk", "topk", "Stocks held per day (default 10)");
    g.add(app, "--lookback", "lookback", "Short-term similarity lookback in days (default 15)");
    g.add(app, "--policy", "policy", "Short-term edge policy topk:K or threshold:T (default topk:10)");
    g.add(app, "--ablation", "ablation", "Relational branches: all, long, short, temporal-only, or a comma list");
    g.add(app, "--epochs", "epochs", "Training epochs (default 3)");
    g.add(app, "--batch-size", "batch_size", "Minibatch size (default 128)");
    g.add(app, "--lr", "learning_rate", "Adam learning rate (default 0.0002)");
    g.add(app, "--train-end", "train_end", "Last training date YYYY-MM-DD (default: fraction split)");
    g.add(app, "--valid-end", "valid_end", "Last validation date YYYY-MM-DD");

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic panel with planted industry co-movement");
    synth->add_option("--stocks", synth_args.stocks, "Number of stocks")->capture_default_str();
    synth->add_option("--industries", synth_args.industries, "Primary industries")->capture_default_str();
    synth->add_option("--sub-industries", synth_args.sub_industries, "Secondary industries")->capture_default_str();
    synth->add_option("--days", synth_args.days, "Trading days")->capture_default_str();
    synth->add_option("--deviation-vol", synth_args.options.deviation_vol,
                      "Std of each stock's mean-reverting gap to its industry (0 disables)")
        ->capture_default_str();
    synth->add_option("--deviation-persistence", synth_args.options.deviation_persistence,
                      "AR(1) persistence of that gap")
        ->capture_default_str();

    std::string input, columns;
    auto* ingest = app.add_subcommand("ingest", "Validate a raw panel CSV; write the canonical panel and features");
    ingest->add_option("--input", input, "Raw panel CSV")->required();
    ingest->add_option("--columns", columns, "Column renames, e.g. stock_id=ticker,date=day");

    std::string panel_path;
    auto* graphs = app.add_subcommand("build-graphs", "Write long-term and per-day short-term relation graphs");
    graphs->add_option("--panel", panel_path, "Panel CSV")->required();

    auto* train = app.add_subcommand("train", "Train a model; write model.ckpt and loss_log.csv");
    train->add_option("--panel", panel_path, "Panel CSV")->required();

    std::string model_path, range_name = "test";
    auto* predict = app.add_subcommand("predict", "Score stocks with a trained model; write scores.csv");
    predict->add_option("--panel", panel_path, "Panel CSV")->required();
    predict->add_option("--model", model_path, "Checkpoint from train")->required();
    predict->add_option("--range", range_name, "Dates to score: train, valid, test or all")->capture_default_str();

    std::string scores_path, prices_path, bench_path;
    auto* backtest = app.add_subcommand("backtest", "Daily top-k buy-hold-sell simulation; write ledger.csv and metrics.csv");
    backtest->add_option("--scores", scores_path, "Scores CSV (date,stock_id,score)")->required();
    backtest->add_option("--prices", prices_path, "Panel CSV supplying open prices")->required();
    backtest->add_option("--benchmark", bench_path, "Benchmark CSV (date,return) keyed by trade date");

    std::string ledger_path;
    bool plot = false;
    auto* report_cmd = app.add_subcommand("report", "Write equity curve, metrics and holdings from a ledger");
    report_cmd->add_option("--ledger", ledger_path, "Ledger CSV from backtest")->required();
    report_cmd->add_flag("--plot", plot, "Also write equity_curve.svg");

    std::string axis;
    std::vector<std::string> axis_values;
    auto* sweep = app.add_subcommand("sweep", "Retrain along one axis and tabulate test metrics in sweep.csv");
    sweep->add_option("--panel", panel_path, "Panel CSV")->required();
    sweep->add_option("--axis", axis, "window, epochs, gat-layers, gru-layers or ablation")->required();
    sweep->add_option("--values", axis_values, "Override the axis values")->delimiter(',');

    std::string globals_help = "Global options (accepted before or after the subcommand):\n";
    for (const auto* opt : app.get_options())
        if (opt->get_name() != "--help" && opt->get_name() != "--version")
            globals_help += "  " + opt->get_name() + "  " + opt->get_description() + "\n";
    for (auto* sub : app.get_subcommands({})) {
        sub->fallthrough();
        sub->footer(globals_help);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    CLI::App* sub = app.get_subcommands().front();
    Run run(sub->get_name(), g.out);
    const auto t0 = std::chrono::steady_clock::now();
    int code = 0;
    std::string message;
    try {
        if (sub == synth) cmd_synth(g, synth_args, run);
        else if (sub == ingest) cmd_ingest(g, input, columns, run);
        else if (sub == graphs) cmd_build_graphs(g, panel_path, run);
        else if (sub == train) cmd_train(g, panel_path, run);
        else if (sub == predict) cmd_predict(g, panel_path, model_path, range_name, run);
        else if (sub == backtest) cmd_backtest(g, scores_path, prices_path, bench_path, run);
        else if (sub == report_cmd) cmd_report(g, ledger_path, plot, run);
        else if (sub == sweep) cmd_sweep(g, panel_path, axis, axis_values, run);
    } catch (const IoError& e) {
        message = e.what();
        code = 2;
    } catch (const fs::filesystem_error& e) {
        message = e.what();
        code = 2;
    } catch (const std::exception& e) {
        message = e.what();
        code = 1;
    }
    if (code != 0) std::cerr << "error: " << message << '\n';
    run.write_manifest(code == 0 ? "ok" : "error", message, seconds_since(t0));
    return code;
}
