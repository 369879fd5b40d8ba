#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lsrigru/csv.hpp"
#include "lsrigru/dataset.hpp"
#include "lsrigru/error.hpp"
#include "lsrigru/train.hpp"

namespace lsrigru {

/// Every tunable of the pipeline. Serialized as flat `key = value` lines.
struct PipelineConfig {
    TrainConfig train;
    GraphOptions graph;
    std::size_t topk = 10;
    double train_frac = 0.6;
    double valid_frac = 0.2;
    std::optional<Date> train_end;
    std::optional<Date> valid_end;

    /// Train/valid/test ranges: explicit end dates when given, fractions otherwise.
    SplitRanges ranges(const std::vector<Date>& cal) const {
        if (!train_end) return split_by_fraction(cal, train_frac, valid_frac);
        if (cal.empty()) return {};
        SplitRanges r;
        r.train = {cal.front(), *train_end};
        const Date after_train{train_end->days + 1};
        if (valid_end) {
            r.valid = {after_train, *valid_end};
            r.test = {Date{valid_end->days + 1}, cal.back()};
        } else {
            r.test = {after_train, cal.back()};
        }
        check_ranges(r);
        return r;
    }
};

namespace detail {

inline std::size_t parse_count(std::string_view v, std::string_view key) {
    const double x = csv::parse_double(v, 0, key);
    if (x < 0 || x != static_cast<double>(static_cast<std::size_t>(x)))
        throw ParseError("'" + std::string(key) + "' must be a non-negative integer");
    return static_cast<std::size_t>(x);
}

inline std::vector<std::size_t> parse_widths(std::string_view v, std::string_view key) {
    std::vector<std::size_t> out;
    for (auto part : csv::split(v, ';')) out.push_back(parse_count(part, key));
    if (out.empty()) throw ParseError("'" + std::string(key) + "' needs at least one width");
    return out;
}

inline std::string format_widths(const std::vector<std::size_t>& w) {
    std::string out;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (i) out += ';';
        out += std::to_string(w[i]);
    }
    return out;
}

}  // namespace detail

/// Applies one `key = value` setting.
inline void apply_setting(PipelineConfig& c, std::string_view key, std::string_view value) {
    using detail::parse_count;
    value = csv::trim(value);
    auto& t = c.train;
    if (key == "window") t.window = parse_count(value, key);
    else if (key == "batch_size") t.batch_size = parse_count(value, key);
    else if (key == "learning_rate") t.learning_rate = csv::parse_double(value, 0, key);
    else if (key == "epochs") t.epochs = parse_count(value, key);
    else if (key == "adam_beta1") t.adam_beta1 = csv::parse_double(value, 0, key);
    else if (key == "adam_beta2") t.adam_beta2 = csv::parse_double(value, 0, key);
    else if (key == "adam_eps") t.adam_eps = csv::parse_double(value, 0, key);
    else if (key == "seed") t.seed = parse_count(value, key);
    else if (key == "ablation") t.arch.branches = parse_ablation(value);
    else if (key == "gat_widths") t.arch.gat_widths = detail::parse_widths(value, key);
    else if (key == "gru_widths") t.arch.gru_widths = detail::parse_widths(value, key);
    else if (key == "head_hidden") t.arch.head_hidden = parse_count(value, key);
    else if (key == "lookback") c.graph.lookback = parse_count(value, key);
    else if (key == "policy") c.graph.short_policy = parse_edge_policy(value);
    else if (key == "short_signal") {
        if (value == "raw_open") c.graph.signal = ShortSignal::raw_open;
        else if (value == "overnight_gap") c.graph.signal = ShortSignal::overnight_gap;
        else throw ParseError("short_signal must be raw_open or overnight_gap");
    }
    else if (key == "topk") c.topk = parse_count(value, key);
    else if (key == "train_frac") c.train_frac = csv::parse_double(value, 0, key);
    else if (key == "valid_frac") c.valid_frac = csv::parse_double(value, 0, key);
    else if (key == "train_end") c.train_end = value.empty() ? std::nullopt : std::optional(Date::parse(value));
    else if (key == "valid_end") c.valid_end = value.empty() ? std::nullopt : std::optional(Date::parse(value));
    else throw ArgumentError("unknown config key '" + std::string(key) + "'");
}

/// Parses a config file body. `#` starts a comment; blank lines are ignored.
inline void apply_config_text(PipelineConfig& c, std::string_view text) {
    std::size_t row = 0, start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(start, end - start);
        start = end + 1;
        ++row;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = csv::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected key = value", row);
        try {
            apply_setting(c, csv::trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ParseError& e) {
            throw ParseError(e.what(), row);
        }
    }
}

/// Canonical serialization; keys in a fixed order, numbers in shortest round-trip form.
inline std::string config_text(const PipelineConfig& c) {
    const auto& t = c.train;
    std::string out;
    auto kv = [&](std::string_view k, const std::string& v) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    };
    kv("window", std::to_string(t.window));
    kv("batch_size", std::to_string(t.batch_size));
    kv("learning_rate", csv::fmt(t.learning_rate));
    kv("epochs", std::to_string(t.epochs));
    kv("adam_beta1", csv::fmt(t.adam_beta1));
    kv("adam_beta2", csv::fmt(t.adam_beta2));
    kv("adam_eps", csv::fmt(t.adam_eps));
    kv("seed", std::to_string(t.seed));
    kv("ablation", format_ablation(t.arch.branches));
    kv("gat_widths", detail::format_widths(t.arch.gat_widths));
    kv("gru_widths", detail::format_widths(t.arch.gru_widths));
    kv("head_hidden", std::to_string(t.arch.head_hidden));
    kv("lookback", std::to_string(c.graph.lookback));
    kv("policy", format_edge_policy(c.graph.short_policy));
    kv("short_signal", c.graph.signal == ShortSignal::raw_open ? "raw_open" : "overnight_gap");
    kv("topk", std::to_string(c.topk));
    kv("train_frac", csv::fmt(c.train_frac));
    kv("valid_frac", csv::fmt(c.valid_frac));
    kv("train_end", c.train_end ? c.train_end->str() : "");
    kv("valid_end", c.valid_end ? c.valid_end->str() : "");
    return out;
}

}  // namespace lsrigru
