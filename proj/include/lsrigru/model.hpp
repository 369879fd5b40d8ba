#pragma once

#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lsrigru/csv.hpp"
#include "lsrigru/error.hpp"
#include "lsrigru/gat.hpp"
#include "lsrigru/igru.hpp"
#include "lsrigru/marketdata.hpp"

namespace lsrigru {

/// Which relational branches feed the recurrent layer. The temporal path is always on.
struct Branches {
    bool long_term = true;
    bool short_term = true;

    friend bool operator==(const Branches&, const Branches&) = default;
};

/// Parses an ablation set: `all`, `temporal-only`, or a comma list of `long`/`short`.
inline Branches parse_ablation(std::string_view text) {
    const auto items = csv::split(text);
    Branches b{false, false};
    bool any = false, temporal_only = false;
    for (auto raw : items) {
        const auto item = csv::trim(raw);
        if (item.empty()) continue;
        any = true;
        if (item == "all") {
            b = {true, true};
        } else if (item == "long") {
            b.long_term = true;
        } else if (item == "short") {
            b.short_term = true;
        } else if (item == "temporal-only") {
            temporal_only = true;
        } else {
            throw ArgumentError("unknown ablation module '" + std::string(item) + "'");
        }
    }
    if (!any) throw ArgumentError("ablation set must not be empty");
    if (temporal_only && (b.long_term || b.short_term))
        throw ArgumentError("temporal-only cannot be combined with relational branches");
    return b;
}

inline std::string format_ablation(const Branches& b) {
    if (b.long_term && b.short_term) return "all";
    if (b.long_term) return "long";
    if (b.short_term) return "short";
    return "temporal-only";
}

/// Layer widths and enabled branches.
struct Architecture {
    std::size_t features = kNumFeatures;
    std::vector<std::size_t> gat_widths = {30, 15};
    std::vector<std::size_t> gru_widths = {15, 10};
    std::size_t head_hidden = 8;
    Branches branches;

    /// Width of one relation embedding (F').
    std::size_t relation_dim() const { return gat_widths.back(); }
    /// Layer-0 recurrent input: x ‖ long ‖ short, regardless of which branches are live.
    std::size_t recurrent_input_dim() const { return features + 2 * relation_dim(); }

    void validate() const {
        if (features == 0) throw ConfigError("feature dimension must be positive");
        if (gat_widths.empty() || gru_widths.empty()) throw ConfigError("layer lists must be non-empty");
        for (auto w : gat_widths)
            if (w == 0) throw ConfigError("GAT widths must be positive");
        for (auto w : gru_widths)
            if (w == 0) throw ConfigError("GRU widths must be positive");
        if (head_hidden == 0) throw ConfigError("head width must be positive");
    }
};

/// Widths for an L-layer stack whose last layer is `last` and the others `inner`.
inline std::vector<std::size_t> layer_widths(std::size_t layers, std::size_t inner, std::size_t last) {
    if (layers == 0) throw ArgumentError("layer count must be >= 1");
    std::vector<std::size_t> w(layers, inner);
    w.back() = last;
    return w;
}

/// Named view of one learnable tensor.
struct TensorView {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::span<double> values;
};

/// All learnable tensors. A second instance of the same architecture holds gradients.
struct Model {
    Architecture arch;
    std::optional<gat::Stack> long_gat;
    std::optional<gat::Stack> short_gat;
    igru::Stack gru;
    igru::HeadParams head;

    /// Builds the zero-initialized wiring for an architecture. A disabled branch has no
    /// parameters; it contributes a zero F'-vector at every step.
    static Model zeros(const Architecture& arch) {
        arch.validate();
        Model m;
        m.arch = arch;
        if (arch.branches.long_term) m.long_gat = gat::Stack::zeros(arch.features, arch.gat_widths);
        if (arch.branches.short_term) m.short_gat = gat::Stack::zeros(arch.features, arch.gat_widths);
        m.gru = igru::Stack::zeros(arch.recurrent_input_dim(), arch.gru_widths);
        m.head = igru::HeadParams::zeros(arch.gru_widths.back(), arch.head_hidden);
        return m;
    }

    /// Uniform(±1/√fan_in) initialization in a fixed tensor order.
    void init_uniform(std::mt19937_64& rng) {
        for (auto* stack : {&long_gat, &short_gat})
            if (*stack)
                for (auto& layer : (*stack)->layers) layer.init_uniform(rng);
        for (auto& cell : gru.layers) cell.init_uniform(rng);
        head.init_uniform(rng);
    }

    std::vector<TensorView> tensors() {
        std::vector<TensorView> out;
        auto add_matrix = [&](std::string name, Matrix& m) {
            out.push_back({std::move(name), m.rows, m.cols, m.data});
        };
        auto add_vec = [&](std::string name, Vec& v) { out.push_back({std::move(name), 1, v.size(), v}); };
        auto add_gat = [&](const std::string& prefix, std::optional<gat::Stack>& s) {
            if (!s) return;
            for (std::size_t l = 0; l < s->layers.size(); ++l) {
                const std::string p = prefix + "." + std::to_string(l);
                add_matrix(p + ".projection", s->layers[l].projection);
                add_vec(p + ".attention", s->layers[l].attention);
            }
        };
        add_gat("gat_long", long_gat);
        add_gat("gat_short", short_gat);
        for (std::size_t l = 0; l < gru.layers.size(); ++l) {
            auto& c = gru.layers[l];
            const std::string p = "gru." + std::to_string(l);
            add_matrix(p + ".wz", c.wz);
            add_matrix(p + ".wr", c.wr);
            add_matrix(p + ".wh", c.wh);
            add_matrix(p + ".uz", c.uz);
            add_matrix(p + ".ur", c.ur);
            add_matrix(p + ".uh", c.uh);
            add_vec(p + ".bz", c.bz);
            add_vec(p + ".br", c.br);
            add_vec(p + ".bh", c.bh);
        }
        add_matrix("head.w1", head.w1);
        add_vec("head.b1", head.b1);
        add_vec("head.w2", head.w2);
        out.push_back({"head.b2", 1, 1, std::span<double>(&head.b2, 1)});
        return out;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (const auto& t : tensors()) n += t.values.size();
        return n;
    }

    void zero() {
        for (auto& t : tensors()) std::fill(t.values.begin(), t.values.end(), 0.0);
    }
};

/// Model wiring for an ablation configuration.
inline Model ablation_wire(const Architecture& arch) { return Model::zeros(arch); }

}  // namespace lsrigru
