#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lsrigru/csv.hpp"
#include "lsrigru/error.hpp"
#include "lsrigru/log.hpp"
#include "lsrigru/marketdata.hpp"
#include "lsrigru/tensor.hpp"

namespace lsrigru {

enum class RelationKind { long_term, short_term };

/// Dense symmetric d×d relation matrix with unit diagonal.
struct RelationMatrix {
    RelationKind kind = RelationKind::long_term;
    Matrix values;
    std::optional<Date> as_of;  // short kind only
    std::vector<std::string> warnings;

    std::size_t size() const { return values.rows; }
    double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

/// Long-term matrix from the two-level industry hierarchy.
///
/// Entries are 1 for: stocks sharing a secondary industry; a stock and its
/// secondary or primary industry node; secondaries under the same primary; any
/// two primary nodes; a secondary and its parent primary; the diagonal.
inline RelationMatrix build_long_matrix(const Universe& u) {
    const std::size_t m = u.m();
    std::vector<std::size_t> sec_of(m), pri_of(m), parent(u.n_prime());
    for (std::size_t i = 0; i < m; ++i) {
        const auto s = u.secondary_index(u.stock_secondary[i]);
        const auto p = u.primary_index(u.stock_primary[i]);
        if (!s || !p)
            throw DataError("stock " + u.stocks[i] + " has unknown industry code (" + u.stock_primary[i] +
                            ", " + u.stock_secondary[i] + ")");
        sec_of[i] = *s;
        pri_of[i] = *p;
    }
    for (std::size_t s = 0; s < u.n_prime(); ++s) {
        const auto p = u.primary_index(u.secondary_parent[s]);
        if (!p) throw DataError("secondary industry " + u.secondaries[s] + " has unknown parent");
        parent[s] = *p;
    }

    RelationMatrix r{RelationKind::long_term, Matrix(u.d(), u.d(), 0.0), std::nullopt, {}};
    auto link = [&](std::size_t a, std::size_t b) {
        r.values(a, b) = 1.0;
        r.values(b, a) = 1.0;
    };
    for (std::size_t i = 0; i < u.d(); ++i) r.values(i, i) = 1.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j)
            if (sec_of[i] == sec_of[j]) link(i, j);
        link(i, u.secondary_node(sec_of[i]));
        link(i, u.primary_node(pri_of[i]));
    }
    for (std::size_t p = 0; p < u.n(); ++p)
        for (std::size_t q = p + 1; q < u.n(); ++q) link(u.primary_node(p), u.primary_node(q));
    for (std::size_t s = 0; s < u.n_prime(); ++s) {
        link(u.secondary_node(s), u.primary_node(parent[s]));
        for (std::size_t t = s + 1; t < u.n_prime(); ++t)
            if (parent[s] == parent[t]) link(u.secondary_node(s), u.secondary_node(t));
    }
    return r;
}

/// Plain cosine similarity; nullopt when either vector has zero norm.
inline std::optional<double> cosine_similarity(std::span<const double> a, std::span<const double> b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        ab += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    if (aa == 0.0 || bb == 0.0) return std::nullopt;
    return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

/// Maps a cosine in [−1, 1] to [0, 1].
inline double rescale_similarity(double cosine) { return (cosine + 1.0) / 2.0; }

/// Series the short-term similarity is computed over.
enum class ShortSignal {
    raw_open,        // trailing open prices, taken literally
    overnight_gap,   // open_t / close_{t−1} − 1
};

/// Short-term matrix from per-node series windows: `windows` is d rows of equal length.
/// Missing (NaN) entries drop that day from the pair's comparison.
inline RelationMatrix short_matrix_from_windows(const Matrix& windows, std::optional<Date> as_of = {}) {
    const std::size_t d = windows.rows;
    RelationMatrix r{RelationKind::short_term, Matrix(d, d, 0.0), as_of, {}};
    Vec a, b;
    for (std::size_t i = 0; i < d; ++i) {
        r.values(i, i) = 1.0;
        for (std::size_t j = i + 1; j < d; ++j) {
            a.clear();
            b.clear();
            for (std::size_t k = 0; k < windows.cols; ++k) {
                const double x = windows(i, k), y = windows(j, k);
                if (std::isnan(x) || std::isnan(y)) continue;
                a.push_back(x);
                b.push_back(y);
            }
            const auto c = cosine_similarity(a, b);
            double v = 0.5;
            if (c) {
                v = rescale_similarity(*c);
            } else {
                r.warnings.push_back("zero-norm window for nodes " + std::to_string(i) + "," +
                                     std::to_string(j) + "; entry set to 0.5");
            }
            r.values(i, j) = v;
            r.values(j, i) = v;
        }
    }
    return r;
}

/// Short-term matrix at calendar position `as_of` over the trailing `lookback` days.
///
/// `opens` (and `closes` for the overnight variant) are node price grids whose
/// industry columns already hold constituent means.
inline RelationMatrix build_short_matrix(const PriceGrid& opens, std::size_t as_of, std::size_t lookback,
                                         ShortSignal signal = ShortSignal::raw_open,
                                         const PriceGrid* closes = nullptr) {
    if (lookback < 1) throw ArgumentError("lookback must be >= 1");
    if (as_of >= opens.dates.size()) throw ArgumentError("as_of outside the price grid");
    const bool gaps = signal == ShortSignal::overnight_gap;
    if (gaps && closes == nullptr) throw ArgumentError("overnight-gap signal needs closes");
    const std::size_t needed = gaps ? lookback + 1 : lookback;
    if (as_of + 1 < needed)
        throw DataError("short matrix at " + opens.dates[as_of].str() + " needs " + std::to_string(needed) +
                        " days of history");
    const std::size_t d = opens.values.cols;
    Matrix win(d, lookback);
    const std::size_t first = as_of + 1 - lookback;
    for (std::size_t node = 0; node < d; ++node) {
        for (std::size_t k = 0; k < lookback; ++k) {
            const std::size_t t = first + k;
            if (gaps)
                win(node, k) = opens.values(t, node) / closes->values(t - 1, node) - 1.0;
            else
                win(node, k) = opens.values(t, node);
        }
    }
    auto r = short_matrix_from_windows(win, opens.dates[as_of]);
    for (const auto& w : r.warnings) log::debug(w);
    return r;
}

struct ThresholdPolicy {
    double theta = 0.5;
};
struct TopKPolicy {
    std::size_t k = 10;
};
using EdgePolicy = std::variant<ThresholdPolicy, TopKPolicy>;

/// Parses `topk:K` or `threshold:T`.
inline EdgePolicy parse_edge_policy(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) throw ArgumentError("policy must be topk:K or threshold:T");
    const auto kind = text.substr(0, colon);
    const auto arg = text.substr(colon + 1);
    const double v = csv::parse_double(arg, 0, "policy");
    if (kind == "topk") {
        if (v < 1 || v != std::floor(v)) throw ArgumentError("topk policy needs an integer k >= 1");
        return TopKPolicy{static_cast<std::size_t>(v)};
    }
    if (kind == "threshold") {
        if (!(v > 0.0 && v < 1.0)) throw ArgumentError("threshold policy needs theta in (0,1)");
        return ThresholdPolicy{v};
    }
    throw ArgumentError("unknown policy '" + std::string(kind) + "'");
}

inline std::string format_edge_policy(const EdgePolicy& p) {
    if (const auto* t = std::get_if<ThresholdPolicy>(&p)) return "threshold:" + csv::fmt(t->theta);
    return "topk:" + std::to_string(std::get<TopKPolicy>(p).k);
}

struct Edge {
    std::size_t node = 0;
    double weight = 1.0;
    friend bool operator==(const Edge&, const Edge&) = default;
};

/// Per-node neighbour lists, self excluded, sorted by node and free of duplicates.
struct EdgeSet {
    std::vector<std::vector<Edge>> neighbors;
    std::vector<std::uint8_t> isolated;  // node has no neighbours: attention degenerates to identity

    std::size_t size() const { return neighbors.size(); }

    /// Sorts, dedupes, drops self entries and recomputes isolation flags.
    void canonicalize() {
        isolated.assign(neighbors.size(), 0);
        for (std::size_t i = 0; i < neighbors.size(); ++i) {
            auto& list = neighbors[i];
            std::erase_if(list, [i](const Edge& e) { return e.node == i; });
            std::stable_sort(list.begin(), list.end(),
                             [](const Edge& a, const Edge& b) { return a.node < b.node; });
            list.erase(std::unique(list.begin(), list.end(),
                                   [](const Edge& a, const Edge& b) { return a.node == b.node; }),
                       list.end());
            isolated[i] = list.empty() ? 1 : 0;
        }
    }

    std::size_t edge_count() const {
        std::size_t n = 0;
        for (const auto& l : neighbors) n += l.size();
        return n;
    }

    friend bool operator==(const EdgeSet&, const EdgeSet&) = default;
};

/// Sparsifies a relation matrix. Top-k lists are symmetrized by union.
inline EdgeSet to_edge_set(const RelationMatrix& r, const EdgePolicy& policy) {
    const std::size_t d = r.size();
    EdgeSet es;
    es.neighbors.resize(d);
    if (const auto* th = std::get_if<ThresholdPolicy>(&policy)) {
        if (!(th->theta > 0.0 && th->theta < 1.0)) throw ArgumentError("threshold must lie in (0,1)");
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                if (i != j && r(i, j) >= th->theta) es.neighbors[i].push_back({j, r(i, j)});
    } else {
        const std::size_t k = std::get<TopKPolicy>(policy).k;
        if (k < 1) throw ArgumentError("top-k needs k >= 1");
        std::vector<std::vector<std::uint8_t>> keep(d, std::vector<std::uint8_t>(d, 0));
        std::vector<std::size_t> order;
        for (std::size_t i = 0; i < d; ++i) {
            order.clear();
            for (std::size_t j = 0; j < d; ++j)
                if (j != i) order.push_back(j);
            const std::size_t take = std::min(k, order.size());
            std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                              [&](std::size_t a, std::size_t b) {
                                  if (r(i, a) != r(i, b)) return r(i, a) > r(i, b);
                                  return a < b;
                              });
            for (std::size_t q = 0; q < take; ++q) {
                keep[i][order[q]] = 1;
                keep[order[q]][i] = 1;
            }
        }
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                if (keep[i][j]) es.neighbors[i].push_back({j, r(i, j)});
    }
    es.canonicalize();
    return es;
}

/// Dense CSV export, one matrix row per line.
inline std::string write_dense_csv(const RelationMatrix& r) {
    std::string out;
    for (std::size_t i = 0; i < r.size(); ++i) {
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (j) out += ',';
            out += csv::fmt(r(i, j));
        }
        out += '\n';
    }
    return out;
}

/// Sparse `i,j,value` export of the non-zero entries.
inline std::string write_triples_csv(const RelationMatrix& r) {
    std::string out = "i,j,value\n";
    for (std::size_t i = 0; i < r.size(); ++i)
        for (std::size_t j = 0; j < r.size(); ++j)
            if (r(i, j) != 0.0) out += std::to_string(i) + ',' + std::to_string(j) + ',' + csv::fmt(r(i, j)) + '\n';
    return out;
}

}  // namespace lsrigru
