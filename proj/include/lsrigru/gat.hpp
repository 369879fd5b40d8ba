#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "lsrigru/error.hpp"
#include "lsrigru/relgraph.hpp"
#include "lsrigru/tensor.hpp"

namespace lsrigru::gat {

inline constexpr double kDefaultSlope = 0.2;

/// One single-head attention layer: projection W (F_out×F_in) and attention vector a (2·F_out).
struct LayerParams {
    Matrix projection;
    Vec attention;
    double slope = kDefaultSlope;

    std::size_t in_dim() const { return projection.cols; }
    std::size_t out_dim() const { return projection.rows; }

    static LayerParams zeros(std::size_t in, std::size_t out, double slope = kDefaultSlope) {
        if (in == 0 || out == 0) throw ConfigError("GAT layer dimensions must be positive");
        return {Matrix(out, in), Vec(2 * out, 0.0), slope};
    }

    void init_uniform(std::mt19937_64& rng) {
        fill_uniform(projection.data, 1.0 / std::sqrt(static_cast<double>(in_dim())), rng);
        fill_uniform(attention, 1.0 / std::sqrt(static_cast<double>(attention.size())), rng);
    }
};

/// Everything the backward pass needs from one forward application.
struct LayerCache {
    Matrix input;
    Matrix proj;                                // node × F_out
    Matrix pre;                                 // aggregated, before ReLU
    Matrix output;                              // after ReLU
    std::vector<std::vector<std::size_t>> hood;  // self first, then neighbours
    std::vector<Vec> score;                     // attention logits before leaky rectifier
    std::vector<Vec> alpha;
};

inline double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }

/// Node i's softmax neighbourhood: itself then its neighbours.
inline std::vector<std::vector<std::size_t>> neighbourhoods(const EdgeSet& edges) {
    std::vector<std::vector<std::size_t>> hood(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i) {
        hood[i].push_back(i);
        for (const auto& e : edges.neighbors[i])
            if (e.node != i) hood[i].push_back(e.node);
        std::sort(hood[i].begin() + 1, hood[i].end());
        hood[i].erase(std::unique(hood[i].begin() + 1, hood[i].end()), hood[i].end());
    }
    return hood;
}

inline LayerCache forward(const LayerParams& layer, const Matrix& x, const EdgeSet& edges,
                          std::size_t layer_index = 0) {
    if (x.cols != layer.in_dim())
        throw ConfigError("GAT layer " + std::to_string(layer_index) + " expects " +
                          std::to_string(layer.in_dim()) + " input features, got " + std::to_string(x.cols));
    if (x.rows != edges.size()) throw ConfigError("feature rows do not match edge set size");
    const std::size_t d = x.rows, fo = layer.out_dim();

    LayerCache c;
    c.input = x;
    c.proj = Matrix(d, fo);
    for (std::size_t i = 0; i < d; ++i) gemv_acc(layer.projection, x.row(i), c.proj.row(i));

    const std::span<const double> a_src(layer.attention.data(), fo);
    const std::span<const double> a_dst(layer.attention.data() + fo, fo);
    Vec src(d), dst(d);
    for (std::size_t i = 0; i < d; ++i) {
        src[i] = dot(a_src, c.proj.row(i));
        dst[i] = dot(a_dst, c.proj.row(i));
    }

    c.hood = neighbourhoods(edges);
    c.score.resize(d);
    c.alpha.resize(d);
    c.pre = Matrix(d, fo);
    c.output = Matrix(d, fo);
    for (std::size_t i = 0; i < d; ++i) {
        const auto& h = c.hood[i];
        auto& s = c.score[i];
        auto& al = c.alpha[i];
        s.resize(h.size());
        al.resize(h.size());
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t q = 0; q < h.size(); ++q) {
            s[q] = src[i] + dst[h[q]];
            mx = std::max(mx, leaky(s[q], layer.slope));
        }
        double z = 0.0;
        for (std::size_t q = 0; q < h.size(); ++q) {
            al[q] = std::exp(leaky(s[q], layer.slope) - mx);
            z += al[q];
        }
        auto out = c.pre.row(i);
        for (std::size_t q = 0; q < h.size(); ++q) {
            al[q] /= z;
            const auto pj = c.proj.row(h[q]);
            for (std::size_t o = 0; o < fo; ++o) out[o] += al[q] * pj[o];
        }
        auto act = c.output.row(i);
        for (std::size_t o = 0; o < fo; ++o) {
            if (!std::isfinite(out[o]))
                throw NumericError("non-finite GAT activation at node " + std::to_string(i) + ", layer " +
                                   std::to_string(layer_index));
            act[o] = std::max(out[o], 0.0);
        }
    }
    return c;
}

/// Attention weights over each node's {self} ∪ N(i); weights of a node sum to 1.
inline std::vector<std::vector<Edge>> attention_coefficients(const LayerParams& layer, const Matrix& x,
                                                             const EdgeSet& edges) {
    const auto c = forward(layer, x, edges);
    std::vector<std::vector<Edge>> out(c.hood.size());
    for (std::size_t i = 0; i < c.hood.size(); ++i)
        for (std::size_t q = 0; q < c.hood[i].size(); ++q) out[i].push_back({c.hood[i][q], c.alpha[i][q]});
    return out;
}

inline Matrix gat_layer(const LayerParams& layer, const Matrix& x, const EdgeSet& edges) {
    return forward(layer, x, edges).output;
}

/// Accumulates parameter gradients into `grads`; returns the gradient w.r.t. the layer input.
inline Matrix backward(const LayerParams& layer, const LayerCache& c, const Matrix& d_out, LayerParams& grads,
                       bool need_input_grad = true) {
    const std::size_t d = c.proj.rows, fo = layer.out_dim();
    const std::span<const double> a_src(layer.attention.data(), fo);
    const std::span<const double> a_dst(layer.attention.data() + fo, fo);

    Matrix d_proj(d, fo);
    Vec d_src(d, 0.0), d_dst(d, 0.0);
    Vec dz(fo);
    for (std::size_t i = 0; i < d; ++i) {
        const auto pre = c.pre.row(i);
        const auto go = d_out.row(i);
        bool any = false;
        for (std::size_t o = 0; o < fo; ++o) {
            dz[o] = pre[o] > 0.0 ? go[o] : 0.0;
            any = any || dz[o] != 0.0;
        }
        if (!any) continue;
        const auto& h = c.hood[i];
        const auto& al = c.alpha[i];
        Vec d_alpha(h.size());
        double weighted = 0.0;
        for (std::size_t q = 0; q < h.size(); ++q) {
            const auto pj = c.proj.row(h[q]);
            auto dpj = d_proj.row(h[q]);
            double g = 0.0;
            for (std::size_t o = 0; o < fo; ++o) {
                dpj[o] += al[q] * dz[o];
                g += dz[o] * pj[o];
            }
            d_alpha[q] = g;
            weighted += al[q] * g;
        }
        for (std::size_t q = 0; q < h.size(); ++q) {
            const double d_logit = al[q] * (d_alpha[q] - weighted);
            const double d_score = d_logit * (c.score[i][q] > 0.0 ? 1.0 : layer.slope);
            d_src[i] += d_score;
            d_dst[h[q]] += d_score;
        }
    }

    for (std::size_t i = 0; i < d; ++i) {
        const auto pi = c.proj.row(i);
        auto dpi = d_proj.row(i);
        for (std::size_t o = 0; o < fo; ++o) {
            grads.attention[o] += d_src[i] * pi[o];
            grads.attention[fo + o] += d_dst[i] * pi[o];
            dpi[o] += d_src[i] * a_src[o] + d_dst[i] * a_dst[o];
        }
    }

    Matrix d_in;
    if (need_input_grad) d_in = Matrix(d, layer.in_dim());
    for (std::size_t i = 0; i < d; ++i) {
        outer_acc(grads.projection, d_proj.row(i), c.input.row(i));
        if (need_input_grad) gemv_t_acc(layer.projection, d_proj.row(i), d_in.row(i));
    }
    return d_in;
}

/// A stack of attention layers sharing one edge set. Default widths 30 then 15.
struct Stack {
    std::vector<LayerParams> layers;

    static Stack zeros(std::size_t in_dim, const std::vector<std::size_t>& widths) {
        if (widths.empty()) throw ConfigError("GAT stack needs at least one layer");
        Stack s;
        std::size_t prev = in_dim;
        for (std::size_t w : widths) {
            s.layers.push_back(LayerParams::zeros(prev, w));
            prev = w;
        }
        return s;
    }

    std::size_t out_dim() const { return layers.back().out_dim(); }

    void validate() const {
        if (layers.empty()) throw ConfigError("GAT stack needs at least one layer");
        for (std::size_t l = 1; l < layers.size(); ++l)
            if (layers[l].in_dim() != layers[l - 1].out_dim())
                throw ConfigError("GAT layer " + std::to_string(l) + " input " +
                                  std::to_string(layers[l].in_dim()) + " does not match previous output " +
                                  std::to_string(layers[l - 1].out_dim()));
    }
};

struct StackCache {
    std::vector<LayerCache> layers;
    const Matrix& output() const { return layers.back().output; }
};

inline StackCache encode_forward(const Stack& stack, const Matrix& x, const EdgeSet& edges) {
    stack.validate();
    StackCache sc;
    sc.layers.reserve(stack.layers.size());
    const Matrix* in = &x;
    for (std::size_t l = 0; l < stack.layers.size(); ++l) {
        sc.layers.push_back(forward(stack.layers[l], *in, edges, l));
        in = &sc.layers.back().output;
    }
    return sc;
}

/// Node embeddings after every layer of the stack.
inline Matrix encode(const Stack& stack, const Matrix& x, const EdgeSet& edges) {
    return encode_forward(stack, x, edges).output();
}

inline void encode_backward(const Stack& stack, const StackCache& sc, const Matrix& d_out, Stack& grads) {
    Matrix g = d_out;
    for (std::size_t l = stack.layers.size(); l-- > 0;)
        g = backward(stack.layers[l], sc.layers[l], g, grads.layers[l], l > 0);
}

}  // namespace lsrigru::gat
