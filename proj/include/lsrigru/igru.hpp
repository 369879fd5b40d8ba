#pragma once

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lsrigru/error.hpp"
#include "lsrigru/tensor.hpp"

namespace lsrigru::igru {

/// Gate weights of one recurrent cell. W* are H×input, U* are H×H.
///
/// The layer-1 input is the temporal features concatenated with the long and
/// short relation embeddings; deeper layers take the previous layer's hidden state.
struct CellParams {
    Matrix wz, wr, wh;
    Matrix uz, ur, uh;
    Vec bz, br, bh;

    std::size_t input_dim() const { return wz.cols; }
    std::size_t hidden_dim() const { return wz.rows; }

    static CellParams zeros(std::size_t input, std::size_t hidden) {
        if (input == 0 || hidden == 0) throw ConfigError("GRU cell dimensions must be positive");
        CellParams p;
        p.wz = p.wr = p.wh = Matrix(hidden, input);
        p.uz = p.ur = p.uh = Matrix(hidden, hidden);
        p.bz = p.br = p.bh = Vec(hidden, 0.0);
        return p;
    }

    void init_uniform(std::mt19937_64& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim()));
        const double in_bound = 1.0 / std::sqrt(static_cast<double>(input_dim()));
        for (Matrix* w : {&wz, &wr, &wh}) fill_uniform(w->data, in_bound, rng);
        for (Matrix* u : {&uz, &ur, &uh}) fill_uniform(u->data, bound, rng);
        for (Vec* b : {&bz, &br, &bh}) fill_uniform(*b, bound, rng);
    }
};

struct StepCache {
    Vec input, h_prev, z, r, candidate, reset_prev, h;
};

/// One step of the cell:
///   z = σ(Wz·u + Uz·h + bz), r = σ(Wr·u + Ur·h + br),
///   h̃ = tanh(Wh·u + Uh·(r⊙h) + bh), h' = (1−z)⊙h̃ + z⊙h.
inline StepCache step_forward(const CellParams& p, std::span<const double> input, std::span<const double> h_prev,
                              std::size_t step_index = 0) {
    const std::size_t H = p.hidden_dim();
    if (input.size() != p.input_dim())
        throw ConfigError("GRU input has " + std::to_string(input.size()) + " entries, cell expects " +
                          std::to_string(p.input_dim()));
    if (h_prev.size() != H) throw ConfigError("GRU hidden state has wrong size");
    StepCache c;
    c.input.assign(input.begin(), input.end());
    c.h_prev.assign(h_prev.begin(), h_prev.end());
    c.z = p.bz;
    c.r = p.br;
    gemv_acc(p.wz, input, c.z);
    gemv_acc(p.uz, h_prev, c.z);
    gemv_acc(p.wr, input, c.r);
    gemv_acc(p.ur, h_prev, c.r);
    for (std::size_t k = 0; k < H; ++k) {
        c.z[k] = sigmoid(c.z[k]);
        c.r[k] = sigmoid(c.r[k]);
    }
    c.reset_prev.resize(H);
    for (std::size_t k = 0; k < H; ++k) c.reset_prev[k] = c.r[k] * h_prev[k];
    c.candidate = p.bh;
    gemv_acc(p.wh, input, c.candidate);
    gemv_acc(p.uh, c.reset_prev, c.candidate);
    c.h.resize(H);
    for (std::size_t k = 0; k < H; ++k) {
        c.candidate[k] = std::tanh(c.candidate[k]);
        c.h[k] = (1.0 - c.z[k]) * c.candidate[k] + c.z[k] * h_prev[k];
    }
    if (!all_finite(c.h)) throw NumericError("non-finite GRU hidden state at step " + std::to_string(step_index));
    return c;
}

/// Concatenates x ‖ long ‖ short and applies one step.
inline Vec cell_step(const CellParams& p, std::span<const double> x, std::span<const double> long_emb,
                     std::span<const double> short_emb, std::span<const double> h_prev) {
    Vec u;
    u.reserve(x.size() + long_emb.size() + short_emb.size());
    u.insert(u.end(), x.begin(), x.end());
    u.insert(u.end(), long_emb.begin(), long_emb.end());
    u.insert(u.end(), short_emb.begin(), short_emb.end());
    return step_forward(p, u, h_prev).h;
}

/// Accumulates parameter gradients; adds to `d_input` and `d_h_prev` (both pre-sized).
inline void step_backward(const CellParams& p, const StepCache& c, std::span<const double> d_h, CellParams& g,
                          std::span<double> d_input, std::span<double> d_h_prev) {
    const std::size_t H = p.hidden_dim();
    Vec da_h(H), da_z(H), d_r(H, 0.0), da_r(H), d_reset(H, 0.0);
    for (std::size_t k = 0; k < H; ++k) {
        const double dh = d_h[k];
        const double d_cand = dh * (1.0 - c.z[k]);
        const double dz = dh * (c.h_prev[k] - c.candidate[k]);
        d_h_prev[k] += dh * c.z[k];
        da_h[k] = d_cand * (1.0 - c.candidate[k] * c.candidate[k]);
        da_z[k] = dz * c.z[k] * (1.0 - c.z[k]);
    }
    outer_acc(g.wh, da_h, c.input);
    outer_acc(g.uh, da_h, c.reset_prev);
    for (std::size_t k = 0; k < H; ++k) g.bh[k] += da_h[k];
    gemv_t_acc(p.wh, da_h, d_input);
    gemv_t_acc(p.uh, da_h, d_reset);
    for (std::size_t k = 0; k < H; ++k) {
        d_r[k] = d_reset[k] * c.h_prev[k];
        d_h_prev[k] += d_reset[k] * c.r[k];
        da_r[k] = d_r[k] * c.r[k] * (1.0 - c.r[k]);
    }
    outer_acc(g.wz, da_z, c.input);
    outer_acc(g.uz, da_z, c.h_prev);
    outer_acc(g.wr, da_r, c.input);
    outer_acc(g.ur, da_r, c.h_prev);
    for (std::size_t k = 0; k < H; ++k) {
        g.bz[k] += da_z[k];
        g.br[k] += da_r[k];
    }
    gemv_t_acc(p.wz, da_z, d_input);
    gemv_t_acc(p.wr, da_r, d_input);
    gemv_t_acc(p.uz, da_z, d_h_prev);
    gemv_t_acc(p.ur, da_r, d_h_prev);
}

/// Stacked recurrent layers. Only layer 0 sees the relational concatenation.
struct Stack {
    std::vector<CellParams> layers;

    static Stack zeros(std::size_t input_dim, const std::vector<std::size_t>& widths) {
        if (widths.empty()) throw ConfigError("GRU stack needs at least one layer");
        Stack s;
        std::size_t prev = input_dim;
        for (std::size_t w : widths) {
            s.layers.push_back(CellParams::zeros(prev, w));
            prev = w;
        }
        return s;
    }

    std::size_t input_dim() const { return layers.front().input_dim(); }
    std::size_t out_dim() const { return layers.back().hidden_dim(); }
};

/// step_caches[layer][step]
struct UnrollCache {
    std::vector<std::vector<StepCache>> steps;
    const Vec& final_hidden() const { return steps.back().back().h; }
};

/// Runs the stack over a window of layer-0 inputs from h₀ = 0.
inline UnrollCache unroll_forward(const Stack& stack, const std::vector<Vec>& window,
                                  std::size_t expected_length = 0) {
    if (window.empty()) throw DataError("empty window");
    if (expected_length != 0 && window.size() != expected_length)
        throw DataError("window has " + std::to_string(window.size()) + " steps, configured " +
                        std::to_string(expected_length));
    for (const auto& u : window)
        if (u.size() != stack.input_dim())
            throw DataError("ragged window: step input has " + std::to_string(u.size()) + " entries, expected " +
                            std::to_string(stack.input_dim()));
    UnrollCache uc;
    uc.steps.resize(stack.layers.size());
    for (std::size_t l = 0; l < stack.layers.size(); ++l) {
        const auto& cell = stack.layers[l];
        Vec h(cell.hidden_dim(), 0.0);
        uc.steps[l].reserve(window.size());
        for (std::size_t t = 0; t < window.size(); ++t) {
            const Vec& in = l == 0 ? window[t] : uc.steps[l - 1][t].h;
            uc.steps[l].push_back(step_forward(cell, in, h, t));
            h = uc.steps[l].back().h;
        }
    }
    return uc;
}

inline Vec unroll(const Stack& stack, const std::vector<Vec>& window, std::size_t expected_length = 0) {
    return unroll_forward(stack, window, expected_length).final_hidden();
}

/// Backprop through time. Returns d(loss)/d(layer-0 input) per step.
inline std::vector<Vec> unroll_backward(const Stack& stack, const UnrollCache& uc, std::span<const double> d_final,
                                        Stack& grads) {
    const std::size_t L = stack.layers.size();
    const std::size_t T = uc.steps.front().size();
    // d_out[t]: gradient flowing into layer l's output at step t from above.
    std::vector<Vec> d_out(T, Vec(stack.out_dim(), 0.0));
    d_out[T - 1].assign(d_final.begin(), d_final.end());
    for (std::size_t l = L; l-- > 0;) {
        const auto& cell = stack.layers[l];
        std::vector<Vec> d_in(T, Vec(cell.input_dim(), 0.0));
        Vec d_h(cell.hidden_dim(), 0.0);
        for (std::size_t t = T; t-- > 0;) {
            for (std::size_t k = 0; k < d_h.size(); ++k) d_h[k] += d_out[t][k];
            Vec d_prev(cell.hidden_dim(), 0.0);
            step_backward(cell, uc.steps[l][t], d_h, grads.layers[l], d_in[t], d_prev);
            d_h = std::move(d_prev);
        }
        d_out = std::move(d_in);
    }
    return d_out;
}

/// MLP head: one ReLU hidden layer (default width 8) then a linear scalar.
struct HeadParams {
    Matrix w1;  // hidden × H
    Vec b1;
    Vec w2;     // hidden
    double b2 = 0.0;

    static HeadParams zeros(std::size_t input, std::size_t hidden = 8) {
        if (input == 0 || hidden == 0) throw ConfigError("head dimensions must be positive");
        return {Matrix(hidden, input), Vec(hidden, 0.0), Vec(hidden, 0.0), 0.0};
    }

    std::size_t input_dim() const { return w1.cols; }

    void init_uniform(std::mt19937_64& rng) {
        fill_uniform(w1.data, 1.0 / std::sqrt(static_cast<double>(input_dim())), rng);
        std::fill(b1.begin(), b1.end(), 0.0);
        const double bound = 1.0 / std::sqrt(static_cast<double>(w2.size()));
        fill_uniform(w2, bound, rng);
        b2 = 0.5;  // midpoint of the percentile labels
    }
};

struct HeadCache {
    Vec input, pre, hidden;
    double score = 0.0;
};

inline HeadCache head_forward(const HeadParams& head, std::span<const double> h) {
    if (h.size() != head.input_dim()) throw ConfigError("head input has wrong size");
    HeadCache c;
    c.input.assign(h.begin(), h.end());
    c.pre = head.b1;
    gemv_acc(head.w1, h, c.pre);
    c.hidden.resize(c.pre.size());
    for (std::size_t k = 0; k < c.pre.size(); ++k) c.hidden[k] = std::max(c.pre[k], 0.0);
    c.score = dot(head.w2, c.hidden) + head.b2;
    if (!std::isfinite(c.score)) throw NumericError("non-finite score");
    return c;
}

inline double predict(const HeadParams& head, std::span<const double> h) { return head_forward(head, h).score; }

/// Gradient of the head given d(loss)/d(score); returns d(loss)/d(input).
inline Vec head_backward(const HeadParams& head, const HeadCache& c, double d_score, HeadParams& g) {
    Vec d_pre(c.pre.size());
    for (std::size_t k = 0; k < c.pre.size(); ++k) {
        g.w2[k] += d_score * c.hidden[k];
        d_pre[k] = c.pre[k] > 0.0 ? d_score * head.w2[k] : 0.0;
        g.b1[k] += d_pre[k];
    }
    g.b2 += d_score;
    outer_acc(g.w1, d_pre, c.input);
    Vec d_in(c.input.size(), 0.0);
    gemv_t_acc(head.w1, d_pre, d_in);
    return d_in;
}

/// Mean squared error over the batch.
inline double loss(std::span<const double> scores, std::span<const double> labels) {
    if (scores.empty()) throw ArgumentError("loss over an empty batch");
    if (scores.size() != labels.size()) throw ArgumentError("scores and labels differ in length");
    double acc = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) acc += (labels[i] - scores[i]) * (labels[i] - scores[i]);
    return acc / static_cast<double>(scores.size());
}

}  // namespace lsrigru::igru
