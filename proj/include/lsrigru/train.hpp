#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lsrigru/dataset.hpp"
#include "lsrigru/error.hpp"
#include "lsrigru/log.hpp"
#include "lsrigru/model.hpp"

namespace lsrigru {

struct TrainConfig {
    std::size_t window = 15;
    std::size_t batch_size = 128;
    double learning_rate = 0.0002;
    std::size_t epochs = 3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    Architecture arch;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ArgumentError("learning_rate must be > 0");
        if (window < 1) throw ArgumentError("window must be >= 1");
        if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
        arch.validate();
    }
};

// ---------------------------------------------------------------------------
// Forward and backward over a batch
// ---------------------------------------------------------------------------

struct BatchResult {
    double loss = 0.0;
    Vec scores;
};

namespace detail {

struct DayEmbeddings {
    gat::StackCache long_cache;
    gat::StackCache short_cache;
};

inline std::vector<std::size_t> window_days(std::span<const SequenceSample> batch, std::size_t window) {
    std::vector<std::size_t> days;
    for (const auto& s : batch) {
        if (s.end + 1 < window) throw DataError("sample window starts before the calendar");
        for (std::size_t t = s.end + 1 - window; t <= s.end; ++t) days.push_back(t);
    }
    std::sort(days.begin(), days.end());
    days.erase(std::unique(days.begin(), days.end()), days.end());
    return days;
}

}  // namespace detail

/// Scores a batch and, when `grads` is non-null, accumulates d(MSE)/d(params) into it.
///
/// Relation embeddings are computed once per distinct calendar day in the batch
/// and shared by every sample that reads that day. A disabled branch feeds zeros.
/// Labels are only read when gradients or the loss are requested.
inline BatchResult evaluate_batch(const Model& model, const MarketData& data, std::span<const SequenceSample> batch,
                                  std::size_t window, Model* grads = nullptr, bool with_loss = true) {
    if (batch.empty()) throw ArgumentError("empty batch");
    const auto& arch = model.arch;
    const std::size_t F = arch.features, Fr = arch.relation_dim();
    if (data.features.features != F) throw ConfigError("feature dimension does not match the model");

    const auto days = detail::window_days(batch, window);
    std::map<std::size_t, detail::DayEmbeddings> emb;
    for (std::size_t t : days) {
        auto& e = emb[t];
        const Matrix x = data.features.day(t);
        if (model.long_gat) e.long_cache = gat::encode_forward(*model.long_gat, x, data.graphs.long_edges);
        if (model.short_gat) e.short_cache = gat::encode_forward(*model.short_gat, x, data.graphs.short_edges.at(t));
    }

    BatchResult out;
    out.scores.resize(batch.size());
    std::vector<igru::UnrollCache> unrolls;
    std::vector<igru::HeadCache> heads;
    if (grads) {
        unrolls.reserve(batch.size());
        heads.reserve(batch.size());
    }
    std::vector<Vec> inputs(window, Vec(arch.recurrent_input_dim(), 0.0));
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& s = batch[b];
        for (std::size_t k = 0; k < window; ++k) {
            const std::size_t t = s.end + 1 - window + k;
            auto& u = inputs[k];
            std::fill(u.begin(), u.end(), 0.0);
            const auto x = data.features.at(t, s.stock);
            std::copy(x.begin(), x.end(), u.begin());
            const auto& e = emb.at(t);
            if (model.long_gat) {
                const auto r = e.long_cache.output().row(s.stock);
                std::copy(r.begin(), r.end(), u.begin() + static_cast<std::ptrdiff_t>(F));
            }
            if (model.short_gat) {
                const auto r = e.short_cache.output().row(s.stock);
                std::copy(r.begin(), r.end(), u.begin() + static_cast<std::ptrdiff_t>(F + Fr));
            }
        }
        auto uc = igru::unroll_forward(model.gru, inputs, window);
        auto hc = igru::head_forward(model.head, uc.final_hidden());
        out.scores[b] = hc.score;
        if (grads) {
            unrolls.push_back(std::move(uc));
            heads.push_back(std::move(hc));
        }
    }

    if (with_loss || grads) {
        Vec labels(batch.size());
        for (std::size_t b = 0; b < batch.size(); ++b) labels[b] = batch[b].label;
        out.loss = igru::loss(out.scores, labels);
    }
    if (!grads) return out;

    std::map<std::size_t, Matrix> d_long, d_short;
    for (std::size_t t : days) {
        if (model.long_gat) d_long.emplace(t, Matrix(data.universe.d(), Fr));
        if (model.short_gat) d_short.emplace(t, Matrix(data.universe.d(), Fr));
    }
    const double scale = 2.0 / static_cast<double>(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& s = batch[b];
        const double d_score = scale * (out.scores[b] - s.label);
        const Vec d_hidden = igru::head_backward(model.head, heads[b], d_score, grads->head);
        const auto d_in = igru::unroll_backward(model.gru, unrolls[b], d_hidden, grads->gru);
        for (std::size_t k = 0; k < window; ++k) {
            const std::size_t t = s.end + 1 - window + k;
            if (model.long_gat) {
                auto row = d_long.at(t).row(s.stock);
                for (std::size_t f = 0; f < Fr; ++f) row[f] += d_in[k][F + f];
            }
            if (model.short_gat) {
                auto row = d_short.at(t).row(s.stock);
                for (std::size_t f = 0; f < Fr; ++f) row[f] += d_in[k][F + Fr + f];
            }
        }
    }
    for (std::size_t t : days) {
        const auto& e = emb.at(t);
        if (model.long_gat) gat::encode_backward(*model.long_gat, e.long_cache, d_long.at(t), *grads->long_gat);
        if (model.short_gat) gat::encode_backward(*model.short_gat, e.short_cache, d_short.at(t), *grads->short_gat);
    }
    return out;
}

/// Scores without gradients, chunked to bound cache memory.
inline Vec predict_scores(const Model& model, const MarketData& data, std::span<const SequenceSample> samples,
                          std::size_t window, std::size_t chunk = 512) {
    Vec scores;
    scores.reserve(samples.size());
    for (std::size_t off = 0; off < samples.size(); off += chunk) {
        const auto part = samples.subspan(off, std::min(chunk, samples.size() - off));
        const auto r = evaluate_batch(model, data, part, window, nullptr, false);
        scores.insert(scores.end(), r.scores.begin(), r.scores.end());
    }
    return scores;
}

/// Full-set MSE.
inline double dataset_loss(const Model& model, const MarketData& data, std::span<const SequenceSample> samples,
                           std::size_t window) {
    if (samples.empty()) throw ArgumentError("loss over an empty sample set");
    const auto scores = predict_scores(model, data, samples, window);
    Vec labels(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) labels[i] = samples[i].label;
    return igru::loss(scores, labels);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double learning_rate = 0.0002;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update on a flat tensor. `t` counts steps from 1.
inline void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m,
                      std::span<double> v, std::size_t t, const AdamConfig& cfg) {
    if (t < 1) throw ArgumentError("Adam step index starts at 1");
    if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size())
        throw ConfigError("Adam shape mismatch");
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

/// First and second moments for every tensor of a model.
struct AdamState {
    std::vector<Vec> m, v;
    std::size_t t = 0;

    static AdamState for_model(Model& model) {
        AdamState s;
        for (const auto& tv : model.tensors()) {
            s.m.emplace_back(tv.values.size(), 0.0);
            s.v.emplace_back(tv.values.size(), 0.0);
        }
        return s;
    }

    void step(Model& params, Model& grads, const AdamConfig& cfg) {
        ++t;
        auto p = params.tensors();
        auto g = grads.tensors();
        for (std::size_t k = 0; k < p.size(); ++k) adam_step(p[k].values, g[k].values, m[k], v[k], t, cfg);
    }
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochLog {
    std::size_t epoch = 0;
    double mean_batch_loss = 0.0;
    double train_mse = 0.0;
    double valid_mse = kMissing;
};

struct TrainResult {
    Model model;
    std::vector<EpochLog> log;
    double initial_train_mse = 0.0;
    std::string rng_state;
};

inline std::string rng_state_text(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

/// Seeded Fisher–Yates shuffle of sample indices.
inline void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(idx[i - 1], idx[pick(rng)]);
    }
}

/// Initializes from the seed, then runs `epochs` shuffled passes of Adam over the training set.
inline TrainResult train_epochs(const TrainConfig& cfg, const MarketData& data, std::span<const SequenceSample> train,
                                std::span<const SequenceSample> valid = {}) {
    cfg.validate();
    if (train.empty()) throw ArgumentError("training set is empty");
    std::mt19937_64 rng(cfg.seed);
    TrainResult result;
    result.model = ablation_wire(cfg.arch);
    result.model.init_uniform(rng);
    Model grads = Model::zeros(cfg.arch);
    AdamState adam = AdamState::for_model(result.model);
    const AdamConfig adam_cfg{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};

    result.initial_train_mse = dataset_loss(result.model, data, train, cfg.window);
    std::vector<std::size_t> order(train.size());
    std::vector<SequenceSample> batch;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle_indices(order, rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t off = 0; off < order.size(); off += cfg.batch_size) {
            batch.clear();
            for (std::size_t k = off; k < std::min(order.size(), off + cfg.batch_size); ++k)
                batch.push_back(train[order[k]]);
            grads.zero();
            const auto r = evaluate_batch(result.model, data, batch, cfg.window, &grads);
            if (!std::isfinite(r.loss))
                throw NumericError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batches) + " (first sample stock " +
                                   std::to_string(batch.front().stock) + ", day " +
                                   data.calendar()[batch.front().end].str() + ")");
            adam.step(result.model, grads, adam_cfg);
            loss_sum += r.loss;
            ++batches;
        }
        EpochLog entry;
        entry.epoch = epoch;
        entry.mean_batch_loss = loss_sum / static_cast<double>(batches);
        entry.train_mse = dataset_loss(result.model, data, train, cfg.window);
        if (!valid.empty()) entry.valid_mse = dataset_loss(result.model, data, valid, cfg.window);
        log::info("epoch " + std::to_string(epoch) + " train mse " + csv::fmt(entry.train_mse));
        result.log.push_back(entry);
    }
    result.rng_state = rng_state_text(rng);
    return result;
}

inline std::string write_loss_log_csv(const TrainResult& r) {
    std::string out = "epoch,mean_batch_loss,train_mse,valid_mse\n";
    out += "0,," + csv::fmt(r.initial_train_mse) + ",\n";
    for (const auto& e : r.log) {
        out += std::to_string(e.epoch) + ',' + csv::fmt(e.mean_batch_loss) + ',' + csv::fmt(e.train_mse) + ',';
        if (!std::isnan(e.valid_mse)) out += csv::fmt(e.valid_mse);
        out += '\n';
    }
    return out;
}

}  // namespace lsrigru
