#pragma once

#include "relcap/model.hpp"
#include "relcap/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>

namespace relcap {

struct TrainOptions {
    AdamConfig adam;
    int batch_size = 32;
    int max_epochs = 35;
    int early_stop_patience = 5;
    double early_stop_min_delta = 1e-4;
    std::uint64_t seed = 1;

    static TrainOptions from_config(const Config& cfg) {
        TrainOptions t;
        t.adam.learning_rate = cfg.get_double("learning_rate");
        t.adam.beta1 = cfg.get_double("adam_beta1");
        t.adam.beta2 = cfg.get_double("adam_beta2");
        t.adam.eps = cfg.get_double("adam_eps");
        t.adam.validate();
        t.batch_size = int(cfg.get_int("batch_size"));
        t.max_epochs = int(cfg.get_int("max_epochs"));
        t.early_stop_patience = int(cfg.get_int("early_stop_patience"));
        t.early_stop_min_delta = cfg.get_double("early_stop_min_delta");
        t.seed = std::uint64_t(cfg.get_int("seed"));
        if (t.batch_size < 1 || t.max_epochs < 1)
            throw ValidationError("train: batch_size and max_epochs must be positive");
        return t;
    }
};

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0;
    double val_loss = std::nan(""); // NaN when no validation corpus
    double wall_seconds = 0;
};

template <class S>
double mean_loss(CaptionModel<S>& model, const std::vector<PreparedScene>& scenes) {
    if (scenes.empty()) throw ValidationError("mean_loss: no scenes");
    double total = 0;
    for (const auto& scene : scenes) {
        Tape<S> tape;
        total += double(model.scene_loss(tape, scene).scalar());
    }
    return total / double(scenes.size());
}

/// Teacher-forced training with Adam over mini-batches; per-batch grads
/// average the per-scene losses. Stops at max_epochs, or earlier when the
/// validation loss stops improving by min_delta for `patience` epochs.
/// Deterministic given seed and inputs (single-threaded).
template <class S>
std::vector<EpochMetrics> train_captioner(CaptionModel<S>& model,
                                          const std::vector<PreparedScene>& train,
                                          const std::vector<PreparedScene>* val,
                                          const TrainOptions& opts) {
    if (train.empty()) throw ValidationError("train: empty corpus");
    AdamOptimizer<S> opt(model.parameters(), opts.adam);
    Rng rng(opts.seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t(0));

    std::vector<EpochMetrics> log;
    double best_val = std::numeric_limits<double>::infinity();
    int stale = 0;
    for (int epoch = 1; epoch <= opts.max_epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0;
        for (std::size_t at = 0; at < order.size(); at += std::size_t(opts.batch_size)) {
            const std::size_t n = std::min(std::size_t(opts.batch_size), order.size() - at);
            opt.zero_grad();
            for (std::size_t k = 0; k < n; ++k) {
                const PreparedScene& scene = train[order[at + k]];
                Tape<S> tape;
                auto loss = model.scene_loss(tape, scene);
                const double v = double(loss.scalar());
                if (!std::isfinite(v))
                    throw NumericError("train: loss diverged at epoch " + std::to_string(epoch) +
                                       " scene " + scene.record->image_id + " (seed " +
                                       std::to_string(opts.seed) + ", lr " +
                                       std::to_string(opts.adam.learning_rate) + ", batch " +
                                       std::to_string(opts.batch_size) + ")");
                total += v;
                tape.backward(ops::scalar_mul(loss, S(1) / S(n)));
            }
            opt.step();
        }
        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = total / double(train.size());
        if (val) m.val_loss = mean_loss(model, *val);
        m.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        log.push_back(m);

        if (val) {
            if (m.val_loss < best_val - opts.early_stop_min_delta) {
                best_val = m.val_loss;
                stale = 0;
            } else if (++stale >= opts.early_stop_patience) {
                break;
            }
        }
    }
    return log;
}

/// Metrics log: the full configuration echoed as header comments, then
/// one tab-separated line per epoch (epoch, train_loss, val_loss,
/// wall_seconds). Losses are printed with round-trip precision so equal
/// runs produce equal logs; wall_seconds is the only timing-dependent
/// field.
inline void write_metrics_log(std::ostream& out, const Config& cfg,
                              const std::vector<EpochMetrics>& log) {
    for (const auto& line : cfg.echo()) out << "# " << line << "\n";
    out << "epoch\ttrain_loss\tval_loss\twall_seconds\n";
    char buf[128];
    for (const auto& m : log) {
        std::snprintf(buf, sizeof(buf), "%d\t%.17g\t%.17g\t%.3f\n", m.epoch, m.train_loss,
                      m.val_loss, m.wall_seconds);
        out << buf;
    }
}

inline void write_metrics_log(const std::string& path, const Config& cfg,
                              const std::vector<EpochMetrics>& log) {
    std::ofstream out(path);
    if (!out) throw ValidationError("metrics log: cannot open " + path + " for writing");
    write_metrics_log(out, cfg, log);
}

} // namespace relcap
