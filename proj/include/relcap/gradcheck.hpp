#pragma once

// Finite-difference verification of every registered backward rule and of
// the full captioning loss. Backs the grad-check CLI subcommand; the unit
// suites keep their own independent oracle.

#include "relcap/model.hpp"
#include "relcap/ops.hpp"
#include "relcap/synthetic.hpp"

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace relcap::gradcheck {

struct OpReport {
    std::string name;
    int instances = 0;
    double worst_rel_err = 0;
};

namespace detail {

inline Matrix<double> urand(Eigen::Index rows, Eigen::Index cols, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Matrix<double> m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = d(rng);
    return m;
}

using Builder = std::function<Tensor<double>(Tape<double>&, const std::vector<Tensor<double>>&)>;

/// Worst rel. error of analytic input grads of sum(R .* f(x)) against
/// central differences.
inline double fd_worst(const Builder& fn, std::vector<Matrix<double>> inputs, Rng& rng,
                       double step = 1e-5) {
    auto eval = [&](const std::vector<Matrix<double>>& vals, const Matrix<double>& cot,
                    std::vector<Matrix<double>>* grads) {
        Tape<double> tape;
        std::vector<Tensor<double>> leaves;
        for (const auto& v : vals) leaves.push_back(tape.input(v, grads != nullptr));
        auto out = fn(tape, leaves);
        auto loss = ops::sum(ops::cwise_mul(out, tape.constant(cot)));
        if (grads) {
            tape.backward(loss);
            for (const auto& l : leaves) grads->push_back(l.grad());
        }
        return loss.scalar();
    };

    Matrix<double> probe;
    {
        Tape<double> tape;
        std::vector<Tensor<double>> leaves;
        for (const auto& v : inputs) leaves.push_back(tape.input(v, false));
        auto out = fn(tape, leaves);
        probe = urand(out.rows(), out.cols(), rng);
    }
    std::vector<Matrix<double>> analytic;
    eval(inputs, probe, &analytic);

    double worst = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (Eigen::Index c = 0; c < inputs[i].cols(); ++c) {
            for (Eigen::Index r = 0; r < inputs[i].rows(); ++r) {
                const double keep = inputs[i](r, c);
                inputs[i](r, c) = keep + step;
                const double up = eval(inputs, probe, nullptr);
                inputs[i](r, c) = keep - step;
                const double down = eval(inputs, probe, nullptr);
                inputs[i](r, c) = keep;
                const double fd = (up - down) / (2 * step);
                const double a = analytic[i](r, c);
                worst = std::max(worst, std::abs(a - fd) / std::max(std::abs(a), 1e-8));
            }
        }
    }
    return worst;
}

} // namespace detail

/// FD-checks every op in the autodiff suite on `instances` random small
/// tensors each.
inline std::vector<OpReport> check_ops(int instances, std::uint64_t seed, double step = 1e-5) {
    using namespace ops;
    using detail::urand;
    Rng rng(seed);
    std::uniform_int_distribution<int> dim(2, 5);
    using TT = const std::vector<Tensor<double>>&;

    struct Case {
        std::string name;
        std::function<double(Rng&)> run;
    };
    auto simple = [&](const detail::Builder& b,
                      std::function<std::vector<Matrix<double>>(Rng&)> gen) {
        return [b, gen](Rng& r) { return detail::fd_worst(b, gen(r), r); };
    };

    std::vector<Case> cases;
    cases.push_back({"matmul", simple([](Tape<double>& t, TT in) { return matmul(in[0], in[1]); },
                                      [&](Rng& r) -> std::vector<Matrix<double>> {
                                          int m = dim(r), k = dim(r), n = dim(r);
                                          return {urand(m, k, r), urand(k, n, r)};
                                      })});
    cases.push_back({"add", simple([](Tape<double>& t, TT in) { return add(in[0], in[1]); },
                                   [&](Rng& r) -> std::vector<Matrix<double>> {
                                       int m = dim(r), n = dim(r);
                                       return {urand(m, n, r), urand(m, n, r)};
                                   })});
    cases.push_back({"sub", simple([](Tape<double>& t, TT in) { return sub(in[0], in[1]); },
                                   [&](Rng& r) -> std::vector<Matrix<double>> {
                                       int m = dim(r), n = dim(r);
                                       return {urand(m, n, r), urand(m, n, r)};
                                   })});
    cases.push_back({"cwise_mul",
                     simple([](Tape<double>& t, TT in) { return cwise_mul(in[0], in[1]); },
                            [&](Rng& r) -> std::vector<Matrix<double>> {
                                int m = dim(r), n = dim(r);
                                return {urand(m, n, r), urand(m, n, r)};
                            })});
    cases.push_back({"add_rowvec",
                     simple([](Tape<double>& t, TT in) { return add_rowvec(in[0], in[1]); },
                            [&](Rng& r) -> std::vector<Matrix<double>> {
                                int m = dim(r), n = dim(r);
                                return {urand(m, n, r), urand(1, n, r)};
                            })});
    cases.push_back({"mul_rowvec",
                     simple([](Tape<double>& t, TT in) { return mul_rowvec(in[0], in[1]); },
                            [&](Rng& r) -> std::vector<Matrix<double>> {
                                int m = dim(r), n = dim(r);
                                return {urand(m, n, r), urand(1, n, r)};
                            })});
    cases.push_back(
        {"scalar_mul", simple([](Tape<double>& t, TT in) { return scalar_mul(in[0], -1.7); },
                              [&](Rng& r) -> std::vector<Matrix<double>> {
                                  return {urand(dim(r), dim(r), r)};
                              })});
    cases.push_back({"relu", simple([](Tape<double>& t, TT in) { return relu(in[0]); },
                                    [&](Rng& r) -> std::vector<Matrix<double>> {
                                        return {urand(dim(r), dim(r), r)};
                                    })});
    cases.push_back({"sigmoid", simple([](Tape<double>& t, TT in) { return sigmoid(in[0]); },
                                       [&](Rng& r) -> std::vector<Matrix<double>> {
                                           return {urand(dim(r), dim(r), r)};
                                       })});
    cases.push_back({"log", simple([](Tape<double>& t, TT in) { return log(in[0]); },
                                   [&](Rng& r) -> std::vector<Matrix<double>> {
                                       return {urand(dim(r), dim(r), r, 0.2, 2.0)};
                                   })});
    cases.push_back(
        {"softmax_rows", simple([](Tape<double>& t, TT in) { return softmax(in[0], Axis::cols); },
                                [&](Rng& r) -> std::vector<Matrix<double>> {
                                    return {urand(dim(r), dim(r), r, -3, 3)};
                                })});
    cases.push_back(
        {"softmax_cols", simple([](Tape<double>& t, TT in) { return softmax(in[0], Axis::rows); },
                                [&](Rng& r) -> std::vector<Matrix<double>> {
                                    return {urand(dim(r), dim(r), r, -3, 3)};
                                })});
    cases.push_back({"layer_norm", simple([](Tape<double>& t, TT in) { return layer_norm(in[0]); },
                                          [&](Rng& r) -> std::vector<Matrix<double>> {
                                              return {urand(dim(r), 4 + dim(r), r)};
                                          })});
    cases.push_back({"transpose", simple([](Tape<double>& t, TT in) { return transpose(in[0]); },
                                         [&](Rng& r) -> std::vector<Matrix<double>> {
                                             return {urand(dim(r), dim(r), r)};
                                         })});
    cases.push_back({"gather_rows",
                     simple([](Tape<double>& t, TT in) { return gather_rows(in[0], {2, 0, 2}); },
                            [&](Rng& r) -> std::vector<Matrix<double>> {
                                return {urand(3 + dim(r) % 2, dim(r), r)};
                            })});
    cases.push_back(
        {"concat_cols",
         simple([](Tape<double>& t, TT in) { return concat<double>({in[0], in[1]}, Axis::cols); },
                [&](Rng& r) -> std::vector<Matrix<double>> {
                    int m = dim(r);
                    return {urand(m, dim(r), r), urand(m, dim(r), r)};
                })});
    cases.push_back(
        {"concat_rows",
         simple([](Tape<double>& t, TT in) { return concat<double>({in[0], in[1]}, Axis::rows); },
                [&](Rng& r) -> std::vector<Matrix<double>> {
                    int n = dim(r);
                    return {urand(dim(r), n, r), urand(dim(r), n, r)};
                })});
    cases.push_back({"slice", simple([](Tape<double>& t, TT in) { return slice(in[0], 1, 1, 2, 2); },
                                     [&](Rng& r) -> std::vector<Matrix<double>> {
                                         return {urand(3 + dim(r) % 3, 3 + dim(r) % 3, r)};
                                     })});
    cases.push_back({"masked_fill", [&](Rng& r) {
                         int m = dim(r), n = dim(r);
                         Matrix<double> mask = (urand(m, n, r).array() > 0.3).cast<double>();
                         return detail::fd_worst(
                             [mask](Tape<double>& t, TT in) {
                                 return masked_fill(in[0], mask, 2.5);
                             },
                             {urand(m, n, r)}, r);
                     }});
    cases.push_back({"scatter", [&](Rng& r) {
                         std::vector<std::pair<Eigen::Index, Eigen::Index>> pos = {
                             {0, 1}, {2, 0}, {1, 2}};
                         return detail::fd_worst(
                             [pos](Tape<double>& t, TT in) {
                                 return scatter(in[0], 3, 3, pos, 1.0);
                             },
                             {urand(3, 1, r)}, r);
                     }});
    cases.push_back({"pick_per_row", [&](Rng& r) {
                         int n = 3 + dim(r);
                         std::vector<int> cols;
                         std::uniform_int_distribution<int> pick(0, n - 1);
                         for (int i = 0; i < 4; ++i) cols.push_back(pick(r));
                         return detail::fd_worst(
                             [cols](Tape<double>& t, TT in) {
                                 return pick_per_row(in[0], cols);
                             },
                             {urand(4, n, r)}, r);
                     }});
    cases.push_back({"sum", simple([](Tape<double>& t, TT in) { return sum(in[0]); },
                                   [&](Rng& r) -> std::vector<Matrix<double>> {
                                       return {urand(dim(r), dim(r), r)};
                                   })});
    cases.push_back({"attention", [&](Rng& r) {
                         int dk = 3, tq = 3, tk = 4;
                         return detail::fd_worst(
                             [](Tape<double>& t, TT in) {
                                 return scaled_dot_attention(in[0], in[1], in[2]);
                             },
                             {urand(tq, dk, r), urand(tk, dk, r), urand(tk, dk, r)}, r);
                     }});

    std::vector<OpReport> out;
    for (auto& c : cases) {
        OpReport rep{c.name, instances, 0.0};
        for (int i = 0; i < instances; ++i)
            rep.worst_rel_err = std::max(rep.worst_rel_err, c.run(rng));
        out.push_back(std::move(rep));
    }
    return out;
}

/// FD check of every model parameter against the full caption loss on a
/// miniature synthetic pipeline. Returns the worst rel. error.
inline double check_end_to_end(std::uint64_t seed, double step = 1e-5) {
    GeneratorSpec gen;
    gen.n_scenes = 3;
    gen.dv = 6;
    gen.context_size = 3;
    auto records = generate_synthetic(gen, seed);
    GeneratorSpec pool = gen;
    pool.n_scenes = 60;
    auto pool_records = generate_synthetic(pool, seed + 77);

    std::vector<std::string> captions;
    for (const auto& r : records) captions.push_back(r.captions[0]);
    Vocabulary vocab = Vocabulary::build(captions, 1);
    RelationVocabulary relvocab = relation_vocab_from_corpus(pool_records);

    Matrix<double> features(pool_records.size() * 2, 6);
    Eigen::Index row = 0;
    for (const auto& r : pool_records)
        for (int i = 0; i < 2; ++i) {
            auto f = spatial_feature(r.regions[std::size_t(i)].box,
                                     r.regions[std::size_t(1 - i)].box);
            for (int k = 0; k < 6; ++k) features(row, k) = f[std::size_t(k)];
            ++row;
        }
    auto gmm = fit_gmm(features, 3, seed);

    RelationClassifier<double> relcls(gen.dv, 8, relvocab, seed);
    RelationTrainConfig rcfg;
    rcfg.epochs = 2;
    relcls.train(relation_examples_from_corpus(pool_records, relvocab), rcfg);

    ModelConfig mcfg;
    mcfg.dv = gen.dv;
    mcfg.d_model = 8;
    mcfg.gcn_layers = 2;
    mcfg.decoder.d_model = 8;
    mcfg.decoder.n_layers = 1;
    mcfg.decoder.n_heads = 2;
    mcfg.decoder.d_ff = 16;
    mcfg.decoder.max_len = 10;
    mcfg.decoder.vocab_size = vocab.size();
    mcfg.gmm_bins = 3;
    mcfg.relation_classes = relvocab.size();
    mcfg.d_rel = 3;
    mcfg.level = "hierarchical"; // exercises image nodes and gates together
    auto scenes = prepare_scenes(records, vocab, gmm, relcls, mcfg);

    CaptionModel<double> model(mcfg, seed + 5);
    // a couple of steps off the zero-initialized output layer
    {
        AdamOptimizer<double> opt(model.parameters(), AdamConfig{0.01, 0.8, 0.999, 1e-8});
        for (int it = 0; it < 3; ++it) {
            opt.zero_grad();
            for (const auto& s : scenes) {
                Tape<double> tape;
                tape.backward(model.scene_loss(tape, s));
            }
            opt.step();
        }
    }

    auto loss_value = [&]() {
        double total = 0;
        for (const auto& s : scenes) {
            Tape<double> tape;
            total += model.scene_loss(tape, s).scalar();
        }
        return total / double(scenes.size());
    };

    for (Parameter<double>* p : model.parameters()) p->zero_grad();
    for (const auto& s : scenes) {
        Tape<double> tape;
        auto loss = model.scene_loss(tape, s);
        tape.backward(ops::scalar_mul(loss, 1.0 / double(scenes.size())));
    }

    double worst = 0;
    for (Parameter<double>* p : model.parameters()) {
        Matrix<double> analytic = p->grad;
        for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
            for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
                const double keep = p->value(r, c);
                p->value(r, c) = keep + step;
                const double up = loss_value();
                p->value(r, c) = keep - step;
                const double down = loss_value();
                p->value(r, c) = keep;
                const double fd = (up - down) / (2 * step);
                worst = std::max(worst,
                                 std::abs(analytic(r, c) - fd) /
                                     std::max(std::abs(analytic(r, c)), 1e-8));
            }
        }
    }
    return worst;
}

} // namespace relcap::gradcheck
