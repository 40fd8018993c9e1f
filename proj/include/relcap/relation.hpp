#pragma once

#include "relcap/checkpoint.hpp"
#include "relcap/corpus.hpp"
#include "relcap/ops.hpp"
#include "relcap/optimizer.hpp"

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

namespace relcap {

/// C named predicate classes plus the reserved non-relation class at
/// index C.
class RelationVocabulary {
  public:
    RelationVocabulary() = default;
    explicit RelationVocabulary(std::vector<std::string> classes) : classes_(std::move(classes)) {
        for (std::size_t i = 0; i < classes_.size(); ++i)
            for (std::size_t j = i + 1; j < classes_.size(); ++j)
                if (classes_[i] == classes_[j])
                    throw ValidationError("relation vocabulary: duplicate class '" + classes_[i] +
                                          "'");
    }

    int predicate_count() const { return int(classes_.size()); }
    int size() const { return int(classes_.size()) + 1; } // + non-relation
    int non_relation_id() const { return int(classes_.size()); }

    int id(const std::string& name) const {
        auto it = std::find(classes_.begin(), classes_.end(), name);
        if (it == classes_.end())
            throw ValidationError("relation vocabulary: unknown class '" + name + "'");
        return int(it - classes_.begin());
    }

    std::string name(int id) const {
        if (id == non_relation_id()) return "<none>";
        if (id < 0 || id > non_relation_id())
            throw ValidationError("relation vocabulary: id out of range");
        return classes_[std::size_t(id)];
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw ValidationError("relation vocabulary: cannot open " + path);
        out << "relcap-relvocab v1\n";
        for (const auto& c : classes_) out << c << "\n";
    }

    static RelationVocabulary load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("relation vocabulary: cannot open " + path);
        std::string line;
        if (!std::getline(in, line) || line != "relcap-relvocab v1")
            throw ValidationError("relation vocabulary: bad format header in " + path);
        std::vector<std::string> classes;
        while (std::getline(in, line))
            if (!line.empty()) classes.push_back(line);
        return RelationVocabulary(std::move(classes));
    }

  private:
    std::vector<std::string> classes_;
};

template <class S>
struct RelationPrediction {
    Vector<S> distribution; // C+1 entries, sums to one
    int class_id = -1;      // argmax, lowest id on ties
};

/// Mean feature of the regions covered by the union box of a pair (IoU
/// with the union above 0.5), falling back to the pair mean when nothing
/// qualifies.
inline Vector<double> union_feature(const std::vector<Region>& regions, int i, int j) {
    if (i < 0 || j < 0 || i >= int(regions.size()) || j >= int(regions.size()))
        throw ValidationError("union_feature: region index out of range");
    const BoundingBox<double> u = union_box(regions[std::size_t(i)].box,
                                            regions[std::size_t(j)].box);
    Vector<double> sum = Vector<double>::Zero(regions[std::size_t(i)].feature.size());
    int covered = 0;
    for (const auto& r : regions) {
        if (iou(r.box, u) > 0.5) {
            sum += r.feature;
            ++covered;
        }
    }
    if (covered == 0)
        return (regions[std::size_t(i)].feature + regions[std::size_t(j)].feature) / 2.0;
    return sum / double(covered);
}

/// One labeled ordered pair: concat(v_i, v_j, union) against a predicate
/// class (or non-relation).
template <class S>
struct RelationExample {
    Vector<S> input; // 3 * dv
    int label = 0;
};

struct RelationTrainConfig {
    AdamConfig adam{0.001, 0.8, 0.999, 1e-8};
    int epochs = 30;
    int batch_size = 32;
    std::uint64_t seed = 1;
};

/// Two-layer perceptron over concat(v_i, v_j, union_feature) with a
/// softmax over C+1 classes. The output layer starts at zero, so an
/// untrained classifier is exactly uniform.
template <class S>
class RelationClassifier {
  public:
    RelationClassifier(int dv, int hidden, RelationVocabulary vocab, std::uint64_t seed = 1)
        : dv_(dv), vocab_(std::move(vocab)) {
        Rng rng(seed);
        w1_ = Parameter<S>("relation.w1", Matrix<S>());
        w1_.init_uniform(3 * dv, hidden, S(1) / std::sqrt(S(3 * dv)), rng);
        b1_ = Parameter<S>("relation.b1", Matrix<S>::Zero(1, hidden));
        w2_ = Parameter<S>("relation.w2", Matrix<S>::Zero(hidden, vocab_.size()));
        b2_ = Parameter<S>("relation.b2", Matrix<S>::Zero(1, vocab_.size()));
    }

    const RelationVocabulary& vocab() const { return vocab_; }
    int feature_dim() const { return dv_; }

    std::vector<Parameter<S>*> parameters() {
        return {&w1_, &b1_, &w2_, &b2_};
    }

    /// Batch logits on a caller-owned tape; rows are 3*dv inputs.
    Tensor<S> logits(Tape<S>& tape, const Tensor<S>& rows) {
        if (rows.cols() != 3 * dv_)
            throw ValidationError("relation classifier: expected row width " +
                                  std::to_string(3 * dv_) + ", got " +
                                  std::to_string(rows.cols()));
        using namespace ops;
        auto h = relu(add_rowvec(matmul(rows, tape.param(w1_)), tape.param(b1_)));
        return add_rowvec(matmul(h, tape.param(w2_)), tape.param(b2_));
    }

    RelationPrediction<S> classify(const Vector<S>& v_i, const Vector<S>& v_j,
                                   const Vector<S>& union_feat) {
        if (v_i.size() != dv_ || v_j.size() != dv_ || union_feat.size() != dv_)
            throw ValidationError("relation classifier: feature dim mismatch, expected " +
                                  std::to_string(dv_));
        Tape<S> tape;
        Matrix<S> row(1, 3 * dv_);
        row << v_i.transpose(), v_j.transpose(), union_feat.transpose();
        auto dist = ops::softmax(logits(tape, tape.constant(row)), ops::Axis::cols);
        RelationPrediction<S> pred;
        pred.distribution = dist.value().row(0).transpose();
        pred.distribution.maxCoeff(&pred.class_id); // first maximum wins ties
        return pred;
    }

    /// Cross-entropy training over labeled pairs; returns per-epoch mean
    /// losses. Deterministic given the seed.
    std::vector<S> train(const std::vector<RelationExample<S>>& examples,
                         const RelationTrainConfig& cfg) {
        if (examples.empty()) throw ValidationError("relation classifier: empty training set");
        AdamOptimizer<S> opt(parameters(), cfg.adam);
        Rng rng(cfg.seed);
        std::vector<std::size_t> order(examples.size());
        std::iota(order.begin(), order.end(), std::size_t(0));

        std::vector<S> epoch_losses;
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), rng);
            S total = 0;
            for (std::size_t at = 0; at < order.size(); at += std::size_t(cfg.batch_size)) {
                const std::size_t n = std::min(std::size_t(cfg.batch_size), order.size() - at);
                Matrix<S> rows(Eigen::Index(n), 3 * dv_);
                std::vector<int> labels(n);
                for (std::size_t k = 0; k < n; ++k) {
                    rows.row(Eigen::Index(k)) = examples[order[at + k]].input.transpose();
                    labels[k] = examples[order[at + k]].label;
                }
                Tape<S> tape;
                auto dist = ops::softmax(logits(tape, tape.constant(rows)), ops::Axis::cols);
                auto picked = ops::pick_per_row(dist, labels);
                auto loss = ops::scalar_mul(ops::sum(ops::log(picked)), S(-1) / S(n));
                opt.zero_grad();
                tape.backward(loss);
                opt.step();
                total += loss.scalar() * S(n);
            }
            epoch_losses.push_back(total / S(examples.size()));
        }
        return epoch_losses;
    }

    void save(Checkpoint& ck, const std::string& tag = "relation") {
        ck.put_parameters<S>(tag, parameters());
        ck.put_scalar<S>(tag, "dv", S(dv_));
    }

    void load(const Checkpoint& ck, const std::string& tag = "relation") {
        ck.load_parameters<S>(tag, parameters());
    }

  private:
    int dv_;
    RelationVocabulary vocab_;
    Parameter<S> w1_, b1_, w2_, b2_;
};

} // namespace relcap
