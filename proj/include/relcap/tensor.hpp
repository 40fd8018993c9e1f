#pragma once

#include "relcap/common.hpp"

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace relcap {

/// A named, persistent learned weight. Lives outside any tape; forward
/// passes bind it as a leaf and backward() accumulates into `grad`.
/// The caller resets grads between optimizer steps.
template <class Scalar>
struct Parameter {
    std::string name;
    Matrix<Scalar> value;
    Matrix<Scalar> grad;

    Parameter() = default;
    Parameter(std::string n, Matrix<Scalar> v)
        : name(std::move(n)), value(std::move(v)),
          grad(Matrix<Scalar>::Zero(value.rows(), value.cols())) {}

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }

    void init_uniform(Eigen::Index rows, Eigen::Index cols, Scalar bound, Rng& rng) {
        std::uniform_real_distribution<double> dist(-double(bound), double(bound));
        value.resize(rows, cols);
        for (Eigen::Index c = 0; c < cols; ++c)
            for (Eigen::Index r = 0; r < rows; ++r)
                value(r, c) = Scalar(dist(rng));
        zero_grad();
    }

    void init_zero(Eigen::Index rows, Eigen::Index cols) {
        value = Matrix<Scalar>::Zero(rows, cols);
        zero_grad();
    }
};

template <class Scalar>
class Tape;

/// Lightweight handle to a value recorded on a tape. Immutable after
/// creation; copying the handle does not copy the data.
template <class Scalar>
class Tensor {
  public:
    Tensor() = default;

    const Matrix<Scalar>& value() const;
    /// Accumulated gradient; zero-shaped until a backward pass reaches it.
    const Matrix<Scalar>& grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    bool requires_grad() const;
    Tape<Scalar>* tape() const { return tape_; }
    std::size_t id() const { return id_; }

    Scalar scalar() const {
        if (rows() != 1 || cols() != 1)
            throw ValidationError("scalar() on tensor of shape " + shape_str(rows(), cols()));
        return value()(0, 0);
    }

  private:
    friend class Tape<Scalar>;
    Tensor(Tape<Scalar>* t, std::size_t id) : tape_(t), id_(id) {}

    Tape<Scalar>* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Records one forward pass as an ordered list of nodes. Node order is
/// topological by construction: inputs are recorded before the ops that
/// consume them. backward() runs one reverse traversal and adds (+=) this
/// pass's gradients into node and parameter grad buffers, so running it
/// twice without a reset doubles them.
template <class Scalar>
class Tape {
  public:
    using Mat = Matrix<Scalar>;

    /// Pass-local gradient accumulator handed to backward rules.
    class GradSink {
      public:
        GradSink(std::vector<Mat>& grads, const std::vector<char>& needed)
            : grads_(grads), needed_(needed) {}
        void add(std::size_t id, const Mat& g) {
            if (!needed_[id]) return;
            if (grads_[id].size() == 0)
                grads_[id] = g;
            else
                grads_[id] += g;
        }

      private:
        std::vector<Mat>& grads_;
        const std::vector<char>& needed_;
    };

    using BackwardFn = std::function<void(const Mat& upstream, GradSink& sink)>;

    Tensor<Scalar> input(Mat value, bool requires_grad = false) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        return push(std::move(n));
    }

    Tensor<Scalar> constant(Mat value) { return input(std::move(value), false); }

    /// Leaf bound to a persistent parameter; backward() also accumulates
    /// into the parameter's own grad buffer.
    Tensor<Scalar> param(Parameter<Scalar>& p) {
        Node n;
        n.value = p.value;
        n.requires_grad = true;
        n.bound = &p;
        return push(std::move(n));
    }

    /// Record an op node. `parents` must already live on this tape.
    Tensor<Scalar> record(Mat value, std::vector<std::size_t> parents, BackwardFn backward) {
        Node n;
        n.value = std::move(value);
        for (std::size_t p : parents)
            n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
        n.parents = std::move(parents);
        if (n.requires_grad) n.backward = std::move(backward);
        return push(std::move(n));
    }

    void backward(const Tensor<Scalar>& loss) {
        if (loss.tape() != this)
            throw ValidationError("backward: loss recorded on a different tape");
        const Node& top = nodes_[loss.id()];
        if (top.value.rows() != 1 || top.value.cols() != 1)
            throw ValidationError("backward: loss must be scalar, got " +
                                  shape_str(top.value.rows(), top.value.cols()));

        // Which nodes can reach a grad-requiring leaf.
        std::vector<char> needed(nodes_.size(), 0);
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i].requires_grad) needed[i] = 1;
        }

        std::vector<Mat> local(nodes_.size());
        local[loss.id()] = Mat::Ones(1, 1);
        GradSink sink(local, needed);
        for (std::size_t i = loss.id() + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (local[i].size() == 0 || !n.requires_grad) continue;
            if (n.backward) n.backward(local[i], sink);
            if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
            n.grad += local[i];
            if (n.bound) n.bound->grad += local[i];
        }
    }

    const Mat& value(std::size_t id) const { return nodes_[id].value; }

    const Mat& grad(std::size_t id) {
        Node& n = nodes_[id];
        // Untouched by backward: zeros of the right shape.
        if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        Mat value;
        Mat grad;
        bool requires_grad = false;
        Parameter<Scalar>* bound = nullptr;
        std::vector<std::size_t> parents;
        BackwardFn backward;
    };

    Tensor<Scalar> push(Node n) {
        nodes_.push_back(std::move(n));
        return Tensor<Scalar>(this, nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
};

template <class Scalar>
const Matrix<Scalar>& Tensor<Scalar>::value() const {
    return tape_->value(id_);
}

template <class Scalar>
const Matrix<Scalar>& Tensor<Scalar>::grad() const {
    return tape_->grad(id_);
}

template <class Scalar>
bool Tensor<Scalar>::requires_grad() const {
    return tape_->requires_grad(id_);
}

} // namespace relcap
