#pragma once

#include "relcap/tensor.hpp"

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace relcap::ops {

template <class S>
using Mat = Matrix<S>;

enum class Axis { rows = 0, cols = 1 };

namespace detail {

template <class S>
Tape<S>* same_tape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    if (a.tape() != b.tape())
        throw ValidationError(std::string(op) + ": operands live on different tapes");
    return a.tape();
}

template <class S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ValidationError(std::string(op) + ": shape mismatch " +
                              shape_str(a.rows(), a.cols()) + " vs " +
                              shape_str(b.rows(), b.cols()));
}

} // namespace detail

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    Tape<S>* t = detail::same_tape(a, b, "matmul");
    if (a.cols() != b.rows())
        throw ValidationError("matmul: inner dimensions disagree, " +
                              shape_str(a.rows(), a.cols()) + " x " +
                              shape_str(b.rows(), b.cols()));
    Mat<S> v = a.value() * b.value();
    auto av = a.value(), bv = b.value();
    std::size_t ai = a.id(), bi = b.id();
    return t->record(std::move(v), {ai, bi},
                     [av, bv, ai, bi](const Mat<S>& up, typename Tape<S>::GradSink& sink) {
                         sink.add(ai, up * bv.transpose());
                         sink.add(bi, av.transpose() * up);
                     });
}

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    Tape<S>* t = detail::same_tape(a, b, "add");
    detail::require_same_shape(a, b, "add");
    std::size_t ai = a.id(), bi = b.id();
    return t->record(a.value() + b.value(), {ai, bi},
                     [ai, bi](const Mat<S>& up, typename Tape<S>::GradSink& sink) {
                         sink.add(ai, up);
                         sink.add(bi, up);
                     });
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    Tape<S>* t = detail::same_tape(a, b, "sub");
    detail::require_same_shape(a, b, "sub");
    std::size_t ai = a.id(), bi = b.id();
    return t->record(a.value() - b.value(), {ai, bi},
                     [ai, bi](const Mat<S>& up, typename Tape<S>::GradSink& sink) {
                         sink.add(ai, up);
                         sink.add(bi, -up);
                     });
}

/// a + b with b a 1xN row vector broadcast over every row of a.
template <class S>
Tensor<S> add_rowvec(const Tensor<S>& a, const Tensor<S>& b) {
    Tape<S>* t = detail::same_tape(a, b, "add_rowvec");
    if (b.rows() != 1 || b.cols() != a.cols())
        throw ValidationError("add_rowvec: expected 1x" + std::to_string(a.cols()) +
                              " bias, got " + shape_str(b.rows(), b.cols()));
    Mat<S> v = a.value().rowwise() + b.value().row(0);
    std::size_t ai = a.id(), bi = b.id();
    return t->record(std::move(v), {ai, bi},
                     [ai, bi](const Mat<S>& up, typename Tape<S>::GradSink& sink) {
                         sink.add(ai, up);
                         sink.add(bi, up.colwise().sum());
                     });
}

/// a .* g with g a 1xN row vector broadcast over every row of a.
template <class S>
Tensor<S> mul_rowvec(const Tensor<S>& a, const Tensor<S>& g) {
    Tape<S>* t = detail::same_tape(a, g, "mul_rowvec");
    if (g.rows() != 1 || g.cols() != a.cols())
        throw ValidationError("mul_rowvec: expected 1x" + std::to_string(a.cols()) +
                              " gain, got " + shape_str(g.rows(), g.cols()));
    Mat<S> v = a.value().array().rowwise() * g.value().row(0).array();
    auto av = a.value(), gv = g.value();
    std::size_t ai = a.id(), gi = g.id();
    return t->record(std::move(v), {ai, gi},
                     [av, gv, ai, gi](const Mat<S>& up, typename Tape<S>::GradSink& sink) {
                         sink.add(ai, up.array().rowwise() * gv.row(0).array());
                         sink.add(gi, (up.array() * av.array()).colwise().sum());
                     });
}

template <class S>
Tensor<S> cwise_mul(const Tensor<S>& a, const Tensor<S>& b) {
    Tape<S>* t = detail::same_tape(a, b, "cwise_mul");
    detail::require_same_shape(a, b, "cwise_mul");
    auto av = a.value(), bv = b.value();
    std::size_t ai = a.id(), bi = b.id();
    return t->record(av.cwiseProduct(bv), {ai, bi},
                     [av, bv, ai, bi](const Mat<S>& up, typename Tape<S>::GradSink& sink) {
                         sink.add(ai, up.cwiseProduct(bv));
                         sink.add(bi, up.cwiseProduct(av));
                     });
}

template <class S>
Tensor<S> scalar_mul(const Tensor<S>& a, S c) {
    std::size_t ai = a.id();
    return a.tape()->record(a.value() * c, {ai},
                            [ai, c](const Mat<S>& up, typename Tape<S>::GradSink& sink) {
                                sink.add(ai, up * c);
                            });
}

template <class S>
Tensor<S> relu(const Tensor<S>& a) {
    Mat<S> v = a.value().cwiseMax(S(0));
    auto av = a.value();
    std::size_t ai = a.id();
    return a.tape()->record(std::move(v), {ai},
                            [av, ai](const Mat<S>& up, typename Tape<S>::GradSink& sink) {
                                sink.add(ai, (av.array() > S(0)).template cast<S>() * up.array());
                            });
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& a) {
    Mat<S> v = (S(1) / (S(1) + (-a.value().array()).exp())).matrix();
    std::size_t ai = a.id();
    return a.tape()->record(v, {ai},
                            [v, ai](const Mat<S>& up, typename Tape<S>::GradSink& sink) {
                                sink.add(ai, up.array() * v.array() * (S(1) - v.array()));
                            });
}

template <class S>
Tensor<S> log(const Tensor<S>& a) {
    auto av = a.value();
    std::size_t ai = a.id();
    return a.tape()->record(av.array().log().matrix(), {ai},
                            [av, ai](const Mat<S>& up, typename Tape<S>::GradSink& sink) {
                                sink.add(ai, up.array() / av.array());
                            });
}

/// Max-subtracted softmax; slices along `axis` sum to one.
template <class S>
Tensor<S> softmax(const Tensor<S>& a, Axis axis = Axis::cols) {
    const Mat<S>& x = a.value();
    Mat<S> y(x.rows(), x.cols());
    if (axis == Axis::cols) {
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            auto row = x.row(r).array();
            Eigen::Array<S, 1, Eigen::Dynamic> e = (row - row.maxCoeff()).exp();
            y.row(r) = e / e.sum();
        }
    } else {
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            auto col = x.col(c).array();
            Eigen::Array<S, Eigen::Dynamic, 1> e = (col - col.maxCoeff()).exp();
            y.col(c) = e / e.sum();
        }
    }
    std::size_t ai = a.id();
    return a.tape()->record(y, {ai},
                            [y, ai, axis](const Mat<S>& up, typename Tape<S>::GradSink& sink) {
                                Mat<S> dx(y.rows(), y.cols());
                                if (axis == Axis::cols) {
                                    for (Eigen::Index r = 0; r < y.rows(); ++r) {
                                        S dot = up.row(r).dot(y.row(r));
                                        dx.row(r) = y.row(r).array() * (up.row(r).array() - dot);
                                    }
                                } else {
                                    for (Eigen::Index c = 0; c < y.cols(); ++c) {
                                        S dot = up.col(c).dot(y.col(c));
                                        dx.col(c) = y.col(c).array() * (up.col(c).array() - dot);
                                    }
                                }
                                sink.add(ai, dx);
                            });
}

/// Per-row normalization (x - mean) / sqrt(var + eps), pre-affine.
template <class S>
Tensor<S> layer_norm(const Tensor<S>& a, S eps = S(1e-5)) {
    const Mat<S>& x = a.value();
    const Eigen::Index d = x.cols();
    Mat<S> xhat(x.rows(), d);
    Vector<S> inv_std(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        S mu = x.row(r).mean();
        S var = (x.row(r).array() - mu).square().sum() / S(d);
        inv_std(r) = S(1) / std::sqrt(var + eps);
        xhat.row(r) = (x.row(r).array() - mu) * inv_std(r);
    }
    std::size_t ai = a.id();
    return a.tape()->record(xhat, {ai},
                            [xhat, inv_std, d, ai](const Mat<S>& up, typename Tape<S>::GradSink& sink) {
                                Mat<S> dx(xhat.rows(), d);
                                for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
                                    S mean_dy = up.row(r).mean();
                                    S mean_dy_xhat = up.row(r).cwiseProduct(xhat.row(r)).mean();
                                    dx.row(r) = inv_std(r) *
                                                (up.row(r).array() - mean_dy -
                                                 xhat.row(r).array() * mean_dy_xhat);
                                }
                                sink.add(ai, dx);
                            });
}

/// Gather rows of `table` by index; the embedding primitive. Backward
/// scatter-adds into the gathered rows.
template <class S>
Tensor<S> gather_rows(const Tensor<S>& table, const std::vector<int>& ids) {
    const Mat<S>& tv = table.value();
    Mat<S> v(Eigen::Index(ids.size()), tv.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= tv.rows())
            throw ValidationError("gather_rows: index " + std::to_string(ids[i]) +
                                  " out of range for " + shape_str(tv.rows(), tv.cols()));
        v.row(Eigen::Index(i)) = tv.row(ids[i]);
    }
    std::size_t ti = table.id();
    Eigen::Index rows = tv.rows(), cols = tv.cols();
    return table.tape()->record(std::move(v), {ti},
                                [ids, ti, rows, cols](const Mat<S>& up, typename Tape<S>::GradSink& sink) {
                                    Mat<S> g = Mat<S>::Zero(rows, cols);
                                    for (std::size_t i = 0; i < ids.size(); ++i)
                                        g.row(ids[i]) += up.row(Eigen::Index(i));
                                    sink.add(ti, g);
                                });
}

template <class S>
Tensor<S> embedding_lookup(const Tensor<S>& table, const std::vector<int>& ids) {
    return gather_rows(table, ids);
}

template <class S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, Axis axis) {
    if (parts.empty()) throw ValidationError("concat: no operands");
    Tape<S>* t = parts.front().tape();
    Eigen::Index rows = parts.front().rows(), cols = parts.front().cols();
    Eigen::Index total = 0;
    for (const auto& p : parts) {
        if (p.tape() != t) throw ValidationError("concat: operands live on different tapes");
        if (axis == Axis::rows) {
            if (p.cols() != cols)
                throw ValidationError("concat: column mismatch " + shape_str(p.rows(), p.cols()) +
                                      " vs " + shape_str(rows, cols));
            total += p.rows();
        } else {
            if (p.rows() != rows)
                throw ValidationError("concat: row mismatch " + shape_str(p.rows(), p.cols()) +
                                      " vs " + shape_str(rows, cols));
            total += p.cols();
        }
    }
    Mat<S> v = axis == Axis::rows ? Mat<S>(total, cols) : Mat<S>(rows, total);
    std::vector<std::size_t> ids;
    std::vector<Eigen::Index> extents;
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        if (axis == Axis::rows) {
            v.middleRows(at, p.rows()) = p.value();
            at += p.rows();
            extents.push_back(p.rows());
        } else {
            v.middleCols(at, p.cols()) = p.value();
            at += p.cols();
            extents.push_back(p.cols());
        }
        ids.push_back(p.id());
    }
    return t->record(std::move(v), ids,
                     [ids, extents, axis](const Mat<S>& up, typename Tape<S>::GradSink& sink) {
                         Eigen::Index at = 0;
                         for (std::size_t i = 0; i < ids.size(); ++i) {
                             if (axis == Axis::rows)
                                 sink.add(ids[i], up.middleRows(at, extents[i]));
                             else
                                 sink.add(ids[i], up.middleCols(at, extents[i]));
                             at += extents[i];
                         }
                     });
}

template <class S>
Tensor<S> slice(const Tensor<S>& a, Eigen::Index r0, Eigen::Index c0, Eigen::Index nr,
                Eigen::Index nc) {
    if (r0 < 0 || c0 < 0 || r0 + nr > a.rows() || c0 + nc > a.cols())
        throw ValidationError("slice: block (" + std::to_string(r0) + "," + std::to_string(c0) +
                              ")+" + shape_str(nr, nc) + " outside " + shape_str(a.rows(), a.cols()));
    std::size_t ai = a.id();
    Eigen::Index rows = a.rows(), cols = a.cols();
    return a.tape()->record(a.value().block(r0, c0, nr, nc), {ai},
                            [ai, r0, c0, nr, nc, rows, cols](const Mat<S>& up,
                                                             typename Tape<S>::GradSink& sink) {
                                Mat<S> g = Mat<S>::Zero(rows, cols);
                                g.block(r0, c0, nr, nc) = up;
                                sink.add(ai, g);
                            });
}

template <class S>
Tensor<S> transpose(const Tensor<S>& a) {
    std::size_t ai = a.id();
    return a.tape()->record(a.value().transpose(), {ai},
                            [ai](const Mat<S>& up, typename Tape<S>::GradSink& sink) {
                                sink.add(ai, up.transpose());
                            });
}

/// Replace entries where mask != 0 by `fill`; their gradients are dropped.
template <class S>
Tensor<S> masked_fill(const Tensor<S>& a, const Mat<S>& mask, S fill) {
    if (mask.rows() != a.rows() || mask.cols() != a.cols())
        throw ValidationError("masked_fill: mask shape " + shape_str(mask.rows(), mask.cols()) +
                              " vs tensor " + shape_str(a.rows(), a.cols()));
    Mat<S> v = (mask.array() != S(0)).select(Mat<S>::Constant(a.rows(), a.cols(), fill), a.value());
    std::size_t ai = a.id();
    return a.tape()->record(std::move(v), {ai},
                            [mask, ai](const Mat<S>& up, typename Tape<S>::GradSink& sink) {
                                sink.add(ai, (mask.array() != S(0))
                                                 .select(Mat<S>::Zero(up.rows(), up.cols()), up));
                            });
}

/// Build a rows x cols matrix that is `background` everywhere except at
/// the listed (row, col) positions, which take values from the nx1 input.
/// Positions must be distinct.
template <class S>
Tensor<S> scatter(const Tensor<S>& values, Eigen::Index rows, Eigen::Index cols,
                  const std::vector<std::pair<Eigen::Index, Eigen::Index>>& positions,
                  S background = S(0)) {
    if (values.cols() != 1 || values.rows() != Eigen::Index(positions.size()))
        throw ValidationError("scatter: expected " + std::to_string(positions.size()) +
                              "x1 values, got " + shape_str(values.rows(), values.cols()));
    Mat<S> v = Mat<S>::Constant(rows, cols, background);
    for (std::size_t k = 0; k < positions.size(); ++k)
        v(positions[k].first, positions[k].second) = values.value()(Eigen::Index(k), 0);
    std::size_t vi = values.id();
    return values.tape()->record(std::move(v), {vi},
                                 [positions, vi](const Mat<S>& up, typename Tape<S>::GradSink& sink) {
                                     Mat<S> g(Eigen::Index(positions.size()), 1);
                                     for (std::size_t k = 0; k < positions.size(); ++k)
                                         g(Eigen::Index(k), 0) =
                                             up(positions[k].first, positions[k].second);
                                     sink.add(vi, g);
                                 });
}

/// One entry per row: out(t, 0) = a(t, cols[t]).
template <class S>
Tensor<S> pick_per_row(const Tensor<S>& a, const std::vector<int>& cols) {
    if (Eigen::Index(cols.size()) != a.rows())
        throw ValidationError("pick_per_row: " + std::to_string(cols.size()) + " indices for " +
                              shape_str(a.rows(), a.cols()));
    Mat<S> v(a.rows(), 1);
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        if (cols[r] < 0 || cols[r] >= a.cols())
            throw ValidationError("pick_per_row: column " + std::to_string(cols[r]) +
                                  " out of range for " + shape_str(a.rows(), a.cols()));
        v(r, 0) = a.value()(r, cols[r]);
    }
    std::size_t ai = a.id();
    Eigen::Index nrows = a.rows(), ncols = a.cols();
    return a.tape()->record(std::move(v), {ai},
                            [cols, ai, nrows, ncols](const Mat<S>& up, typename Tape<S>::GradSink& sink) {
                                Mat<S> g = Mat<S>::Zero(nrows, ncols);
                                for (Eigen::Index r = 0; r < nrows; ++r)
                                    g(r, cols[r]) = up(r, 0);
                                sink.add(ai, g);
                            });
}

template <class S>
Tensor<S> sum(const Tensor<S>& a) {
    Mat<S> v(1, 1);
    v(0, 0) = a.value().sum();
    std::size_t ai = a.id();
    Eigen::Index rows = a.rows(), cols = a.cols();
    return a.tape()->record(std::move(v), {ai},
                            [ai, rows, cols](const Mat<S>& up, typename Tape<S>::GradSink& sink) {
                                sink.add(ai, Mat<S>::Constant(rows, cols, up(0, 0)));
                            });
}

} // namespace relcap::ops
