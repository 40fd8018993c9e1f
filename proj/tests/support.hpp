#pragma once

// Shared test utilities: seeded random matrices and an independent
// central-finite-difference gradient oracle. The oracle only ever reads
// forward values, so it stays decoupled from the backward rules it checks.

#include "relcap/ops.hpp"
#include "relcap/tensor.hpp"

#include <functional>
#include <random>
#include <vector>

namespace testsupport {

using relcap::Matrix;
using relcap::Rng;

inline Matrix<double> urand(Eigen::Index rows, Eigen::Index cols, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Matrix<double> m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = d(rng);
    return m;
}

/// Builds fn(tape, leaves) once per evaluation. The check forms the scalar
/// loss sum(R .* out) for a fixed random cotangent R, runs one backward
/// pass for the analytic input gradients, then compares each of them
/// against central differences of the forward-only loss.
/// Returns the worst rel. error |analytic - fd| / max(|analytic|, 1e-8).
inline double max_grad_rel_err(
    const std::function<relcap::Tensor<double>(relcap::Tape<double>&,
                                               const std::vector<relcap::Tensor<double>>&)>& fn,
    std::vector<Matrix<double>> inputs, Rng& rng, double step = 1e-5) {
    using relcap::Tape;
    using relcap::Tensor;

    auto forward = [&](const std::vector<Matrix<double>>& vals, Matrix<double>* cotangent,
                       std::vector<Matrix<double>>* grads) {
        Tape<double> tape;
        std::vector<Tensor<double>> leaves;
        leaves.reserve(vals.size());
        for (const auto& v : vals) leaves.push_back(tape.input(v, grads != nullptr));
        Tensor<double> out = fn(tape, leaves);
        if (cotangent->size() == 0) *cotangent = urand(out.rows(), out.cols(), rng);
        Tensor<double> loss = relcap::ops::sum(relcap::ops::cwise_mul(out, tape.constant(*cotangent)));
        if (grads) {
            tape.backward(loss);
            grads->clear();
            for (const auto& l : leaves) grads->push_back(l.grad());
        }
        return loss.scalar();
    };

    Matrix<double> cotangent;
    std::vector<Matrix<double>> analytic;
    forward(inputs, &cotangent, &analytic);

    double worst = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (Eigen::Index c = 0; c < inputs[i].cols(); ++c) {
            for (Eigen::Index r = 0; r < inputs[i].rows(); ++r) {
                const double keep = inputs[i](r, c);
                inputs[i](r, c) = keep + step;
                double up = forward(inputs, &cotangent, nullptr);
                inputs[i](r, c) = keep - step;
                double down = forward(inputs, &cotangent, nullptr);
                inputs[i](r, c) = keep;
                double fd = (up - down) / (2.0 * step);
                double a = analytic[i](r, c);
                double err = std::abs(a - fd) / std::max(std::abs(a), 1e-8);
                worst = std::max(worst, err);
            }
        }
    }
    return worst;
}

/// Central finite differences of an arbitrary scalar function of named
/// parameters; used for end-to-end model checks.
inline double param_fd_rel_err(const std::function<double()>& loss_fn,
                               relcap::Parameter<double>& p, const Matrix<double>& analytic,
                               double step = 1e-5) {
    double worst = 0.0;
    for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
            const double keep = p.value(r, c);
            p.value(r, c) = keep + step;
            double up = loss_fn();
            p.value(r, c) = keep - step;
            double down = loss_fn();
            p.value(r, c) = keep;
            double fd = (up - down) / (2.0 * step);
            double err = std::abs(analytic(r, c) - fd) / std::max(std::abs(analytic(r, c)), 1e-8);
            worst = std::max(worst, err);
        }
    }
    return worst;
}

} // namespace testsupport
