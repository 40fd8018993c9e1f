#pragma once

#include "relcap/tensor.hpp"

#include <cmath>
#include <vector>

namespace relcap {

struct AdamConfig {
    double learning_rate = 0.0005;
    double beta1 = 0.8;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const {
        if (!(learning_rate > 0)) throw ValidationError("adam: learning rate must be positive");
        if (!(0 < beta1 && beta1 < beta2 && beta2 < 1))
            throw ValidationError("adam: betas must satisfy 0 < beta1 < beta2 < 1");
    }
};

/// Adam with bias correction over a fixed parameter set. step() consumes
/// the accumulated grads; the caller zeroes them between steps.
template <class S>
class AdamOptimizer {
  public:
    AdamOptimizer(std::vector<Parameter<S>*> params, const AdamConfig& cfg)
        : params_(std::move(params)), cfg_(cfg) {
        cfg_.validate();
        for (const Parameter<S>* p : params_) {
            m_.push_back(Matrix<S>::Zero(p->value.rows(), p->value.cols()));
            v_.push_back(Matrix<S>::Zero(p->value.rows(), p->value.cols()));
        }
    }

    void step() {
        ++t_;
        const S b1 = S(cfg_.beta1), b2 = S(cfg_.beta2);
        const S corr1 = S(1) - std::pow(b1, S(t_));
        const S corr2 = S(1) - std::pow(b2, S(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Parameter<S>& p = *params_[i];
            if (!p.grad.allFinite())
                throw NumericError("adam: non-finite gradient in parameter '" + p.name + "'");
            m_[i] = b1 * m_[i] + (S(1) - b1) * p.grad;
            v_[i] = b2 * v_[i] + (S(1) - b2) * p.grad.cwiseProduct(p.grad);
            Matrix<S> m_hat = m_[i] / corr1;
            Matrix<S> v_hat = v_[i] / corr2;
            p.value.array() -=
                S(cfg_.learning_rate) * m_hat.array() / (v_hat.array().sqrt() + S(cfg_.eps));
        }
    }

    void zero_grad() {
        for (Parameter<S>* p : params_) p->zero_grad();
    }

    long step_count() const { return t_; }

  private:
    std::vector<Parameter<S>*> params_;
    AdamConfig cfg_;
    std::vector<Matrix<S>> m_, v_;
    long t_ = 0;
};

} // namespace relcap
