#pragma once

#include "relcap/checkpoint.hpp"
#include "relcap/common.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace relcap {

struct GmmOptions {
    int max_iterations = 200;
    double tolerance = 1e-6;
    bool full_covariance = false;
    int max_restarts = 5;
};

/// Gaussian mixture over standardized feature vectors. Inputs are z-scored
/// with the training-set statistics stored on the model, so the caller
/// always works in raw feature units.
template <class S>
struct GmmModel {
    int components = 0;
    Vector<S> weights;                   // simplex, length m
    Matrix<S> means;                     // m x d, standardized space
    Matrix<S> variances;                 // m x d diagonal; ignored when full
    std::vector<Matrix<S>> covariances;  // m dense d x d when full_covariance
    bool full_covariance = false;
    Vector<S> feature_mean;              // length d
    Vector<S> feature_std;               // length d
    std::vector<S> log_likelihood_trace; // one entry per EM iteration
    std::uint64_t seed = 0;

    int dim() const { return int(means.cols()); }

    Vector<S> standardize(const Vector<S>& x) const {
        return ((x - feature_mean).array() / feature_std.array()).matrix();
    }

    /// Component mean mapped back to raw feature units.
    Vector<S> mean_raw(int k) const {
        return (feature_mean.array() + feature_std.array() * means.row(k).transpose().array())
            .matrix();
    }

    void save(Checkpoint& ck, const std::string& tag = "gmm") const {
        ck.put_scalar<S>(tag, "components", S(components));
        ck.put_scalar<S>(tag, "full_covariance", full_covariance ? S(1) : S(0));
        ck.put_scalar<S>(tag, "seed", S(seed));
        ck.put(tag, "weights", Matrix<S>(weights));
        ck.put(tag, "means", means);
        ck.put(tag, "variances", variances);
        if (full_covariance)
            for (int k = 0; k < components; ++k)
                ck.put(tag, "covariance_" + std::to_string(k), covariances[std::size_t(k)]);
        ck.put(tag, "feature_mean", Matrix<S>(feature_mean));
        ck.put(tag, "feature_std", Matrix<S>(feature_std));
        Matrix<S> trace(Eigen::Index(log_likelihood_trace.size()), 1);
        for (std::size_t i = 0; i < log_likelihood_trace.size(); ++i)
            trace(Eigen::Index(i), 0) = log_likelihood_trace[i];
        ck.put(tag, "log_likelihood_trace", trace);
    }

    static GmmModel load(const Checkpoint& ck, const std::string& tag = "gmm") {
        GmmModel m;
        m.components = int(ck.get_scalar<S>(tag, "components"));
        m.full_covariance = ck.get_scalar<S>(tag, "full_covariance") != S(0);
        m.seed = std::uint64_t(ck.get_scalar<S>(tag, "seed"));
        m.weights = ck.get<S>(tag, "weights");
        m.means = ck.get<S>(tag, "means");
        m.variances = ck.get<S>(tag, "variances");
        if (m.full_covariance)
            for (int k = 0; k < m.components; ++k)
                m.covariances.push_back(ck.get<S>(tag, "covariance_" + std::to_string(k)));
        m.feature_mean = ck.get<S>(tag, "feature_mean");
        m.feature_std = ck.get<S>(tag, "feature_std");
        Matrix<S> trace = ck.get<S>(tag, "log_likelihood_trace");
        for (Eigen::Index i = 0; i < trace.rows(); ++i)
            m.log_likelihood_trace.push_back(trace(i, 0));
        return m;
    }
};

namespace gmm_detail {

template <class S>
S log_sum_exp(const Vector<S>& v) {
    const S m = v.maxCoeff();
    return m + std::log((v.array() - m).exp().sum());
}

/// Per-component log densities for one standardized point, log w included.
template <class S>
Vector<S> weighted_log_densities(const GmmModel<S>& model, const Vector<S>& z) {
    const int m = model.components;
    const S d = S(model.dim());
    const S log2pi = std::log(S(2) * std::numbers::pi_v<S>);
    Vector<S> out(m);
    for (int k = 0; k < m; ++k) {
        S logdet, quad;
        if (model.full_covariance) {
            const Matrix<S>& cov = model.covariances[std::size_t(k)];
            Eigen::LLT<Matrix<S>> llt(cov);
            Vector<S> diff = z - model.means.row(k).transpose();
            Vector<S> sol = llt.solve(diff);
            quad = diff.dot(sol);
            logdet = S(2) * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        } else {
            auto var = model.variances.row(k).array();
            auto diff = z.transpose().array() - model.means.row(k).array();
            quad = (diff.square() / var).sum();
            logdet = var.log().sum();
        }
        out(k) = std::log(model.weights(k)) - S(0.5) * (d * log2pi + logdet + quad);
    }
    return out;
}

} // namespace gmm_detail

/// Posterior responsibilities of the m components for one raw feature.
template <class S>
Vector<S> assign_scores(const GmmModel<S>& model, const Vector<S>& feature) {
    if (feature.size() != model.dim())
        throw ValidationError("assign_scores: feature dim " + std::to_string(feature.size()) +
                              ", model dim " + std::to_string(model.dim()));
    Vector<S> z = model.standardize(feature);
    Vector<S> logd = gmm_detail::weighted_log_densities(model, z);
    const S lse = gmm_detail::log_sum_exp(logd);
    return (logd.array() - lse).exp().matrix();
}

/// EM fit of an m-component mixture. Features are z-scored per dimension
/// first; iterates until the log-likelihood improves by less than the
/// tolerance or the iteration cap. A collapsed component triggers a
/// re-seeded restart.
template <class S>
GmmModel<S> fit_gmm(const Matrix<S>& features, int m, std::uint64_t seed,
                    const GmmOptions& opts = {}) {
    const Eigen::Index n = features.rows();
    const Eigen::Index d = features.cols();
    if (m < 1) throw ValidationError("fit_gmm: component count must be positive");
    if (n < Eigen::Index(10) * m)
        throw ValidationError("fit_gmm: need at least " + std::to_string(10 * m) +
                              " samples for m=" + std::to_string(m) + ", got " +
                              std::to_string(n));

    // Standardization statistics over the training set.
    Vector<S> mu = features.colwise().mean().transpose();
    Vector<S> sd(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        S var = (features.col(j).array() - mu(j)).square().sum() / S(n);
        sd(j) = std::sqrt(var);
        if (!(sd(j) > S(1e-12))) sd(j) = S(1); // constant dimension
    }
    Matrix<S> z(n, d);
    for (Eigen::Index j = 0; j < d; ++j) z.col(j) = (features.col(j).array() - mu(j)) / sd(j);

    const S var_floor = S(1e-6);

    for (int attempt = 0; attempt <= opts.max_restarts; ++attempt) {
        Rng rng(seed + std::uint64_t(attempt) * 0x9e3779b97f4a7c15ULL);
        GmmModel<S> model;
        model.components = m;
        model.full_covariance = opts.full_covariance;
        model.seed = seed;
        model.feature_mean = mu;
        model.feature_std = sd;
        model.weights = Vector<S>::Constant(m, S(1) / S(m));
        model.means.resize(m, d);
        std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
        for (int k = 0; k < m; ++k) model.means.row(k) = z.row(pick(rng));
        model.variances = Matrix<S>::Ones(m, d);
        if (opts.full_covariance)
            model.covariances.assign(std::size_t(m), Matrix<S>::Identity(d, d));

        bool collapsed = false;
        Matrix<S> resp(n, m);
        for (int iter = 0; iter < opts.max_iterations; ++iter) {
            // E-step, accumulating the current log-likelihood.
            S ll = 0;
            for (Eigen::Index i = 0; i < n; ++i) {
                Vector<S> logd =
                    gmm_detail::weighted_log_densities(model, Vector<S>(z.row(i).transpose()));
                const S lse = gmm_detail::log_sum_exp(logd);
                ll += lse;
                resp.row(i) = (logd.array() - lse).exp();
            }
            model.log_likelihood_trace.push_back(ll);
            if (model.log_likelihood_trace.size() > 1) {
                S prev = model.log_likelihood_trace[model.log_likelihood_trace.size() - 2];
                if (ll - prev < S(opts.tolerance)) break;
            }

            // M-step.
            Vector<S> nk = resp.colwise().sum().transpose();
            if ((nk.array() / S(n) < S(1e-8)).any()) {
                collapsed = true;
                break;
            }
            model.weights = nk / S(n);
            for (int k = 0; k < m; ++k) {
                Vector<S> mean_k = (resp.col(k).transpose() * z).transpose() / nk(k);
                model.means.row(k) = mean_k.transpose();
                if (opts.full_covariance) {
                    Matrix<S> cov = Matrix<S>::Zero(d, d);
                    for (Eigen::Index i = 0; i < n; ++i) {
                        Vector<S> diff = z.row(i).transpose() - mean_k;
                        cov.noalias() += resp(i, k) * diff * diff.transpose();
                    }
                    cov /= nk(k);
                    cov += var_floor * Matrix<S>::Identity(d, d);
                    model.covariances[std::size_t(k)] = cov;
                } else {
                    for (Eigen::Index j = 0; j < d; ++j) {
                        S v = (resp.col(k).array() * (z.col(j).array() - mean_k(j)).square())
                                  .sum() /
                              nk(k);
                        model.variances(k, j) = std::max(v, var_floor);
                    }
                }
            }
        }
        if (!collapsed) return model;
    }
    throw NumericError("fit_gmm: component collapsed on every restart (m=" + std::to_string(m) +
                       ", seed=" + std::to_string(seed) + ")");
}

} // namespace relcap
