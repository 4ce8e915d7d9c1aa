// SPDX-License-Identifier: Apache-2.0
#pragma once

// Exact Gaussian process regression with a zero-mean prior on centered targets.
//
//   mean(x*) = K*^T (K + s_n^2 I)^-1 y + target_mean
//   var(x*)  = k(x*, x*) - K*^T (K + s_n^2 I)^-1 K*
//   NLML     = 1/2 y^T (K + s_n^2 I)^-1 y + 1/2 log|K + s_n^2 I| + n/2 log 2pi
//
// All solves go through a Cholesky factor. When the factorization fails a jitter of
// 1e-10 * mean(diag K) is added and escalated tenfold up to 1e-4 * mean(diag K).

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "kernels.hpp"
#include "log.hpp"

namespace csiloc {

inline constexpr double kJitterStart = 1e-10;
inline constexpr double kJitterMax = 1e-4;
inline constexpr double kVarianceClamp = 1e-10;

struct GprModel {
    Eigen::MatrixXd inputs;   // n x d
    Eigen::VectorXd targets;  // centered
    double target_mean = 0.0;
    KernelSpec kernel;
    Eigen::MatrixXd chol;     // lower factor of K + s_n^2 I (+ jitter)
    Eigen::VectorXd weights;  // (K + s_n^2 I)^-1 targets
    double jitter = 0.0;      // absolute jitter that was added to the diagonal

    Eigen::Index size() const { return inputs.rows(); }
    Eigen::Index dim() const { return inputs.cols(); }
};

struct Prediction {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
};

namespace detail {

struct Factor {
    Eigen::MatrixXd lower;
    double jitter = 0.0;
};

/// Cholesky with the escalating jitter ladder; `a` already contains the noise term.
inline Factor factorize(const Eigen::MatrixXd& a) {
    Eigen::LLT<Eigen::MatrixXd> llt;
    // LLT can report success on NaN input, so the factor is checked as well
    auto attempt = [&](const Eigen::MatrixXd& m) {
        llt.compute(m);
        return llt.info() == Eigen::Success && llt.matrixLLT().diagonal().allFinite();
    };
    if (attempt(a)) return {llt.matrixL(), 0.0};
    const double scale = a.diagonal().mean();
    std::ostringstream ladder;
    ladder << "0";
    for (double rel = kJitterStart; rel <= kJitterMax * (1.0 + 1e-9); rel *= 10.0) {
        const double jitter = rel * scale;
        ladder << ", " << jitter;
        log(LogLevel::Debug, "cholesky failed, retrying with jitter " + std::to_string(jitter));
        Eigen::MatrixXd aj = a;
        aj.diagonal().array() += jitter;
        if (attempt(aj)) return {llt.matrixL(), jitter};
    }
    throw ConditioningError("cholesky failed for jitter ladder [" + ladder.str() + "]");
}

inline void check_finite(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    if (!x.allFinite() || !y.allFinite()) throw DomainError("gpr: non-finite training data");
}

/// Solves (L L^T) x = b for a lower-triangular L.
template <typename B>
Eigen::MatrixXd chol_solve(const Eigen::MatrixXd& lower, const Eigen::MatrixBase<B>& b) {
    const Eigen::MatrixXd half = lower.triangularView<Eigen::Lower>().solve(b);
    return lower.transpose().triangularView<Eigen::Upper>().solve(half);
}

inline Eigen::MatrixXd noisy_gram(const KernelSpec& spec, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd k = gram(spec, x);
    k.diagonal().array() += spec.noise_std * spec.noise_std;
    return k;
}

}  // namespace detail

inline GprModel fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelSpec& spec) {
    validate(spec);
    detail::require_shape(x.rows() == y.size(), "fit: input and target counts differ");
    if (x.rows() < 1) throw DomainError("fit: need at least one training point");
    detail::check_finite(x, y);

    GprModel m;
    m.inputs = x;
    m.kernel = spec;
    m.target_mean = y.mean();
    m.targets = y.array() - m.target_mean;
    auto factor = detail::factorize(detail::noisy_gram(spec, x));
    m.chol = std::move(factor.lower);
    m.jitter = factor.jitter;
    m.weights = detail::chol_solve(m.chol, m.targets);
    return m;
}

inline Prediction predict(const GprModel& m, const Eigen::MatrixXd& xs) {
    detail::require_shape(xs.cols() == m.dim(), "predict: input dimension does not match the model");
    const Eigen::MatrixXd ks = gram(m.kernel, m.inputs, xs);  // n x m
    Prediction p;
    p.mean = (ks.transpose() * m.weights).array() + m.target_mean;
    const Eigen::MatrixXd v = m.chol.triangularView<Eigen::Lower>().solve(ks);
    const double prior = kernel_eval(m.kernel, 0.0);
    p.variance = (prior - v.colwise().squaredNorm().array()).matrix().transpose();
    for (Eigen::Index i = 0; i < p.variance.size(); ++i) {
        if (p.variance(i) < -kVarianceClamp)
            throw ConditioningError("predict: negative posterior variance " + std::to_string(p.variance(i)));
        if (p.variance(i) < 0.0) p.variance(i) = 0.0;
    }
    return p;
}

/// Mean-only prediction; skips the triangular solve needed for the variance.
inline Eigen::VectorXd predict_mean(const GprModel& m, const Eigen::MatrixXd& xs) {
    detail::require_shape(xs.cols() == m.dim(), "predict: input dimension does not match the model");
    return ((gram(m.kernel, m.inputs, xs).transpose() * m.weights).array() + m.target_mean).matrix();
}

/// The three NLML terms, summed by value().
struct NlmlTerms {
    double model_fit = 0.0;
    double complexity = 0.0;
    double normalization = 0.0;
    double value() const { return model_fit + complexity + normalization; }
};

inline NlmlTerms nlml_terms(const GprModel& m) {
    NlmlTerms t;
    t.model_fit = 0.5 * m.targets.dot(m.weights);
    t.complexity = m.chol.diagonal().array().log().sum();
    t.normalization = 0.5 * static_cast<double>(m.size()) * std::log(2.0 * std::numbers::pi);
    return t;
}

inline double nlml(const GprModel& m) { return nlml_terms(m).value(); }

inline double nlml(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelSpec& spec) {
    return nlml(fit(x, y, spec));
}

struct NlmlWithGradient {
    double value = 0.0;
    Eigen::VectorXd gradient;  // over to_log_params(spec)
};

/// NLML and its gradient in log-hyperparameter space via
///   dNLML/dp = 1/2 tr((K^-1 - a a^T) dK/dp),  a = K^-1 y.
inline NlmlWithGradient nlml_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelSpec& spec) {
    validate(spec);
    detail::require_shape(x.rows() == y.size(), "nlml_gradient: input and target counts differ");
    if (x.rows() < 1) throw DomainError("nlml_gradient: need at least one training point");
    detail::check_finite(x, y);

    const Eigen::Index n = x.rows();
    const int np = spec.n_params();
    const Eigen::MatrixXd xt = x.transpose();
    Eigen::MatrixXd k(n, n), dl(n, n), da;
    if (spec.has_mixture()) da.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = j; i < n; ++i) {
            const double r = i == j ? 0.0 : pair_distance(xt.col(i), xt.col(j));
            const KernelValue kv = kernel_eval_with_grad(spec, r);
            k(i, j) = k(j, i) = kv.value;
            dl(i, j) = dl(j, i) = kv.d_log_length;
            if (spec.has_mixture()) da(i, j) = da(j, i) = kv.d_log_mixture;
        }
    }
    const double noise_var = spec.noise_std * spec.noise_std;
    Eigen::MatrixXd a = k;
    a.diagonal().array() += noise_var;
    const auto factor = detail::factorize(a);
    const Eigen::VectorXd yc = y.array() - y.mean();
    const Eigen::VectorXd alpha = detail::chol_solve(factor.lower, yc);
    Eigen::MatrixXd inv = factor.lower.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
    inv = (inv.transpose() * inv).eval();
    const Eigen::MatrixXd w = inv - alpha * alpha.transpose();  // symmetric

    NlmlWithGradient out;
    out.value = 0.5 * yc.dot(alpha) + factor.lower.diagonal().array().log().sum() +
                0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    out.gradient.resize(np);
    // dK/dlog(sigma) = 2K (kernel part only)
    out.gradient(0) = w.cwiseProduct(k).sum();
    out.gradient(1) = 0.5 * w.cwiseProduct(dl).sum();
    out.gradient(2) = noise_var * w.trace();
    if (spec.has_mixture()) out.gradient(3) = 0.5 * w.cwiseProduct(da).sum();
    return out;
}

}  // namespace csiloc
