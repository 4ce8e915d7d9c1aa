// SPDX-License-Identifier: Apache-2.0
#pragma once

// Stationary covariance functions k(r) of the Euclidean input distance r.
//
// Default (Reference) forms:
//   SquaredExponential  s^2 exp(-r^2 / 2l^2)
//   Exponential         s^2 exp(-r / 2l^2)
//   RationalQuadratic   s^2 (1 + r / (2 a l^2))^-a
//   Matern32            s^2 (1 + sqrt3 r/l) exp(-sqrt3 r/l)
//   Matern52            s^2 (1 + sqrt5 r/l + 5r^2/3l^2) exp(-sqrt5 r/l)
// KernelForm::Standard switches Exponential to exp(-r/l) and RationalQuadratic to r^2.

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "errors.hpp"

namespace csiloc {

enum class KernelKind { SquaredExponential, Exponential, RationalQuadratic, Matern32, Matern52 };

/// Canonical order; also the tie-break order for kernel selection.
inline constexpr std::array<KernelKind, 5> kAllKernels{KernelKind::SquaredExponential, KernelKind::Exponential,
                                                       KernelKind::RationalQuadratic, KernelKind::Matern32,
                                                       KernelKind::Matern52};

enum class KernelForm { Reference, Standard };

inline std::string_view to_string(KernelKind k) {
    switch (k) {
        case KernelKind::SquaredExponential: return "SquaredExponential";
        case KernelKind::Exponential: return "Exponential";
        case KernelKind::RationalQuadratic: return "RationalQuadratic";
        case KernelKind::Matern32: return "Matern32";
        case KernelKind::Matern52: return "Matern52";
    }
    return "unknown";
}

inline KernelKind kernel_from_string(std::string_view name) {
    for (KernelKind k : kAllKernels)
        if (to_string(k) == name) return k;
    throw ConfigError("unknown kernel kind '" + std::string(name) + "'");
}

struct KernelSpec {
    KernelKind kind = KernelKind::SquaredExponential;
    double signal_std = 1.0;
    double length_scale = 1.0;
    std::optional<double> mixture;  // RationalQuadratic only
    double noise_std = 0.0;
    KernelForm form = KernelForm::Reference;

    bool has_mixture() const { return kind == KernelKind::RationalQuadratic; }
    /// Number of optimized hyperparameters: (sigma, l, sigma_n[, alpha]).
    int n_params() const { return has_mixture() ? 4 : 3; }
};

inline void validate(const KernelSpec& s) {
    if (!(s.signal_std > 0.0) || !std::isfinite(s.signal_std)) throw DomainError("kernel: signal_std must be > 0");
    if (!(s.length_scale > 0.0) || !std::isfinite(s.length_scale))
        throw DomainError("kernel: length_scale must be > 0");
    if (!(s.noise_std >= 0.0) || !std::isfinite(s.noise_std)) throw DomainError("kernel: noise_std must be >= 0");
    if (s.has_mixture() != s.mixture.has_value())
        throw DomainError("kernel: mixture must be present iff kind is RationalQuadratic");
    if (s.mixture && (!(*s.mixture > 0.0) || !std::isfinite(*s.mixture)))
        throw DomainError("kernel: mixture must be > 0");
}

inline KernelSpec make_kernel(KernelKind kind, double signal_std, double length_scale, double noise_std,
                              double mixture = 1.0, KernelForm form = KernelForm::Reference) {
    KernelSpec s{kind, signal_std, length_scale, std::nullopt, noise_std, form};
    if (s.has_mixture()) s.mixture = mixture;
    validate(s);
    return s;
}

/// Log-space hyperparameter vector in the order (log sigma, log l, log sigma_n[, log alpha]).
inline Eigen::VectorXd to_log_params(const KernelSpec& s) {
    Eigen::VectorXd p(s.n_params());
    p(0) = std::log(s.signal_std);
    p(1) = std::log(s.length_scale);
    p(2) = std::log(s.noise_std);
    if (s.has_mixture()) p(3) = std::log(*s.mixture);
    return p;
}

inline KernelSpec from_log_params(KernelSpec s, const Eigen::VectorXd& p) {
    detail::require_shape(p.size() == s.n_params(), "from_log_params: wrong parameter count");
    s.signal_std = std::exp(p(0));
    s.length_scale = std::exp(p(1));
    s.noise_std = std::exp(p(2));
    if (s.has_mixture()) s.mixture = std::exp(p(3));
    return s;
}

template <typename A, typename B>
double pair_distance(const Eigen::MatrixBase<A>& xi, const Eigen::MatrixBase<B>& xj) {
    detail::require_shape(xi.size() == xj.size(), "pair_distance: length mismatch");
    double acc = 0.0;
    for (Eigen::Index k = 0; k < xi.size(); ++k) {
        const double d = xi(k) - xj(k);
        acc += d * d;
    }
    return std::sqrt(acc);
}

/// Kernel value and its derivatives with respect to log sigma, log l and log alpha.
struct KernelValue {
    double value = 0.0;
    double d_log_signal = 0.0;
    double d_log_length = 0.0;
    double d_log_mixture = 0.0;
};

inline KernelValue kernel_eval_with_grad(const KernelSpec& s, double r) {
    if (!(r >= 0.0)) throw DomainError("kernel_eval: negative distance");
    const double s2 = s.signal_std * s.signal_std;
    const double l = s.length_scale;
    const double l2 = l * l;
    KernelValue out;
    switch (s.kind) {
        case KernelKind::SquaredExponential: {
            const double q = r * r / l2;
            out.value = s2 * std::exp(-0.5 * q);
            out.d_log_length = out.value * q;
            break;
        }
        case KernelKind::Exponential: {
            if (s.form == KernelForm::Reference) {
                out.value = s2 * std::exp(-r / (2.0 * l2));
                out.d_log_length = out.value * r / l2;
            } else {
                out.value = s2 * std::exp(-r / l);
                out.d_log_length = out.value * r / l;
            }
            break;
        }
        case KernelKind::RationalQuadratic: {
            const double a = *s.mixture;
            const double t = s.form == KernelForm::Reference ? r : r * r;
            const double u = 1.0 + t / (2.0 * a * l2);
            out.value = s2 * std::pow(u, -a);
            out.d_log_length = s2 * std::pow(u, -a - 1.0) * t / l2;
            out.d_log_mixture = a * out.value * (-std::log(u) + (u - 1.0) / u);
            break;
        }
        case KernelKind::Matern32: {
            const double z = std::sqrt(3.0) * r / l;
            const double e = std::exp(-z);
            out.value = s2 * (1.0 + z) * e;
            out.d_log_length = s2 * z * z * e;
            break;
        }
        case KernelKind::Matern52: {
            const double z = std::sqrt(5.0) * r / l;
            const double e = std::exp(-z);
            out.value = s2 * (1.0 + z + z * z / 3.0) * e;
            out.d_log_length = s2 * z * z * (1.0 + z) * e / 3.0;
            break;
        }
    }
    out.d_log_signal = 2.0 * out.value;
    return out;
}

inline double kernel_eval(const KernelSpec& s, double r) { return kernel_eval_with_grad(s, r).value; }

/// Cross-covariance between the rows of x and the rows of x2.
inline Eigen::MatrixXd gram(const KernelSpec& s, const Eigen::MatrixXd& x, const Eigen::MatrixXd& x2) {
    detail::require_shape(x.cols() == x2.cols(), "gram: input dimension mismatch");
    // columns of the transposes are contiguous
    const Eigen::MatrixXd a = x.transpose();
    const Eigen::MatrixXd b = x2.transpose();
    Eigen::MatrixXd k(x.rows(), x2.rows());
    for (Eigen::Index j = 0; j < b.cols(); ++j)
        for (Eigen::Index i = 0; i < a.cols(); ++i) k(i, j) = kernel_eval(s, pair_distance(a.col(i), b.col(j)));
    return k;
}

/// Symmetric covariance of the rows of x (noise not included).
inline Eigen::MatrixXd gram(const KernelSpec& s, const Eigen::MatrixXd& x) {
    const Eigen::MatrixXd a = x.transpose();
    const Eigen::Index n = a.cols();
    Eigen::MatrixXd k(n, n);
    const double k0 = kernel_eval(s, 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
        k(j, j) = k0;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            const double v = kernel_eval(s, pair_distance(a.col(i), a.col(j)));
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    return k;
}

}  // namespace csiloc
