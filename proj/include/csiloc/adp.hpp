// SPDX-License-Identifier: Apache-2.0
#pragma once

// Angle-delay profile: A = |V^H H F|, with V a half-shifted spatial DFT and F the
// subcarrier DFT. Bin (q, z) corresponds to angle arccos((2q - N_t) / N_t) and delay z * T_s.

#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "channel_sim.hpp"
#include "errors.hpp"

namespace csiloc {

using AdpMatrix = Eigen::MatrixXd;  // N_t x N_c, nonnegative

/// Spatial DFT, entry (z, q) = exp(-j 2 pi z (q - N_t/2) / N_t) / sqrt(N_t). N_t must be even.
inline Eigen::MatrixXcd dft_v(int n_antennas) {
    if (n_antennas < 1) throw ConfigError("dft_v: n_antennas must be >= 1");
    if (n_antennas % 2 != 0) throw ConfigError("dft_v: n_antennas must be even");
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_antennas));
    const int half = n_antennas / 2;
    Eigen::MatrixXcd v(n_antennas, n_antennas);
    for (int z = 0; z < n_antennas; ++z)
        for (int q = 0; q < n_antennas; ++q)
            v(z, q) = std::polar(scale, -2.0 * kPi * static_cast<double>(z * (q - half)) / n_antennas);
    return v;
}

/// Delay DFT, entry (z, q) = exp(-j 2 pi z q / N_c) / sqrt(N_c).
inline Eigen::MatrixXcd dft_f(int n_subcarriers) {
    if (n_subcarriers < 1) throw ConfigError("dft_f: n_subcarriers must be >= 1");
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_subcarriers));
    Eigen::MatrixXcd f(n_subcarriers, n_subcarriers);
    for (int z = 0; z < n_subcarriers; ++z)
        for (int q = 0; q < n_subcarriers; ++q)
            f(z, q) = std::polar(scale, -2.0 * kPi * static_cast<double>((z * q) % n_subcarriers) / n_subcarriers);
    return f;
}

/// Precomputed transform pair for repeated ADP evaluation at a fixed size.
class AdpTransform {
public:
    AdpTransform(int n_antennas, int n_subcarriers)
        : vh_(dft_v(n_antennas).adjoint()), f_(dft_f(n_subcarriers)) {}

    int n_antennas() const { return static_cast<int>(vh_.rows()); }
    int n_subcarriers() const { return static_cast<int>(f_.rows()); }

    AdpMatrix operator()(const CsiMatrix& csi) const {
        detail::require_shape(csi.rows() == vh_.cols() && csi.cols() == f_.rows(),
                              "compute_adp: CSI shape does not match the transform");
        return (vh_ * csi * f_).cwiseAbs();
    }

private:
    Eigen::MatrixXcd vh_;
    Eigen::MatrixXcd f_;
};

inline AdpMatrix compute_adp(const CsiMatrix& csi) {
    return AdpTransform(static_cast<int>(csi.rows()), static_cast<int>(csi.cols()))(csi);
}

struct AngleDelay {
    double angle = 0.0;  // radians
    double delay = 0.0;  // seconds
};

inline AngleDelay bin_to_angle_delay(int q, int z, const ScenarioConfig& s) {
    if (q < 0 || q >= s.n_antennas) throw DomainError("bin_to_angle_delay: angle bin out of range");
    if (z < 0 || z >= s.n_subcarriers) throw DomainError("bin_to_angle_delay: delay bin out of range");
    const double c = static_cast<double>(2 * q - s.n_antennas) / s.n_antennas;
    return {std::acos(c), z * s.sample_period()};
}

/// Column-major concatenation of the ADP columns.
inline Eigen::VectorXd vectorize(const AdpMatrix& a) {
    return Eigen::Map<const Eigen::VectorXd>(a.data(), a.size());
}

inline AdpMatrix unvectorize(const Eigen::VectorXd& v, int rows, int cols) {
    detail::require_shape(v.size() == static_cast<Eigen::Index>(rows) * cols, "unvectorize: length mismatch");
    return Eigen::Map<const AdpMatrix>(v.data(), rows, cols);
}

/// Unit-Frobenius-norm vectorized ADP, the input format of the autoencoder and the GPR.
inline Eigen::VectorXd normalized_vector(const AdpMatrix& a) {
    const double norm = a.norm();
    if (!(norm > 0.0)) throw DomainError("normalized_vector: zero-norm ADP");
    return vectorize(a) / norm;
}

/// Normalized correlation vec(a) . vec(b) / (|a|_F |b|_F).
template <typename A, typename B>
double similarity(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
    detail::require_shape(a.size() == b.size(), "similarity: size mismatch");
    const double na = a.norm();
    const double nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0)) throw DomainError("similarity: zero-norm input");
    // element order is irrelevant to the dot product, so matrices and vectors mix freely
    double dot = 0.0;
    const auto& ae = a.derived();
    const auto& be = b.derived();
    for (Eigen::Index j = 0; j < ae.cols(); ++j)
        for (Eigen::Index i = 0; i < ae.rows(); ++i) {
            const Eigen::Index k = j * ae.rows() + i;
            dot += ae(i, j) * be(k % be.rows(), k / be.rows());
        }
    return dot / (na * nb);
}

}  // namespace csiloc
