// SPDX-License-Identifier: Apache-2.0
#pragma once

// Geometric multipath channel synthesis for a single base station with a
// uniform linear array (ULA) along the y-axis and a single-antenna user.
// Every user location sees one line-of-sight path plus one single-bounce path
// per point scatterer, which keeps fingerprints smooth in the user position.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace csiloc {

using Complex = std::complex<double>;
using CsiMatrix = Eigen::MatrixXcd;  // N_t x N_c
using Point2 = Eigen::Vector2d;

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kReflectionAttenuation = 0.5;

struct ScenarioConfig {
    double carrier_frequency = 3.5e9;  // Hz
    double bandwidth = 100e6;          // Hz
    int n_antennas = 16;
    int n_subcarriers = 16;
    std::optional<double> antenna_spacing;  // meters; half wavelength when unset
    Point2 bs_position = Point2::Zero();
    std::vector<Point2> scatterer_positions;
    Point2 grid_origin = Point2(4.0, -4.0);
    int grid_rows = 10;
    int grid_cols = 10;
    double grid_spacing = 0.2;  // meters
    std::uint64_t rng_seed = 0;

    double wavelength() const { return kSpeedOfLight / carrier_frequency; }
    double spacing() const { return antenna_spacing.value_or(0.5 * wavelength()); }
    double sample_period() const { return 1.0 / bandwidth; }
    double subcarrier_spacing() const { return bandwidth / n_subcarriers; }
    std::size_t grid_size() const {
        return static_cast<std::size_t>(grid_rows) * static_cast<std::size_t>(grid_cols);
    }

    /// Row-major grid: rows advance along y, columns along x.
    Point2 grid_point(int row, int col) const {
        return grid_origin + grid_spacing * Point2(col, row);
    }
    Point2 grid_point(std::size_t index) const {
        return grid_point(static_cast<int>(index / grid_cols), static_cast<int>(index % grid_cols));
    }
};

struct PathComponent {
    int sampled_delay = 0;  // taps of T_s
    double aoa = 0.0;       // radians in [0, pi], measured from the array axis
    Complex gain{1.0, 0.0};
};

struct GeoTaggedSample {
    Point2 position = Point2::Zero();
    CsiMatrix csi;
};

/// ULA steering vector; element k is exp(-j 2 pi k d cos(theta) / lambda).
inline Eigen::VectorXcd array_response(double theta, int n_antennas, double spacing, double wavelength) {
    if (!(theta >= 0.0 && theta <= kPi)) throw DomainError("array_response: angle outside [0, pi]");
    if (!(wavelength > 0.0)) throw DomainError("array_response: wavelength must be positive");
    if (n_antennas < 1) throw DomainError("array_response: need at least one antenna");
    Eigen::VectorXcd e(n_antennas);
    const double step = -2.0 * kPi * spacing * std::cos(theta) / wavelength;
    for (int k = 0; k < n_antennas; ++k) e(k) = std::polar(1.0, step * k);
    return e;
}

namespace detail {

/// Angle between the array axis (+y) and the direction from `from` to `to`.
inline double arrival_angle(const Point2& from, const Point2& to) {
    const Point2 v = to - from;
    const double norm = v.norm();
    if (norm == 0.0) throw DomainError("arrival_angle: coincident points");
    return std::acos(std::clamp(v.y() / norm, -1.0, 1.0));
}

inline int quantize_delay(double length, const ScenarioConfig& s) {
    return static_cast<int>(std::lround(length / kSpeedOfLight / s.sample_period()));
}

inline Complex path_gain(double length, double attenuation, const ScenarioConfig& s) {
    return std::polar(attenuation / length, -2.0 * kPi * length / s.wavelength());
}

inline std::string describe(const Point2& p) {
    std::ostringstream os;
    os << "(" << p.x() << ", " << p.y() << ")";
    return os.str();
}

inline std::vector<Point2> grid_corners(const ScenarioConfig& s) {
    return {s.grid_point(0, 0), s.grid_point(0, s.grid_cols - 1), s.grid_point(s.grid_rows - 1, 0),
            s.grid_point(s.grid_rows - 1, s.grid_cols - 1)};
}

}  // namespace detail

/// Structural checks plus the delay budget: no path anywhere on the grid may reach N_c taps.
/// Path length is convex in the user position, so the grid corners bound every grid point.
inline void validate(const ScenarioConfig& s) {
    if (s.n_antennas < 2) throw ConfigError("n_antennas must be >= 2");
    if (s.n_subcarriers < 2) throw ConfigError("n_subcarriers must be >= 2");
    if (!(s.carrier_frequency > 0.0)) throw ConfigError("carrier_frequency must be positive");
    if (!(s.bandwidth > 0.0)) throw ConfigError("bandwidth must be positive");
    if (!(s.spacing() > 0.0)) throw ConfigError("antenna_spacing must be positive");
    if (s.grid_rows < 1 || s.grid_cols < 1) throw ConfigError("grid must have at least one row and column");
    if (!(s.grid_spacing > 0.0)) throw ConfigError("grid_spacing must be positive");

    const auto corners = detail::grid_corners(s);
    for (const auto& c : corners) {
        if ((c - s.bs_position).norm() == 0.0) throw ConfigError("grid point coincides with the base station");
        if (detail::quantize_delay((c - s.bs_position).norm(), s) >= s.n_subcarriers)
            throw ConfigError("line-of-sight path to grid corner " + detail::describe(c) + " exceeds the delay budget of " +
                              std::to_string(s.n_subcarriers) + " taps");
    }
    for (std::size_t i = 0; i < s.scatterer_positions.size(); ++i) {
        const Point2& sc = s.scatterer_positions[i];
        const double to_bs = (sc - s.bs_position).norm();
        if (to_bs == 0.0) throw ConfigError("scatterer " + std::to_string(i) + " coincides with the base station");
        for (const auto& c : corners) {
            const int n = detail::quantize_delay(to_bs + (c - sc).norm(), s);
            if (n >= s.n_subcarriers)
                throw ConfigError("scatterer " + std::to_string(i) + " at " + detail::describe(sc) + " produces delay " +
                                  std::to_string(n) + " taps >= n_subcarriers " + std::to_string(s.n_subcarriers));
        }
    }
}

/// LOS path plus one single-bounce path per scatterer, in scatterer order.
inline std::vector<PathComponent> synthesize_paths(const ScenarioConfig& s, const Point2& user) {
    std::vector<PathComponent> paths;
    paths.reserve(s.scatterer_positions.size() + 1);

    const double los = (user - s.bs_position).norm();
    if (los == 0.0) throw DomainError("synthesize_paths: user at the base station");
    PathComponent direct{detail::quantize_delay(los, s), detail::arrival_angle(s.bs_position, user),
                         detail::path_gain(los, 1.0, s)};
    if (direct.sampled_delay >= s.n_subcarriers)
        throw ConfigError("line-of-sight path to " + detail::describe(user) + " exceeds the delay budget");
    paths.push_back(direct);

    for (std::size_t i = 0; i < s.scatterer_positions.size(); ++i) {
        const Point2& sc = s.scatterer_positions[i];
        const double length = (sc - s.bs_position).norm() + (user - sc).norm();
        PathComponent p{detail::quantize_delay(length, s), detail::arrival_angle(s.bs_position, sc),
                        detail::path_gain(length, kReflectionAttenuation, s)};
        if (p.sampled_delay >= s.n_subcarriers)
            throw ConfigError("scatterer " + std::to_string(i) + " at " + detail::describe(sc) + " produces delay " +
                              std::to_string(p.sampled_delay) + " taps >= n_subcarriers " +
                              std::to_string(s.n_subcarriers));
        paths.push_back(p);
    }
    return paths;
}

/// Channel frequency response: column l-1 holds sum over paths of gain * e(aoa) * phase(l, delay),
/// for subcarriers l = 1..N_c. The per-subcarrier phase rotates as exp(+j 2 pi l n / N_c) so that
/// the forward DFT of the delay transform places tap n in delay bin n.
inline CsiMatrix csi_from_paths(const std::vector<PathComponent>& paths, const ScenarioConfig& s) {
    if (paths.empty()) throw DomainError("csi_from_paths: empty path list");
    const int nt = s.n_antennas;
    const int nc = s.n_subcarriers;
    CsiMatrix h = CsiMatrix::Zero(nt, nc);
    Eigen::RowVectorXcd delay_phase(nc);
    for (const auto& p : paths) {
        if (p.sampled_delay < 0 || p.sampled_delay >= nc)
            throw DomainError("csi_from_paths: sampled delay outside [0, N_c)");
        const Eigen::VectorXcd e = array_response(p.aoa, nt, s.spacing(), s.wavelength());
        for (int l = 1; l <= nc; ++l)
            delay_phase(l - 1) = std::polar(1.0, 2.0 * kPi * static_cast<double>(l) * p.sampled_delay / nc);
        h.noalias() += p.gain * (e * delay_phase);
    }
    return h;
}

/// One sample per grid point in row-major order.
inline std::vector<GeoTaggedSample> generate_dataset(const ScenarioConfig& s) {
    validate(s);
    std::vector<GeoTaggedSample> out(s.grid_size());
    parallel_for(out.size(), [&](std::size_t i) {
        const Point2 p = s.grid_point(i);
        out[i] = GeoTaggedSample{p, csi_from_paths(synthesize_paths(s, p), s)};
    });
    return out;
}

/// Places `count` scatterers uniformly in the box [lo, hi], rejecting any that break the
/// delay budget. Uses `s.rng_seed`, so equal configs give equal placements.
inline void place_random_scatterers(ScenarioConfig& s, int count, const Point2& lo, const Point2& hi,
                                    int max_attempts = 10000) {
    Rng rng(derive_seed(s.rng_seed, "scatterers"));
    s.scatterer_positions.clear();
    int attempts = 0;
    while (static_cast<int>(s.scatterer_positions.size()) < count) {
        if (++attempts > max_attempts)
            throw ConfigError("could not place " + std::to_string(count) + " scatterers within the delay budget");
        const Point2 cand(uniform(rng, lo.x(), hi.x()), uniform(rng, lo.y(), hi.y()));
        s.scatterer_positions.push_back(cand);
        try {
            validate(s);
        } catch (const ConfigError&) {
            s.scatterer_positions.pop_back();
        }
    }
}

/// A street-corner style scenario sized so every path fits an n x n delay budget at 100 MHz.
/// The grid spans roughly 10 m x 18 m at 20 cm spacing for n = 16.
inline ScenarioConfig make_default_scenario(int n, std::uint64_t seed, int rows = 90, int cols = 50,
                                            int n_scatterers = 8) {
    ScenarioConfig s;
    s.n_antennas = n;
    s.n_subcarriers = n;
    s.rng_seed = seed;
    s.grid_rows = rows;
    s.grid_cols = cols;
    // keep the worst-case path within the budget: tap length is c / bandwidth (about 3 m)
    const double tap = kSpeedOfLight / s.bandwidth;
    const double budget = (n - 0.5) * tap;
    s.grid_spacing = std::min(0.2, 0.5 * budget / std::max(rows, cols));
    const double half_height = 0.5 * (rows - 1) * s.grid_spacing;
    s.grid_origin = Point2(0.12 * budget, -half_height);
    const double reach = 0.35 * budget;
    place_random_scatterers(s, n_scatterers, Point2(-0.2 * reach, -reach), Point2(reach, reach));
    return s;
}

}  // namespace csiloc
