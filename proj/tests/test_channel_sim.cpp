// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <cstring>

#include "csiloc/adp.hpp"
#include "csiloc/channel_sim.hpp"

using namespace csiloc;

namespace {

constexpr double kTau = 2.0 * kPi;

ScenarioConfig small_scenario() {
    ScenarioConfig s;
    s.grid_origin = Point2(4.0, -1.0);
    s.grid_rows = 10;
    s.grid_cols = 10;
    s.grid_spacing = 0.2;
    s.scatterer_positions = {Point2(6.0, 5.0), Point2(3.0, -6.0)};
    return s;
}

// Scalar evaluation of one CSI entry, independent of the vectorized path.
std::complex<double> csi_entry(const std::vector<PathComponent>& paths, const ScenarioConfig& s, int k, int l) {
    std::complex<double> acc = 0.0;
    for (const auto& p : paths) {
        const double spatial = -kTau * k * s.spacing() * std::cos(p.aoa) / s.wavelength();
        const double temporal = kTau * l * p.sampled_delay / s.n_subcarriers;
        acc += p.gain * std::exp(std::complex<double>(0.0, spatial)) * std::exp(std::complex<double>(0.0, temporal));
    }
    return acc;
}

}  // namespace

TEST(ArrayResponse, BroadsideIsAllOnes) {
    for (int n : {1, 2, 7, 16}) {
        const auto e = array_response(kPi / 2, n, 0.05, 0.1);
        for (int k = 0; k < n; ++k) EXPECT_NEAR(std::abs(e(k) - 1.0), 0.0, 1e-12);
    }
}

TEST(ArrayResponse, EndfireAlternatesSign) {
    const auto e = array_response(0.0, 4, 0.5, 1.0);
    const double expect[] = {1, -1, 1, -1};
    for (int k = 0; k < 4; ++k) {
        EXPECT_NEAR(e(k).real(), expect[k], 1e-12);
        EXPECT_NEAR(e(k).imag(), 0.0, 1e-12);
    }
}

TEST(ArrayResponse, MatchesScalarPhase) {
    const double lambda = 0.0857;
    const auto e = array_response(kPi / 3, 8, lambda / 2, lambda);
    for (int k = 0; k < 8; ++k) {
        const double phase = -kTau * k * 0.5 * std::cos(kPi / 3);
        EXPECT_NEAR(e(k).real(), std::cos(phase), 1e-12);
        EXPECT_NEAR(e(k).imag(), std::sin(phase), 1e-12);
    }
}

TEST(ArrayResponse, UnitModulus) {
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        const auto e = array_response(uniform(rng, 0.0, kPi), 16, uniform(rng, 0.01, 0.2), 0.0857);
        for (int k = 0; k < 16; ++k) EXPECT_NEAR(std::abs(e(k)), 1.0, 1e-12);
    }
}

TEST(ArrayResponse, RejectsBadInputs) {
    EXPECT_THROW(array_response(-0.1, 4, 0.5, 1.0), DomainError);
    EXPECT_THROW(array_response(kPi + 1e-9, 4, 0.5, 1.0), DomainError);
    EXPECT_THROW(array_response(1.0, 4, 0.5, 0.0), DomainError);
}

TEST(Scenario, DerivedQuantities) {
    ScenarioConfig s;
    EXPECT_DOUBLE_EQ(s.spacing(), 0.5 * kSpeedOfLight / 3.5e9);
    EXPECT_DOUBLE_EQ(s.sample_period(), 1e-8);
    EXPECT_DOUBLE_EQ(s.subcarrier_spacing(), 100e6 / 16);
    s.antenna_spacing = 0.03;
    EXPECT_DOUBLE_EQ(s.spacing(), 0.03);
}

TEST(Scenario, ValidationRejectsStructuralErrors) {
    auto s = small_scenario();
    s.n_antennas = 1;
    EXPECT_THROW(validate(s), ConfigError);
    s = small_scenario();
    s.n_subcarriers = 1;
    EXPECT_THROW(validate(s), ConfigError);
    s = small_scenario();
    s.grid_spacing = 0.0;
    EXPECT_THROW(validate(s), ConfigError);
    EXPECT_NO_THROW(validate(small_scenario()));
}

TEST(Scenario, FarScattererIsNamed) {
    auto s = small_scenario();
    s.scatterer_positions.push_back(Point2(40.0, 0.0));
    try {
        validate(s);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("scatterer 2"), std::string::npos) << e.what();
    }
    EXPECT_THROW(synthesize_paths(s, Point2(4.0, 0.0)), ConfigError);
}

TEST(SynthesizePaths, BroadsideLineOfSight) {
    ScenarioConfig s;
    const double d0 = 9.0;
    const auto paths = synthesize_paths(s, Point2(d0, 0.0));
    ASSERT_EQ(paths.size(), 1u);
    EXPECT_NEAR(paths[0].aoa, kPi / 2, 1e-15);
    EXPECT_EQ(paths[0].sampled_delay, static_cast<int>(std::lround(d0 / (kSpeedOfLight * s.sample_period()))));
    EXPECT_NEAR(std::abs(paths[0].gain), 1.0 / d0, 1e-15);
}

TEST(SynthesizePaths, TwoScatterersMatchHandGeometry) {
    const auto s = small_scenario();
    const Point2 user(5.0, 1.0);
    const auto paths = synthesize_paths(s, user);
    ASSERT_EQ(paths.size(), 3u);

    const double tap = kSpeedOfLight * s.sample_period();
    // LOS: distance sqrt(26), direction (5, 1) from a y-axis array
    const double los = std::sqrt(26.0);
    EXPECT_NEAR(paths[0].aoa, std::atan2(5.0, 1.0), 1e-12);
    EXPECT_EQ(paths[0].sampled_delay, static_cast<int>(std::lround(los / tap)));
    EXPECT_NEAR(std::abs(paths[0].gain), 1.0 / los, 1e-12);

    // scatterer (6, 5): BS leg sqrt(61), user leg sqrt(17)
    const double l1 = std::sqrt(61.0) + std::sqrt(17.0);
    EXPECT_NEAR(paths[1].aoa, std::atan2(6.0, 5.0), 1e-12);
    EXPECT_EQ(paths[1].sampled_delay, static_cast<int>(std::lround(l1 / tap)));
    EXPECT_NEAR(std::abs(paths[1].gain), 0.5 / l1, 1e-12);
    EXPECT_NEAR(std::arg(paths[1].gain), std::arg(std::polar(1.0, -kTau * l1 / s.wavelength())), 1e-9);

    // scatterer (3, -6): BS leg sqrt(45), user leg sqrt(53)
    const double l2 = std::sqrt(45.0) + std::sqrt(53.0);
    EXPECT_NEAR(paths[2].aoa, kPi - std::atan2(3.0, 6.0), 1e-12);
    EXPECT_EQ(paths[2].sampled_delay, static_cast<int>(std::lround(l2 / tap)));
}

TEST(SynthesizePaths, AdjacentPointsChangeLittle) {
    const auto s = small_scenario();
    for (int r = 0; r + 1 < s.grid_rows; ++r) {
        const auto a = synthesize_paths(s, s.grid_point(r, 3));
        const auto b = synthesize_paths(s, s.grid_point(r + 1, 3));
        ASSERT_EQ(a.size(), b.size());
        // LOS angle moves by at most spacing / distance; scatterer angles are fixed
        EXPECT_LT(std::abs(a[0].aoa - b[0].aoa), 0.2 / 4.0);
        for (std::size_t i = 1; i < a.size(); ++i) EXPECT_EQ(a[i].aoa, b[i].aoa);
        for (std::size_t i = 0; i < a.size(); ++i) {
            EXPECT_LE(std::abs(a[i].sampled_delay - b[i].sampled_delay), 1);
            EXPECT_LT(std::abs(std::abs(a[i].gain) - std::abs(b[i].gain)), 0.2 * std::abs(a[i].gain));
        }
    }
}

TEST(CsiFromPaths, SinglePathAtBroadsideZeroDelayIsAllOnes) {
    ScenarioConfig s;
    const auto h = csi_from_paths({PathComponent{0, kPi / 2, {1.0, 0.0}}}, s);
    ASSERT_EQ(h.rows(), 16);
    ASSERT_EQ(h.cols(), 16);
    EXPECT_LT((h - CsiMatrix::Ones(16, 16)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CsiFromPaths, SumOfPaths) {
    ScenarioConfig s;
    const PathComponent p1{3, 1.1, std::polar(0.7, 0.3)};
    const PathComponent p2{9, 2.0, std::polar(0.2, -1.2)};
    const auto h = csi_from_paths({p1, p2}, s);
    const auto h1 = csi_from_paths({p1}, s);
    const auto h2 = csi_from_paths({p2}, s);
    EXPECT_LT((h - h1 - h2).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CsiFromPaths, LinearInGain) {
    ScenarioConfig s;
    std::vector<PathComponent> paths{{2, 0.7, {0.3, 0.1}}, {11, 2.5, {-0.2, 0.4}}};
    const auto base = csi_from_paths(paths, s);
    const Complex alpha(1.7, -0.4);
    for (auto& p : paths) p.gain *= alpha;
    EXPECT_LT((csi_from_paths(paths, s) - alpha * base).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CsiFromPaths, MatchesTripleLoop) {
    ScenarioConfig s;
    s.n_antennas = 8;
    s.n_subcarriers = 12;
    Rng rng(11);
    std::vector<PathComponent> paths;
    for (int i = 0; i < 5; ++i)
        paths.push_back({static_cast<int>(uniform_index(rng, 12)), uniform(rng, 0.0, kPi),
                         std::polar(uniform(rng, 0.1, 1.0), uniform(rng, -kPi, kPi))});
    const auto h = csi_from_paths(paths, s);
    for (int k = 0; k < 8; ++k)
        for (int l = 1; l <= 12; ++l) EXPECT_LT(std::abs(h(k, l - 1) - csi_entry(paths, s, k, l)), 1e-12);
}

TEST(CsiFromPaths, Errors) {
    ScenarioConfig s;
    EXPECT_THROW(csi_from_paths({}, s), DomainError);
    EXPECT_THROW(csi_from_paths({PathComponent{16, 1.0, {1.0, 0.0}}}, s), DomainError);
}

TEST(GenerateDataset, GridCardinalityAndOrder) {
    const auto s = small_scenario();
    const auto data = generate_dataset(s);
    ASSERT_EQ(data.size(), 100u);
    EXPECT_EQ(data[0].position, s.grid_point(0, 0));
    EXPECT_EQ(data[1].position, s.grid_point(0, 1));
    EXPECT_EQ(data[10].position, s.grid_point(1, 0));
    for (const auto& d : data) {
        EXPECT_EQ(d.csi.rows(), 16);
        EXPECT_EQ(d.csi.cols(), 16);
    }
}

TEST(GenerateDataset, BitwiseDeterministic) {
    const auto s = make_default_scenario(8, 21, 12, 9);
    const auto a = generate_dataset(s);
    const auto b = generate_dataset(make_default_scenario(8, 21, 12, 9));
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i].position, b[i].position);
        ASSERT_EQ(std::memcmp(a[i].csi.data(), b[i].csi.data(), sizeof(Complex) * a[i].csi.size()), 0);
    }
}

TEST(GenerateDataset, FullScaleCount) {
    ScenarioConfig s;
    s.grid_rows = 401;
    s.grid_cols = 181;
    EXPECT_EQ(s.grid_size(), 72581u);
}

TEST(DefaultScenario, FitsDelayBudget) {
    for (int n : {4, 8, 16})
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            const auto s = make_default_scenario(n, seed);
            EXPECT_NO_THROW(validate(s));
            EXPECT_EQ(s.scatterer_positions.size(), 8u);
            EXPECT_EQ(s.grid_size(), 4500u);
        }
}

TEST(DefaultScenario, RandomScatterersAreSeeded) {
    const auto a = make_default_scenario(16, 5);
    const auto b = make_default_scenario(16, 5);
    const auto c = make_default_scenario(16, 6);
    EXPECT_EQ(a.scatterer_positions, b.scatterer_positions);
    EXPECT_NE(a.scatterer_positions, c.scatterer_positions);
}

// Nearby fingerprints should look more alike than distant ones.
TEST(DefaultScenario, SimilarityDecaysWithDistance) {
    const auto s = make_default_scenario(16, 2);
    const auto data = generate_dataset(s);
    const AdpTransform t(16, 16);
    Rng rng(5);
    int wins = 0;
    const int triples = 400;
    for (int k = 0; k < triples; ++k) {
        const auto r = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(s.grid_rows - 10)));
        const auto c = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(s.grid_cols - 1)));
        const std::size_t i = static_cast<std::size_t>(r * s.grid_cols + c);
        const auto a0 = t(data[i].csi);
        const double near = similarity(a0, t(data[i + 1].csi));
        const double far = similarity(a0, t(data[i + 10 * static_cast<std::size_t>(s.grid_cols)].csi));
        wins += near > far;
    }
    EXPECT_GE(static_cast<double>(wins) / triples, 0.95);
}
