// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "csiloc/pipeline.hpp"

using namespace csiloc;

namespace {

// Encodes to the first two entries and always decodes to a fixed vector.
struct StubCodec {
    Eigen::VectorXd reconstruction;
    Eigen::VectorXd encode(const Eigen::VectorXd& v) const { return v.head(2); }
    Eigen::VectorXd decode(const Eigen::VectorXd&) const { return reconstruction; }
};
static_assert(AdpCodec<StubCodec>);
static_assert(AdpCodec<AutoencoderCodec>);

Eigen::VectorXd random_positive(Rng& rng, int width) {
    Eigen::VectorXd v(width);
    for (int i = 0; i < width; ++i) v(i) = uniform(rng, 0.0, 1.0);
    return v;
}

std::pair<GprModel, GprModel> toy_position_models(Rng& rng) {
    Eigen::MatrixXd x(12, 2);
    Eigen::VectorXd yx(12), yy(12);
    for (int i = 0; i < 12; ++i) {
        x(i, 0) = uniform(rng, 0.0, 1.0);
        x(i, 1) = uniform(rng, 0.0, 1.0);
        yx(i) = 3.0 * x(i, 0);
        yy(i) = -2.0 * x(i, 1) + 1.0;
    }
    const auto spec = make_kernel(KernelKind::SquaredExponential, 1.0, 0.5, 0.05);
    return {fit(x, yx, spec), fit(x, yy, spec)};
}

// Random unit vectors on a fake 1000-point grid; enough for split and precondition checks.
AdpDataset fake_dataset(std::size_t n, int width = 16) {
    Rng rng(77);
    AdpDataset d;
    d.n_antennas = 4;
    d.n_subcarriers = width / 4;
    d.positions.resize(static_cast<Eigen::Index>(n), 2);
    for (std::size_t i = 0; i < n; ++i) {
        const auto v = random_positive(rng, width);
        d.adps.push_back(v / v.norm());
        d.positions.row(static_cast<Eigen::Index>(i)) << uniform(rng, 0, 10), uniform(rng, 0, 10);
    }
    return d;
}

OptimizationBudget quick_budget(std::uint64_t seed = 3) {
    OptimizationBudget b;
    b.n_restarts = 1;
    b.max_iterations = 10;
    b.record_surface = false;
    b.rng_seed = seed;
    return b;
}

std::vector<Eigen::VectorXd> sample_adps(const AdpDataset& d, std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    const auto perm = permutation(d.size(), rng);
    std::vector<Eigen::VectorXd> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(d.adps[perm[i]]);
    return out;
}

// Several realizations of the default scatterer statistics on a small 8x8 grid.
std::vector<Eigen::VectorXd> realization_pool(int count, std::uint64_t first_seed, std::size_t per) {
    std::vector<Eigen::VectorXd> pool;
    for (int k = 0; k < count; ++k) {
        const auto d = to_adp_dataset(generate_dataset(make_default_scenario(8, first_seed + k, 30, 30)));
        const auto part = sample_adps(d, per, first_seed + k);
        pool.insert(pool.end(), part.begin(), part.end());
    }
    return pool;
}

AutoencoderConfig pool_config() {
    auto c = table_config(8);
    c.epochs = 100;
    c.batch_size = 64;
    c.rng_seed = 1;
    return c;
}

}  // namespace

TEST(Gate, EstimateIffSimilarityAboveThreshold) {
    Rng rng(1);
    const auto [gx, gy] = toy_position_models(rng);
    int accepted = 0, ties = 0;
    for (int t = 0; t < 1000; ++t) {
        const int width = 4 + static_cast<int>(uniform_index(rng, 60));
        const Eigen::VectorXd v = random_positive(rng, width);
        StubCodec codec{random_positive(rng, width)};
        // sparsify some reconstructions so the similarity spans the whole range
        for (int i = 0; i < width; ++i)
            if (uniform(rng, 0, 1) < 0.5 * (t % 3)) codec.reconstruction(i) = 0.0;
        if (codec.reconstruction.norm() == 0.0) codec.reconstruction(0) = 1.0;

        const double expected = v.dot(codec.reconstruction) / (v.norm() * codec.reconstruction.norm());
        double threshold = uniform(rng, 0.0, 1.0);
        if (t % 10 == 0) {
            threshold = similarity(v, codec.reconstruction);
            ++ties;
        }
        const auto out = localize_adp(codec, gx, gy, v, threshold);
        EXPECT_NEAR(out.similarity, expected, 1e-12);
        ASSERT_EQ(out.accepted(), out.similarity > threshold) << "case " << t;
        if (out.accepted()) {
            ++accepted;
            const Eigen::MatrixXd row = v.head(2).transpose();
            EXPECT_EQ((*out.estimate)(0), predict_mean(gx, row)(0));
            EXPECT_EQ((*out.estimate)(1), predict_mean(gy, row)(0));
        }
    }
    EXPECT_GT(accepted, 100);
    EXPECT_LT(accepted, 900);
    EXPECT_EQ(ties, 100);
}

TEST(Gate, OutOfDistributionSimilarityIsRejected) {
    Rng rng(2);
    const auto [gx, gy] = toy_position_models(rng);
    // unit vectors with cosine 0.63 between them
    Eigen::VectorXd v = Eigen::VectorXd::Zero(4), r = Eigen::VectorXd::Zero(4);
    v(0) = 1.0;
    r(0) = 0.63;
    r(1) = std::sqrt(1.0 - 0.63 * 0.63);
    const auto out = localize_adp(StubCodec{r}, gx, gy, v, kDefaultThreshold);
    EXPECT_NEAR(out.similarity, 0.63, 1e-12);
    EXPECT_FALSE(out.accepted());
}

TEST(Split, DisjointCoverSortedAndSized) {
    for (std::size_t n : {10u, 97u, 1000u})
        for (double f : {0.5, 0.1, 0.01, 0.33})
            for (std::uint64_t seed : {0u, 1u, 42u}) {
                const auto s = make_split(n, f, seed);
                EXPECT_EQ(s.train.size(), static_cast<std::size_t>(std::ceil(f * static_cast<double>(n) - 1e-9)));
                EXPECT_TRUE(std::is_sorted(s.train.begin(), s.train.end()));
                EXPECT_TRUE(std::is_sorted(s.test.begin(), s.test.end()));
                std::set<std::size_t> all(s.train.begin(), s.train.end());
                all.insert(s.test.begin(), s.test.end());
                EXPECT_EQ(all.size(), n);
                EXPECT_EQ(s.train.size() + s.test.size(), n);
                EXPECT_EQ(*all.rbegin(), n - 1);
            }
}

TEST(Split, FullScaleCounts) {
    EXPECT_EQ(make_split(72400, 0.10, 0).train.size(), 7240u);
    EXPECT_EQ(make_split(72400, 0.05, 0).train.size(), 3620u);
    EXPECT_EQ(make_split(72400, 0.01, 0).train.size(), 724u);
    EXPECT_EQ(make_split(72400, 0.001, 0).train.size(), 73u);  // ceil(72.4)
}

TEST(Split, DeterministicAndSeedSensitive) {
    EXPECT_EQ(make_split(1000, 0.1, 5).train, make_split(1000, 0.1, 5).train);
    EXPECT_NE(make_split(1000, 0.1, 5).train, make_split(1000, 0.1, 6).train);
    EXPECT_THROW(make_split(10, 0.0, 0), ConfigError);
    EXPECT_THROW(make_split(10, 1.0, 0), ConfigError);
    EXPECT_THROW(validate(SplitSpec{1.5, 10, 0}), ConfigError);
    EXPECT_THROW(validate(SplitSpec{0.1, 0, 0}), ConfigError);
}

TEST(OfflinePhase2, TooFewSamplesIsAnError) {
    const auto d = fake_dataset(1000);
    EXPECT_THROW(offline_phase2(nullptr, d, 0.001, 0, quick_budget()), DomainError);
    const auto ae = initialize(table_config(8));
    EXPECT_THROW(offline_phase2(&ae, d, 0.1, 0, quick_budget()), ShapeError);
}

TEST(OfflinePhase2, FitsOnSeededSubsample) {
    const auto d = to_adp_dataset(generate_dataset(make_default_scenario(4, 3, 12, 12)));
    const auto r = offline_phase2(nullptr, d, 0.25, 9, quick_budget());
    EXPECT_EQ(r.split.train, make_split(d.size(), 0.25, 9).train);
    EXPECT_EQ(r.models.x.size(), 36);
    EXPECT_EQ(r.models.x.dim(), 16);
}

TEST(OfflinePhase1, EmptyDatasetIsAnError) { EXPECT_THROW(offline_phase1({}, table_config(8)), DomainError); }

TEST(Features, RawAndEncoded) {
    const auto d = fake_dataset(20, 64);
    const std::vector<std::size_t> idx{3, 0, 7};
    const auto raw = features(nullptr, d, idx);
    ASSERT_EQ(raw.rows(), 3);
    EXPECT_EQ(raw.row(0).transpose(), d.adps[3]);
    const auto ae = initialize(table_config(8));
    const auto enc = features(&ae, d, idx);
    ASSERT_EQ(enc.cols(), 16);
    EXPECT_LT((enc.row(2).transpose() - encode(ae, d.adps[7])).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(OnlineLocalize, ZeroCsiIsADomainError) {
    Rng rng(4);
    const auto [gx, gy] = toy_position_models(rng);
    const auto ae = initialize(table_config(8));
    EXPECT_THROW(online_localize(ae, gx, gy, CsiMatrix::Zero(8, 8)), DomainError);
    EXPECT_THROW(online_localize(ae, gx, gy, CsiMatrix::Ones(4, 4)), ShapeError);
}

TEST(OnlineLocalize, TrainingLocationIsAccepted) {
    const auto s = make_default_scenario(8, 5, 12, 12);
    const auto samples = generate_dataset(s);
    const auto d = to_adp_dataset(samples);
    auto c = table_config(8);
    c.epochs = 300;
    c.batch_size = 16;
    const auto ae = offline_phase1(d.adps, c);
    const auto p2 = offline_phase2(&ae, d, 0.5, 1, quick_budget());
    const std::size_t i = p2.split.train.front();
    const auto out = online_localize(ae, p2.models.x, p2.models.y, samples[i].csi);
    EXPECT_GT(out.similarity, kDefaultThreshold);
    ASSERT_TRUE(out.accepted());
    EXPECT_LT(((*out.estimate) - samples[i].position).norm(), 0.5);
}

TEST(Rmse, ClosedForm) {
    Eigen::MatrixXd p(2, 2), t(2, 2);
    p << 0, 0, 3, 4;
    t << 0, 0, 0, 0;
    EXPECT_DOUBLE_EQ(rmse(p, t), std::sqrt(12.5));
    EXPECT_THROW(rmse(p, Eigen::MatrixXd::Zero(3, 2)), ShapeError);
    EXPECT_THROW(rmse(Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 2)), DomainError);
}

TEST(Evaluate, ReportConsistency) {
    const auto d = to_adp_dataset(generate_dataset(make_default_scenario(4, 8, 20, 20)));
    const auto report = evaluate(d, nullptr, SplitSpec{0.1, 4, 11}, quick_budget(), {.bypass_ae = true});
    ASSERT_EQ(report.trials.size(), 4u);
    double sum = 0.0;
    for (std::size_t t = 0; t < report.trials.size(); ++t) {
        const auto& tr = report.trials[t];
        EXPECT_EQ(tr.trial, static_cast<int>(t));
        EXPECT_EQ(tr.n_train, 40u);
        EXPECT_EQ(tr.n_test, 360u);
        ASSERT_EQ(tr.squared_errors.size(), tr.n_test);
        const double from_errors =
            std::sqrt(std::accumulate(tr.squared_errors.begin(), tr.squared_errors.end(), 0.0) / tr.n_test);
        EXPECT_NEAR(from_errors, tr.rmse, 1e-12);
        EXPECT_LT(tr.rmse, tr.baseline_rmse);
        EXPECT_EQ(tr.reject_rate, 0.0);

        // centroid baseline: test spread about its own mean plus the centroid offset
        const auto split = make_split(d.size(), 0.1, derive_seed(11, "trial", t));
        const Eigen::MatrixXd test = d.positions(split.test, Eigen::all);
        const Eigen::RowVector2d test_mean = test.colwise().mean();
        const Eigen::RowVector2d train_mean = d.positions(split.train, Eigen::all).colwise().mean();
        const double spread = (test.rowwise() - test_mean).rowwise().squaredNorm().mean();
        EXPECT_NEAR(tr.baseline_rmse, std::sqrt(spread + (train_mean - test_mean).squaredNorm()), 1e-9);
        sum += tr.rmse;
    }
    EXPECT_NEAR(report.mean_rmse, sum / 4.0, 1e-12);

    EXPECT_THROW(evaluate(d, nullptr, SplitSpec{0.1, 1, 0}, quick_budget()), ConfigError);
}

TEST(Evaluate, CentroidBaselineIsTestStdWhenMeansCoincide) {
    // symmetric layout: train points at the centre of mass of the test points
    AdpDataset d = fake_dataset(10);
    d.positions << 0, 0, 1, 0, -1, 0, 0, 1, 0, -1, 0, 0, 2, 2, -2, -2, 2, -2, -2, 2;
    const Eigen::RowVector2d centroid(0, 0);
    const Eigen::MatrixXd test = d.positions.bottomRows(9);
    const double std2 = (test.rowwise() - test.colwise().mean()).rowwise().squaredNorm().mean();
    EXPECT_NEAR(rmse(centroid.replicate(9, 1), test), std::sqrt(std2), 1e-12);
}

TEST(Evaluate, GateReportedWithoutDroppingSamples) {
    const auto d = to_adp_dataset(generate_dataset(make_default_scenario(4, 8, 12, 12)));
    AutoencoderConfig c;
    c.input_width = 16;
    c.layer_widths = {16, 8};
    c.epochs = 5;
    const auto ae = initialize(c);
    const auto report = evaluate(d, &ae, SplitSpec{0.25, 2, 1}, quick_budget(), {.threshold = 1.0});
    for (const auto& tr : report.trials) {
        EXPECT_EQ(tr.reject_rate, 1.0);  // nothing can exceed similarity 1
        EXPECT_EQ(tr.squared_errors.size(), tr.n_test);
    }
}

TEST(Evaluate, DeterministicGivenSeeds) {
    const auto d = to_adp_dataset(generate_dataset(make_default_scenario(4, 8, 12, 12)));
    const EvalOptions raw{.bypass_ae = true};
    const auto a = evaluate(d, nullptr, SplitSpec{0.2, 3, 4}, quick_budget(), raw);
    const auto b = evaluate(d, nullptr, SplitSpec{0.2, 3, 4}, quick_budget(), raw);
    for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(a.trials[t].squared_errors, b.trials[t].squared_errors);
}

TEST(TimingStudy, SmallCellIsFastAndMedianIsARun) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cells = timing_study({2}, {10}, quick_budget(), 3);
    EXPECT_LT(detail::elapsed_ms(t0), 1000.0);
    ASSERT_EQ(cells.size(), 1u);
    EXPECT_EQ(cells[0].runs_ms.size(), 3u);
    std::vector<double> r = cells[0].runs_ms;
    std::sort(r.begin(), r.end());
    EXPECT_EQ(cells[0].median_ms, r[1]);
    EXPECT_THROW(timing_study({2}, {4}, quick_budget()), ConfigError);
    EXPECT_THROW(timing_study({2}, {10}, quick_budget(), 0), ConfigError);
}

TEST(TimingStudy, ProblemIsSeeded) {
    const auto [x1, y1] = timing_problem(20, 3, 1);
    const auto [x2, y2] = timing_problem(20, 3, 1);
    EXPECT_EQ(x1, x2);
    EXPECT_EQ(y1, y2);
    EXPECT_GE(x1.minCoeff(), 0.0);
    EXPECT_LE(x1.maxCoeff(), 1.0);
}

// Scenario "A" is read as the scatterer statistics: the autoencoder sees many random
// realizations of them and is then scored on realizations it never saw.
TEST(OfflinePhase1, GeneralizesToUnseenRealizationOfSameStatistics) {
    const auto pool = realization_pool(20, 100, 200);
    const auto unseen = realization_pool(3, 900, 200);
    const auto ae = offline_phase1(pool, pool_config());
    const double own = mean_similarity(ae, pool);
    const double other = mean_similarity(ae, unseen);
    EXPECT_GT(own, 0.9);
    EXPECT_LE(own - other, 0.05) << "own " << own << " unseen " << other;
}

TEST(OfflinePhase1, AddingDifferentScenarioKeepsCoveredSimilarity) {
    const auto pool = realization_pool(20, 100, 200);
    // structurally different: a single scatterer instead of eight
    const auto single = to_adp_dataset(generate_dataset(make_default_scenario(8, 7, 30, 30, 1)));
    auto extended = pool;
    const auto extra = sample_adps(single, 200, 99);
    extended.insert(extended.end(), extra.begin(), extra.end());

    const double before = mean_similarity(offline_phase1(pool, pool_config()), pool);
    const double after = mean_similarity(offline_phase1(extended, pool_config()), pool);
    EXPECT_GE(after, before - 0.02) << "before " << before << " after " << after;
}
