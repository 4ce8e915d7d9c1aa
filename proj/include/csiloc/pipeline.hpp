// SPDX-License-Identifier: Apache-2.0
#pragma once

// Three-phase localization framework:
//   phase 1  train the autoencoder once on ADPs from one or more scenarios
//   phase 2  on a new scenario, encode a small training subset and fit one GPR per coordinate
//   online   ADP -> encode -> decode -> similarity gate -> GPR_x, GPR_y
// plus the trial-based evaluation harness and the optimization timing study.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "adp.hpp"
#include "autoencoder.hpp"
#include "channel_sim.hpp"
#include "errors.hpp"
#include "gpr.hpp"
#include "gpr_train.hpp"
#include "log.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace csiloc {

inline constexpr double kDefaultThreshold = 0.8;
inline constexpr std::size_t kMinTrainSamples = 5;

/// Unit-norm vectorized ADPs with their grid positions.
struct AdpDataset {
    int n_antennas = 0;
    int n_subcarriers = 0;
    std::vector<Eigen::VectorXd> adps;
    Eigen::MatrixXd positions;  // n x 2

    std::size_t size() const { return adps.size(); }
    int width() const { return n_antennas * n_subcarriers; }
};

inline AdpDataset to_adp_dataset(const std::vector<GeoTaggedSample>& samples) {
    if (samples.empty()) throw DomainError("to_adp_dataset: no samples");
    AdpDataset d;
    d.n_antennas = static_cast<int>(samples.front().csi.rows());
    d.n_subcarriers = static_cast<int>(samples.front().csi.cols());
    const AdpTransform transform(d.n_antennas, d.n_subcarriers);
    d.adps.resize(samples.size());
    d.positions.resize(static_cast<Eigen::Index>(samples.size()), 2);
    parallel_for(samples.size(), [&](std::size_t i) { d.adps[i] = normalized_vector(transform(samples[i].csi)); });
    for (std::size_t i = 0; i < samples.size(); ++i) d.positions.row(static_cast<Eigen::Index>(i)) = samples[i].position;
    return d;
}

/// Concatenation of several datasets (for example two scenarios pooled for autoencoder training).
inline std::vector<Eigen::VectorXd> pool_adps(const std::vector<const AdpDataset*>& sets) {
    std::vector<Eigen::VectorXd> out;
    for (const AdpDataset* s : sets) out.insert(out.end(), s->adps.begin(), s->adps.end());
    return out;
}

/// Phase 1: one-off autoencoder training.
inline AutoencoderModel offline_phase1(const std::vector<Eigen::VectorXd>& adps, const AutoencoderConfig& config,
                                       const EpochCallback& on_epoch = {}) {
    if (adps.empty()) throw DomainError("offline_phase1: empty training set");
    return train(config, adps, on_epoch);
}

struct SplitSpec {
    double train_fraction = 0.10;
    int n_trials = 50;
    std::uint64_t rng_seed = 0;
};

inline void validate(const SplitSpec& s) {
    if (!(s.train_fraction > 0.0 && s.train_fraction < 1.0)) throw ConfigError("train_fraction must be in (0, 1)");
    if (s.n_trials < 1) throw ConfigError("n_trials must be >= 1");
}

struct Split {
    std::vector<std::size_t> train;  // sorted
    std::vector<std::size_t> test;   // sorted
};

/// ceil(fraction * n) training indices by seeded shuffle; the rest are test indices.
inline Split make_split(std::size_t n, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("make_split: fraction must be in (0, 1)");
    // the small slack keeps products like 0.1 * 72400 from rounding up past the intended count
    const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
    Rng rng(derive_seed(seed, "split"));
    const auto perm = permutation(n, rng);
    Split s;
    s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(std::min(k, n)));
    s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(std::min(k, n)), perm.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

/// GPR input features: autoencoder codes, or the raw ADP vectors when `ae` is null.
inline Eigen::MatrixXd features(const AutoencoderModel* ae, const AdpDataset& data,
                                const std::vector<std::size_t>& idx) {
    Eigen::MatrixXd raw(data.width(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) raw.col(static_cast<Eigen::Index>(c)) = data.adps[idx[c]];
    if (!ae) return raw.transpose();
    return encode_batch(*ae, raw).transpose();
}

struct Phase2Result {
    PositionModels models;
    Split split;
};

/// Phase 2: fit the coordinate regressors on a small seeded subset of a new scenario.
inline Phase2Result offline_phase2(const AutoencoderModel* ae, const AdpDataset& data, double fraction,
                                   std::uint64_t split_seed, const OptimizationBudget& budget) {
    if (ae) detail::require_shape(ae->config.input_width == data.width(), "offline_phase2: autoencoder width mismatch");
    Phase2Result r;
    r.split = make_split(data.size(), fraction, split_seed);
    if (r.split.train.size() < kMinTrainSamples)
        throw DomainError("offline_phase2: fraction " + std::to_string(fraction) + " of " +
                          std::to_string(data.size()) + " samples leaves " + std::to_string(r.split.train.size()) +
                          " training samples (need " + std::to_string(kMinTrainSamples) + ")");
    const Eigen::MatrixXd x = features(ae, data, r.split.train);
    const Eigen::MatrixXd pos = data.positions(r.split.train, Eigen::all);
    r.models = train_position_models(x, pos, budget);
    return r;
}

struct LocalizationOutcome {
    double similarity = 0.0;
    std::optional<Point2> estimate;  // present iff similarity > threshold

    bool accepted() const { return estimate.has_value(); }
};

/// Anything that maps an ADP vector to a code and back.
template <typename C>
concept AdpCodec = requires(const C& c, const Eigen::VectorXd& v) {
    { c.encode(v) } -> std::convertible_to<Eigen::VectorXd>;
    { c.decode(v) } -> std::convertible_to<Eigen::VectorXd>;
};

struct AutoencoderCodec {
    const AutoencoderModel& model;
    Eigen::VectorXd encode(const Eigen::VectorXd& v) const { return csiloc::encode(model, v); }
    Eigen::VectorXd decode(const Eigen::VectorXd& v) const { return csiloc::decode(model, v); }
};

/// Gate on reconstruction similarity, then regress both coordinates from the code.
template <AdpCodec Codec>
LocalizationOutcome localize_adp(const Codec& codec, const GprModel& gpr_x, const GprModel& gpr_y,
                                 const Eigen::VectorXd& adp_vector, double threshold) {
    const Eigen::VectorXd code = codec.encode(adp_vector);
    LocalizationOutcome out;
    out.similarity = similarity(adp_vector, codec.decode(code));
    if (out.similarity > threshold) {
        const Eigen::MatrixXd row = code.transpose();
        out.estimate = Point2(predict_mean(gpr_x, row)(0), predict_mean(gpr_y, row)(0));
    }
    return out;
}

/// Online phase for one measured CSI matrix.
inline LocalizationOutcome online_localize(const AutoencoderModel& ae, const GprModel& gpr_x, const GprModel& gpr_y,
                                           const CsiMatrix& csi, double threshold = kDefaultThreshold) {
    detail::require_shape(csi.size() == ae.config.input_width, "online_localize: CSI size does not match the model");
    const Eigen::VectorXd v = normalized_vector(compute_adp(csi));
    return localize_adp(AutoencoderCodec{ae}, gpr_x, gpr_y, v, threshold);
}

/// Root of the mean squared 2-D error.
inline double rmse(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth) {
    detail::require_shape(predicted.rows() == truth.rows() && predicted.cols() == truth.cols(), "rmse: shape mismatch");
    if (truth.rows() == 0) throw DomainError("rmse: empty set");
    return std::sqrt((predicted - truth).rowwise().squaredNorm().mean());
}

struct TrialResult {
    int trial = 0;
    double rmse = 0.0;
    double baseline_rmse = 0.0;  // predicting the training centroid everywhere
    KernelKind kernel_x = KernelKind::SquaredExponential;
    KernelKind kernel_y = KernelKind::SquaredExponential;
    double reject_rate = 0.0;
    double fit_ms = 0.0;
    double predict_ms = 0.0;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    bool degraded = false;
    std::vector<double> squared_errors;  // per test sample, in test-index order
};

struct EvalReport {
    double train_fraction = 0.0;
    bool bypass_ae = false;
    double threshold = kDefaultThreshold;
    std::vector<TrialResult> trials;  // sorted by trial index
    double mean_rmse = 0.0;
    double mean_baseline_rmse = 0.0;
    double mean_reject_rate = 0.0;
};

struct EvalOptions {
    bool bypass_ae = false;
    double threshold = kDefaultThreshold;
};

namespace detail {
inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}
}  // namespace detail

/// Repeated random-subsample evaluation. The similarity gate is reported as a rejection
/// rate but does not remove samples from the RMSE.
inline EvalReport evaluate(const AdpDataset& data, const AutoencoderModel* ae, const SplitSpec& split,
                           const OptimizationBudget& budget, const EvalOptions& options = {}) {
    validate(split);
    if (!options.bypass_ae && !ae) throw ConfigError("evaluate: an autoencoder is required unless bypass_ae is set");
    const AutoencoderModel* codec = options.bypass_ae ? nullptr : ae;

    EvalReport report;
    report.train_fraction = split.train_fraction;
    report.bypass_ae = options.bypass_ae;
    report.threshold = options.threshold;
    report.trials.resize(static_cast<std::size_t>(split.n_trials));

    parallel_for(report.trials.size(), [&](std::size_t t) {
        TrialResult& tr = report.trials[t];
        tr.trial = static_cast<int>(t);
        OptimizationBudget b = budget;
        b.rng_seed = derive_seed(budget.rng_seed, "trial-budget", t);

        const auto t0 = std::chrono::steady_clock::now();
        const Phase2Result p2 = offline_phase2(codec, data, split.train_fraction, derive_seed(split.rng_seed, "trial", t), b);
        tr.fit_ms = detail::elapsed_ms(t0);
        tr.n_train = p2.split.train.size();
        tr.n_test = p2.split.test.size();
        tr.kernel_x = p2.models.report_x.winner;
        tr.kernel_y = p2.models.report_y.winner;
        tr.degraded = p2.models.degraded;

        const auto t1 = std::chrono::steady_clock::now();
        const Eigen::MatrixXd xs = features(codec, data, p2.split.test);
        Eigen::MatrixXd pred(xs.rows(), 2);
        pred.col(0) = predict_mean(p2.models.x, xs);
        pred.col(1) = predict_mean(p2.models.y, xs);
        tr.predict_ms = detail::elapsed_ms(t1);

        const Eigen::MatrixXd truth = data.positions(p2.split.test, Eigen::all);
        const Eigen::VectorXd sq = (pred - truth).rowwise().squaredNorm();
        tr.squared_errors.assign(sq.data(), sq.data() + sq.size());
        tr.rmse = rmse(pred, truth);

        const Eigen::RowVector2d centroid = data.positions(p2.split.train, Eigen::all).colwise().mean();
        tr.baseline_rmse = rmse(centroid.replicate(truth.rows(), 1), truth);

        if (codec) {
            std::size_t rejected = 0;
            for (std::size_t i : p2.split.test)
                if (!(reconstruction_similarity(*codec, data.adps[i]) > options.threshold)) ++rejected;
            tr.reject_rate = static_cast<double>(rejected) / static_cast<double>(tr.n_test);
        }
    });

    for (const auto& tr : report.trials) {
        report.mean_rmse += tr.rmse;
        report.mean_baseline_rmse += tr.baseline_rmse;
        report.mean_reject_rate += tr.reject_rate;
    }
    const double nt = static_cast<double>(report.trials.size());
    report.mean_rmse /= nt;
    report.mean_baseline_rmse /= nt;
    report.mean_reject_rate /= nt;
    return report;
}

struct TimingCell {
    int n = 0;
    int d = 0;
    double median_ms = 0.0;
    std::vector<double> runs_ms;
};

/// Synthetic regression problem for timing: inputs uniform in the unit cube, targets a smooth
/// function of a random projection plus small noise.
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> timing_problem(int n, int d, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "timing", static_cast<std::uint64_t>(n) * 100003u + static_cast<std::uint64_t>(d)));
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = 0; i < n; ++i) x(i, j) = uniform(rng, 0.0, 1.0);
    Eigen::VectorXd w(d);
    for (Eigen::Index j = 0; j < d; ++j) w(j) = standard_normal(rng) / std::sqrt(static_cast<double>(d));
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = std::sin(3.0 * x.row(i).dot(w)) + 0.05 * standard_normal(rng);
    return {std::move(x), std::move(y)};
}

/// Wall-clock time of hyperparameter optimization plus the final fit (squared exponential),
/// median over `repetitions` runs per (n, d) cell.
inline std::vector<TimingCell> timing_study(const std::vector<int>& dims, const std::vector<int>& sizes,
                                            const OptimizationBudget& budget, int repetitions = 3) {
    if (repetitions < 1) throw ConfigError("timing_study: repetitions must be >= 1");
    std::vector<TimingCell> cells;
    for (int n : sizes) {
        for (int d : dims) {
            if (n < 5 || d < 1) throw ConfigError("timing_study: need n >= 5 and d >= 1");
            const auto [x, y] = timing_problem(n, d, budget.rng_seed);
            TimingCell cell{n, d, 0.0, {}};
            for (int r = 0; r < repetitions; ++r) {
                const auto t0 = std::chrono::steady_clock::now();
                const auto opt = optimize_hyperparams(x, y, KernelKind::SquaredExponential, budget);
                const GprModel m = fit(x, y, opt.spec);
                cell.runs_ms.push_back(detail::elapsed_ms(t0));
                (void)m;
            }
            std::vector<double> sorted = cell.runs_ms;
            std::sort(sorted.begin(), sorted.end());
            cell.median_ms = sorted[sorted.size() / 2];
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

}  // namespace csiloc
