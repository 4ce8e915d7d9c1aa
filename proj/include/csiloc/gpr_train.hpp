// SPDX-License-Identifier: Apache-2.0
#pragma once

// Hyperparameter optimization and kernel-type selection.
//
// For each kernel kind the NLML is minimized over log-hyperparameters by multi-start
// quasi-Newton descent (BFGS direction, steepest-descent fallback, projected Armijo
// backtracking). The optimized kernel is then scored by k-fold cross-validation and the
// objective OF = log(1 + cv_loss); the kind with the smallest OF wins.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "gpr.hpp"
#include "kernels.hpp"
#include "log.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace csiloc {

struct OptimizationBudget {
    int n_restarts = 5;
    int max_iterations = 20;  // accepted steps per restart
    double tolerance = 1e-6;  // stop when an accepted step improves NLML by less than this
    std::uint64_t rng_seed = 0;
    int k_folds = 5;
    bool record_surface = true;  // score every accepted iterate by CV for the OF surface
    KernelForm form = KernelForm::Reference;
};

struct RestartTrace {
    std::vector<double> nlml;             // NLML after each accepted step, starting point first
    std::vector<Eigen::VectorXd> params;  // matching log-hyperparameters
    bool failed = false;
};

struct OptimizationResult {
    KernelSpec spec;
    double nlml = std::numeric_limits<double>::infinity();
    std::vector<RestartTrace> restarts;
};

struct SurfaceSample {
    KernelSpec spec;
    double nlml = 0.0;
    double cv_loss = std::numeric_limits<double>::quiet_NaN();
    double of = std::numeric_limits<double>::quiet_NaN();
};

struct KernelResult {
    KernelKind kind = KernelKind::SquaredExponential;
    std::optional<KernelSpec> spec;  // empty when the kind failed
    double nlml = std::numeric_limits<double>::infinity();
    double cv_loss = std::numeric_limits<double>::infinity();
    double of = std::numeric_limits<double>::infinity();
    std::string error;
};

struct KernelSelectionReport {
    std::vector<KernelResult> kernels;  // one per kind, in table order
    KernelKind winner = KernelKind::SquaredExponential;
    std::vector<SurfaceSample> surface;

    const KernelResult& winning() const {
        for (const auto& k : kernels)
            if (k.kind == winner) return k;
        throw std::logic_error("report has no entry for its winner");
    }
};

/// OF = log(1 + cv).
inline double objective(double cv) {
    if (!(cv >= 0.0)) throw DomainError("objective: cross-validation loss must be >= 0");
    return std::log1p(cv);
}

namespace detail {

/// Median pairwise distance over at most `cap` evenly strided rows.
inline double median_pair_distance(const Eigen::MatrixXd& x, Eigen::Index cap = 256) {
    const Eigen::Index n = x.rows();
    const Eigen::Index stride = std::max<Eigen::Index>(1, (n + cap - 1) / cap);
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < n; i += stride) rows.push_back(i);
    std::vector<double> d;
    d.reserve(rows.size() * rows.size() / 2);
    for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t b = a + 1; b < rows.size(); ++b) d.push_back(pair_distance(x.row(rows[a]), x.row(rows[b])));
    if (d.empty()) return 1.0;
    auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    return *mid > 0.0 ? *mid : 1.0;
}

inline double target_scale(const Eigen::VectorXd& y) {
    const double sd = std::sqrt((y.array() - y.mean()).square().mean());
    return sd > 0.0 ? sd : 1.0;
}

struct Box {
    Eigen::VectorXd lo, hi;
    Eigen::VectorXd clamp(const Eigen::VectorXd& p) const { return p.cwiseMax(lo).cwiseMin(hi); }
};

inline Box search_box(KernelKind kind, double scale, double median_dist) {
    const int np = kind == KernelKind::RationalQuadratic ? 4 : 3;
    Box b{Eigen::VectorXd(np), Eigen::VectorXd(np)};
    b.lo(0) = std::log(1e-3 * scale);
    b.hi(0) = std::log(1e3 * scale);
    b.lo(1) = std::log(1e-3 * median_dist);
    b.hi(1) = std::log(1e3 * median_dist);
    b.lo(2) = std::log(1e-6 * scale);
    b.hi(2) = std::log(1e2 * scale);
    if (np == 4) {
        b.lo(3) = std::log(1e-3);
        b.hi(3) = std::log(1e3);
    }
    return b;
}

inline std::optional<NlmlWithGradient> try_nlml_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                                         const KernelSpec& spec) {
    try {
        auto r = nlml_gradient(x, y, spec);
        if (!std::isfinite(r.value) || !r.gradient.allFinite()) return std::nullopt;
        return r;
    } catch (const ConditioningError&) {
        return std::nullopt;
    }
}

/// One descent run from `start`. Every accepted step strictly lowers the NLML.
inline RestartTrace descend(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelSpec& proto,
                            const Eigen::VectorXd& start, const Box& box, const OptimizationBudget& budget) {
    constexpr double kArmijo = 1e-4;
    constexpr double kMaxStep = 2.0;  // largest move per coordinate in log space
    constexpr int kMaxHalvings = 30;

    RestartTrace trace;
    Eigen::VectorXd p = box.clamp(start);
    auto cur = try_nlml_gradient(x, y, from_log_params(proto, p));
    if (!cur) {
        trace.failed = true;
        return trace;
    }
    trace.nlml.push_back(cur->value);
    trace.params.push_back(p);

    const Eigen::Index np = p.size();
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(np, np);
    for (int it = 0; it < budget.max_iterations; ++it) {
        Eigen::VectorXd dir = -h * cur->gradient;
        if (cur->gradient.dot(dir) >= 0.0) {
            h.setIdentity();
            dir = -cur->gradient;
        }
        const double biggest = dir.cwiseAbs().maxCoeff();
        if (!(biggest > 0.0)) break;
        if (biggest > kMaxStep) dir *= kMaxStep / biggest;

        // the gradient comes with every trial evaluation, so the first accepted trial is free
        std::optional<NlmlWithGradient> next;
        Eigen::VectorXd trial;
        double t = 1.0;
        for (int k = 0; k < kMaxHalvings; ++k, t *= 0.5) {
            trial = box.clamp(p + t * dir);
            const double decrease = cur->gradient.dot(trial - p);
            if (decrease >= 0.0) continue;
            auto cand = try_nlml_gradient(x, y, from_log_params(proto, trial));
            if (cand && cand->value < cur->value + kArmijo * decrease) {
                next = std::move(cand);
                break;
            }
        }
        if (!next || !(next->value < cur->value)) break;

        const Eigen::VectorXd s = trial - p;
        const Eigen::VectorXd g = next->gradient - cur->gradient;
        const double improvement = cur->value - next->value;
        p = trial;
        cur = std::move(next);
        trace.nlml.push_back(cur->value);
        trace.params.push_back(p);
        if (improvement < budget.tolerance) break;

        const double sy = s.dot(g);
        if (sy > 1e-12) {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd i = Eigen::MatrixXd::Identity(np, np);
            h = (i - rho * s * g.transpose()) * h * (i - rho * g * s.transpose()) + rho * s * s.transpose();
        }
    }
    return trace;
}

}  // namespace detail

/// Multi-start NLML minimization for one kernel kind. Deterministic given budget.rng_seed.
inline OptimizationResult optimize_hyperparams(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, KernelKind kind,
                                               const OptimizationBudget& budget) {
    detail::require_shape(x.rows() == y.size(), "optimize_hyperparams: input and target counts differ");
    if (x.rows() < 5) throw DomainError("optimize_hyperparams: need at least 5 samples");
    if (budget.n_restarts < 1 || budget.max_iterations < 0) throw ConfigError("optimize_hyperparams: bad budget");

    const double scale = detail::target_scale(y);
    const double med = detail::median_pair_distance(x);
    const detail::Box box = detail::search_box(kind, scale, med);
    const KernelSpec proto = make_kernel(kind, scale, med, 0.1 * scale, 1.0, budget.form);

    Rng rng(derive_seed(budget.rng_seed, to_string(kind)));
    OptimizationResult result;
    result.spec = proto;
    Eigen::VectorXd best_params;
    for (int r = 0; r < budget.n_restarts; ++r) {
        Eigen::VectorXd start = to_log_params(proto);
        start(1) = uniform(rng, std::log(0.01 * med), std::log(10.0 * med));
        auto trace = detail::descend(x, y, proto, start, box, budget);
        if (!trace.failed && trace.nlml.back() < result.nlml) {
            result.nlml = trace.nlml.back();
            best_params = trace.params.back();
        }
        result.restarts.push_back(std::move(trace));
    }
    if (best_params.size() == 0)
        throw TrainingError(std::string("optimize_hyperparams: every restart failed for ") +
                            std::string(to_string(kind)));
    result.spec = from_log_params(proto, best_params);
    return result;
}

/// Fold labels 0..k-1: seeded shuffle, then contiguous split into near-equal parts.
inline std::vector<int> make_folds(std::size_t n, int k_folds, std::uint64_t seed) {
    if (k_folds < 2) throw DomainError("make_folds: need at least 2 folds");
    if (n < static_cast<std::size_t>(k_folds)) throw DomainError("make_folds: fewer samples than folds");
    Rng rng(derive_seed(seed, "folds"));
    const auto perm = permutation(n, rng);
    std::vector<int> label(n);
    for (int f = 0; f < k_folds; ++f) {
        const std::size_t lo = f * n / k_folds;
        const std::size_t hi = (f + 1) * n / k_folds;
        for (std::size_t i = lo; i < hi; ++i) label[perm[i]] = f;
    }
    return label;
}

/// Mean squared held-out prediction error for fixed hyperparameters and explicit folds.
inline double cv_loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelSpec& spec,
                      const std::vector<int>& folds) {
    detail::require_shape(x.rows() == y.size() && folds.size() == static_cast<std::size_t>(y.size()),
                          "cv_loss: inconsistent sample counts");
    const int k_folds = folds.empty() ? 0 : *std::max_element(folds.begin(), folds.end()) + 1;
    double sse = 0.0;
    for (int f = 0; f < k_folds; ++f) {
        std::vector<Eigen::Index> train, test;
        for (std::size_t i = 0; i < folds.size(); ++i) (folds[i] == f ? test : train).push_back(static_cast<Eigen::Index>(i));
        if (test.empty()) continue;
        if (train.empty()) throw DomainError("cv_loss: a fold leaves no training data");
        const GprModel m = fit(x(train, Eigen::all), y(train), spec);
        const Eigen::VectorXd pred = predict_mean(m, x(test, Eigen::all));
        sse += (pred - y(test)).squaredNorm();
    }
    return sse / static_cast<double>(y.size());
}

inline double cv_loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const KernelSpec& spec, int k_folds = 5,
                      std::uint64_t seed = 0) {
    if (y.size() < k_folds) throw DomainError("cv_loss: fewer samples than folds");
    return cv_loss(x, y, spec, make_folds(static_cast<std::size_t>(y.size()), k_folds, seed));
}

/// Optimizes every kernel kind, scores each by OF and picks the minimum (ties: table order).
inline KernelSelectionReport select_kernel(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                           const OptimizationBudget& budget) {
    const auto min_n = static_cast<Eigen::Index>(5 * budget.k_folds);
    if (x.rows() < min_n) throw DomainError("select_kernel: need at least " + std::to_string(min_n) + " samples");
    const auto folds = make_folds(static_cast<std::size_t>(y.size()), budget.k_folds, budget.rng_seed);

    KernelSelectionReport report;
    report.kernels.resize(kAllKernels.size());
    std::vector<std::vector<SurfaceSample>> surfaces(kAllKernels.size());
    parallel_for(kAllKernels.size(), [&](std::size_t i) {
        KernelResult& res = report.kernels[i];
        res.kind = kAllKernels[i];
        try {
            const auto opt = optimize_hyperparams(x, y, res.kind, budget);
            res.spec = opt.spec;
            res.nlml = opt.nlml;
            res.cv_loss = cv_loss(x, y, opt.spec, folds);
            res.of = objective(res.cv_loss);
            for (const auto& tr : opt.restarts) {
                for (std::size_t s = 0; s < tr.params.size(); ++s) {
                    SurfaceSample sample{from_log_params(opt.spec, tr.params[s]), tr.nlml[s]};
                    if (budget.record_surface) {
                        try {
                            sample.cv_loss = cv_loss(x, y, sample.spec, folds);
                            sample.of = objective(sample.cv_loss);
                        } catch (const ConditioningError&) {
                            sample.cv_loss = sample.of = std::numeric_limits<double>::infinity();
                        }
                    }
                    surfaces[i].push_back(sample);
                }
            }
        } catch (const ConditioningError& e) {
            res.error = e.what();
        } catch (const TrainingError& e) {
            res.error = e.what();
        }
        if (!res.error.empty()) {
            res.spec.reset();
            res.cv_loss = res.of = std::numeric_limits<double>::infinity();
            log(LogLevel::Warning, std::string(to_string(res.kind)) + " failed: " + res.error);
        }
    });
    for (auto& s : surfaces) report.surface.insert(report.surface.end(), s.begin(), s.end());

    const KernelResult* best = nullptr;
    for (const auto& k : report.kernels)
        if (k.spec && (!best || k.of < best->of)) best = &k;
    if (!best) throw TrainingError("select_kernel: every kernel kind failed");
    report.winner = best->kind;
    return report;
}

struct PositionModels {
    GprModel x;
    GprModel y;
    KernelSelectionReport report_x;
    KernelSelectionReport report_y;
    bool degraded = false;  // too few samples for CV kernel selection
};

namespace detail {

/// Below the kernel-selection minimum: fixed squared-exponential kernel, NLML-optimized.
inline KernelSelectionReport degraded_selection(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                                const OptimizationBudget& budget) {
    KernelSelectionReport report;
    for (KernelKind kind : kAllKernels) {
        KernelResult res;
        res.kind = kind;
        if (kind == KernelKind::SquaredExponential) {
            const auto opt = optimize_hyperparams(x, y, kind, budget);
            res.spec = opt.spec;
            res.nlml = opt.nlml;
            res.cv_loss = res.of = std::numeric_limits<double>::quiet_NaN();
        } else {
            res.error = "skipped: too few samples for kernel selection";
        }
        report.kernels.push_back(res);
    }
    report.winner = KernelKind::SquaredExponential;
    return report;
}

inline GprModel fit_coordinate(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const OptimizationBudget& budget,
                               bool degraded, KernelSelectionReport& report) {
    report = degraded ? degraded_selection(x, y, budget) : select_kernel(x, y, budget);
    return fit(x, y, *report.winning().spec);
}

}  // namespace detail

/// Two independent single-output regressors, one per coordinate.
inline PositionModels train_position_models(const Eigen::MatrixXd& x, const Eigen::MatrixXd& positions,
                                            const OptimizationBudget& budget) {
    detail::require_shape(positions.cols() == 2 && positions.rows() == x.rows(),
                          "train_position_models: positions must be n x 2 and match the inputs");
    if (x.rows() < 5) throw DomainError("train_position_models: need at least 5 samples");
    PositionModels out;
    out.degraded = x.rows() < static_cast<Eigen::Index>(5 * budget.k_folds);
    if (out.degraded)
        log(LogLevel::Warning, "only " + std::to_string(x.rows()) +
                                   " training samples: skipping kernel selection, using SquaredExponential");
    OptimizationBudget bx = budget, by = budget;
    bx.rng_seed = derive_seed(budget.rng_seed, "gpr-x");
    by.rng_seed = derive_seed(budget.rng_seed, "gpr-y");
    out.x = detail::fit_coordinate(x, positions.col(0), bx, out.degraded, out.report_x);
    out.y = detail::fit_coordinate(x, positions.col(1), by, out.degraded, out.report_y);
    return out;
}

}  // namespace csiloc
