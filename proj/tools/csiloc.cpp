// SPDX-License-Identifier: Apache-2.0
// csiloc command-line tool: dataset generation, autoencoder and GPR training, evaluation,
// single-shot localization and the GPR timing benchmark.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "csiloc/csiloc.hpp"

namespace fs = std::filesystem;
using namespace csiloc;

namespace {

// exit codes
constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;  // numerical or domain failure
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitIo = 4;

struct Globals {
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    LogLevel log_level = LogLevel::Warning;

    std::uint64_t root() const { return seed.value_or(0); }
    // --seed wins over a config file's rng_seed; without --seed the config value (or its default) stays
    template <typename T>
    void apply_seed(T& target, std::string_view component) const {
        if (seed) target = derive_seed(*seed, component);
    }
};

fs::path dir_of(const fs::path& file) { return file.has_parent_path() ? file.parent_path() : fs::path("."); }

fs::path with_suffix(const fs::path& file, const std::string& suffix) {
    fs::path p = file;
    p.replace_extension();
    return p.string() + suffix;
}

double since_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

/// Config files are parsed with their path in every diagnostic.
template <typename F>
auto from_config_file(const fs::path& path, F&& convert) {
    const Json j = read_json_file(path);
    try {
        return convert(j);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

OptimizationBudget load_budget(const std::string& path) {
    if (path.empty()) return {};
    return from_config_file(path, [](const Json& j) { return budget_from_json(j); });
}

std::string config_hash(const std::string& path) { return path.empty() ? std::string() : file_fingerprint(path); }

AdpDataset load_adps(const fs::path& path) {
    auto loaded = load_dataset(path);
    if (loaded.adps.size() == 0) throw DomainError("'" + path.string() + "' holds no samples");
    return std::move(loaded.adps);
}

const AutoencoderModel* pick_codec(const std::optional<LoadedAutoencoder>& ae) { return ae ? &ae->model : nullptr; }

void check_ae_width(const AutoencoderModel& ae, const AdpDataset& d, const std::string& what) {
    if (ae.config.input_width != d.width())
        throw ConfigError("autoencoder input width " + std::to_string(ae.config.input_width) + " does not match " + what +
                          " ADP width " + std::to_string(d.width()) + " (" + std::to_string(d.n_antennas) + "x" +
                          std::to_string(d.n_subcarriers) + ")");
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
    std::string config;
    std::string out;
    std::string dtype = "csi";
};

void cmd_generate(const Globals& g, const GenerateArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    const ScenarioConfig s = from_config_file(a.config, [&](Json j) {
        if (g.seed) j["rng_seed"] = derive_seed(*g.seed, "scenario");
        return scenario_from_json(j);
    });
    const auto samples = generate_dataset(s);
    if (a.dtype == "adp")
        save_adp_dataset(a.out, to_adp_dataset(samples), to_json(s));
    else
        save_dataset(a.out, s, samples);

    RunManifest m;
    m.command = "generate";
    m.config_hash = config_hash(a.config);
    m.seeds["scenario"] = s.rng_seed;
    m.add_input(a.config);
    m.add_output(a.out);
    m.wall_ms = since_ms(t0);
    write_manifest(dir_of(a.out), m);
    std::cout << "wrote " << samples.size() << " samples (" << s.n_antennas << "x" << s.n_subcarriers << ") to " << a.out
              << "\n";
}

// ---------------------------------------------------------------------------
// train-ae

struct TrainAeArgs {
    std::vector<std::string> data;
    std::string config;
    std::string out;
    std::optional<int> epochs;
    std::optional<int> batch_size;
    std::optional<double> learning_rate;
};

void cmd_train_ae(const Globals& g, const TrainAeArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<AdpDataset> sets;
    for (const auto& p : a.data) sets.push_back(load_adps(p));
    for (std::size_t i = 1; i < sets.size(); ++i)
        if (sets[i].width() != sets[0].width())
            throw ConfigError("datasets disagree on ADP width: '" + a.data[0] + "' has " + std::to_string(sets[0].width()) +
                              ", '" + a.data[i] + "' has " + std::to_string(sets[i].width()));

    AutoencoderConfig c;
    if (!a.config.empty()) {
        c = from_config_file(a.config, [](const Json& j) { return autoencoder_config_from_json(j); });
    } else {
        if (sets[0].n_antennas != sets[0].n_subcarriers)
            throw ConfigError("no default autoencoder layout for " + std::to_string(sets[0].n_antennas) + "x" +
                              std::to_string(sets[0].n_subcarriers) + " ADPs; pass --config");
        c = table_config(sets[0].n_antennas);
    }
    if (a.epochs) c.epochs = *a.epochs;
    if (a.batch_size) c.batch_size = *a.batch_size;
    if (a.learning_rate) c.learning_rate = *a.learning_rate;
    g.apply_seed(c.rng_seed, "autoencoder");
    validate(c);
    // fail before any training work
    if (c.input_width != sets[0].width())
        throw ConfigError("autoencoder input width " + std::to_string(c.input_width) + " does not match dataset ADP width " +
                          std::to_string(sets[0].width()));

    std::vector<const AdpDataset*> ptrs;
    for (const auto& s : sets) ptrs.push_back(&s);
    const auto pool = pool_adps(ptrs);
    const int report_every = std::max(1, c.epochs / 10);
    const auto model = offline_phase1(pool, c, [&](int epoch, double loss) {
        if ((epoch + 1) % report_every == 0)
            log(LogLevel::Info, "epoch " + std::to_string(epoch + 1) + "/" + std::to_string(c.epochs) + " loss " +
                                    std::to_string(loss));
    });

    RunManifest m;
    m.command = "train-ae";
    m.config_hash = config_hash(a.config);
    m.seeds["autoencoder"] = c.rng_seed;
    Json trained_on = Json::array();
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        m.add_input(a.data[i]);
        trained_on.push_back(Json{{"path", a.data[i]}, {"hash", file_fingerprint(a.data[i])}, {"samples", sets[i].size()}});
    }
    if (!a.config.empty()) m.add_input(a.config);
    const double similarity = mean_similarity(model, pool);
    save_autoencoder(a.out, model, Json{{"trained_on", trained_on}, {"mean_similarity", similarity}});
    const fs::path history = with_suffix(a.out, ".history.csv");
    write_text(history, history_csv(model.history));
    m.add_output(a.out);
    m.add_output(history);
    m.wall_ms = since_ms(t0);
    write_manifest(dir_of(a.out), m);
    std::cout << "trained on " << pool.size() << " ADPs, mean similarity " << similarity << ", model " << a.out << "\n";
}

// ---------------------------------------------------------------------------
// train-gpr

struct TrainGprArgs {
    std::string data;
    std::string ae;
    bool no_ae = false;
    double fraction = 0.10;
    std::string budget;
    std::string out;
};

void cmd_train_gpr(const Globals& g, const TrainGprArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    const AdpDataset data = load_adps(a.data);
    std::optional<LoadedAutoencoder> ae;
    if (!a.no_ae) {
        ae = load_autoencoder(a.ae);
        check_ae_width(ae->model, data, "dataset");
    }
    OptimizationBudget budget = load_budget(a.budget);
    g.apply_seed(budget.rng_seed, "budget");
    const std::uint64_t split_seed = derive_seed(g.root(), "split");

    const auto r = offline_phase2(pick_codec(ae), data, a.fraction, split_seed, budget);
    const Json extra{{"fraction", a.fraction},
                     {"n_train", r.split.train.size()},
                     {"split_seed", split_seed},
                     {"features", a.no_ae ? "adp" : "code"},
                     {"autoencoder", a.no_ae ? Json(nullptr) : Json(file_fingerprint(a.ae))},
                     {"dataset", file_fingerprint(a.data)},
                     {"degraded", r.models.degraded}};
    save_position_models(a.out, r.models.x, r.models.y, extra);
    const fs::path report = with_suffix(a.out, ".selection.json");
    write_json_file(report, Json{{"x", to_json(r.models.report_x)},
                                 {"y", to_json(r.models.report_y)},
                                 {"degraded", r.models.degraded},
                                 {"train_indices", r.split.train}});

    RunManifest m;
    m.command = "train-gpr";
    m.config_hash = config_hash(a.budget);
    m.seeds["budget"] = budget.rng_seed;
    m.seeds["split"] = split_seed;
    m.add_input(a.data);
    if (ae) m.add_input(a.ae);
    if (!a.budget.empty()) m.add_input(a.budget);
    m.add_output(a.out);
    m.add_output(report);
    if (budget.record_surface) {
        auto surface = r.models.report_x.surface;
        surface.insert(surface.end(), r.models.report_y.surface.begin(), r.models.report_y.surface.end());
        const fs::path csv = with_suffix(a.out, ".surface.csv");
        write_text(csv, surface_csv(surface));
        m.add_output(csv);
    }
    m.wall_ms = since_ms(t0);
    write_manifest(dir_of(a.out), m);
    std::cout << "trained on " << r.split.train.size() << " samples, kernels " << to_string(r.models.report_x.winner) << " / "
              << to_string(r.models.report_y.winner) << (r.models.degraded ? " (degraded)" : "") << ", model " << a.out
              << "\n";
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
    std::string data;
    std::string ae;
    bool no_ae = false;
    std::vector<double> fractions{0.10};
    int trials = 50;
    double threshold = kDefaultThreshold;
    std::string budget;
    std::string out_dir;
};

void cmd_evaluate(const Globals& g, const EvaluateArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    const AdpDataset data = load_adps(a.data);
    std::optional<LoadedAutoencoder> ae;
    if (!a.no_ae) {
        ae = load_autoencoder(a.ae);
        check_ae_width(ae->model, data, "dataset");
    }
    OptimizationBudget budget = load_budget(a.budget);
    g.apply_seed(budget.rng_seed, "budget");

    std::vector<EvalReport> reports;
    Json seeds = Json::array();
    for (std::size_t i = 0; i < a.fractions.size(); ++i) {
        const SplitSpec split{a.fractions[i], a.trials, derive_seed(g.root(), "evaluate", i)};
        seeds.push_back(split.rng_seed);
        reports.push_back(evaluate(data, pick_codec(ae), split, budget, {.bypass_ae = a.no_ae, .threshold = a.threshold}));
        const auto& r = reports.back();
        std::cout << "fraction " << r.train_fraction << ": mean RMSE " << r.mean_rmse << " m (centroid baseline "
                  << r.mean_baseline_rmse << " m), reject rate " << r.mean_reject_rate << "\n";
    }

    Json report{{"dataset", a.data},
                {"autoencoder", a.no_ae ? Json(nullptr) : Json(a.ae)},
                {"trials", a.trials},
                {"budget", to_json(budget)},
                {"reports", Json::array()}};
    for (const auto& r : reports) report["reports"].push_back(to_json(r));
    const fs::path dir = a.out_dir;
    write_json_file(dir / "report.json", report);
    write_text(dir / "trials.csv", eval_csv(reports));

    RunManifest m;
    m.command = "evaluate";
    m.config_hash = config_hash(a.budget);
    m.seeds["budget"] = budget.rng_seed;
    m.seeds["splits"] = seeds;
    m.add_input(a.data);
    if (ae) m.add_input(a.ae);
    if (!a.budget.empty()) m.add_input(a.budget);
    m.add_output(dir / "report.json");
    m.add_output(dir / "trials.csv");
    m.wall_ms = since_ms(t0);
    write_manifest(dir, m);
}

// ---------------------------------------------------------------------------
// localize

struct LocalizeArgs {
    std::string ae;
    std::string gpr;
    std::string data;
    std::optional<std::size_t> index;
    std::string csi;
    double threshold = kDefaultThreshold;
};

CsiMatrix csi_from_json(const Json& j, const std::string& where) {
    return detail::config_guard(where, [&] {
        detail::reject_unknown(j, {"real", "imag"}, where);
        const auto re = j.at("real").get<std::vector<std::vector<double>>>();
        const auto im = j.at("imag").get<std::vector<std::vector<double>>>();
        if (re.empty() || re.size() != im.size()) throw ConfigError(where + ": real and imag need the same row count");
        CsiMatrix h(static_cast<Eigen::Index>(re.size()), static_cast<Eigen::Index>(re[0].size()));
        for (std::size_t i = 0; i < re.size(); ++i) {
            if (re[i].size() != re[0].size() || im[i].size() != re[0].size())
                throw ConfigError(where + ": ragged CSI rows");
            for (std::size_t k = 0; k < re[i].size(); ++k)
                h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = Complex(re[i][k], im[i][k]);
        }
        return h;
    });
}

void cmd_localize(const Globals&, const LocalizeArgs& a) {
    const auto ae = load_autoencoder(a.ae);
    const auto gpr = load_position_models(a.gpr);
    CsiMatrix csi;
    std::optional<Point2> truth;
    if (!a.csi.empty()) {
        csi = csi_from_json(read_json_file(a.csi), a.csi);
    } else {
        const auto loaded = load_dataset(a.data);
        if (loaded.dtype != "csi-c128") throw ConfigError("'" + a.data + "' stores ADPs, localize needs raw CSI");
        if (*a.index >= loaded.samples.size())
            throw ConfigError("--index " + std::to_string(*a.index) + " out of range for " +
                              std::to_string(loaded.samples.size()) + " samples");
        csi = loaded.samples[*a.index].csi;
        truth = loaded.samples[*a.index].position;
    }
    if (gpr.x.dim() != ae.model.config.code_width())
        throw ConfigError("GPR models take " + std::to_string(gpr.x.dim()) + " inputs but the autoencoder code has " +
                          std::to_string(ae.model.config.code_width()));
    const auto out = online_localize(ae.model, gpr.x, gpr.y, csi, a.threshold);
    Json j{{"similarity", out.similarity}, {"threshold", a.threshold}, {"accepted", out.accepted()}};
    j["estimate"] = out.estimate ? detail::point_json(*out.estimate) : Json(nullptr);
    if (truth) {
        j["truth"] = detail::point_json(*truth);
        if (out.estimate) j["error_m"] = (*out.estimate - *truth).norm();
    }
    std::cout << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
    std::vector<int> sizes{72, 720};
    std::vector<int> dims{16, 256};
    int repetitions = 3;
    std::string budget;
    std::string out;
};

void cmd_bench(const Globals& g, const BenchArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    OptimizationBudget budget = load_budget(a.budget);
    g.apply_seed(budget.rng_seed, "budget");
    const auto cells = timing_study(a.dims, a.sizes, budget, a.repetitions);
    write_text(a.out, timing_csv(cells));
    for (const auto& c : cells) std::cout << "n=" << c.n << " d=" << c.d << " median " << c.median_ms << " ms\n";

    RunManifest m;
    m.command = "bench";
    m.config_hash = config_hash(a.budget);
    m.seeds["budget"] = budget.rng_seed;
    if (!a.budget.empty()) m.add_input(a.budget);
    m.add_output(a.out);
    m.wall_ms = since_ms(t0);
    write_manifest(dir_of(a.out), m);
}

// fractions must lie strictly inside (0, 1)
const CLI::Validator kOpenUnit(
    [](std::string& s) -> std::string {
        double v = 0.0;
        try {
            std::size_t used = 0;
            v = std::stod(s, &used);
            if (used != s.size()) return "'" + s + "' is not a number";
        } catch (const std::exception&) {
            return "'" + s + "' is not a number";
        }
        if (!(v > 0.0 && v < 1.0)) return "fraction " + s + " is outside (0, 1)";
        return {};
    },
    "FRACTION in (0,1)");

void add_ae_choice(CLI::App* cmd, std::string& ae, bool& no_ae) {
    auto* with = cmd->add_option("--ae", ae, "Trained autoencoder model")->check(CLI::ExistingFile);
    auto* without = cmd->add_flag("--no-ae", no_ae, "Regress on raw ADP vectors (no autoencoder)");
    with->excludes(without);
    without->excludes(with);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"csiloc: MIMO CSI fingerprint localization with autoencoder-compressed GPR"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    Globals g;
    app.add_option("--seed", g.seed, "Root seed; component seeds are derived from it by name")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker thread cap (default: CSILOC_THREADS, then all cores)");
    const std::map<std::string, LogLevel> levels{{"debug", LogLevel::Debug},
                                                 {"info", LogLevel::Info},
                                                 {"warning", LogLevel::Warning},
                                                 {"error", LogLevel::Error},
                                                 {"off", LogLevel::Off}};
    app.add_option("--log-level", g.log_level, "debug, info, warning, error or off")
        ->transform(CLI::CheckedTransformer(levels, CLI::ignore_case).description(""))
        ->type_name("LEVEL");

    GenerateArgs gen;
    auto* c_gen = app.add_subcommand("generate", "Simulate a geo-tagged CSI dataset from a scenario config");
    c_gen->add_option("--config", gen.config, "Scenario JSON")->required()->check(CLI::ExistingFile);
    c_gen->add_option("--out", gen.out, "Dataset file to write")->required();
    c_gen->add_option("--format", gen.dtype, "csi (raw CSI) or adp (normalized ADP cache)")
        ->check(CLI::IsMember({"csi", "adp"}))
        ->capture_default_str();

    TrainAeArgs tae;
    auto* c_tae = app.add_subcommand("train-ae", "Train the autoencoder on one or more datasets");
    c_tae->add_option("--data", tae.data, "Dataset files; several are pooled")->required()->check(CLI::ExistingFile);
    c_tae->add_option("--config", tae.config, "Autoencoder JSON (default: reference layout for 8x8 or 16x16)")
        ->check(CLI::ExistingFile);
    c_tae->add_option("--out", tae.out, "Model file to write")->required();
    c_tae->add_option("--epochs", tae.epochs, "Override epochs")->check(CLI::PositiveNumber);
    c_tae->add_option("--batch-size", tae.batch_size, "Override batch size")->check(CLI::PositiveNumber);
    c_tae->add_option("--learning-rate", tae.learning_rate, "Override learning rate")->check(CLI::NonNegativeNumber);

    TrainGprArgs tg;
    auto* c_tg = app.add_subcommand("train-gpr", "Fit the coordinate GPRs on a seeded subsample");
    c_tg->add_option("--data", tg.data, "Dataset file")->required()->check(CLI::ExistingFile);
    add_ae_choice(c_tg, tg.ae, tg.no_ae);
    c_tg->add_option("--fraction", tg.fraction, "Training fraction")->check(kOpenUnit)->capture_default_str();
    c_tg->add_option("--budget", tg.budget, "Optimization budget JSON")->check(CLI::ExistingFile);
    c_tg->add_option("--out", tg.out, "GPR model file to write")->required();

    EvaluateArgs ev;
    auto* c_ev = app.add_subcommand("evaluate", "Repeated-subsample RMSE evaluation");
    c_ev->add_option("--data", ev.data, "Dataset file")->required()->check(CLI::ExistingFile);
    add_ae_choice(c_ev, ev.ae, ev.no_ae);
    c_ev->add_option("--fractions", ev.fractions, "Comma-separated training fractions")
        ->delimiter(',')
        ->check(kOpenUnit)
        ->capture_default_str();
    c_ev->add_option("--trials", ev.trials, "Trials per fraction")->check(CLI::PositiveNumber)->capture_default_str();
    c_ev->add_option("--threshold", ev.threshold, "Similarity gate (reported as rejection rate)")->capture_default_str();
    c_ev->add_option("--budget", ev.budget, "Optimization budget JSON")->check(CLI::ExistingFile);
    c_ev->add_option("--out-dir", ev.out_dir, "Directory for report.json, trials.csv and the manifest")->required();

    LocalizeArgs loc;
    auto* c_loc = app.add_subcommand("localize", "Gate and localize one CSI measurement, printing JSON");
    c_loc->add_option("--ae", loc.ae, "Autoencoder model")->required()->check(CLI::ExistingFile);
    c_loc->add_option("--gpr", loc.gpr, "GPR model file from train-gpr")->required()->check(CLI::ExistingFile);
    auto* o_csi = c_loc->add_option("--csi", loc.csi, "CSI JSON {\"real\": [[..]], \"imag\": [[..]]}")
                      ->check(CLI::ExistingFile);
    auto* o_data = c_loc->add_option("--data", loc.data, "CSI dataset file")->check(CLI::ExistingFile);
    auto* o_index = c_loc->add_option("--index", loc.index, "Sample index within --data");
    o_data->needs(o_index);
    o_index->needs(o_data);
    o_csi->excludes(o_data);
    c_loc->add_option("--threshold", loc.threshold, "Similarity gate")->capture_default_str();

    BenchArgs bench;
    auto* c_bench = app.add_subcommand("bench", "GPR optimize+fit timing over (n, d) cells");
    c_bench->add_option("--sizes", bench.sizes, "Comma-separated sample counts")->delimiter(',')->capture_default_str();
    c_bench->add_option("--dims", bench.dims, "Comma-separated input dimensions")->delimiter(',')->capture_default_str();
    c_bench->add_option("--reps", bench.repetitions, "Repetitions per cell")->check(CLI::PositiveNumber)->capture_default_str();
    c_bench->add_option("--budget", bench.budget, "Optimization budget JSON")->check(CLI::ExistingFile);
    c_bench->add_option("--out", bench.out, "Timing CSV to write")->required();

    try {
        app.parse(argc, argv);
        for (auto* cmd : {c_tg, c_ev})
            if (cmd->parsed() && cmd->count("--ae") == 0 && cmd->count("--no-ae") == 0)
                throw CLI::RequiredError(cmd->get_name() + ": --ae or --no-ae");
        if (c_loc->parsed() && loc.csi.empty() && loc.data.empty())
            throw CLI::RequiredError("localize: --csi or --data with --index");
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    set_log_level(g.log_level);
    if (g.threads > 0) set_max_threads(g.threads);

    try {
        if (c_gen->parsed()) cmd_generate(g, gen);
        if (c_tae->parsed()) cmd_train_ae(g, tae);
        if (c_tg->parsed()) cmd_train_gpr(g, tg);
        if (c_ev->parsed()) cmd_evaluate(g, ev);
        if (c_loc->parsed()) cmd_localize(g, loc);
        if (c_bench->parsed()) cmd_bench(g, bench);
    } catch (const ConfigError& e) {
        std::cerr << "csiloc: config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "csiloc: io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "csiloc: io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "csiloc: error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitOk;
}
