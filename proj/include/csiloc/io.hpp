// SPDX-License-Identifier: Apache-2.0
#pragma once

// Artifact persistence.
//
// Binary container layout (all integers and floats little-endian):
//   8 bytes   magic "CSILOC01"
//   u64       header length in bytes
//   ...       JSON header (UTF-8)
//   f64 * k   payload, k given by the header
//
// Configs are plain JSON text. Parse errors carry file:line:column.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "adp.hpp"
#include "autoencoder.hpp"
#include "channel_sim.hpp"
#include "errors.hpp"
#include "gpr.hpp"
#include "gpr_train.hpp"
#include "pipeline.hpp"

namespace csiloc {

using Json = nlohmann::json;

inline constexpr std::string_view kVersion = "0.1.0";
inline constexpr char kMagic[8] = {'C', 'S', 'I', 'L', 'O', 'C', '0', '1'};

// ---------------------------------------------------------------------------
// container

struct Container {
    Json header;
    std::vector<double> payload;
};

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(const unsigned char* b) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

inline void write_container(const std::filesystem::path& path, const Json& header, const std::vector<double>& payload) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    const std::string text = header.dump();
    os.write(kMagic, 8);
    detail::put_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    std::vector<unsigned char> buf(payload.size() * 8);
    for (std::size_t i = 0; i < payload.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(payload[i]);
        for (int b = 0; b < 8; ++b) buf[8 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!os) throw IoError("short write to '" + path.string() + "'");
}

inline Container read_container(const std::filesystem::path& path) {
    const std::string bytes = detail::read_file(path);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 16 || std::memcmp(p, kMagic, 8) != 0)
        throw IoError("'" + path.string() + "' is not a csiloc container");
    const std::uint64_t hlen = detail::get_u64(p + 8);
    if (hlen > bytes.size() - 16) throw IoError("'" + path.string() + "': truncated header");
    Container c;
    try {
        c.header = Json::parse(bytes.substr(16, hlen));
    } catch (const Json::parse_error& e) {
        throw IoError("'" + path.string() + "': bad header: " + e.what());
    }
    const std::size_t rest = bytes.size() - 16 - hlen;
    if (rest % 8 != 0) throw IoError("'" + path.string() + "': payload is not a whole number of f64 values");
    c.payload.resize(rest / 8);
    const unsigned char* q = p + 16 + hlen;
    for (std::size_t i = 0; i < c.payload.size(); ++i) c.payload[i] = std::bit_cast<double>(detail::get_u64(q + 8 * i));
    return c;
}

// ---------------------------------------------------------------------------
// JSON text

namespace detail {

inline std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

}  // namespace detail

/// Parses JSON text; `origin` names the source in error messages.
inline Json parse_json(const std::string& text, const std::string& origin = "<string>") {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        const auto [line, col] = detail::line_column(text, e.byte);
        std::string what = e.what();
        // drop nlohmann's "[json.exception.parse_error.101] parse error at line 3, column 5: " prefix
        if (const auto pos = what.find(": "); pos != std::string::npos) what = what.substr(pos + 2);
        throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + what);
    }
}

inline Json read_json_file(const std::filesystem::path& path) {
    return parse_json(detail::read_file(path), path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os << text;
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

namespace detail {

/// Runs `body`, turning nlohmann type and range errors into ConfigError tagged with `where`.
template <typename F>
auto config_guard(const std::string& where, F&& body) {
    try {
        return body();
    } catch (const Json::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

inline void reject_unknown(const Json& j, std::initializer_list<std::string_view> known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (auto k : known) ok = ok || key == k;
        if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

inline Json point_json(const Point2& p) { return Json::array({p.x(), p.y()}); }

inline Point2 point_from(const Json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2) throw ConfigError(where + ": expected [x, y]");
    return Point2(j[0].get<double>(), j[1].get<double>());
}

template <typename T>
void get_if(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// scenario

inline Json to_json(const ScenarioConfig& s) {
    Json j{{"carrier_frequency", s.carrier_frequency},
           {"bandwidth", s.bandwidth},
           {"n_antennas", s.n_antennas},
           {"n_subcarriers", s.n_subcarriers},
           {"bs_position", detail::point_json(s.bs_position)},
           {"grid_origin", detail::point_json(s.grid_origin)},
           {"grid_rows", s.grid_rows},
           {"grid_cols", s.grid_cols},
           {"grid_spacing", s.grid_spacing},
           {"rng_seed", s.rng_seed}};
    if (s.antenna_spacing) j["antenna_spacing"] = *s.antenna_spacing;
    j["scatterer_positions"] = Json::array();
    for (const auto& p : s.scatterer_positions) j["scatterer_positions"].push_back(detail::point_json(p));
    return j;
}

/// Builds and validates a scenario. A "random_scatterers": {count, min, max} block is resolved
/// into explicit positions with the scenario seed and appended after any listed positions.
inline ScenarioConfig scenario_from_json(const Json& j, const std::string& where = "scenario") {
    detail::reject_unknown(j,
                           {"carrier_frequency", "bandwidth", "n_antennas", "n_subcarriers", "antenna_spacing",
                            "bs_position", "scatterer_positions", "random_scatterers", "grid_origin", "grid_rows",
                            "grid_cols", "grid_spacing", "rng_seed"},
                           where);
    ScenarioConfig s = detail::config_guard(where, [&] {
        ScenarioConfig s;
        detail::get_if(j, "carrier_frequency", s.carrier_frequency);
        detail::get_if(j, "bandwidth", s.bandwidth);
        detail::get_if(j, "n_antennas", s.n_antennas);
        detail::get_if(j, "n_subcarriers", s.n_subcarriers);
        if (j.contains("antenna_spacing")) s.antenna_spacing = j.at("antenna_spacing").get<double>();
        if (j.contains("bs_position")) s.bs_position = detail::point_from(j.at("bs_position"), where + ".bs_position");
        if (j.contains("grid_origin")) s.grid_origin = detail::point_from(j.at("grid_origin"), where + ".grid_origin");
        detail::get_if(j, "grid_rows", s.grid_rows);
        detail::get_if(j, "grid_cols", s.grid_cols);
        detail::get_if(j, "grid_spacing", s.grid_spacing);
        detail::get_if(j, "rng_seed", s.rng_seed);
        if (j.contains("scatterer_positions")) {
            const Json& list = j.at("scatterer_positions");
            if (!list.is_array()) throw ConfigError(where + ".scatterer_positions: expected an array");
            for (std::size_t i = 0; i < list.size(); ++i)
                s.scatterer_positions.push_back(
                    detail::point_from(list[i], where + ".scatterer_positions[" + std::to_string(i) + "]"));
        }
        return s;
    });
    validate(s);
    if (j.contains("random_scatterers")) {
        const Json& r = j.at("random_scatterers");
        detail::reject_unknown(r, {"count", "min", "max"}, where + ".random_scatterers");
        const auto [count, lo, hi] = detail::config_guard(where + ".random_scatterers", [&] {
            return std::tuple{r.at("count").get<int>(), detail::point_from(r.at("min"), where + ".random_scatterers.min"),
                              detail::point_from(r.at("max"), where + ".random_scatterers.max")};
        });
        if (count < 0 || (lo.array() > hi.array()).any())
            throw ConfigError(where + ".random_scatterers: need count >= 0 and min <= max");
        ScenarioConfig base = s;
        place_random_scatterers(base, count, lo, hi);
        s.scatterer_positions.insert(s.scatterer_positions.end(), base.scatterer_positions.begin(),
                                     base.scatterer_positions.end());
        validate(s);
    }
    return s;
}

// ---------------------------------------------------------------------------
// kernels, budgets, reports

inline Json to_json(const KernelSpec& k) {
    Json j{{"kind", std::string(to_string(k.kind))},
           {"signal_std", k.signal_std},
           {"length_scale", k.length_scale},
           {"noise_std", k.noise_std},
           {"form", k.form == KernelForm::Reference ? "reference" : "standard"}};
    if (k.mixture) j["mixture"] = *k.mixture;
    return j;
}

inline KernelSpec kernel_from_json(const Json& j) {
    detail::reject_unknown(j, {"kind", "signal_std", "length_scale", "noise_std", "mixture", "form"}, "kernel");
    KernelSpec k = detail::config_guard("kernel", [&] {
        KernelSpec k;
        k.kind = kernel_from_string(j.at("kind").get<std::string>());
        k.signal_std = j.at("signal_std").get<double>();
        k.length_scale = j.at("length_scale").get<double>();
        k.noise_std = j.at("noise_std").get<double>();
        if (j.contains("mixture")) k.mixture = j.at("mixture").get<double>();
        const std::string form = j.value("form", std::string("reference"));
        if (form != "reference" && form != "standard") throw ConfigError("kernel: form must be 'reference' or 'standard'");
        k.form = form == "reference" ? KernelForm::Reference : KernelForm::Standard;
        return k;
    });
    try {
        validate(k);
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    return k;
}

inline Json to_json(const OptimizationBudget& b) {
    return Json{{"n_restarts", b.n_restarts},         {"max_iterations", b.max_iterations},
                {"tolerance", b.tolerance},           {"rng_seed", b.rng_seed},
                {"k_folds", b.k_folds},               {"record_surface", b.record_surface},
                {"form", b.form == KernelForm::Reference ? "reference" : "standard"}};
}

inline OptimizationBudget budget_from_json(const Json& j) {
    detail::reject_unknown(j, {"n_restarts", "max_iterations", "tolerance", "rng_seed", "k_folds", "record_surface", "form"},
                           "budget");
    OptimizationBudget b = detail::config_guard("budget", [&] {
        OptimizationBudget b;
        detail::get_if(j, "n_restarts", b.n_restarts);
        detail::get_if(j, "max_iterations", b.max_iterations);
        detail::get_if(j, "tolerance", b.tolerance);
        detail::get_if(j, "rng_seed", b.rng_seed);
        detail::get_if(j, "k_folds", b.k_folds);
        detail::get_if(j, "record_surface", b.record_surface);
        const std::string form = j.value("form", std::string("reference"));
        if (form != "reference" && form != "standard") throw ConfigError("budget: form must be 'reference' or 'standard'");
        b.form = form == "reference" ? KernelForm::Reference : KernelForm::Standard;
        return b;
    });
    if (b.n_restarts < 1 || b.max_iterations < 0 || b.k_folds < 2 || !(b.tolerance >= 0.0))
        throw ConfigError("budget: need n_restarts >= 1, max_iterations >= 0, k_folds >= 2, tolerance >= 0");
    return b;
}

inline Json to_json(const AutoencoderConfig& c) {
    return Json{{"input_width", c.input_width},     {"layer_widths", c.layer_widths}, {"leaky_slope", c.leaky_slope},
                {"learning_rate", c.learning_rate}, {"epochs", c.epochs},             {"batch_size", c.batch_size},
                {"rng_seed", c.rng_seed},           {"beta1", c.beta1},               {"beta2", c.beta2},
                {"epsilon", c.epsilon}};
}

inline AutoencoderConfig autoencoder_config_from_json(const Json& j) {
    detail::reject_unknown(j,
                           {"input_width", "layer_widths", "leaky_slope", "learning_rate", "epochs", "batch_size",
                            "rng_seed", "beta1", "beta2", "epsilon"},
                           "autoencoder");
    AutoencoderConfig c = detail::config_guard("autoencoder", [&] {
        AutoencoderConfig c;
        detail::get_if(j, "input_width", c.input_width);
        detail::get_if(j, "layer_widths", c.layer_widths);
        detail::get_if(j, "leaky_slope", c.leaky_slope);
        detail::get_if(j, "learning_rate", c.learning_rate);
        detail::get_if(j, "epochs", c.epochs);
        detail::get_if(j, "batch_size", c.batch_size);
        detail::get_if(j, "rng_seed", c.rng_seed);
        detail::get_if(j, "beta1", c.beta1);
        detail::get_if(j, "beta2", c.beta2);
        detail::get_if(j, "epsilon", c.epsilon);
        return c;
    });
    validate(c);
    return c;
}

namespace detail {
/// NaN and infinity are not JSON numbers; they become null.
inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }
}  // namespace detail

inline Json to_json(const KernelSelectionReport& r) {
    Json j{{"winner", std::string(to_string(r.winner))}, {"kernels", Json::array()}};
    for (const auto& k : r.kernels) {
        Json e{{"kind", std::string(to_string(k.kind))},
               {"nlml", detail::number(k.nlml)},
               {"cv_loss", detail::number(k.cv_loss)},
               {"of", detail::number(k.of)}};
        if (k.spec) e["spec"] = to_json(*k.spec);
        if (!k.error.empty()) e["error"] = k.error;
        j["kernels"].push_back(std::move(e));
    }
    j["surface_samples"] = r.surface.size();
    return j;
}

inline Json to_json(const EvalReport& r) {
    Json j{{"train_fraction", r.train_fraction},   {"bypass_ae", r.bypass_ae},
           {"threshold", r.threshold},             {"mean_rmse_m", r.mean_rmse},
           {"mean_baseline_rmse_m", r.mean_baseline_rmse}, {"mean_reject_rate", r.mean_reject_rate},
           {"trials", Json::array()}};
    for (const auto& t : r.trials)
        j["trials"].push_back(Json{{"trial", t.trial},
                                   {"rmse_m", t.rmse},
                                   {"baseline_rmse_m", t.baseline_rmse},
                                   {"kernel_x", std::string(to_string(t.kernel_x))},
                                   {"kernel_y", std::string(to_string(t.kernel_y))},
                                   {"reject_rate", t.reject_rate},
                                   {"fit_ms", t.fit_ms},
                                   {"predict_ms", t.predict_ms},
                                   {"n_train", t.n_train},
                                   {"n_test", t.n_test},
                                   {"degraded", t.degraded}});
    return j;
}

// ---------------------------------------------------------------------------
// datasets

/// Geo-tagged CSI records: x, y, then H column-major as (re, im) pairs.
inline void save_dataset(const std::filesystem::path& path, const ScenarioConfig& s,
                         const std::vector<GeoTaggedSample>& samples) {
    const std::size_t cells = static_cast<std::size_t>(s.n_antennas) * static_cast<std::size_t>(s.n_subcarriers);
    std::vector<double> payload;
    payload.reserve(samples.size() * (2 + 2 * cells));
    for (const auto& r : samples) {
        detail::require_shape(r.csi.rows() == s.n_antennas && r.csi.cols() == s.n_subcarriers,
                              "save_dataset: CSI shape does not match the scenario");
        payload.push_back(r.position.x());
        payload.push_back(r.position.y());
        for (Eigen::Index k = 0; k < r.csi.size(); ++k) {
            payload.push_back(r.csi.data()[k].real());
            payload.push_back(r.csi.data()[k].imag());
        }
    }
    const Json header{{"format", "csiloc-dataset"}, {"dtype", "csi-c128"},         {"sample_count", samples.size()},
                      {"n_antennas", s.n_antennas},  {"n_subcarriers", s.n_subcarriers}, {"scenario", to_json(s)},
                      {"version", kVersion}};
    write_container(path, header, payload);
}

/// ADP cache: x, y, then the unit-norm column-major ADP vector.
inline void save_adp_dataset(const std::filesystem::path& path, const AdpDataset& d, const Json& scenario = nullptr) {
    std::vector<double> payload;
    payload.reserve(d.size() * static_cast<std::size_t>(2 + d.width()));
    for (std::size_t i = 0; i < d.size(); ++i) {
        payload.push_back(d.positions(static_cast<Eigen::Index>(i), 0));
        payload.push_back(d.positions(static_cast<Eigen::Index>(i), 1));
        payload.insert(payload.end(), d.adps[i].data(), d.adps[i].data() + d.adps[i].size());
    }
    const Json header{{"format", "csiloc-dataset"}, {"dtype", "adp-f64"},           {"sample_count", d.size()},
                      {"n_antennas", d.n_antennas},  {"n_subcarriers", d.n_subcarriers}, {"scenario", scenario},
                      {"version", kVersion}};
    write_container(path, header, payload);
}

struct LoadedDataset {
    Json scenario;  // header echo, may be null for ADP caches
    std::string dtype;
    int n_antennas = 0;
    int n_subcarriers = 0;
    std::vector<GeoTaggedSample> samples;  // csi-c128 only
    AdpDataset adps;                       // always filled
};

inline LoadedDataset load_dataset(const std::filesystem::path& path) {
    const Container c = read_container(path);
    const std::string where = "'" + path.string() + "'";
    LoadedDataset out;
    std::size_t count = 0;
    try {
        if (c.header.at("format").get<std::string>() != "csiloc-dataset") throw IoError(where + " is not a dataset");
        out.dtype = c.header.at("dtype").get<std::string>();
        out.n_antennas = c.header.at("n_antennas").get<int>();
        out.n_subcarriers = c.header.at("n_subcarriers").get<int>();
        count = c.header.at("sample_count").get<std::size_t>();
        out.scenario = c.header.value("scenario", Json(nullptr));
    } catch (const Json::exception& e) {
        throw IoError(where + ": bad dataset header: " + e.what());
    }
    if (out.n_antennas < 1 || out.n_subcarriers < 1) throw IoError(where + ": bad array dimensions");
    const std::size_t cells = static_cast<std::size_t>(out.n_antennas) * static_cast<std::size_t>(out.n_subcarriers);
    std::size_t stride = 0;
    if (out.dtype == "csi-c128")
        stride = 2 + 2 * cells;
    else if (out.dtype == "adp-f64")
        stride = 2 + cells;
    else
        throw IoError(where + ": unknown dtype '" + out.dtype + "'");
    if (c.payload.size() != count * stride)
        throw IoError(where + ": payload holds " + std::to_string(c.payload.size()) + " values, header implies " +
                      std::to_string(count * stride));

    if (out.dtype == "csi-c128") {
        out.samples.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
            const double* r = c.payload.data() + i * stride;
            auto& s = out.samples[i];
            s.position = Point2(r[0], r[1]);
            s.csi.resize(out.n_antennas, out.n_subcarriers);
            for (std::size_t k = 0; k < cells; ++k) s.csi.data()[k] = Complex(r[2 + 2 * k], r[3 + 2 * k]);
        }
        if (count > 0) out.adps = to_adp_dataset(out.samples);
    } else {
        out.adps.n_antennas = out.n_antennas;
        out.adps.n_subcarriers = out.n_subcarriers;
        out.adps.adps.resize(count);
        out.adps.positions.resize(static_cast<Eigen::Index>(count), 2);
        for (std::size_t i = 0; i < count; ++i) {
            const double* r = c.payload.data() + i * stride;
            out.adps.positions.row(static_cast<Eigen::Index>(i)) << r[0], r[1];
            out.adps.adps[i] = Eigen::Map<const Eigen::VectorXd>(r + 2, static_cast<Eigen::Index>(cells));
        }
    }
    if (count == 0) {
        out.adps.n_antennas = out.n_antennas;
        out.adps.n_subcarriers = out.n_subcarriers;
    }
    return out;
}

// ---------------------------------------------------------------------------
// GPR models

namespace detail {

inline Json gpr_header(const GprModel& m) {
    return Json{{"kernel", to_json(m.kernel)}, {"n", m.size()},          {"d", m.dim()},
                {"target_mean", m.target_mean}, {"jitter", m.jitter}};
}

inline void append_gpr(std::vector<double>& out, const GprModel& m) {
    for (Eigen::Index i = 0; i < m.inputs.rows(); ++i)
        for (Eigen::Index j = 0; j < m.inputs.cols(); ++j) out.push_back(m.inputs(i, j));
    out.insert(out.end(), m.targets.data(), m.targets.data() + m.targets.size());
    for (Eigen::Index i = 0; i < m.chol.rows(); ++i)
        for (Eigen::Index j = 0; j < m.chol.cols(); ++j) out.push_back(m.chol(i, j));
    out.insert(out.end(), m.weights.data(), m.weights.data() + m.weights.size());
}

inline GprModel take_gpr(const Json& h, const std::vector<double>& payload, std::size_t& pos, const std::string& where) {
    GprModel m;
    Eigen::Index n = 0, d = 0;
    try {
        m.kernel = kernel_from_json(h.at("kernel"));
        n = h.at("n").get<Eigen::Index>();
        d = h.at("d").get<Eigen::Index>();
        m.target_mean = h.at("target_mean").get<double>();
        m.jitter = h.at("jitter").get<double>();
    } catch (const Json::exception& e) {
        throw IoError(where + ": bad model header: " + e.what());
    } catch (const ConfigError& e) {
        throw IoError(where + ": " + e.what());
    }
    const auto need = static_cast<std::size_t>(n * d + n + n * n + n);
    if (n < 1 || d < 1 || payload.size() < pos + need) throw IoError(where + ": truncated model payload");
    const double* p = payload.data() + pos;
    m.inputs = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(p, n, d);
    p += n * d;
    m.targets = Eigen::Map<const Eigen::VectorXd>(p, n);
    p += n;
    m.chol = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(p, n, n);
    p += n * n;
    m.weights = Eigen::Map<const Eigen::VectorXd>(p, n);
    pos += need;
    return m;
}

}  // namespace detail

/// Both coordinate regressors in one file; `extra` is merged into the header (provenance).
inline void save_position_models(const std::filesystem::path& path, const GprModel& gx, const GprModel& gy,
                                 const Json& extra = Json::object()) {
    Json header{{"format", "csiloc-gpr"}, {"version", kVersion}, {"models", Json::array({detail::gpr_header(gx), detail::gpr_header(gy)})}};
    for (const auto& [k, v] : extra.items()) header[k] = v;
    std::vector<double> payload;
    detail::append_gpr(payload, gx);
    detail::append_gpr(payload, gy);
    write_container(path, header, payload);
}

struct LoadedPositionModels {
    GprModel x;
    GprModel y;
    Json header;
};

inline LoadedPositionModels load_position_models(const std::filesystem::path& path) {
    const Container c = read_container(path);
    const std::string where = "'" + path.string() + "'";
    if (c.header.value("format", std::string()) != "csiloc-gpr") throw IoError(where + " is not a GPR model file");
    const Json& models = c.header.at("models");
    if (!models.is_array() || models.size() != 2) throw IoError(where + ": expected two coordinate models");
    LoadedPositionModels out;
    std::size_t pos = 0;
    out.x = detail::take_gpr(models[0], c.payload, pos, where);
    out.y = detail::take_gpr(models[1], c.payload, pos, where);
    if (pos != c.payload.size()) throw IoError(where + ": trailing payload");
    out.header = c.header;
    return out;
}

// ---------------------------------------------------------------------------
// autoencoder models

inline void save_autoencoder(const std::filesystem::path& path, const AutoencoderModel& m,
                             const Json& extra = Json::object()) {
    Json header{{"format", "csiloc-fcae"},
                {"version", kVersion},
                {"input_width", m.config.input_width},
                {"widths", m.config.layer_widths},
                {"slope", m.config.leaky_slope},
                {"seed", m.config.rng_seed},
                {"epochs_trained", m.epochs_trained},
                {"config", to_json(m.config)}};
    for (const auto& [k, v] : extra.items()) header[k] = v;
    std::vector<double> payload;
    for (const DenseLayer* l : m.layers()) {
        for (Eigen::Index i = 0; i < l->weight.rows(); ++i)
            for (Eigen::Index j = 0; j < l->weight.cols(); ++j) payload.push_back(l->weight(i, j));
        payload.insert(payload.end(), l->bias.data(), l->bias.data() + l->bias.size());
    }
    write_container(path, header, payload);
}

struct LoadedAutoencoder {
    AutoencoderModel model;
    Json header;
};

inline LoadedAutoencoder load_autoencoder(const std::filesystem::path& path) {
    const Container c = read_container(path);
    const std::string where = "'" + path.string() + "'";
    if (c.header.value("format", std::string()) != "csiloc-fcae") throw IoError(where + " is not an autoencoder file");
    LoadedAutoencoder out;
    try {
        out.model = initialize(autoencoder_config_from_json(c.header.at("config")));
        out.model.epochs_trained = c.header.at("epochs_trained").get<int>();
    } catch (const Json::exception& e) {
        throw IoError(where + ": bad autoencoder header: " + e.what());
    } catch (const ConfigError& e) {
        throw IoError(where + ": " + e.what());
    }
    std::size_t pos = 0;
    for (DenseLayer* l : out.model.layers()) {
        const auto need = static_cast<std::size_t>(l->weight.size() + l->bias.size());
        if (pos + need > c.payload.size()) throw IoError(where + ": truncated weights");
        const double* p = c.payload.data() + pos;
        l->weight = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            p, l->weight.rows(), l->weight.cols());
        l->bias = Eigen::Map<const Eigen::VectorXd>(p + l->weight.size(), l->bias.size());
        pos += need;
    }
    if (pos != c.payload.size()) throw IoError(where + ": trailing payload");
    out.header = c.header;
    return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {
inline std::string csv_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}
}  // namespace detail

inline std::string history_csv(const std::vector<double>& history) {
    std::string out = "epoch,mean_loss\n";
    for (std::size_t e = 0; e < history.size(); ++e)
        out += std::to_string(e) + "," + detail::csv_number(history[e]) + "\n";
    return out;
}

inline std::string eval_csv(const std::vector<EvalReport>& reports) {
    std::string out = "trial,fraction,rmse_m,kernel_x,kernel_y,reject_rate,fit_ms,predict_ms\n";
    for (const auto& r : reports)
        for (const auto& t : r.trials)
            out += std::to_string(t.trial) + "," + detail::csv_number(r.train_fraction) + "," + detail::csv_number(t.rmse) +
                   "," + std::string(to_string(t.kernel_x)) + "," + std::string(to_string(t.kernel_y)) + "," +
                   detail::csv_number(t.reject_rate) + "," + detail::csv_number(t.fit_ms) + "," +
                   detail::csv_number(t.predict_ms) + "\n";
    return out;
}

inline std::string surface_csv(const std::vector<SurfaceSample>& surface) {
    std::string out = "kernel,sigma,length_scale,alpha,noise,nlml,cv_loss,of\n";
    for (const auto& s : surface)
        out += std::string(to_string(s.spec.kind)) + "," + detail::csv_number(s.spec.signal_std) + "," +
               detail::csv_number(s.spec.length_scale) + "," +
               (s.spec.mixture ? detail::csv_number(*s.spec.mixture) : std::string()) + "," +
               detail::csv_number(s.spec.noise_std) + "," + detail::csv_number(s.nlml) + "," +
               detail::csv_number(s.cv_loss) + "," + detail::csv_number(s.of) + "\n";
    return out;
}

inline std::string timing_csv(const std::vector<TimingCell>& cells) {
    std::string out = "n,d,median_ms,runs_ms\n";
    for (const auto& c : cells) {
        std::string runs;
        for (std::size_t i = 0; i < c.runs_ms.size(); ++i) runs += (i ? ";" : "") + detail::csv_number(c.runs_ms[i]);
        out += std::to_string(c.n) + "," + std::to_string(c.d) + "," + detail::csv_number(c.median_ms) + "," + runs + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// provenance

/// FNV-1a 64 of a byte string, as 16 hex digits. Content fingerprint only, not a security hash.
inline std::string fingerprint(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

inline std::string file_fingerprint(const std::filesystem::path& path) { return fingerprint(detail::read_file(path)); }

struct RunManifest {
    std::string command;
    std::string config_hash;  // empty when no config file was given
    Json seeds = Json::object();
    Json inputs = Json::array();   // [{path, hash}]
    Json outputs = Json::array();  // paths
    double wall_ms = 0.0;

    void add_input(const std::filesystem::path& p) {
        inputs.push_back(Json{{"path", p.string()}, {"hash", file_fingerprint(p)}});
    }
    void add_output(const std::filesystem::path& p) { outputs.push_back(p.filename().string()); }
};

inline Json to_json(const RunManifest& m) {
    return Json{{"command", m.command}, {"config_hash", m.config_hash}, {"seeds", m.seeds},    {"version", kVersion},
                {"inputs", m.inputs},   {"outputs", m.outputs},         {"wall_ms", m.wall_ms}};
}

/// One manifest per artifact directory; a later command writing into the same directory replaces it.
inline std::filesystem::path write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
    const auto path = dir / "manifest.json";
    write_json_file(path, to_json(m));
    return path;
}

}  // namespace csiloc
