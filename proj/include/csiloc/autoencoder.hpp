// SPDX-License-Identifier: Apache-2.0
#pragma once

// Fully-connected autoencoder for vectorized ADPs.
//
// Node widths run input -> w0 -> ... -> bottleneck on the encoder side, and the decoder
// retraces them in reverse back to the input width. Every layer applies LeakyReLU except
// the final decoder layer, which is linear. Trained by minibatch Adam on the MSE.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "adp.hpp"
#include "errors.hpp"
#include "random.hpp"

namespace csiloc {

struct AutoencoderConfig {
    int input_width = 256;
    std::vector<int> layer_widths{256, 144, 64, 16};  // encoder widths ending at the bottleneck
    double leaky_slope = 0.01;
    double learning_rate = 0.0005;
    int epochs = 1000;
    int batch_size = 256;
    std::uint64_t rng_seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    int code_width() const { return layer_widths.back(); }
};

/// Layer widths for an n x n ADP compressed to a 16-length code.
inline AutoencoderConfig table_config(int n) {
    AutoencoderConfig c;
    c.input_width = n * n;
    switch (n) {
        case 16: c.layer_widths = {256, 144, 64, 16}; break;
        case 8: c.layer_widths = {64, 36, 16}; break;
        default: throw ConfigError("no reference autoencoder layout for " + std::to_string(n) + "x" + std::to_string(n));
    }
    return c;
}

inline void validate(const AutoencoderConfig& c) {
    if (c.input_width < 1) throw ConfigError("autoencoder: input width must be positive");
    if (c.layer_widths.empty()) throw ConfigError("autoencoder: need at least one encoder layer");
    if (c.layer_widths.front() > c.input_width) throw ConfigError("autoencoder: first layer wider than the input");
    for (std::size_t i = 0; i < c.layer_widths.size(); ++i) {
        if (c.layer_widths[i] < 1) throw ConfigError("autoencoder: layer widths must be positive");
        if (i > 0 && c.layer_widths[i] >= c.layer_widths[i - 1])
            throw ConfigError("autoencoder: layer widths must strictly decrease to the bottleneck");
    }
    if (!(c.leaky_slope >= 0.0)) throw ConfigError("autoencoder: leaky slope must be >= 0");
    if (!(c.learning_rate >= 0.0)) throw ConfigError("autoencoder: learning rate must be >= 0");
    if (c.epochs < 0 || c.batch_size < 1) throw ConfigError("autoencoder: bad epochs or batch size");
}

struct DenseLayer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
    bool activated = true;
};

struct AutoencoderModel {
    AutoencoderConfig config;
    std::vector<DenseLayer> encoder;
    std::vector<DenseLayer> decoder;
    std::vector<double> history;  // mean loss per epoch
    int epochs_trained = 0;

    std::vector<DenseLayer*> layers() {
        std::vector<DenseLayer*> out;
        for (auto& l : encoder) out.push_back(&l);
        for (auto& l : decoder) out.push_back(&l);
        return out;
    }
    std::vector<const DenseLayer*> layers() const {
        std::vector<const DenseLayer*> out;
        for (const auto& l : encoder) out.push_back(&l);
        for (const auto& l : decoder) out.push_back(&l);
        return out;
    }
};

/// Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
inline AutoencoderModel initialize(const AutoencoderConfig& config) {
    validate(config);
    AutoencoderModel m;
    m.config = config;
    std::vector<int> nodes{config.input_width};
    nodes.insert(nodes.end(), config.layer_widths.begin(), config.layer_widths.end());
    Rng rng(derive_seed(config.rng_seed, "autoencoder-init"));
    auto make = [&](int in, int out, bool act) {
        DenseLayer l{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out), act};
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (Eigen::Index j = 0; j < l.weight.cols(); ++j)
            for (Eigen::Index i = 0; i < l.weight.rows(); ++i) l.weight(i, j) = uniform(rng, -bound, bound);
        return l;
    };
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) m.encoder.push_back(make(nodes[i], nodes[i + 1], true));
    for (std::size_t i = nodes.size() - 1; i > 0; --i)
        m.decoder.push_back(make(nodes[i], nodes[i - 1], i > 1));
    return m;
}

namespace detail {

inline Eigen::MatrixXd leaky(const Eigen::MatrixXd& z, double slope) {
    return z.array().max(0.0) + slope * z.array().min(0.0);
}

inline Eigen::MatrixXd forward_stack(const std::vector<DenseLayer>& stack, Eigen::MatrixXd a, double slope) {
    for (const auto& l : stack) {
        Eigen::MatrixXd z = l.weight * a;
        z.colwise() += l.bias;
        a = l.activated ? leaky(z, slope) : std::move(z);
    }
    return a;
}

}  // namespace detail

/// Columns of `batch` are samples.
inline Eigen::MatrixXd encode_batch(const AutoencoderModel& m, const Eigen::MatrixXd& batch) {
    detail::require_shape(batch.rows() == m.config.input_width, "encode: input width does not match the model");
    return detail::forward_stack(m.encoder, batch, m.config.leaky_slope);
}

inline Eigen::MatrixXd decode_batch(const AutoencoderModel& m, const Eigen::MatrixXd& codes) {
    detail::require_shape(codes.rows() == m.config.code_width(), "decode: code width does not match the model");
    return detail::forward_stack(m.decoder, codes, m.config.leaky_slope);
}

inline Eigen::VectorXd encode(const AutoencoderModel& m, const Eigen::VectorXd& adp) { return encode_batch(m, adp); }
inline Eigen::VectorXd decode(const AutoencoderModel& m, const Eigen::VectorXd& code) { return decode_batch(m, code); }

/// Normalized correlation between an input and its reconstruction. The linear output layer can
/// produce negative entries, so an anti-correlated reconstruction is reported as 0.
inline double reconstruction_similarity(const AutoencoderModel& m, const Eigen::VectorXd& adp) {
    return std::max(0.0, similarity(adp, decode(m, encode(m, adp))));
}

/// Gradients of the batch MSE, laid out like the model's layers.
struct LayerGradient {
    Eigen::MatrixXd weight;
    Eigen::VectorXd bias;
};

/// Mean over batch and features of (reconstruction - input)^2.
inline double reconstruction_loss(const AutoencoderModel& m, const Eigen::MatrixXd& batch) {
    const Eigen::MatrixXd out = decode_batch(m, encode_batch(m, batch));
    return (out - batch).squaredNorm() / static_cast<double>(batch.size());
}

inline double loss_and_gradient(const AutoencoderModel& m, const Eigen::MatrixXd& batch,
                                std::vector<LayerGradient>& grads) {
    detail::require_shape(batch.rows() == m.config.input_width, "train: input width does not match the model");
    const auto layers = m.layers();
    const double slope = m.config.leaky_slope;
    std::vector<Eigen::MatrixXd> acts{batch};  // activations entering each layer
    std::vector<Eigen::MatrixXd> pre;
    acts.reserve(layers.size() + 1);
    pre.reserve(layers.size());
    for (const DenseLayer* l : layers) {
        Eigen::MatrixXd z = l->weight * acts.back();
        z.colwise() += l->bias;
        acts.push_back(l->activated ? detail::leaky(z, slope) : z);
        pre.push_back(std::move(z));
    }
    const double count = static_cast<double>(batch.size());
    const Eigen::MatrixXd diff = acts.back() - batch;
    const double loss = diff.squaredNorm() / count;

    grads.resize(layers.size());
    Eigen::MatrixXd delta = (2.0 / count) * diff;
    for (std::size_t k = layers.size(); k-- > 0;) {
        if (layers[k]->activated)
            delta.array() *= (pre[k].array() > 0.0).select(Eigen::ArrayXXd::Ones(delta.rows(), delta.cols()), slope);
        grads[k].weight.noalias() = delta * acts[k].transpose();
        grads[k].bias = delta.rowwise().sum();
        if (k > 0) delta = layers[k]->weight.transpose() * delta;
    }
    return loss;
}

/// Adam moment buffers for one parameter block.
class Adam {
public:
    Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    /// Bias-corrected update of `param` in place; `m` and `v` are the block's moment buffers.
    template <typename P, typename G, typename M>
    void update(Eigen::DenseBase<P>& param, const Eigen::DenseBase<G>& grad, Eigen::DenseBase<M>& m,
                Eigen::DenseBase<M>& v) const {
        m.derived() = b1_ * m.derived().array() + (1.0 - b1_) * grad.derived().array();
        v.derived() = b2_ * v.derived().array() + (1.0 - b2_) * grad.derived().array().square();
        const double c1 = 1.0 - std::pow(b1_, step_);
        const double c2 = 1.0 - std::pow(b2_, step_);
        param.derived().array() -= lr_ * (m.derived().array() / c1) / ((v.derived().array() / c2).sqrt() + eps_);
    }

    void next_step() { ++step_; }
    long step() const { return step_; }

private:
    double lr_, b1_, b2_, eps_;
    long step_ = 0;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Minibatch Adam training on a fixed dataset of equal-length ADP vectors.
inline AutoencoderModel train(const AutoencoderConfig& config, const std::vector<Eigen::VectorXd>& dataset,
                              const EpochCallback& on_epoch = {}) {
    validate(config);
    if (dataset.empty()) throw DomainError("train: empty dataset");
    for (const auto& v : dataset)
        detail::require_shape(v.size() == config.input_width, "train: sample width does not match the config");

    AutoencoderModel model = initialize(config);
    auto layers = model.layers();
    std::vector<Eigen::MatrixXd> mw, vw;
    std::vector<Eigen::VectorXd> mb, vb;
    for (const DenseLayer* l : layers) {
        mw.push_back(Eigen::MatrixXd::Zero(l->weight.rows(), l->weight.cols()));
        vw.push_back(mw.back());
        mb.push_back(Eigen::VectorXd::Zero(l->bias.size()));
        vb.push_back(mb.back());
    }
    Adam adam(config.learning_rate, config.beta1, config.beta2, config.epsilon);
    Rng rng(derive_seed(config.rng_seed, "autoencoder-shuffle"));
    std::vector<LayerGradient> grads;
    const std::size_t n = dataset.size();
    const std::size_t bs = static_cast<std::size_t>(config.batch_size);
    Eigen::MatrixXd batch;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = permutation(n, rng);
        double total = 0.0;
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t count = std::min(bs, n - start);
            batch.resize(config.input_width, static_cast<Eigen::Index>(count));
            for (std::size_t c = 0; c < count; ++c) batch.col(static_cast<Eigen::Index>(c)) = dataset[order[start + c]];
            const double loss = loss_and_gradient(model, batch, grads);
            if (!std::isfinite(loss))
                throw TrainingError("autoencoder training diverged at epoch " + std::to_string(epoch));
            total += loss * static_cast<double>(count);
            adam.next_step();
            for (std::size_t k = 0; k < layers.size(); ++k) {
                adam.update(layers[k]->weight, grads[k].weight, mw[k], vw[k]);
                adam.update(layers[k]->bias, grads[k].bias, mb[k], vb[k]);
            }
        }
        const double mean_loss = total / static_cast<double>(n);
        model.history.push_back(mean_loss);
        model.epochs_trained = epoch + 1;
        if (on_epoch) on_epoch(epoch, mean_loss);
    }
    return model;
}

/// Mean reconstruction similarity over a dataset.
inline double mean_similarity(const AutoencoderModel& m, const std::vector<Eigen::VectorXd>& data) {
    if (data.empty()) throw DomainError("mean_similarity: empty dataset");
    double acc = 0.0;
    for (const auto& v : data) acc += reconstruction_similarity(m, v);
    return acc / static_cast<double>(data.size());
}

}  // namespace csiloc
