// Copyright 2026 The SAVAE Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "savae/corpus.hpp"
#include "savae/error.hpp"
#include "savae/numerics.hpp"
#include "savae/rng.hpp"

namespace savae {

enum class ModelMode : std::uint32_t { Savae = 0, Nvdm = 1 };

inline std::string_view to_string(ModelMode mode) noexcept { return mode == ModelMode::Savae ? "savae" : "nvdm"; }

inline ModelMode parse_model_mode(std::string_view name)
{
    if (name == "savae" || name == "SAVAE")
        return ModelMode::Savae;
    if (name == "nvdm" || name == "NVDM")
        return ModelMode::Nvdm;
    throw Error(ErrorKind::InvalidConfig, "unknown model mode '" + std::string(name) + "'");
}

struct ModelConfig {
    ModelMode mode = ModelMode::Savae;
    std::size_t vocab_size = 2000;
    std::size_t latent_dim = 50;
    /// Number of preceding words in the local context (SAVAE only).
    std::size_t window = 5;
    std::vector<std::size_t> encoder_layers = {500, 500};
    std::size_t samples_train = 1;
    std::size_t samples_eval = 20;

    bool has_local_context() const noexcept { return mode == ModelMode::Savae; }

    /// Width of the decoder input: concat(z, h) for SAVAE, z for NVDM.
    std::size_t decoder_width() const noexcept { return has_local_context() ? 2 * latent_dim : latent_dim; }

    /// Every violated constraint, empty when the config is valid.
    std::vector<std::string> violations() const
    {
        std::vector<std::string> out;
        if (vocab_size < 1)
            out.emplace_back("model.vocab_size must be >= 1");
        if (latent_dim < 1)
            out.emplace_back("model.d must be >= 1");
        if (mode == ModelMode::Savae && window < 1)
            out.emplace_back("model.k must be >= 1 for SAVAE");
        if (encoder_layers.empty())
            out.emplace_back("model.encoder_layers must be non-empty");
        for (auto width : encoder_layers)
            if (width < 1) {
                out.emplace_back("model.encoder_layers entries must be >= 1");
                break;
            }
        if (samples_train < 1)
            out.emplace_back("model.samples_train must be >= 1");
        if (samples_eval < 1)
            out.emplace_back("model.samples_eval must be >= 1");
        return out;
    }

    void validate() const
    {
        const auto problems = violations();
        if (problems.empty())
            return;
        std::string message;
        for (const auto& p : problems)
            message += (message.empty() ? "" : "; ") + p;
        throw Error(ErrorKind::InvalidConfig, message);
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Affine layer y = weight^T x + bias, weight stored as (inputs x outputs) so
/// that a bag-of-words input reads whole rows.
struct DenseLayer {
    Matrix weight;
    Vector bias;
};

/// All trainable arrays. Gradients and Adam moments reuse the same layout.
struct ParameterArrays {
    Matrix decoder_embeddings; ///< m x 2d (SAVAE) or m x d (NVDM)
    Vector decoder_bias; ///< m
    Matrix local_embeddings; ///< m x d, empty for NVDM
    Vector local_bias; ///< d, empty for NVDM
    std::vector<DenseLayer> encoder_hidden;
    DenseLayer mean_head;
    DenseLayer log_var_head;

    /// Visits every non-empty array in a fixed order as f(name, array).
    template <class Self, class F>
    static void visit(Self& self, F&& f)
    {
        f(std::string("decoder.embeddings"), self.decoder_embeddings);
        f(std::string("decoder.bias"), self.decoder_bias);
        if (self.local_embeddings.size() > 0) {
            f(std::string("local.embeddings"), self.local_embeddings);
            f(std::string("local.bias"), self.local_bias);
        }
        for (std::size_t i = 0; i < self.encoder_hidden.size(); ++i) {
            const auto prefix = "encoder.hidden." + std::to_string(i);
            f(prefix + ".weight", self.encoder_hidden[i].weight);
            f(prefix + ".bias", self.encoder_hidden[i].bias);
        }
        f(std::string("encoder.mean.weight"), self.mean_head.weight);
        f(std::string("encoder.mean.bias"), self.mean_head.bias);
        f(std::string("encoder.log_var.weight"), self.log_var_head.weight);
        f(std::string("encoder.log_var.bias"), self.log_var_head.bias);
    }

    template <class F>
    void for_each_array(F&& f)
    {
        visit(*this, std::forward<F>(f));
    }

    template <class F>
    void for_each_array(F&& f) const
    {
        visit(*this, std::forward<F>(f));
    }

    void set_zero()
    {
        for_each_array([](const std::string&, auto& a) { a.setZero(); });
    }

    std::size_t parameter_count() const
    {
        std::size_t n = 0;
        for_each_array([&](const std::string&, const auto& a) { n += static_cast<std::size_t>(a.size()); });
        return n;
    }

    /// Zero-filled arrays shaped for `config`.
    static ParameterArrays zeros(const ModelConfig& config)
    {
        const auto m = static_cast<Index>(config.vocab_size);
        const auto d = static_cast<Index>(config.latent_dim);
        ParameterArrays p;
        p.decoder_embeddings = Matrix::Zero(m, static_cast<Index>(config.decoder_width()));
        p.decoder_bias = Vector::Zero(m);
        if (config.has_local_context()) {
            p.local_embeddings = Matrix::Zero(m, d);
            p.local_bias = Vector::Zero(d);
        }
        Index fan_in = m;
        for (auto width : config.encoder_layers) {
            p.encoder_hidden.push_back({Matrix::Zero(fan_in, static_cast<Index>(width)),
                                        Vector::Zero(static_cast<Index>(width))});
            fan_in = static_cast<Index>(width);
        }
        p.mean_head = {Matrix::Zero(fan_in, d), Vector::Zero(d)};
        p.log_var_head = {Matrix::Zero(fan_in, d), Vector::Zero(d)};
        return p;
    }

    bool same_shape(const ParameterArrays& other) const
    {
        std::vector<std::pair<Index, Index>> mine, theirs;
        for_each_array([&](const std::string&, const auto& a) { mine.emplace_back(a.rows(), a.cols()); });
        other.for_each_array([&](const std::string&, const auto& a) { theirs.emplace_back(a.rows(), a.cols()); });
        return mine == theirs;
    }

    friend bool operator==(const ParameterArrays& a, const ParameterArrays& b)
    {
        if (!a.same_shape(b))
            return false;
        std::vector<const double*> lhs, rhs;
        std::vector<Index> sizes;
        a.for_each_array([&](const std::string&, const auto& x) {
            lhs.push_back(x.data());
            sizes.push_back(x.size());
        });
        b.for_each_array([&](const std::string&, const auto& x) { rhs.push_back(x.data()); });
        for (std::size_t i = 0; i < lhs.size(); ++i)
            if (!std::equal(lhs[i], lhs[i] + sizes[i], rhs[i]))
                return false;
        return true;
    }
};

struct ModelParams : ParameterArrays {
    ModelParams() = default;
    explicit ModelParams(ParameterArrays arrays)
        : ParameterArrays(std::move(arrays))
    {
    }
};

struct ParamGrads : ParameterArrays {
    ParamGrads() = default;
    explicit ParamGrads(ParameterArrays arrays)
        : ParameterArrays(std::move(arrays))
    {
    }
    static ParamGrads zeros_like(const ModelConfig& config) { return ParamGrads(ParameterArrays::zeros(config)); }
};

/// Xavier-uniform weights, zero biases.
inline ModelParams init_params(const ModelConfig& config, CounterRng rng)
{
    config.validate();
    ModelParams params(ParameterArrays::zeros(config));
    auto fill = [&](Matrix& w) {
        const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        for (Index i = 0; i < w.size(); ++i)
            w.data()[i] = (2.0 * rng.uniform() - 1.0) * limit;
    };
    fill(params.decoder_embeddings);
    if (config.has_local_context())
        fill(params.local_embeddings);
    for (auto& layer : params.encoder_hidden)
        fill(layer.weight);
    fill(params.mean_head.weight);
    fill(params.log_var_head.weight);
    return params;
}

inline void check_shapes(const ModelParams& params, const ModelConfig& config)
{
    if (!params.same_shape(ParameterArrays::zeros(config)))
        throw Error(ErrorKind::CorruptCheckpoint, "parameter shapes do not match the model configuration");
}

/// Sorted (id, count) pairs. The sorted order makes every bag-of-words
/// reduction independent of word order, bit for bit.
using BagOfWords = std::vector<std::pair<TokenId, double>>;

inline BagOfWords bag_of_words(std::span<const TokenId> ids)
{
    std::vector<TokenId> sorted(ids.begin(), ids.end());
    std::sort(sorted.begin(), sorted.end());
    BagOfWords bag;
    for (auto id : sorted) {
        if (!bag.empty() && bag.back().first == id)
            bag.back().second += 1.0;
        else
            bag.emplace_back(id, 1.0);
    }
    return bag;
}

/// Intermediate values of one encoder pass, kept for backpropagation.
struct EncoderTrace {
    BagOfWords bag;
    std::vector<Vector> hidden; ///< post-ReLU activations per hidden layer
    GaussianPosterior posterior;
};

namespace detail {

    inline void require_nonempty(const Document& doc)
    {
        if (doc.ids.empty())
            throw Error(ErrorKind::EmptyDocument, "document has no in-vocabulary tokens");
    }

    inline EncoderTrace encoder_forward(const Document& doc, const ModelParams& params)
    {
        EncoderTrace trace;
        trace.bag = bag_of_words(doc.ids);
        const auto& first = params.encoder_hidden.front();
        Vector a = first.bias;
        for (const auto& [id, count] : trace.bag)
            a.noalias() += count * first.weight.row(id).transpose();
        relu_in_place(a);
        trace.hidden.push_back(std::move(a));
        for (std::size_t i = 1; i < params.encoder_hidden.size(); ++i) {
            const auto& layer = params.encoder_hidden[i];
            Vector next = layer.bias;
            next.noalias() += layer.weight.transpose() * trace.hidden.back();
            relu_in_place(next);
            trace.hidden.push_back(std::move(next));
        }
        const Vector& top = trace.hidden.back();
        trace.posterior.mu = params.mean_head.bias;
        trace.posterior.mu.noalias() += params.mean_head.weight.transpose() * top;
        trace.posterior.log_var = params.log_var_head.bias;
        trace.posterior.log_var.noalias() += params.log_var_head.weight.transpose() * top;
        return trace;
    }

    // Backpropagates (d total / d mu, d total / d log_var) into the encoder.
    inline void encoder_backward(const EncoderTrace& trace, const Vector& grad_mu, const Vector& grad_log_var,
                                 const ModelParams& params, ParamGrads& grads, double scale)
    {
        const Vector& top = trace.hidden.back();
        grads.mean_head.weight.noalias() += scale * top * grad_mu.transpose();
        grads.mean_head.bias.noalias() += scale * grad_mu;
        grads.log_var_head.weight.noalias() += scale * top * grad_log_var.transpose();
        grads.log_var_head.bias.noalias() += scale * grad_log_var;

        Vector upstream = params.mean_head.weight * grad_mu;
        upstream.noalias() += params.log_var_head.weight * grad_log_var;

        for (std::size_t i = params.encoder_hidden.size(); i-- > 0;) {
            const Vector& out = trace.hidden[i];
            Vector delta = upstream.array() * (out.array() > 0.0).cast<double>();
            if (i == 0) {
                for (const auto& [id, count] : trace.bag)
                    grads.encoder_hidden[0].weight.row(id).noalias() += (scale * count) * delta.transpose();
            } else {
                const Vector& in = trace.hidden[i - 1];
                grads.encoder_hidden[i].weight.noalias() += scale * in * delta.transpose();
                upstream = params.encoder_hidden[i].weight * delta;
            }
            grads.encoder_hidden[i].bias.noalias() += scale * delta;
        }
    }

    // Positions are processed in blocks so the m x block logit matrix stays small.
    inline constexpr Index kPositionBlock = 256;

    // Pre-activation of the local context for position t: c + sum of the local
    // embeddings of the (up to k) preceding words.
    inline void local_preactivation(std::span<const TokenId> ids, std::size_t t, std::size_t window,
                                    const ModelParams& params, Eigen::Ref<Vector> out)
    {
        out = params.local_bias;
        const std::size_t begin = t > window ? t - window : 0;
        for (std::size_t j = begin; j < t; ++j)
            out.noalias() += params.local_embeddings.row(ids[j]).transpose();
    }

    // Sum over positions of log p(w_t | window, z). When `grads` is non-null,
    // accumulates scale * d(sum)/d(decoder params) and writes d(sum)/dz.
    inline double decoder_pass(const Document& doc, const Vector& z, const ModelParams& params,
                               const ModelConfig& config, ParamGrads* grads, double scale, Vector* grad_z)
    {
        const auto m = static_cast<Index>(config.vocab_size);
        const auto d = static_cast<Index>(config.latent_dim);
        const auto& X = params.decoder_embeddings;

        if (!config.has_local_context()) {
            // Logits do not depend on position: one softmax per document.
            Vector logits = params.decoder_bias;
            logits.noalias() += X * z;
            const Vector log_p = log_softmax(logits);
            const auto bag = bag_of_words(doc.ids);
            double ll = 0.0;
            for (const auto& [id, count] : bag)
                ll += count * log_p[id];
            if (grads) {
                Vector g = -static_cast<double>(doc.ids.size()) * log_p.array().exp();
                for (const auto& [id, count] : bag)
                    g[id] += count;
                grads->decoder_bias.noalias() += scale * g;
                grads->decoder_embeddings.noalias() += scale * g * z.transpose();
                *grad_z = X.transpose() * g;
            }
            return ll;
        }

        const auto X_global = X.leftCols(d);
        const auto X_local = X.rightCols(d);
        Vector base = params.decoder_bias;
        base.noalias() += X_global * z;

        const auto length = static_cast<Index>(doc.ids.size());
        double ll = 0.0;
        Vector g_sum;
        if (grads)
            g_sum = Vector::Zero(m);

        Eigen::MatrixXd H, logits, dH;
        for (Index start = 0; start < length; start += kPositionBlock) {
            const Index count = std::min(kPositionBlock, length - start);
            H.resize(d, count);
            for (Index c = 0; c < count; ++c) {
                local_preactivation(doc.ids, static_cast<std::size_t>(start + c), config.window, params, H.col(c));
                for (Index r = 0; r < d; ++r)
                    H(r, c) = sigmoid(H(r, c));
            }
            logits.noalias() = X_local * H;
            logits.colwise() += base;
            for (Index c = 0; c < count; ++c) {
                const auto word = static_cast<Index>(doc.ids[static_cast<std::size_t>(start + c)]);
                const double lse = log_sum_exp(logits.col(c));
                ll += logits(word, c) - lse;
                if (grads) {
                    // Column becomes (one_hot(word) - softmax).
                    logits.col(c) = -(logits.col(c).array() - lse).exp();
                    logits(word, c) += 1.0;
                }
            }
            if (!grads)
                continue;
            const auto& G = logits;
            g_sum.noalias() += G.rowwise().sum();
            grads->decoder_embeddings.rightCols(d).noalias() += scale * G * H.transpose();
            dH.noalias() = X_local.transpose() * G;
            dH.array() *= H.array() * (1.0 - H.array());
            for (Index c = 0; c < count; ++c) {
                const auto t = static_cast<std::size_t>(start + c);
                grads->local_bias.noalias() += scale * dH.col(c);
                const std::size_t begin = t > config.window ? t - config.window : 0;
                for (std::size_t j = begin; j < t; ++j)
                    grads->local_embeddings.row(doc.ids[j]).noalias() += scale * dH.col(c).transpose();
            }
        }
        if (grads) {
            grads->decoder_bias.noalias() += scale * g_sum;
            grads->decoder_embeddings.leftCols(d).noalias() += scale * g_sum * z.transpose();
            *grad_z = X_global.transpose() * g_sum;
        }
        return ll;
    }

} // namespace detail

/// Posterior q(z | doc) from the bag-of-words counts of `doc`.
inline GaussianPosterior encode(const Document& doc, const ModelParams& params, const ModelConfig&)
{
    detail::require_nonempty(doc);
    return detail::encoder_forward(doc, params).posterior;
}

/// h = sigmoid(c + sum of local embeddings of `window`); order-free.
inline Vector local_context(std::span<const TokenId> window, const ModelParams& params)
{
    Vector h = params.local_bias;
    for (auto id : window)
        h.noalias() += params.local_embeddings.row(id).transpose();
    sigmoid_in_place(h);
    return h;
}

/// Decoder logits for every vocabulary entry; `h` is ignored for NVDM.
inline Vector next_word_logits(const Vector& z, const Vector& h, const ModelParams& params,
                               const ModelConfig& config)
{
    const auto d = static_cast<Index>(config.latent_dim);
    Vector logits = params.decoder_bias;
    logits.noalias() += params.decoder_embeddings.leftCols(d) * z;
    if (config.has_local_context())
        logits.noalias() += params.decoder_embeddings.rightCols(d) * h;
    return logits;
}

inline double next_word_log_prob(TokenId word, const Vector& z, const Vector& h, const ModelParams& params,
                                 const ModelConfig& config)
{
    const Vector logits = next_word_logits(z, h, params, config);
    return logits[word] - log_sum_exp(logits);
}

/// log p(doc | z) summed over positions; windows at the start of the
/// document hold only the words that exist.
inline double doc_log_likelihood(const Document& doc, const Vector& z, const ModelParams& params,
                                 const ModelConfig& config)
{
    detail::require_nonempty(doc);
    return detail::decoder_pass(doc, z, params, config, nullptr, 0.0, nullptr);
}

struct ElboEstimate {
    double reconstruction = 0.0;
    double kl = 0.0;
    double total = 0.0;
    std::size_t samples = 0;
};

/// Monte-Carlo ELBO with `samples` reparameterized draws from `rng`.
inline ElboEstimate elbo(const Document& doc, const ModelParams& params, const ModelConfig& config, CounterRng& rng,
                         std::size_t samples)
{
    detail::require_nonempty(doc);
    if (samples < 1)
        throw Error(ErrorKind::InvalidConfig, "ELBO needs at least one sample");
    const auto posterior = detail::encoder_forward(doc, params).posterior;
    double sum = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        const Vector eps = standard_normal_vector(rng, posterior.dim());
        sum += detail::decoder_pass(doc, sample_reparameterized(posterior, eps), params, config, nullptr, 0.0,
                                    nullptr);
    }
    ElboEstimate out;
    out.samples = samples;
    out.reconstruction = sum / static_cast<double>(samples);
    out.kl = kl_standard_normal(posterior);
    out.total = out.reconstruction - out.kl;
    return out;
}

/// Single-sample ELBO at noise `eps`; adds scale * d(total)/d(params) to `grads`.
inline ElboEstimate accumulate_elbo_gradients(const Document& doc, const ModelParams& params,
                                              const ModelConfig& config, const Vector& eps, ParamGrads& grads,
                                              double scale = 1.0)
{
    detail::require_nonempty(doc);
    const auto trace = detail::encoder_forward(doc, params);
    const auto& q = trace.posterior;
    const Vector std_dev = (0.5 * q.log_var.array()).exp();
    const Vector z = q.mu.array() + std_dev.array() * eps.array();

    Vector grad_z;
    ElboEstimate out;
    out.samples = 1;
    out.reconstruction = detail::decoder_pass(doc, z, params, config, &grads, scale, &grad_z);
    out.kl = kl_standard_normal(q);
    out.total = out.reconstruction - out.kl;

    // dz/dmu = I, dz/dlog_var = 0.5 std eps; dKL/dmu = mu, dKL/dlog_var = 0.5 (exp(log_var) - 1).
    const Vector grad_mu = grad_z - q.mu;
    const Vector grad_log_var = grad_z.array() * 0.5 * std_dev.array() * eps.array()
        - 0.5 * (q.log_var.array().exp() - 1.0);
    detail::encoder_backward(trace, grad_mu, grad_log_var, params, grads, scale);
    return out;
}

/// Single-sample reparameterized gradient of the ELBO; eps drawn from `rng`.
inline std::pair<ElboEstimate, ParamGrads> elbo_gradients(const Document& doc, const ModelParams& params,
                                                          const ModelConfig& config, CounterRng& rng)
{
    detail::require_nonempty(doc);
    auto grads = ParamGrads::zeros_like(config);
    const Vector eps = standard_normal_vector(rng, static_cast<Index>(config.latent_dim));
    auto estimate = accumulate_elbo_gradients(doc, params, config, eps, grads);
    return {estimate, std::move(grads)};
}

/// exp(-sum of ELBO totals / total token count) over the non-empty documents.
inline double perplexity(std::span<const Document> docs, const ModelParams& params, const ModelConfig& config,
                         CounterRng& rng, std::size_t samples)
{
    double total = 0.0;
    std::size_t tokens = 0;
    for (const auto& doc : docs) {
        if (doc.excluded())
            continue;
        total += elbo(doc, params, config, rng, samples).total;
        tokens += doc.length();
    }
    if (tokens == 0)
        throw Error(ErrorKind::AllDocumentsEmpty, "perplexity needs at least one non-empty document");
    return std::exp(-total / static_cast<double>(tokens));
}

} // namespace savae
