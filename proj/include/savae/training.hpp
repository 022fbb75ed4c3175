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

#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "savae/corpus.hpp"
#include "savae/model.hpp"

namespace savae {

struct AdamSettings {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Applies one bias-corrected Adam ascent update in place.
inline void adam_update(std::span<double> theta, std::span<const double> grad, std::span<double> first,
                        std::span<double> second, std::uint64_t step, const AdamSettings& s)
{
    const double correction1 = 1.0 - std::pow(s.beta1, static_cast<double>(step));
    const double correction2 = 1.0 - std::pow(s.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = grad[i];
        first[i] = s.beta1 * first[i] + (1.0 - s.beta1) * g;
        second[i] = s.beta2 * second[i] + (1.0 - s.beta2) * g * g;
        const double m_hat = first[i] / correction1;
        const double v_hat = second[i] / correction2;
        theta[i] += s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
    }
}

struct AdamState {
    ParamGrads first_moment;
    ParamGrads second_moment;
    std::uint64_t step = 0;

    static AdamState zeros_like(const ModelConfig& config)
    {
        return {ParamGrads::zeros_like(config), ParamGrads::zeros_like(config), 0};
    }
};

namespace detail {
    template <class A>
    std::span<double> flat(A& array)
    {
        return {array.data(), static_cast<std::size_t>(array.size())};
    }
} // namespace detail

/// Adam step that ascends the objective whose gradient is `grads`. Nothing is
/// modified when any gradient entry is non-finite.
inline void adam_step(ModelParams& params, const ParamGrads& grads, AdamState& state, const AdamSettings& settings)
{
    if (!params.same_shape(grads) || !params.same_shape(state.first_moment)
        || !params.same_shape(state.second_moment))
        throw Error(ErrorKind::InvalidConfig, "Adam: parameter, gradient and moment shapes differ");
    grads.for_each_array([](const std::string& name, const auto& g) {
        if (!all_finite(g))
            throw Error(ErrorKind::NonFiniteGradient, "non-finite gradient in '" + name + "'");
    });

    std::vector<std::span<double>> theta, first, second;
    std::vector<std::span<const double>> g;
    params.for_each_array([&](const std::string&, auto& a) { theta.push_back(detail::flat(a)); });
    state.first_moment.for_each_array([&](const std::string&, auto& a) { first.push_back(detail::flat(a)); });
    state.second_moment.for_each_array([&](const std::string&, auto& a) { second.push_back(detail::flat(a)); });
    grads.for_each_array([&](const std::string&, const auto& a) {
        g.emplace_back(a.data(), static_cast<std::size_t>(a.size()));
    });

    ++state.step;
    for (std::size_t i = 0; i < theta.size(); ++i)
        adam_update(theta[i], g[i], first[i], second[i], state.step, settings);
}

struct TrainConfig {
    double learning_rate = 1e-5;
    std::size_t epochs = 1000;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    bool deterministic = true;
    /// Periodic checkpoint interval in epochs, 0 disables it.
    std::size_t checkpoint_every = 100;
    /// Worker threads for the non-deterministic mode.
    std::size_t threads = 1;

    static double default_learning_rate(ModelMode mode) noexcept { return mode == ModelMode::Savae ? 1e-5 : 1e-4; }

    AdamSettings adam() const { return {learning_rate, beta1, beta2, eps_adam}; }

    std::vector<std::string> violations() const
    {
        std::vector<std::string> out;
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
            out.emplace_back("train.learning_rate must be > 0");
        if (epochs < 1)
            out.emplace_back("train.epochs must be >= 1");
        if (batch_size < 1)
            out.emplace_back("train.batch_size must be >= 1");
        if (!(beta1 >= 0.0 && beta1 < 1.0))
            out.emplace_back("train.beta1 must be in [0, 1)");
        if (!(beta2 >= 0.0 && beta2 < 1.0))
            out.emplace_back("train.beta2 must be in [0, 1)");
        if (!(eps_adam > 0.0))
            out.emplace_back("train.eps_adam must be > 0");
        if (threads < 1)
            out.emplace_back("train.threads must be >= 1");
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
};

struct EpochRecord {
    std::size_t epoch = 0;
    double mean_elbo = 0.0;
    double mean_kl = 0.0;
    double perplexity = 0.0;
    double seconds = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;

    void write_csv(std::ostream& out) const
    {
        out << "epoch,elbo,kl,perplexity,seconds\n";
        for (const auto& r : epochs)
            out << r.epoch << ',' << format_shortest(r.mean_elbo) << ',' << format_shortest(r.mean_kl) << ','
                << format_shortest(r.perplexity) << ',' << format_shortest(r.seconds) << '\n';
    }
};

struct TrainResult {
    ModelParams params;
    TrainLog log;
};

using EpochCallback = std::function<void(const EpochRecord&, const ModelParams&)>;

/// Substream tags under CounterRng(train seed).
enum class TrainStream : std::uint64_t { Init = 0, EpochOrder = 1, BatchNoise = 2 };

/// Minibatch Adam ascent on the single-sample ELBO.
///
/// Each epoch visits the non-empty training documents in an order drawn from
/// substream (EpochOrder, epoch). A batch gradient is the mean of the
/// per-document gradients, whose noise comes from (BatchNoise, epoch, batch)
/// in document order. In deterministic mode gradients are summed in that
/// order on one thread; otherwise `threads` workers reduce in any order.
inline TrainResult train(const CorpusSplit& corpus, const ModelConfig& model_config,
                         const TrainConfig& train_config, const EpochCallback& on_epoch = {})
{
    model_config.validate();
    train_config.validate();
    if (model_config.vocab_size != corpus.vocabulary.size())
        throw Error(ErrorKind::InvalidConfig, "model.vocab_size " + std::to_string(model_config.vocab_size)
                        + " differs from corpus vocabulary size " + std::to_string(corpus.vocabulary.size()));

    std::vector<const Document*> docs;
    for (const auto& doc : corpus.train)
        if (!doc.excluded())
            docs.push_back(&doc);
    if (docs.empty())
        throw Error(ErrorKind::EmptyCorpus, "no non-empty training documents");

    const CounterRng root(train_config.seed);
    auto tag = [](TrainStream s) { return static_cast<std::uint64_t>(s); };

    TrainResult result;
    result.params = init_params(model_config, root.substream(tag(TrainStream::Init)));
    auto& params = result.params;
    auto state = AdamState::zeros_like(model_config);
    const auto adam = train_config.adam();
    const auto d = static_cast<Index>(model_config.latent_dim);

    const std::size_t workers = train_config.deterministic ? 1 : train_config.threads;
    std::vector<ParamGrads> partial(workers, ParamGrads::zeros_like(model_config));

    std::vector<std::size_t> order(docs.size());
    for (std::size_t epoch = 1; epoch <= train_config.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto order_rng = root.substream({tag(TrainStream::EpochOrder), epoch});
        shuffle_in_place(std::span<std::size_t>(order), order_rng);

        double elbo_sum = 0.0, kl_sum = 0.0;
        std::size_t token_count = 0;
        const std::size_t batches = (docs.size() + train_config.batch_size - 1) / train_config.batch_size;
        for (std::size_t batch = 0; batch < batches; ++batch) {
            const std::size_t begin = batch * train_config.batch_size;
            const std::size_t end = std::min(begin + train_config.batch_size, docs.size());
            const std::size_t n = end - begin;
            const double scale = 1.0 / static_cast<double>(n);

            auto noise_rng = root.substream({tag(TrainStream::BatchNoise), epoch, batch});
            std::vector<Vector> noise;
            noise.reserve(n);
            for (std::size_t i = 0; i < n; ++i)
                noise.push_back(standard_normal_vector(noise_rng, d));

            std::vector<ElboEstimate> estimates(n);
            auto run = [&](std::size_t worker) {
                auto& grads = partial[worker];
                grads.set_zero();
                for (std::size_t i = worker; i < n; i += workers)
                    estimates[i] = accumulate_elbo_gradients(*docs[order[begin + i]], params, model_config,
                                                             noise[i], grads, scale);
            };
            if (workers == 1) {
                run(0);
            } else {
                std::vector<std::thread> pool;
                for (std::size_t w = 0; w < workers; ++w)
                    pool.emplace_back(run, w);
                for (auto& t : pool)
                    t.join();
                for (std::size_t w = 1; w < workers; ++w) {
                    std::vector<std::span<double>> dst;
                    partial[0].for_each_array([&](const std::string&, auto& a) { dst.push_back(detail::flat(a)); });
                    std::size_t k = 0;
                    partial[w].for_each_array([&](const std::string&, auto& a) {
                        auto src = detail::flat(a);
                        for (std::size_t i = 0; i < src.size(); ++i)
                            dst[k][i] += src[i];
                        ++k;
                    });
                }
            }
            for (std::size_t i = 0; i < n; ++i) {
                elbo_sum += estimates[i].total;
                kl_sum += estimates[i].kl;
                token_count += docs[order[begin + i]]->length();
            }

            try {
                adam_step(params, partial[0], state, adam);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::NonFiniteGradient)
                    throw;
                throw Error(ErrorKind::NonFiniteGradient, "epoch " + std::to_string(epoch) + ", batch "
                                + std::to_string(batch) + ": " + e.message());
            }
        }

        EpochRecord record;
        record.epoch = epoch;
        record.mean_elbo = elbo_sum / static_cast<double>(docs.size());
        record.mean_kl = kl_sum / static_cast<double>(docs.size());
        record.perplexity = std::exp(-elbo_sum / static_cast<double>(token_count));
        record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.log.epochs.push_back(record);
        if (on_epoch)
            on_epoch(record, params);
    }
    return result;
}

} // namespace savae
