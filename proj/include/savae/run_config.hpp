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
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "savae/corpus.hpp"
#include "savae/error.hpp"
#include "savae/evaluation.hpp"
#include "savae/model.hpp"
#include "savae/training.hpp"

namespace savae {

/// Raw key=value settings. Later assignments replace earlier ones.
class Settings {
public:
    void set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    /// Reads "key = value" lines; blank lines and lines starting with '#' are skipped.
    void merge_stream(std::istream& in, const std::string& origin)
    {
        std::string line;
        std::size_t number = 0;
        while (std::getline(in, line)) {
            ++number;
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            const auto text = detail::trim(line);
            if (text.empty() || text.front() == '#')
                continue;
            const auto eq = text.find('=');
            if (eq == std::string_view::npos)
                throw Error(ErrorKind::ParseError, origin + " line " + std::to_string(number) + ": expected key=value");
            const auto key = detail::trim(text.substr(0, eq));
            if (key.empty())
                throw Error(ErrorKind::ParseError, origin + " line " + std::to_string(number) + ": empty key");
            set(std::string(key), std::string(detail::trim(text.substr(eq + 1))));
        }
    }

    void merge_file(const std::filesystem::path& path)
    {
        std::ifstream in(path);
        if (!in)
            throw Error(ErrorKind::IoError, "cannot read config file " + path.string());
        merge_stream(in, path.string());
    }

    /// Parses a single "key=value" override.
    void merge_override(std::string_view assignment)
    {
        const auto eq = assignment.find('=');
        if (eq == std::string_view::npos || detail::trim(assignment.substr(0, eq)).empty())
            throw Error(ErrorKind::ParseError, "override '" + std::string(assignment) + "' is not key=value");
        set(std::string(detail::trim(assignment.substr(0, eq))), std::string(detail::trim(assignment.substr(eq + 1))));
    }

private:
    std::map<std::string, std::string> values_;
};

/// Effective settings of one CLI run.
struct RunConfig {
    std::string corpus_train;
    std::string corpus_test;
    CorpusFormat corpus_format = CorpusFormat::NewsgroupDirs;
    std::size_t corpus_vocab_size = 2000;
    std::uint64_t corpus_seed = 2;

    ModelConfig model;
    TrainConfig train;
    /// False until train.learning_rate is given; the mode default applies otherwise.
    bool learning_rate_given = false;

    Relevance relevance = Relevance::Exact;
    std::size_t eval_samples = 20;
    std::uint64_t eval_seed = 0;
    std::size_t neighbors = 5;
    EmbeddingSpace space = EmbeddingSpace::Global;
    ProbeConfig probe;

    std::string out = "out";
};

namespace detail {

    struct ConfigField {
        std::string key;
        std::function<void(std::string_view)> set;
        std::function<std::string()> get;
    };

    template <class T>
    T parse_number(std::string_view text)
    {
        T value{};
        const auto* end = text.data() + text.size();
        const auto res = std::from_chars(text.data(), end, value);
        if (text.empty() || res.ec != std::errc() || res.ptr != end)
            throw std::invalid_argument("expected a number, got '" + std::string(text) + "'");
        if constexpr (std::is_floating_point_v<T>)
            if (!std::isfinite(value))
                throw std::invalid_argument("expected a finite number, got '" + std::string(text) + "'");
        return value;
    }

    inline bool parse_bool(std::string_view text)
    {
        if (text == "true" || text == "1" || text == "yes")
            return true;
        if (text == "false" || text == "0" || text == "no")
            return false;
        throw std::invalid_argument("expected true or false, got '" + std::string(text) + "'");
    }

    inline std::vector<std::size_t> parse_widths(std::string_view text)
    {
        std::vector<std::size_t> out;
        if (trim(text).empty())
            return out;
        std::size_t start = 0;
        for (;;) {
            const auto comma = text.find(',', start);
            out.push_back(parse_number<std::size_t>(trim(text.substr(start, comma - start))));
            if (comma == std::string_view::npos)
                break;
            start = comma + 1;
        }
        return out;
    }

    inline std::string format_widths(const std::vector<std::size_t>& widths)
    {
        std::string out;
        for (std::size_t i = 0; i < widths.size(); ++i)
            out += (i ? "," : "") + std::to_string(widths[i]);
        return out;
    }

    inline std::string_view format_name(CorpusFormat f)
    {
        switch (f) {
        case CorpusFormat::NewsgroupDirs: return "newsgroup-dirs";
        case CorpusFormat::LabeledLines: return "labeled-lines";
        case CorpusFormat::UnlabeledLines: return "unlabeled-lines";
        }
        return "";
    }

    // Converts library errors from the parse_* helpers into field messages.
    template <class F>
    auto guarded(F parse)
    {
        return [parse](std::string_view text) {
            try {
                parse(text);
            } catch (const Error& e) {
                throw std::invalid_argument(e.message());
            }
        };
    }

    inline std::vector<ConfigField> config_fields(RunConfig& c)
    {
        auto text = [](std::string& field) {
            return ConfigField{"", [f = &field](std::string_view v) { *f = std::string(v); }, [f = &field] { return *f; }};
        };
        auto size = [](std::size_t& field) {
            return ConfigField{"", [f = &field](std::string_view v) { *f = parse_number<std::size_t>(v); },
                               [f = &field] { return std::to_string(*f); }};
        };
        auto u64 = [](std::uint64_t& field) {
            return ConfigField{"", [f = &field](std::string_view v) { *f = parse_number<std::uint64_t>(v); },
                               [f = &field] { return std::to_string(*f); }};
        };
        auto real = [](double& field) {
            return ConfigField{"", [f = &field](std::string_view v) { *f = parse_number<double>(v); },
                               [f = &field] { return format_shortest(*f); }};
        };
        auto flag = [](bool& field) {
            return ConfigField{"", [f = &field](std::string_view v) { *f = parse_bool(v); },
                               [f = &field] { return std::string(*f ? "true" : "false"); }};
        };
        auto named = [](std::string key, ConfigField f) {
            f.key = std::move(key);
            return f;
        };

        std::vector<ConfigField> fields = {
            named("corpus.train", text(c.corpus_train)),
            named("corpus.test", text(c.corpus_test)),
            {"corpus.format", guarded([&c](std::string_view v) { c.corpus_format = parse_corpus_format(v); }),
             [&c] { return std::string(format_name(c.corpus_format)); }},
            named("corpus.vocab_size", size(c.corpus_vocab_size)),
            named("corpus.seed", u64(c.corpus_seed)),
            {"model.mode", guarded([&c](std::string_view v) { c.model.mode = parse_model_mode(v); }),
             [&c] { return std::string(to_string(c.model.mode)); }},
            named("model.d", size(c.model.latent_dim)),
            named("model.k", size(c.model.window)),
            {"model.encoder_layers", [&c](std::string_view v) { c.model.encoder_layers = parse_widths(v); },
             [&c] { return format_widths(c.model.encoder_layers); }},
            named("model.samples_train", size(c.model.samples_train)),
            named("model.samples_eval", size(c.model.samples_eval)),
            {"train.learning_rate",
             [&c](std::string_view v) {
                 c.train.learning_rate = parse_number<double>(v);
                 c.learning_rate_given = true;
             },
             [&c] { return format_shortest(c.train.learning_rate); }},
            named("train.epochs", size(c.train.epochs)),
            named("train.batch_size", size(c.train.batch_size)),
            named("train.seed", u64(c.train.seed)),
            named("train.beta1", real(c.train.beta1)),
            named("train.beta2", real(c.train.beta2)),
            named("train.eps_adam", real(c.train.eps_adam)),
            named("train.deterministic", flag(c.train.deterministic)),
            named("train.checkpoint_every", size(c.train.checkpoint_every)),
            named("train.threads", size(c.train.threads)),
            {"eval.relevance", guarded([&c](std::string_view v) { c.relevance = parse_relevance(v); }),
             [&c] { return std::string(c.relevance == Relevance::Exact ? "exact" : "jaccard"); }},
            named("eval.samples", size(c.eval_samples)),
            named("eval.seed", u64(c.eval_seed)),
            named("eval.neighbors", size(c.neighbors)),
            {"eval.space", guarded([&c](std::string_view v) { c.space = parse_embedding_space(v); }),
             [&c] { return std::string(c.space == EmbeddingSpace::Global ? "global" : "local"); }},
            named("probe.learning_rate", real(c.probe.learning_rate)),
            named("probe.epochs", size(c.probe.epochs)),
            named("probe.batch_size", size(c.probe.batch_size)),
            named("probe.seed", u64(c.probe.seed)),
            named("probe.standardize", flag(c.probe.standardize)),
            named("out", text(c.out)),
        };
        return fields;
    }

} // namespace detail

/// Every key accepted in a config file or override.
inline std::vector<std::string> run_config_keys()
{
    RunConfig scratch;
    std::vector<std::string> keys;
    for (const auto& f : detail::config_fields(scratch))
        keys.push_back(f.key);
    return keys;
}

/// Problems with an already-populated config, one message per field.
inline std::vector<std::string> run_config_violations(const RunConfig& c)
{
    std::vector<std::string> out;
    if (c.corpus_vocab_size < 1)
        out.emplace_back("corpus.vocab_size must be >= 1");
    auto model = c.model;
    model.vocab_size = std::max<std::size_t>(model.vocab_size, 1);
    for (auto& v : model.violations())
        out.push_back(std::move(v));
    for (auto& v : c.train.violations())
        out.push_back(std::move(v));
    if (c.eval_samples < 1)
        out.emplace_back("eval.samples must be >= 1");
    if (c.neighbors < 1)
        out.emplace_back("eval.neighbors must be >= 1");
    if (!(c.probe.learning_rate > 0.0))
        out.emplace_back("probe.learning_rate must be > 0");
    if (c.probe.epochs < 1)
        out.emplace_back("probe.epochs must be >= 1");
    if (c.probe.batch_size < 1)
        out.emplace_back("probe.batch_size must be >= 1");
    if (c.out.empty())
        out.emplace_back("out must be non-empty");
    return out;
}

/// Builds a RunConfig from settings, reporting every bad key or value at once
/// as a single InvalidConfig error.
inline RunConfig make_run_config(const Settings& settings)
{
    RunConfig config;
    auto fields = detail::config_fields(config);
    std::vector<std::string> problems;
    for (const auto& [key, value] : settings.values()) {
        const auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.key == key; });
        if (it == fields.end()) {
            problems.push_back("unknown key '" + key + "'");
            continue;
        }
        try {
            it->set(value);
        } catch (const std::invalid_argument& e) {
            problems.push_back(key + ": " + e.what());
        }
    }
    if (!config.learning_rate_given)
        config.train.learning_rate = TrainConfig::default_learning_rate(config.model.mode);
    for (auto& v : run_config_violations(config))
        problems.push_back(std::move(v));
    if (!problems.empty()) {
        std::string message;
        for (const auto& p : problems)
            message += (message.empty() ? "" : "; ") + p;
        throw Error(ErrorKind::InvalidConfig, message);
    }
    return config;
}

/// The effective config as sorted key=value lines; reading it back gives the same config.
inline void write_run_config(std::ostream& out, const RunConfig& config)
{
    auto copy = config;
    auto fields = detail::config_fields(copy);
    std::sort(fields.begin(), fields.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
    for (const auto& f : fields)
        out << f.key << '=' << f.get() << '\n';
}

} // namespace savae
