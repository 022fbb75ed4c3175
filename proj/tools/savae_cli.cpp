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
// savae: command-line driver for preprocessing, training and evaluation.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "savae/checkpoint.hpp"
#include "savae/corpus.hpp"
#include "savae/evaluation.hpp"
#include "savae/inference.hpp"
#include "savae/run_config.hpp"
#include "savae/training.hpp"

namespace fs = std::filesystem;
using namespace savae;

namespace {

constexpr const char* kPrecedence = "Settings precedence, lowest first: built-in defaults, --config file, "
                                    "--set KEY=VALUE overrides, dedicated flags such as --epochs.";

/// Options shared by every subcommand, plus the flag-to-key bindings.
struct Invocation {
    std::string name;
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string seed_key;
    bool deterministic = false;
    std::string out;
    std::map<std::string, std::string> flags;
    std::map<std::string, std::string> inputs;
};

void add_common(CLI::App* sub, Invocation& inv, const std::string& seed_key)
{
    inv.seed_key = seed_key;
    sub->add_option("--config", inv.config_path, "key=value config file");
    sub->add_option("--set", inv.overrides, "override a config key, KEY=VALUE (repeatable)");
    if (!seed_key.empty())
        sub->add_option("--seed", inv.seed, "seed, same as --set " + seed_key + "=N");
    sub->add_flag("--deterministic", inv.deterministic, "fixed reduction order and a single worker");
    sub->add_option("--out", inv.out, "output directory (config key 'out')");
    sub->footer(kPrecedence);
}

/// A flag that writes a config key.
void bind(CLI::App* sub, Invocation& inv, const std::string& flag, const std::string& key, const std::string& help)
{
    sub->add_option_function<std::string>(
        flag, [&inv, key](const std::string& v) { inv.flags[key] = v; }, help + " (" + key + ")");
}

/// A required or optional input path recorded in the manifest.
void input(CLI::App* sub, Invocation& inv, const std::string& flag, const std::string& name, const std::string& help,
           bool required = true)
{
    auto* opt = sub->add_option_function<std::string>(
        flag, [&inv, name](const std::string& v) { inv.inputs[name] = v; }, help);
    if (required)
        opt->required();
}

RunConfig resolve(const Invocation& inv, Settings& settings)
{
    if (!inv.config_path.empty())
        settings.merge_file(inv.config_path);
    for (const auto& o : inv.overrides)
        settings.merge_override(o);
    for (const auto& [key, value] : inv.flags)
        settings.set(key, value);
    if (inv.seed)
        settings.set(inv.seed_key, std::to_string(*inv.seed));
    if (inv.deterministic)
        settings.set("train.deterministic", "true");
    if (!inv.out.empty())
        settings.set("out", inv.out);
    return make_run_config(settings);
}

std::size_t worker_bound()
{
    const char* env = std::getenv("SAVAE_THREADS");
    if (env == nullptr || *env == '\0')
        return 0;
    try {
        return detail::parse_number<std::size_t>(env);
    } catch (const std::invalid_argument&) {
        throw Error(ErrorKind::InvalidConfig, "SAVAE_THREADS must be a positive integer, got '" + std::string(env) + "'");
    }
}

void apply_thread_policy(RunConfig& config, const Settings& settings)
{
    if (config.train.deterministic) {
        config.train.threads = 1;
        return;
    }
    if (!settings.values().contains("train.threads"))
        config.train.threads = std::max(1u, std::thread::hardware_concurrency());
    if (const auto bound = worker_bound(); bound > 0)
        config.train.threads = std::min(config.train.threads, bound);
}

std::ofstream open_output(const fs::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorKind::IoError, "cannot write " + path.string());
    return out;
}

void finish(std::ofstream& out, const fs::path& path)
{
    out.flush();
    if (!out)
        throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

fs::path prepare_out(const RunConfig& config)
{
    fs::path dir(config.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw Error(ErrorKind::IoError, "cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

void write_manifest(const fs::path& dir, const Invocation& inv, const RunConfig& config, const std::string& tag = "")
{
    const auto path = dir / ("manifest-" + inv.name + (tag.empty() ? "" : "-" + tag) + ".txt");
    auto out = open_output(path);
    out << "command=" << inv.name << '\n';
    for (const auto& [name, value] : inv.inputs)
        out << "input." << name << '=' << value << '\n';
    write_run_config(out, config);
    finish(out, path);
}

std::vector<DocRepresentation> read_reps(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::IoError, "cannot read " + path.string());
    return read_representations(in);
}

Checkpoint load_model(const Invocation& inv, const Settings& settings, const RunConfig& config)
{
    const fs::path path = inv.inputs.at("model");
    if (settings.values().contains("model.mode"))
        return load_checkpoint(path, config.model.mode);
    return load_checkpoint(path);
}

const std::vector<Document>& pick_split(const CorpusSplit& corpus, const std::string& split)
{
    if (split == "train")
        return corpus.train;
    if (split == "test")
        return corpus.test;
    throw Error(ErrorKind::InvalidConfig, "split must be 'train' or 'test', got '" + split + "'");
}

void check_vocabulary(const Checkpoint& model, const CorpusSplit& corpus)
{
    if (model.config.vocab_size != corpus.vocabulary.size())
        throw Error(ErrorKind::InvalidConfig, "model vocabulary size " + std::to_string(model.config.vocab_size)
                        + " differs from corpus vocabulary size " + std::to_string(corpus.vocabulary.size()));
}

// ---------------------------------------------------------------------------

void cmd_preprocess(const Invocation& inv, const RunConfig& config)
{
    if (config.corpus_train.empty())
        throw Error(ErrorKind::InvalidConfig, "corpus.train is required (--train)");
    const auto train_raw = load_corpus(config.corpus_train, config.corpus_format);
    std::vector<RawDocument> test_raw;
    if (!config.corpus_test.empty())
        test_raw = load_corpus(config.corpus_test, config.corpus_format);
    const auto split = make_corpus_split(train_raw, test_raw, config.corpus_vocab_size, config.corpus_seed);

    const auto dir = prepare_out(config);
    save_corpus(split, dir / "corpus.savc");
    write_manifest(dir, inv, config);

    auto empty = [](const std::vector<Document>& docs) {
        return std::count_if(docs.begin(), docs.end(), [](const Document& d) { return d.excluded(); });
    };
    std::cout << "vocabulary " << split.vocabulary.size() << "\ntrain " << split.train.size() << " ("
              << empty(split.train) << " empty)\ntest " << split.test.size() << " (" << empty(split.test)
              << " empty)\n";
}

void cmd_train(const Invocation& inv, const RunConfig& config)
{
    const auto corpus = load_corpus_file(inv.inputs.at("corpus"));
    auto model_config = config.model;
    model_config.vocab_size = corpus.vocabulary.size();

    const auto dir = prepare_out(config);
    write_manifest(dir, inv, config);
    const auto every = config.train.checkpoint_every;
    if (every > 0)
        fs::create_directories(dir / "checkpoints");

    const auto result = train(corpus, model_config, config.train, [&](const EpochRecord& r, const ModelParams& p) {
        std::cout << "epoch " << r.epoch << " elbo " << r.mean_elbo << " kl " << r.mean_kl << " perplexity "
                  << r.perplexity << '\n';
        if (every > 0 && r.epoch % every == 0)
            save_checkpoint(p, model_config, dir / "checkpoints" / ("epoch-" + std::to_string(r.epoch) + ".savm"));
    });
    save_checkpoint(result.params, model_config, dir / "model.savm");
    const auto log_path = dir / "train_log.csv";
    auto log = open_output(log_path);
    result.log.write_csv(log);
    finish(log, log_path);
}

void cmd_represent(const Invocation& inv, const Settings& settings, const RunConfig& config, const std::string& split)
{
    const auto model = load_model(inv, settings, config);
    const auto corpus = load_corpus_file(inv.inputs.at("corpus"));
    check_vocabulary(model, corpus);
    const auto& docs = pick_split(corpus, split);
    const auto reps = represent_batch(docs, model.params, model.config);

    const auto dir = prepare_out(config);
    const auto path = dir / (split + ".csv");
    auto out = open_output(path);
    write_representations(out, reps);
    finish(out, path);
    write_manifest(dir, inv, config, split);
    const auto skipped = std::count_if(reps.begin(), reps.end(), [](const auto& r) { return r.excluded; });
    std::cout << "documents " << reps.size() - static_cast<std::size_t>(skipped) << "\nskipped " << skipped << '\n';
}

void cmd_bound(const Invocation& inv, const Settings& settings, const RunConfig& config, const std::string& split)
{
    const auto model = load_model(inv, settings, config);
    const auto corpus = load_corpus_file(inv.inputs.at("corpus"));
    check_vocabulary(model, corpus);
    const auto report = evaluate_bound(pick_split(corpus, split), model.params, model.config, config.eval_samples,
                                       config.eval_seed);
    const auto dir = prepare_out(config);
    const auto path = dir / "bound.txt";
    std::ostringstream text;
    text << "split=" << split << "\nsamples=" << config.eval_samples << "\nseed=" << config.eval_seed
         << "\ndocuments=" << report.documents << "\nskipped=" << report.skipped
         << "\nmean_elbo=" << format_shortest(report.mean_elbo) << "\nperplexity=" << format_shortest(report.perplexity)
         << '\n';
    auto out = open_output(path);
    out << text.str();
    finish(out, path);
    write_manifest(dir, inv, config);
    std::cout << text.str();
}

void cmd_eval_retrieval(const Invocation& inv, const RunConfig& config)
{
    const auto queries = read_reps(inv.inputs.at("query"));
    const auto index = read_reps(inv.inputs.at("index"));
    const auto curve = retrieval_pr(queries, index, config.relevance);
    const auto dir = prepare_out(config);
    const auto path = dir / "pr_curve.csv";
    auto out = open_output(path);
    curve.write_csv(out);
    finish(out, path);
    write_manifest(dir, inv, config);
    std::cout << "queries " << curve.queries << "\nskipped " << curve.skipped << '\n';
}

void cmd_eval_cluster(const Invocation& inv, const RunConfig& config)
{
    const auto metrics = cluster_metrics(read_reps(inv.inputs.at("reps")));
    const auto dir = prepare_out(config);
    const auto path = dir / "cluster_metrics.txt";
    std::ostringstream text;
    metrics.write_report(text);
    auto out = open_output(path);
    out << text.str();
    finish(out, path);
    write_manifest(dir, inv, config);
    std::cout << text.str();
}

void cmd_neighbors(const Invocation& inv, const Settings& settings, const RunConfig& config,
                   const std::vector<std::string>& words)
{
    const auto model = load_model(inv, settings, config);
    const auto corpus = load_corpus_file(inv.inputs.at("corpus"));
    check_vocabulary(model, corpus);
    const auto& embeddings = word_embeddings(model.params, model.config, config.space);

    std::ostringstream text;
    text.precision(6);
    text << "query\trank\tneighbor\tdistance\n";
    for (const auto& word : words) {
        const auto found = nearest_words(word, corpus.vocabulary, embeddings, config.neighbors);
        for (std::size_t i = 0; i < found.size(); ++i)
            text << word << '\t' << i + 1 << '\t' << found[i].token << '\t' << std::fixed << found[i].distance
                 << std::defaultfloat << '\n';
    }
    const auto dir = prepare_out(config);
    const auto path = dir / "neighbors.txt";
    auto out = open_output(path);
    out << text.str();
    finish(out, path);
    write_manifest(dir, inv, config);
    std::cout << text.str();
}

void cmd_probe(const Invocation& inv, const RunConfig& config)
{
    const auto result = linear_probe(read_reps(inv.inputs.at("train")), read_reps(inv.inputs.at("test")), config.probe);
    const auto dir = prepare_out(config);
    const auto path = dir / "probe.txt";
    std::ostringstream text;
    text << "accuracy=" << format_shortest(result.accuracy) << "\npositive_label=" << result.positive_label
         << "\nnegative_label=" << result.negative_label << "\ntrain_size=" << result.train_size
         << "\ntest_size=" << result.test_size << '\n';
    auto out = open_output(path);
    out << text.str();
    finish(out, path);
    write_manifest(dir, inv, config);
    std::cout << text.str();
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app("SAVAE and NVDM document models: preprocess, train, represent and evaluate", "savae");
    app.require_subcommand(1);
    app.footer(kPrecedence);

    std::map<std::string, Invocation> invocations;
    auto command = [&](const std::string& name, const std::string& help, const std::string& seed_key) {
        auto& inv = invocations[name];
        inv.name = name;
        auto* sub = app.add_subcommand(name, help);
        add_common(sub, inv, seed_key);
        return std::pair<CLI::App*, Invocation*>{sub, &inv};
    };

    auto [pre, pre_inv] = command("preprocess", "tokenize a raw corpus into corpus.savc", "corpus.seed");
    bind(pre, *pre_inv, "--train", "corpus.train", "training corpus path");
    bind(pre, *pre_inv, "--test", "corpus.test", "test corpus path");
    bind(pre, *pre_inv, "--format", "corpus.format", "newsgroup-dirs, labeled-lines or unlabeled-lines");
    bind(pre, *pre_inv, "--vocab-size", "corpus.vocab_size", "vocabulary size");

    auto [tr, tr_inv] = command("train", "train a model on corpus.savc", "train.seed");
    input(tr, *tr_inv, "--corpus", "corpus", "encoded corpus file");
    bind(tr, *tr_inv, "--mode", "model.mode", "savae or nvdm");
    bind(tr, *tr_inv, "--d", "model.d", "latent dimension");
    bind(tr, *tr_inv, "--k", "model.k", "local window");
    bind(tr, *tr_inv, "--encoder-layers", "model.encoder_layers", "hidden widths, comma separated");
    bind(tr, *tr_inv, "--epochs", "train.epochs", "epochs");
    bind(tr, *tr_inv, "--lr", "train.learning_rate", "Adam learning rate");
    bind(tr, *tr_inv, "--batch-size", "train.batch_size", "documents per batch");
    bind(tr, *tr_inv, "--checkpoint-every", "train.checkpoint_every", "epochs between checkpoints, 0 disables");
    bind(tr, *tr_inv, "--threads", "train.threads", "workers when not deterministic");

    std::string rep_split = "test";
    auto [rp, rp_inv] = command("represent", "export posterior means as CSV", "");
    input(rp, *rp_inv, "--model", "model", "checkpoint file");
    input(rp, *rp_inv, "--corpus", "corpus", "encoded corpus file");
    rp->add_option("--split", rep_split, "train or test")->capture_default_str();
    bind(rp, *rp_inv, "--mode", "model.mode", "expected model mode");

    std::string bound_split = "test";
    auto [bd, bd_inv] = command("bound", "multi-sample ELBO and perplexity", "eval.seed");
    input(bd, *bd_inv, "--model", "model", "checkpoint file");
    input(bd, *bd_inv, "--corpus", "corpus", "encoded corpus file");
    bd->add_option("--split", bound_split, "train or test")->capture_default_str();
    bind(bd, *bd_inv, "--samples", "eval.samples", "samples per document");
    bind(bd, *bd_inv, "--mode", "model.mode", "expected model mode");

    auto [er, er_inv] = command("eval-retrieval", "precision-recall curve", "");
    input(er, *er_inv, "--query", "query", "query representations CSV");
    input(er, *er_inv, "--index", "index", "index representations CSV");
    bind(er, *er_inv, "--relevance", "eval.relevance", "exact or jaccard");

    auto [ec, ec_inv] = command("eval-cluster", "Davies-Bouldin, Dunn and silhouette over label clusters", "");
    input(ec, *ec_inv, "--reps", "reps", "representations CSV");

    std::vector<std::string> words;
    auto [nb, nb_inv] = command("neighbors", "nearest words in an embedding space", "");
    input(nb, *nb_inv, "--model", "model", "checkpoint file");
    input(nb, *nb_inv, "--corpus", "corpus", "encoded corpus file holding the vocabulary");
    nb->add_option("--words", words, "query words")->required()->delimiter(',');
    bind(nb, *nb_inv, "--space", "eval.space", "global or local");
    bind(nb, *nb_inv, "--n", "eval.neighbors", "neighbors per word");
    bind(nb, *nb_inv, "--mode", "model.mode", "expected model mode");

    auto [pb, pb_inv] = command("probe", "logistic-regression probe accuracy", "probe.seed");
    input(pb, *pb_inv, "--train", "train", "training representations CSV");
    input(pb, *pb_inv, "--test", "test", "test representations CSV");
    bind(pb, *pb_inv, "--lr", "probe.learning_rate", "Adam learning rate");
    bind(pb, *pb_inv, "--epochs", "probe.epochs", "epochs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "savae: error: InvalidConfig: " << e.what() << '\n';
        return 2;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        auto& inv = invocations.at(sub->get_name());
        Settings settings;
        auto config = resolve(inv, settings);
        apply_thread_policy(config, settings);

        const auto& name = inv.name;
        if (name == "preprocess")
            cmd_preprocess(inv, config);
        else if (name == "train")
            cmd_train(inv, config);
        else if (name == "represent")
            cmd_represent(inv, settings, config, rep_split);
        else if (name == "bound")
            cmd_bound(inv, settings, config, bound_split);
        else if (name == "eval-retrieval")
            cmd_eval_retrieval(inv, config);
        else if (name == "eval-cluster")
            cmd_eval_cluster(inv, config);
        else if (name == "neighbors")
            cmd_neighbors(inv, settings, config, words);
        else if (name == "probe")
            cmd_probe(inv, config);
    } catch (const Error& e) {
        std::cerr << "savae: error: " << e.what() << '\n';
        return 1;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "savae: error: IoError: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "savae: error: Internal: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
