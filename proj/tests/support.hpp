// Shared fixtures for the unit and acceptance tests.
#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "savae/corpus.hpp"
#include "savae/model.hpp"

namespace savae::testing {

inline std::filesystem::path test_data_dir()
{
    return std::filesystem::path(__FILE__).parent_path() / "data";
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path()
            / ("savae_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::filesystem::create_directories(path.parent_path());
    std::ofstream(path, std::ios::binary) << text;
}

inline std::string read_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Random document of `length` ids below `vocab`.
inline Document random_document(std::mt19937_64& gen, std::size_t vocab, std::size_t length)
{
    std::uniform_int_distribution<TokenId> pick(0, static_cast<TokenId>(vocab - 1));
    Document doc;
    for (std::size_t i = 0; i < length; ++i)
        doc.ids.push_back(pick(gen));
    return doc;
}

/// Params with every entry drawn from N(0, scale^2), independent of init_params.
inline ModelParams random_params(const ModelConfig& config, std::mt19937_64& gen, double scale = 0.5)
{
    ModelParams params(ParameterArrays::zeros(config));
    std::normal_distribution<double> dist(0.0, scale);
    params.for_each_array([&](const std::string&, auto& a) {
        for (Index i = 0; i < a.size(); ++i)
            a.data()[i] = dist(gen);
    });
    return params;
}

/// Two-topic synthetic corpus with a shared pool of function words that
/// follow a fixed syntactic pattern. Topic words are disjoint per topic.
inline std::vector<RawDocument> two_topic_corpus(std::size_t n_docs, std::uint64_t seed, std::size_t words_per_doc = 40)
{
    const std::vector<std::vector<std::string>> topics = {
        {"goal", "team", "coach", "season", "player", "score", "league", "match"},
        {"gene", "cell", "protein", "virus", "disease", "patient", "dose", "trial"},
    };
    const std::vector<std::string> function_words = {"the", "of", "and", "in", "to", "was"};
    std::mt19937_64 gen(seed);
    std::vector<RawDocument> docs;
    for (std::size_t i = 0; i < n_docs; ++i) {
        const std::size_t topic = i % 2;
        std::uniform_int_distribution<std::size_t> pick_topic(0, topics[topic].size() - 1);
        std::uniform_int_distribution<std::size_t> pick_fn(0, function_words.size() - 1);
        std::string text;
        for (std::size_t w = 0; w < words_per_doc; ++w) {
            text += (w % 2 == 0 ? function_words[pick_fn(gen)] : topics[topic][pick_topic(gen)]);
            text += ' ';
        }
        docs.push_back({text, {topic == 0 ? "sports" : "medicine"}});
    }
    return docs;
}

/// Documents over `topics` topics with `topic_words` words each, alternating
/// function words and topic words; labels are "topic0", "topic1", ...
inline std::vector<RawDocument> multi_topic_corpus(std::size_t n_docs, std::size_t topics, std::size_t topic_words,
                                                   std::uint64_t seed, std::size_t words_per_doc = 60)
{
    const std::vector<std::string> function_words = {"the", "of", "and", "in", "to", "was", "for", "on"};
    std::mt19937_64 gen(seed);
    std::uniform_int_distribution<std::size_t> pick_fn(0, function_words.size() - 1);
    std::geometric_distribution<std::size_t> zipfish(0.15);
    std::vector<RawDocument> docs;
    for (std::size_t i = 0; i < n_docs; ++i) {
        const std::size_t topic = i % topics;
        std::string text;
        for (std::size_t w = 0; w < words_per_doc; ++w) {
            if (w % 2 == 0)
                text += function_words[pick_fn(gen)];
            else
                text += "t" + std::to_string(topic) + "w" + std::to_string(zipfish(gen) % topic_words);
            text += ' ';
        }
        docs.push_back({text, {"topic" + std::to_string(topic)}});
    }
    return docs;
}

} // namespace savae::testing
