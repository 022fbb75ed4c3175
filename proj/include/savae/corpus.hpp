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
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "savae/binary_io.hpp"
#include "savae/error.hpp"
#include "savae/rng.hpp"

namespace savae {

using TokenId = std::uint32_t;

namespace detail {

    // Decodes one code point. Bytes that do not start a valid UTF-8 sequence
    // are taken as Latin-1, which is how most legacy Usenet text is encoded.
    inline char32_t next_code_point(std::string_view text, std::size_t& pos)
    {
        const auto lead = static_cast<unsigned char>(text[pos]);
        std::size_t extra = 0;
        char32_t cp = lead;
        if (lead >= 0xC2 && lead <= 0xDF) {
            extra = 1;
            cp = lead & 0x1Fu;
        } else if (lead >= 0xE0 && lead <= 0xEF) {
            extra = 2;
            cp = lead & 0x0Fu;
        } else if (lead >= 0xF0 && lead <= 0xF4) {
            extra = 3;
            cp = lead & 0x07u;
        }
        if (extra == 0 || pos + extra >= text.size()) {
            ++pos;
            return lead;
        }
        for (std::size_t i = 1; i <= extra; ++i) {
            const auto cont = static_cast<unsigned char>(text[pos + i]);
            if ((cont & 0xC0u) != 0x80u) {
                ++pos;
                return lead;
            }
            cp = (cp << 6) | (cont & 0x3Fu);
        }
        pos += extra + 1;
        return cp;
    }

    inline void append_utf8(std::string& out, char32_t cp)
    {
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }

    // Word characters: ASCII letters, digits and '_', plus non-ASCII letters
    // outside the Latin-1 symbol range and the common punctuation blocks.
    inline bool is_word_char(char32_t cp) noexcept
    {
        if (cp < 0x80)
            return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9') || cp == '_';
        if (cp < 0xC0)
            return cp == 0xAA || cp == 0xB2 || cp == 0xB3 || cp == 0xB5 || cp == 0xB9 || cp == 0xBA;
        if (cp == 0xD7 || cp == 0xF7)
            return false;
        if (cp >= 0x2000 && cp <= 0x2BFF)
            return false;
        if (cp >= 0x3000 && cp <= 0x303F)
            return false;
        if (cp >= 0xFE30 && cp <= 0xFE4F)
            return false;
        if ((cp >= 0xFF00 && cp <= 0xFF0F) || (cp >= 0xFF1A && cp <= 0xFF20))
            return false;
        return true;
    }

    inline char32_t to_lower(char32_t cp) noexcept
    {
        if (cp >= 'A' && cp <= 'Z')
            return cp + 32;
        if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7)
            return cp + 32;
        if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2)
            return cp + 32;
        if (cp >= 0x410 && cp <= 0x42F)
            return cp + 32;
        if (cp >= 0x400 && cp <= 0x40F)
            return cp + 80;
        return cp;
    }

} // namespace detail

/// Lowercased maximal runs of at least two word characters, in order.
inline std::vector<std::string> tokenize(std::string_view text)
{
    std::vector<std::string> tokens;
    std::string current;
    std::size_t run_length = 0;
    auto flush = [&] {
        if (run_length >= 2)
            tokens.push_back(current);
        current.clear();
        run_length = 0;
    };
    std::size_t pos = 0;
    while (pos < text.size()) {
        const char32_t cp = detail::next_code_point(text, pos);
        if (detail::is_word_char(cp)) {
            detail::append_utf8(current, detail::to_lower(cp));
            ++run_length;
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

/// Token <-> id bijection. Ids are assigned by descending corpus frequency,
/// ties broken by the lexicographic order of the token bytes.
class Vocabulary {
public:
    Vocabulary() = default;

    Vocabulary(std::vector<std::string> tokens, std::vector<std::uint64_t> counts)
        : tokens_(std::move(tokens))
        , counts_(std::move(counts))
    {
        if (tokens_.size() != counts_.size())
            throw Error(ErrorKind::ParseError, "vocabulary token/count size mismatch");
        index_.reserve(tokens_.size());
        for (std::size_t i = 0; i < tokens_.size(); ++i) {
            if (counts_[i] == 0)
                throw Error(ErrorKind::ParseError, "vocabulary count for '" + tokens_[i] + "' is zero");
            if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
                throw Error(ErrorKind::ParseError, "duplicate vocabulary token '" + tokens_[i] + "'");
        }
    }

    std::size_t size() const noexcept { return tokens_.size(); }
    bool empty() const noexcept { return tokens_.empty(); }

    std::optional<TokenId> find(std::string_view token) const
    {
        const auto it = index_.find(std::string(token));
        if (it == index_.end())
            return std::nullopt;
        return it->second;
    }

    const std::string& token(TokenId id) const { return tokens_.at(id); }
    std::uint64_t count(TokenId id) const { return counts_.at(id); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b)
    {
        return a.tokens_ == b.tokens_ && a.counts_ == b.counts_;
    }

private:
    std::vector<std::string> tokens_;
    std::vector<std::uint64_t> counts_;
    std::unordered_map<std::string, TokenId> index_;
};

inline Vocabulary build_vocabulary(std::span<const std::vector<std::string>> docs, std::size_t max_size)
{
    if (max_size < 1)
        throw Error(ErrorKind::InvalidConfig, "vocabulary size must be at least 1");
    std::unordered_map<std::string, std::uint64_t> frequency;
    for (const auto& doc : docs)
        for (const auto& token : doc)
            ++frequency[token];
    if (frequency.empty())
        throw Error(ErrorKind::EmptyCorpus, "no tokens to build a vocabulary from");

    std::vector<std::pair<std::string, std::uint64_t>> ranked(frequency.begin(), frequency.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second)
            return a.second > b.second;
        return a.first < b.first;
    });
    ranked.resize(std::min(max_size, ranked.size()));

    std::vector<std::string> tokens;
    std::vector<std::uint64_t> counts;
    tokens.reserve(ranked.size());
    counts.reserve(ranked.size());
    for (auto& [token, count] : ranked) {
        tokens.push_back(std::move(token));
        counts.push_back(count);
    }
    return Vocabulary(std::move(tokens), std::move(counts));
}

/// Ordered token ids of one document plus its (sorted, unique) label set.
struct Document {
    std::vector<TokenId> ids;
    std::vector<std::string> labels;

    std::size_t length() const noexcept { return ids.size(); }
    /// Empty documents are kept for reporting but excluded from training.
    bool excluded() const noexcept { return ids.empty(); }

    friend bool operator==(const Document&, const Document&) = default;
};

inline std::vector<std::string> normalize_labels(std::vector<std::string> labels)
{
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    return labels;
}

inline Document encode_document(std::span<const std::string> tokens, const Vocabulary& vocab,
                                std::vector<std::string> labels = {})
{
    Document doc;
    doc.labels = normalize_labels(std::move(labels));
    doc.ids.reserve(tokens.size());
    for (const auto& token : tokens)
        if (auto id = vocab.find(token))
            doc.ids.push_back(*id);
    return doc;
}

enum class CorpusFormat { NewsgroupDirs, LabeledLines, UnlabeledLines };

inline CorpusFormat parse_corpus_format(std::string_view name)
{
    if (name == "newsgroup-dirs")
        return CorpusFormat::NewsgroupDirs;
    if (name == "labeled-lines")
        return CorpusFormat::LabeledLines;
    if (name == "unlabeled-lines")
        return CorpusFormat::UnlabeledLines;
    throw Error(ErrorKind::InvalidConfig, "unknown corpus format '" + std::string(name) + "'");
}

struct RawDocument {
    std::string text;
    std::vector<std::string> labels;
};

namespace detail {

    inline std::vector<std::string> split_lines(std::string_view text)
    {
        std::vector<std::string> lines;
        std::size_t start = 0;
        while (start <= text.size()) {
            auto end = text.find('\n', start);
            if (end == std::string_view::npos)
                end = text.size();
            std::string line(text.substr(start, end - start));
            if (!line.empty() && line.back() == '\r')
                line.pop_back();
            lines.push_back(std::move(line));
            start = end + 1;
        }
        if (!text.empty() && text.back() == '\n')
            lines.pop_back();
        return lines;
    }

    inline std::string_view trim(std::string_view s)
    {
        const auto first = s.find_first_not_of(" \t\r");
        if (first == std::string_view::npos)
            return {};
        const auto last = s.find_last_not_of(" \t\r");
        return s.substr(first, last - first + 1);
    }

    inline bool is_dash_rule(std::string_view line)
    {
        const auto t = trim(line);
        return !t.empty() && t.find_first_not_of('-') == std::string_view::npos;
    }

    inline std::string read_file(const std::filesystem::path& path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "'");
        std::ostringstream buffer;
        buffer << in.rdbuf();
        return buffer.str();
    }

} // namespace detail

/// Removes Usenet metadata from a message:
///  - header: every line up to and including the first blank line,
///  - quotes: lines starting with '>',
///  - footer: everything from the last line made only of '-' characters on.
/// A message without a blank line has no header.
inline std::string strip_newsgroup_metadata(std::string_view message)
{
    auto lines = detail::split_lines(message);

    std::size_t body_start = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (detail::trim(lines[i]).empty()) {
            body_start = i + 1;
            break;
        }
    }
    std::vector<std::string> body(lines.begin() + static_cast<std::ptrdiff_t>(std::min(body_start, lines.size())),
                                  lines.end());

    for (std::size_t i = body.size(); i-- > 0;) {
        if (detail::is_dash_rule(body[i])) {
            body.resize(i);
            break;
        }
    }

    std::string out;
    for (const auto& line : body) {
        if (!line.empty() && line.front() == '>')
            continue;
        out += line;
        out += '\n';
    }
    return out;
}

/// Reads raw documents. Directory and file traversal is in sorted path order.
inline std::vector<RawDocument> load_corpus(const std::filesystem::path& path, CorpusFormat format)
{
    namespace fs = std::filesystem;
    if (!fs::exists(path))
        throw Error(ErrorKind::IoError, "path '" + path.string() + "' does not exist");

    std::vector<RawDocument> docs;
    if (format == CorpusFormat::NewsgroupDirs) {
        if (!fs::is_directory(path))
            throw Error(ErrorKind::IoError, "'" + path.string() + "' is not a directory");
        std::vector<fs::path> groups;
        for (const auto& entry : fs::directory_iterator(path))
            if (entry.is_directory())
                groups.push_back(entry.path());
        std::sort(groups.begin(), groups.end());
        for (const auto& group : groups) {
            std::vector<fs::path> files;
            for (const auto& entry : fs::directory_iterator(group))
                if (entry.is_regular_file())
                    files.push_back(entry.path());
            std::sort(files.begin(), files.end());
            for (const auto& file : files)
                docs.push_back({strip_newsgroup_metadata(detail::read_file(file)), {group.filename().string()}});
        }
        return docs;
    }

    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "'");
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (format == CorpusFormat::UnlabeledLines) {
            docs.push_back({line, {}});
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw Error(ErrorKind::ParseError, "line " + std::to_string(line_number) + ": missing TAB after labels");
        std::vector<std::string> labels;
        std::string_view label_field(line.data(), tab);
        std::size_t start = 0;
        while (start <= label_field.size()) {
            auto comma = label_field.find(',', start);
            if (comma == std::string_view::npos)
                comma = label_field.size();
            auto label = detail::trim(label_field.substr(start, comma - start));
            if (label.empty())
                throw Error(ErrorKind::ParseError, "line " + std::to_string(line_number) + ": empty label");
            labels.emplace_back(label);
            start = comma + 1;
        }
        docs.push_back({line.substr(tab + 1), normalize_labels(std::move(labels))});
    }
    return docs;
}

/// Deterministic permutation: Fisher-Yates over CounterRng(seed).
template <class T>
std::vector<T> shuffle_split(std::vector<T> docs, std::uint64_t seed)
{
    CounterRng rng(seed);
    shuffle_in_place(std::span<T>(docs), rng);
    return docs;
}

struct CorpusSplit {
    std::vector<Document> train;
    std::vector<Document> test;
    Vocabulary vocabulary;
    std::uint64_t shuffle_seed = 0;

    friend bool operator==(const CorpusSplit&, const CorpusSplit&) = default;
};

/// Tokenizes and shuffles both sides, builds the vocabulary from train only.
inline CorpusSplit make_corpus_split(const std::vector<RawDocument>& train, const std::vector<RawDocument>& test,
                                     std::size_t vocab_size, std::uint64_t seed)
{
    struct Tokenized {
        std::vector<std::string> tokens;
        std::vector<std::string> labels;
    };
    auto tokenize_all = [](const std::vector<RawDocument>& raw) {
        std::vector<Tokenized> out;
        out.reserve(raw.size());
        for (const auto& doc : raw)
            out.push_back({tokenize(doc.text), doc.labels});
        return out;
    };
    auto train_tokens = shuffle_split(tokenize_all(train), seed);
    auto test_tokens = shuffle_split(tokenize_all(test), seed);

    std::vector<std::vector<std::string>> token_lists;
    token_lists.reserve(train_tokens.size());
    for (const auto& doc : train_tokens)
        token_lists.push_back(doc.tokens);

    CorpusSplit split;
    split.shuffle_seed = seed;
    split.vocabulary = build_vocabulary(token_lists, vocab_size);
    for (const auto& doc : train_tokens)
        split.train.push_back(encode_document(doc.tokens, split.vocabulary, doc.labels));
    for (const auto& doc : test_tokens)
        split.test.push_back(encode_document(doc.tokens, split.vocabulary, doc.labels));
    return split;
}

// Encoded corpus file: "SAVC", u32 version, vocabulary, u64 shuffle seed,
// then the train and test document blocks. Integers are little-endian.
inline constexpr char kCorpusMagic[] = "SAVC";
inline constexpr std::uint32_t kCorpusVersion = 1;

inline void write_corpus(std::ostream& out, const CorpusSplit& split)
{
    using namespace binary_io;
    out.write(kCorpusMagic, 4);
    write_u32(out, kCorpusVersion);
    const auto& vocab = split.vocabulary;
    write_u32(out, static_cast<std::uint32_t>(vocab.size()));
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        write_string(out, vocab.tokens()[i]);
        write_u64(out, vocab.counts()[i]);
    }
    write_u64(out, split.shuffle_seed);
    for (const auto* docs : {&split.train, &split.test}) {
        write_u32(out, static_cast<std::uint32_t>(docs->size()));
        for (const auto& doc : *docs) {
            write_u32(out, static_cast<std::uint32_t>(doc.labels.size()));
            for (const auto& label : doc.labels)
                write_string(out, label);
            write_u32(out, static_cast<std::uint32_t>(doc.ids.size()));
            for (auto id : doc.ids)
                write_u32(out, id);
        }
    }
}

inline CorpusSplit read_corpus(std::istream& in)
{
    binary_io::Reader reader(in, ErrorKind::ParseError, "corpus file");
    if (reader.magic(4) != "SAVC")
        reader.fail("bad magic, not an encoded corpus");
    if (const auto version = reader.u32(); version != kCorpusVersion)
        throw Error(ErrorKind::UnsupportedVersion, "corpus file version " + std::to_string(version));
    const auto vocab_size = reader.u32();
    std::vector<std::string> tokens;
    std::vector<std::uint64_t> counts;
    for (std::uint32_t i = 0; i < vocab_size; ++i) {
        tokens.push_back(reader.string());
        counts.push_back(reader.u64());
    }
    CorpusSplit split;
    split.vocabulary = Vocabulary(std::move(tokens), std::move(counts));
    split.shuffle_seed = reader.u64();
    for (auto* docs : {&split.train, &split.test}) {
        const auto n = reader.u32();
        docs->reserve(n);
        for (std::uint32_t d = 0; d < n; ++d) {
            Document doc;
            const auto n_labels = reader.u32();
            for (std::uint32_t j = 0; j < n_labels; ++j)
                doc.labels.push_back(reader.string());
            const auto n_ids = reader.u32();
            doc.ids.resize(n_ids);
            for (auto& id : doc.ids) {
                id = reader.u32();
                if (id >= vocab_size)
                    reader.fail("token id " + std::to_string(id) + " outside vocabulary");
            }
            docs->push_back(std::move(doc));
        }
    }
    if (!reader.at_end())
        reader.fail("trailing bytes after document blocks");
    return split;
}

inline void save_corpus(const CorpusSplit& split, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorKind::IoError, "cannot write '" + path.string() + "'");
    write_corpus(out, split);
    if (!out)
        throw Error(ErrorKind::IoError, "write to '" + path.string() + "' failed");
}

inline CorpusSplit load_corpus_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::IoError, "cannot open '" + path.string() + "'");
    return read_corpus(in);
}

} // namespace savae
