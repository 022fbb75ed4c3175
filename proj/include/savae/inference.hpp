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

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "savae/model.hpp"

namespace savae {

/// Posterior mean of one document, with the labels carried through.
struct DocRepresentation {
    std::size_t id = 0;
    std::vector<std::string> labels;
    Vector values;
    /// Set for empty documents, which have no representation.
    bool excluded = false;
};

inline DocRepresentation represent(const Document& doc, const ModelParams& params, const ModelConfig& config,
                                   std::size_t id = 0)
{
    return {id, doc.labels, encode(doc, params, config).mu, false};
}

/// Representations in input order; empty documents become excluded placeholders.
inline std::vector<DocRepresentation> represent_batch(std::span<const Document> docs, const ModelParams& params,
                                                      const ModelConfig& config)
{
    std::vector<DocRepresentation> out;
    out.reserve(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (docs[i].excluded())
            out.push_back({i, docs[i].labels, Vector(), true});
        else
            out.push_back(represent(docs[i], params, config, i));
    }
    return out;
}

struct BoundReport {
    double mean_elbo = 0.0;
    double perplexity = 0.0;
    std::size_t documents = 0;
    std::size_t skipped = 0;
};

/// Multi-sample ELBO over a document set. Document i draws its noise from
/// substream i of CounterRng(seed), fresh for every sample.
inline BoundReport evaluate_bound(std::span<const Document> docs, const ModelParams& params,
                                  const ModelConfig& config, std::size_t samples, std::uint64_t seed)
{
    const CounterRng root(seed);
    BoundReport report;
    double total = 0.0;
    std::size_t tokens = 0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (docs[i].excluded()) {
            ++report.skipped;
            continue;
        }
        auto rng = root.substream(i);
        total += elbo(docs[i], params, config, rng, samples).total;
        tokens += docs[i].length();
        ++report.documents;
    }
    if (report.documents == 0)
        throw Error(ErrorKind::AllDocumentsEmpty, "bound evaluation needs at least one non-empty document");
    report.mean_elbo = total / static_cast<double>(report.documents);
    report.perplexity = std::exp(-total / static_cast<double>(tokens));
    return report;
}

// Representation CSV: header "id,labels,v0,...,v{d-1}", then one row per
// non-excluded document; labels are joined with '|'; values use shortest
// round-trip formatting so reading back is exact.

inline void write_representations(std::ostream& out, std::span<const DocRepresentation> reps)
{
    Index dim = -1;
    for (const auto& r : reps)
        if (!r.excluded) {
            if (dim >= 0 && r.values.size() != dim)
                throw Error(ErrorKind::InvalidConfig, "representations have mixed dimensions");
            dim = r.values.size();
        }
    out << "id,labels";
    for (Index j = 0; j < std::max<Index>(dim, 0); ++j)
        out << ",v" << j;
    out << '\n';
    char buffer[64];
    for (const auto& r : reps) {
        if (r.excluded)
            continue;
        out << r.id << ',';
        for (std::size_t k = 0; k < r.labels.size(); ++k) {
            if (r.labels[k].find_first_of(",|\n") != std::string::npos)
                throw Error(ErrorKind::InvalidConfig, "label '" + r.labels[k] + "' contains ',', '|' or newline");
            out << (k ? "|" : "") << r.labels[k];
        }
        for (Index j = 0; j < r.values.size(); ++j) {
            const auto res = std::to_chars(buffer, buffer + sizeof buffer, r.values[j]);
            out << ',' << std::string_view(buffer, static_cast<std::size_t>(res.ptr - buffer));
        }
        out << '\n';
    }
}

inline std::vector<DocRepresentation> read_representations(std::istream& in)
{
    auto split = [](const std::string& line) {
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
            const auto comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos)
                break;
            start = comma + 1;
        }
        return fields;
    };

    std::string line;
    if (!std::getline(in, line))
        throw Error(ErrorKind::ParseError, "representation CSV: missing header");
    const auto header = split(line);
    if (header.size() < 3 || header[0] != "id" || header[1] != "labels")
        throw Error(ErrorKind::ParseError, "representation CSV: header must start with 'id,labels,v0'");
    for (std::size_t j = 2; j < header.size(); ++j)
        if (header[j] != "v" + std::to_string(j - 2))
            throw Error(ErrorKind::ParseError, "representation CSV: unexpected column '" + header[j] + "'");
    const auto dim = static_cast<Index>(header.size() - 2);

    std::vector<DocRepresentation> reps;
    std::size_t line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty())
            continue;
        const auto where = "representation CSV line " + std::to_string(line_number) + ": ";
        const auto fields = split(line);
        if (static_cast<Index>(fields.size()) != dim + 2)
            throw Error(ErrorKind::ParseError, where + "expected " + std::to_string(dim + 2) + " fields");
        DocRepresentation r;
        const auto& id_field = fields[0];
        if (std::from_chars(id_field.data(), id_field.data() + id_field.size(), r.id).ec != std::errc())
            throw Error(ErrorKind::ParseError, where + "bad id '" + id_field + "'");
        std::size_t start = 0;
        const auto& label_field = fields[1];
        while (!label_field.empty() && start <= label_field.size()) {
            auto bar = label_field.find('|', start);
            if (bar == std::string::npos)
                bar = label_field.size();
            r.labels.push_back(label_field.substr(start, bar - start));
            start = bar + 1;
        }
        r.values.resize(dim);
        for (Index j = 0; j < dim; ++j) {
            const auto& f = fields[static_cast<std::size_t>(j + 2)];
            const auto res = std::from_chars(f.data(), f.data() + f.size(), r.values[j]);
            if (res.ec != std::errc() || res.ptr != f.data() + f.size() || !std::isfinite(r.values[j]))
                throw Error(ErrorKind::ParseError, where + "bad value '" + f + "'");
        }
        reps.push_back(std::move(r));
    }
    return reps;
}

} // namespace savae
