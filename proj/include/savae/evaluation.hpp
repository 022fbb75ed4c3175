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
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "savae/inference.hpp"
#include "savae/training.hpp"

namespace savae {

/// 1 - cos(a, b), clamped to [0, 2]. A zero vector is at distance 1 from everything.
template <class A, class B>
double cosine_distance(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b)
{
    const double aa = a.squaredNorm();
    const double bb = b.squaredNorm();
    if (aa == 0.0 || bb == 0.0)
        return 1.0;
    // sqrt(aa * bb) equals aa exactly when a == b, so identical vectors sit at 0.
    return std::clamp(1.0 - a.dot(b) / std::sqrt(aa * bb), 0.0, 2.0);
}

// ---------------------------------------------------------------------------
// Retrieval

enum class Relevance { Exact, Jaccard };

inline Relevance parse_relevance(std::string_view name)
{
    if (name == "exact")
        return Relevance::Exact;
    if (name == "jaccard")
        return Relevance::Jaccard;
    throw Error(ErrorKind::InvalidConfig, "unknown relevance mode '" + std::string(name) + "'");
}

inline std::vector<double> default_recall_grid()
{
    return {0.0001, 0.0005, 0.001, 0.005, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
}

/// |a n b| / |a u b| for sorted unique label lists; 0 when both are empty.
inline double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b)
{
    std::size_t common = 0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i < *j)
            ++i;
        else if (*j < *i)
            ++j;
        else {
            ++common;
            ++i;
            ++j;
        }
    }
    const std::size_t unite = a.size() + b.size() - common;
    return unite == 0 ? 0.0 : static_cast<double>(common) / static_cast<double>(unite);
}

// Relative slack for comparing recall targets against accumulated counts,
// so that e.g. 0.1 * 30 reads rank 3 rather than 4.
inline constexpr double kRecallSlack = 1e-12;

/// Rank at which exact-mode recall level `recall` is read: ceil(recall * R), at least 1.
inline std::size_t exact_rank_for_recall(double recall, std::size_t relevant)
{
    const double target = recall * static_cast<double>(relevant) * (1.0 - kRecallSlack);
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(target)));
}

struct PrCurve {
    std::vector<double> recall;
    std::vector<double> precision;
    std::size_t queries = 0;
    std::size_t skipped = 0;

    void write_csv(std::ostream& out) const
    {
        out << "recall,precision\n";
        for (std::size_t i = 0; i < recall.size(); ++i)
            out << format_shortest(recall[i]) << ',' << format_shortest(precision[i]) << '\n';
    }
};

/// Index documents ordered by increasing cosine distance to `query`; ties keep index order.
inline std::vector<std::size_t> rank_by_cosine(const Vector& query, std::span<const DocRepresentation> index)
{
    std::vector<double> distance(index.size());
    for (std::size_t i = 0; i < index.size(); ++i)
        distance[i] = cosine_distance(query, index[i].values);
    std::vector<std::size_t> order(index.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return distance[a] < distance[b]; });
    return order;
}

/// Precision-recall curve averaged over queries.
///
/// Exact: a document is relevant when its label set equals the query's; the
/// precision for recall level rho is read at rank ceil(rho * R), R being the
/// number of relevant index documents. Jaccard: document i contributes gain
/// J(query, doc); precision at rank r is the gain sum over r, recall is that
/// sum over the total gain of the index, and level rho is read at the first
/// rank whose recall reaches it. Queries with nothing relevant are skipped.
inline PrCurve retrieval_pr(std::span<const DocRepresentation> queries, std::span<const DocRepresentation> index,
                            Relevance relevance, std::vector<double> grid = default_recall_grid())
{
    if (queries.empty() || index.empty())
        throw Error(ErrorKind::InvalidConfig, "retrieval needs non-empty query and index sets");
    if (grid.empty() || !std::is_sorted(grid.begin(), grid.end()) || std::adjacent_find(grid.begin(), grid.end()) != grid.end()
        || grid.front() <= 0.0 || grid.back() > 1.0)
        throw Error(ErrorKind::InvalidConfig, "recall grid must be strictly ascending within (0, 1]");

    PrCurve curve;
    curve.recall = grid;
    curve.precision.assign(grid.size(), 0.0);
    std::vector<double> cumulative(index.size());
    for (const auto& query : queries) {
        const auto order = rank_by_cosine(query.values, index);
        double running = 0.0;
        for (std::size_t r = 0; r < order.size(); ++r) {
            const auto& doc = index[order[r]];
            const double gain = relevance == Relevance::Exact ? (doc.labels == query.labels ? 1.0 : 0.0)
                                                              : jaccard(query.labels, doc.labels);
            running += gain;
            cumulative[r] = running;
        }
        const double total = running;
        if (total <= 0.0) {
            ++curve.skipped;
            continue;
        }
        ++curve.queries;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            std::size_t rank;
            if (relevance == Relevance::Exact) {
                rank = std::min(exact_rank_for_recall(grid[g], static_cast<std::size_t>(total)), order.size());
            } else {
                const double target = grid[g] * total * (1.0 - kRecallSlack);
                const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), target);
                rank = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()) + 1, order.size());
            }
            curve.precision[g] += cumulative[rank - 1] / static_cast<double>(rank);
        }
    }
    if (curve.queries > 0)
        for (auto& p : curve.precision)
            p /= static_cast<double>(curve.queries);
    return curve;
}

// ---------------------------------------------------------------------------
// Clustering indices over gold-label clusters, cosine distance throughout.

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

/// Mean and population standard deviation.
inline MeanStd mean_std(std::span<const double> values)
{
    MeanStd out;
    if (values.empty())
        return out;
    const double n = static_cast<double>(values.size());
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double sq = 0.0;
    for (double v : values)
        sq += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(sq / n);
    return out;
}

inline std::string cluster_key(const std::vector<std::string>& labels)
{
    std::string key;
    for (std::size_t i = 0; i < labels.size(); ++i)
        key += (i ? "|" : "") + labels[i];
    return key;
}

/// Points grouped by label set (clusters in sorted key order) with centroids
/// and mean member-to-centroid distances.
struct ClusterSummary {
    std::vector<std::string> keys;
    std::vector<std::vector<const Vector*>> members;
    std::vector<Vector> centroids;
    std::vector<double> dispersion;

    std::size_t size() const noexcept { return keys.size(); }
};

inline ClusterSummary summarize_clusters(std::span<const DocRepresentation> points)
{
    std::map<std::string, std::vector<const Vector*>> grouped;
    for (const auto& p : points)
        if (!p.excluded)
            grouped[cluster_key(p.labels)].push_back(&p.values);
    if (grouped.size() < 2)
        throw Error(ErrorKind::DegenerateClusters, "need at least two non-empty clusters");

    ClusterSummary s;
    for (auto& [key, members] : grouped) {
        Vector centroid = Vector::Zero(members.front()->size());
        for (const auto* x : members)
            centroid += *x;
        centroid /= static_cast<double>(members.size());
        double spread = 0.0;
        for (const auto* x : members)
            spread += cosine_distance(*x, centroid);
        s.dispersion.push_back(spread / static_cast<double>(members.size()));
        s.keys.push_back(key);
        s.members.push_back(std::move(members));
        s.centroids.push_back(std::move(centroid));
    }
    return s;
}

/// Per cluster: max over other clusters of (pi_i + pi_j) / d(c_i, c_j).
inline MeanStd davies_bouldin(const ClusterSummary& s)
{
    std::vector<double> scores(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        double worst = 0.0;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (j == i)
                continue;
            const double separation = cosine_distance(s.centroids[i], s.centroids[j]);
            if (separation == 0.0)
                throw Error(ErrorKind::DegenerateCentroids,
                            "clusters '" + s.keys[i] + "' and '" + s.keys[j] + "' have coincident centroids");
            worst = std::max(worst, (s.dispersion[i] + s.dispersion[j]) / separation);
        }
        scores[i] = worst;
    }
    return mean_std(scores);
}

/// Smallest centroid separation over largest dispersion.
inline double dunn(const ClusterSummary& s)
{
    const double widest = *std::max_element(s.dispersion.begin(), s.dispersion.end());
    if (widest == 0.0)
        throw Error(ErrorKind::DegenerateClusters, "every cluster has zero dispersion");
    double closest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = i + 1; j < s.size(); ++j)
            closest = std::min(closest, cosine_distance(s.centroids[i], s.centroids[j]));
    return closest / widest;
}

/// Centroid silhouette, averaged within each cluster and then across clusters.
inline MeanStd silhouette(const ClusterSummary& s)
{
    std::vector<double> scores(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        double sum = 0.0;
        for (const auto* x : s.members[i]) {
            const double own = cosine_distance(*x, s.centroids[i]);
            double other = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < s.size(); ++j)
                if (j != i)
                    other = std::min(other, cosine_distance(*x, s.centroids[j]));
            const double denom = std::max(own, other);
            sum += denom == 0.0 ? 0.0 : (other - own) / denom;
        }
        scores[i] = sum / static_cast<double>(s.members[i].size());
    }
    return mean_std(scores);
}

inline MeanStd davies_bouldin(std::span<const DocRepresentation> points) { return davies_bouldin(summarize_clusters(points)); }
inline double dunn(std::span<const DocRepresentation> points) { return dunn(summarize_clusters(points)); }
inline MeanStd silhouette(std::span<const DocRepresentation> points) { return silhouette(summarize_clusters(points)); }

struct ClusterMetrics {
    std::size_t clusters = 0;
    std::size_t points = 0;
    MeanStd davies_bouldin;
    double dunn = 0.0;
    MeanStd silhouette;

    void write_report(std::ostream& out) const
    {
        out << "clusters=" << clusters << '\n'
            << "points=" << points << '\n'
            << "davies_bouldin_mean=" << format_shortest(davies_bouldin.mean) << '\n'
            << "davies_bouldin_std=" << format_shortest(davies_bouldin.std) << '\n'
            << "dunn=" << format_shortest(dunn) << '\n'
            << "silhouette_mean=" << format_shortest(silhouette.mean) << '\n'
            << "silhouette_std=" << format_shortest(silhouette.std) << '\n';
    }
};

inline ClusterMetrics cluster_metrics(std::span<const DocRepresentation> points)
{
    const auto summary = summarize_clusters(points);
    ClusterMetrics m;
    m.clusters = summary.size();
    for (const auto& members : summary.members)
        m.points += members.size();
    m.davies_bouldin = savae::davies_bouldin(summary);
    m.dunn = savae::dunn(summary);
    m.silhouette = savae::silhouette(summary);
    return m;
}

// ---------------------------------------------------------------------------
// Word embedding neighborhoods

enum class EmbeddingSpace { Global, Local };

inline EmbeddingSpace parse_embedding_space(std::string_view name)
{
    if (name == "global")
        return EmbeddingSpace::Global;
    if (name == "local")
        return EmbeddingSpace::Local;
    throw Error(ErrorKind::InvalidConfig, "unknown embedding space '" + std::string(name) + "'");
}

/// Global: decoder output rows X[v]. Local: V_local[v] (SAVAE only).
inline const Matrix& word_embeddings(const ModelParams& params, const ModelConfig& config, EmbeddingSpace space)
{
    if (space == EmbeddingSpace::Global)
        return params.decoder_embeddings;
    if (!config.has_local_context())
        throw Error(ErrorKind::InvalidConfig, "NVDM models have no local embeddings");
    return params.local_embeddings;
}

struct Neighbor {
    TokenId id = 0;
    std::string token;
    double distance = 0.0;
};

/// The `n` tokens closest to `query` by cosine distance, query excluded, ties by id.
inline std::vector<Neighbor> nearest_words(std::string_view query, const Vocabulary& vocab,
                                           const Matrix& embeddings, std::size_t n)
{
    const auto query_id = vocab.find(query);
    if (!query_id)
        throw Error(ErrorKind::UnknownToken, "'" + std::string(query) + "' is not in the vocabulary");
    if (static_cast<std::size_t>(embeddings.rows()) != vocab.size())
        throw Error(ErrorKind::InvalidConfig, "embedding rows do not match the vocabulary size");
    std::vector<Neighbor> all;
    const auto q = embeddings.row(*query_id);
    for (Index v = 0; v < embeddings.rows(); ++v) {
        if (v == static_cast<Index>(*query_id))
            continue;
        const auto id = static_cast<TokenId>(v);
        all.push_back({id, vocab.token(id), cosine_distance(q.transpose(), embeddings.row(v).transpose())});
    }
    const auto keep = std::min(n, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                      [](const Neighbor& a, const Neighbor& b) {
                          return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
                      });
    all.resize(keep);
    return all;
}

// ---------------------------------------------------------------------------
// Linear probe

struct ProbeConfig {
    double learning_rate = 1e-3;
    std::size_t epochs = 100;
    std::size_t batch_size = 256;
    std::uint64_t seed = 0;
    /// Z-score features with training-set statistics before fitting.
    bool standardize = true;
};

struct ProbeResult {
    double accuracy = 0.0;
    std::string negative_label;
    std::string positive_label;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
};

/// Logistic regression on frozen representations, fitted with Adam on the
/// mean cross-entropy; returns test accuracy. The two classes are the label
/// keys seen in training, the lexicographically larger one being positive.
inline ProbeResult linear_probe(std::span<const DocRepresentation> train_points,
                                std::span<const DocRepresentation> test_points, const ProbeConfig& config = {})
{
    std::vector<const DocRepresentation*> train_set, test_set;
    for (const auto& p : train_points)
        if (!p.excluded)
            train_set.push_back(&p);
    for (const auto& p : test_points)
        if (!p.excluded)
            test_set.push_back(&p);

    std::vector<std::string> classes;
    for (const auto* p : train_set)
        classes.push_back(cluster_key(p->labels));
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    if (classes.size() != 2)
        throw Error(ErrorKind::DegenerateLabels,
                    "probe needs exactly two training classes, found " + std::to_string(classes.size()));
    if (test_set.empty())
        throw Error(ErrorKind::InvalidConfig, "probe needs a non-empty test set");

    auto target = [&](const DocRepresentation& p) {
        const auto key = cluster_key(p.labels);
        if (key == classes[1])
            return 1.0;
        if (key == classes[0])
            return 0.0;
        throw Error(ErrorKind::DegenerateLabels, "test label '" + key + "' was not seen in training");
    };

    const Index dim = train_set.front()->values.size();
    Vector shift = Vector::Zero(dim), inv_scale = Vector::Ones(dim);
    if (config.standardize) {
        for (const auto* p : train_set)
            shift += p->values;
        shift /= static_cast<double>(train_set.size());
        Vector var = Vector::Zero(dim);
        for (const auto* p : train_set)
            var.array() += (p->values - shift).array().square();
        var /= static_cast<double>(train_set.size());
        for (Index j = 0; j < dim; ++j)
            inv_scale[j] = var[j] > 0.0 ? 1.0 / std::sqrt(var[j]) : 1.0;
    }
    auto features = [&](const DocRepresentation& p) -> Vector { return (p.values - shift).cwiseProduct(inv_scale); };

    std::vector<Vector> x;
    std::vector<double> y;
    for (const auto* p : train_set) {
        x.push_back(features(*p));
        y.push_back(target(*p));
    }

    // Parameters are [w; b], laid out as one vector for the Adam update.
    Vector theta = Vector::Zero(dim + 1), first = theta, second = theta, grad = theta;
    const AdamSettings adam{config.learning_rate, 0.9, 0.999, 1e-8};
    std::uint64_t step = 0;
    const CounterRng root(config.seed);
    std::vector<std::size_t> order(x.size());
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto rng = root.substream(epoch);
        shuffle_in_place(std::span<std::size_t>(order), rng);
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(begin + config.batch_size, order.size());
            grad.setZero();
            for (std::size_t i = begin; i < end; ++i) {
                const auto& xi = x[order[i]];
                const double p = sigmoid(theta.head(dim).dot(xi) + theta[dim]);
                const double residual = y[order[i]] - p;
                grad.head(dim) += residual * xi;
                grad[dim] += residual;
            }
            grad /= static_cast<double>(end - begin);
            adam_update(detail::flat(theta), {grad.data(), static_cast<std::size_t>(grad.size())},
                        detail::flat(first), detail::flat(second), ++step, adam);
        }
    }

    std::size_t correct = 0;
    for (const auto* p : test_set) {
        const double score = theta.head(dim).dot(features(*p)) + theta[dim];
        if ((score >= 0.0 ? 1.0 : 0.0) == target(*p))
            ++correct;
    }
    ProbeResult result;
    result.accuracy = static_cast<double>(correct) / static_cast<double>(test_set.size());
    result.negative_label = classes[0];
    result.positive_label = classes[1];
    result.train_size = train_set.size();
    result.test_size = test_set.size();
    return result;
}

} // namespace savae
