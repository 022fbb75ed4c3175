#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "gradient_check.hpp"
#include "importance_sampling.hpp"
#include "savae/model.hpp"
#include "support.hpp"

namespace {

using namespace savae;

ModelConfig tiny_config(ModelMode mode, std::size_t m, std::size_t d, std::size_t k = 5)
{
    ModelConfig c;
    c.mode = mode;
    c.vocab_size = m;
    c.latent_dim = d;
    c.window = k;
    c.encoder_layers = {4};
    return c;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

TEST(ModelConfig, ValidationListsEveryProblem)
{
    ModelConfig c;
    c.latent_dim = 0;
    c.window = 0;
    c.encoder_layers.clear();
    EXPECT_EQ(c.violations().size(), 3u);
    EXPECT_THROW(c.validate(), Error);
    c.mode = ModelMode::Nvdm;
    c.latent_dim = 3;
    c.encoder_layers = {2};
    EXPECT_TRUE(c.violations().empty());
}

TEST(InitParams, XavierBoundsZeroBiasesDeterministic)
{
    ModelConfig c;
    c.vocab_size = 100;
    c.latent_dim = 50;
    c.encoder_layers = {500, 500};
    const auto a = init_params(c, CounterRng(7));
    const auto b = init_params(c, CounterRng(7));
    EXPECT_TRUE(a == b);
    EXPECT_FALSE(a == init_params(c, CounterRng(8)));
    EXPECT_EQ(a.decoder_bias.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(a.local_bias.cwiseAbs().maxCoeff(), 0.0);
    for (const auto& layer : a.encoder_hidden)
        EXPECT_EQ(layer.bias.cwiseAbs().maxCoeff(), 0.0);
    // The 500 x 50 heads.
    EXPECT_LE(a.mean_head.weight.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 550.0));
    EXPECT_GT(a.mean_head.weight.cwiseAbs().maxCoeff(), 0.9 * std::sqrt(6.0 / 550.0));
    EXPECT_EQ(a.decoder_embeddings.cols(), 100);
}

TEST(Encode, ZeroParamsGiveStandardNormal)
{
    const auto c = tiny_config(ModelMode::Savae, 10, 3);
    const ModelParams p(ParameterArrays::zeros(c));
    Document doc;
    doc.ids = {1, 2, 2};
    const auto q = encode(doc, p, c);
    EXPECT_EQ(q.mu, Vector::Zero(3));
    EXPECT_EQ(q.log_var, Vector::Zero(3));
}

TEST(Encode, EmptyDocumentIsAnError)
{
    const auto c = tiny_config(ModelMode::Savae, 10, 3);
    const ModelParams p(ParameterArrays::zeros(c));
    try {
        encode(Document{}, p, c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::EmptyDocument);
    }
}

TEST(Encode, BagOfWordsInvarianceIsExact)
{
    auto c = tiny_config(ModelMode::Savae, 50, 4);
    c.encoder_layers = {16, 8};
    std::mt19937_64 gen(1);
    const auto p = savae::testing::random_params(c, gen);
    for (int trial = 0; trial < 20; ++trial) {
        auto doc = savae::testing::random_document(gen, 50, 40);
        const auto q = encode(doc, p, c);
        std::shuffle(doc.ids.begin(), doc.ids.end(), gen);
        const auto q2 = encode(doc, p, c);
        EXPECT_EQ(q.mu, q2.mu);
        EXPECT_EQ(q.log_var, q2.log_var);
        std::reverse(doc.ids.begin(), doc.ids.end());
        EXPECT_EQ(encode(doc, p, c).mu, q.mu);
    }
}

TEST(Encode, DoublingCountsDoublesFirstLayer)
{
    auto c = tiny_config(ModelMode::Nvdm, 20, 2);
    c.encoder_layers = {6};
    std::mt19937_64 gen(2);
    auto p = savae::testing::random_params(c, gen);
    p.encoder_hidden[0].bias.setZero();
    auto doc = savae::testing::random_document(gen, 20, 10);
    Document twice = doc;
    twice.ids.insert(twice.ids.end(), doc.ids.begin(), doc.ids.end());
    const auto a = detail::encoder_forward(doc, p);
    const auto b = detail::encoder_forward(twice, p);
    EXPECT_LT((b.hidden[0] - 2.0 * a.hidden[0]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(LocalContext, EmptyWindowAndOrderInvariance)
{
    auto c = tiny_config(ModelMode::Savae, 5, 3);
    const ModelParams zero(ParameterArrays::zeros(c));
    EXPECT_EQ(local_context({}, zero), Vector::Constant(3, 0.5));

    std::mt19937_64 gen(3);
    const auto p = savae::testing::random_params(c, gen);
    const std::vector<TokenId> ab = {1, 3}, ba = {3, 1};
    EXPECT_LT((local_context(ab, p) - local_context(ba, p)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(LocalContext, HandComputedWindow)
{
    auto c = tiny_config(ModelMode::Savae, 3, 2);
    ModelParams p(ParameterArrays::zeros(c));
    p.local_embeddings << 0.5, -1.0, 2.0, 0.25, -0.75, 1.5;
    p.local_bias << 0.1, -0.2;
    const std::vector<TokenId> window = {0, 2};
    const Vector h = local_context(window, p);
    EXPECT_DOUBLE_EQ(h[0], sig(0.1 + 0.5 - 0.75));
    EXPECT_DOUBLE_EQ(h[1], sig(-0.2 - 1.0 + 1.5));
}

TEST(NextWord, UniformWhenParamsZeroAndShiftInvariant)
{
    auto c = tiny_config(ModelMode::Savae, 7, 2);
    ModelParams p(ParameterArrays::zeros(c));
    const Vector z = Vector::Constant(2, 0.3), h = Vector::Constant(2, 0.6);
    for (TokenId w = 0; w < 7; ++w)
        EXPECT_NEAR(next_word_log_prob(w, z, h, p, c), std::log(1.0 / 7.0), 1e-15);

    std::mt19937_64 gen(4);
    p = savae::testing::random_params(c, gen);
    const double before = next_word_log_prob(3, z, h, p, c);
    p.decoder_bias.array() += 12.5;
    EXPECT_NEAR(next_word_log_prob(3, z, h, p, c), before, 1e-12);
}

TEST(NextWord, HandComputedSoftmax)
{
    auto c = tiny_config(ModelMode::Savae, 3, 1);
    ModelParams p(ParameterArrays::zeros(c));
    p.decoder_embeddings << 1.0, 2.0, -1.0, 0.0, 0.5, -2.0;
    p.decoder_bias << 0.1, 0.0, -0.3;
    const Vector z = Vector::Constant(1, 0.5), h = Vector::Constant(1, 0.25);
    const double l0 = 1.0 * 0.5 + 2.0 * 0.25 + 0.1;
    const double l1 = -1.0 * 0.5;
    const double l2 = 0.5 * 0.5 - 2.0 * 0.25 - 0.3;
    const double norm = std::log(std::exp(l0) + std::exp(l1) + std::exp(l2));
    EXPECT_NEAR(next_word_log_prob(0, z, h, p, c), l0 - norm, 1e-15);
    EXPECT_NEAR(next_word_log_prob(2, z, h, p, c), l2 - norm, 1e-15);

    // NVDM ignores h and uses X in R^{m x d}.
    auto cn = tiny_config(ModelMode::Nvdm, 3, 1);
    ModelParams pn(ParameterArrays::zeros(cn));
    pn.decoder_embeddings << 1.0, -1.0, 0.5;
    pn.decoder_bias << 0.1, 0.0, -0.3;
    const double m0 = 0.5 + 0.1, m1 = -0.5, m2 = 0.25 - 0.3;
    EXPECT_NEAR(next_word_log_prob(1, z, h, pn, cn), m1 - std::log(std::exp(m0) + std::exp(m1) + std::exp(m2)), 1e-15);
}

TEST(NextWord, DistributionNormalizes)
{
    for (auto mode : {ModelMode::Savae, ModelMode::Nvdm}) {
        auto c = tiny_config(mode, 40, 3);
        std::mt19937_64 gen(5);
        const auto p = savae::testing::random_params(c, gen, 2.0);
        const Vector z = Vector::Random(3), h = Vector::Random(3);
        double total = 0.0;
        for (TokenId w = 0; w < 40; ++w)
            total += std::exp(next_word_log_prob(w, z, h, p, c));
        EXPECT_NEAR(total, 1.0, 1e-10);
    }
}

TEST(DocLogLikelihood, UniformDecoder)
{
    auto c = tiny_config(ModelMode::Savae, 11, 2);
    const ModelParams p(ParameterArrays::zeros(c));
    Document doc;
    doc.ids = {1, 2, 3, 4, 5, 6, 7};
    EXPECT_NEAR(doc_log_likelihood(doc, Vector::Zero(2), p, c), -7.0 * std::log(11.0), 1e-12);
}

TEST(DocLogLikelihood, SingleWordUsesEmptyWindow)
{
    auto c = tiny_config(ModelMode::Savae, 4, 2);
    std::mt19937_64 gen(6);
    const auto p = savae::testing::random_params(c, gen);
    Document doc;
    doc.ids = {2};
    const Vector z = Vector::Random(2);
    EXPECT_DOUBLE_EQ(doc_log_likelihood(doc, z, p, c), next_word_log_prob(2, z, local_context({}, p), p, c));
}

TEST(DocLogLikelihood, HandComputedThreeWords)
{
    auto c = tiny_config(ModelMode::Savae, 3, 1, 5);
    ModelParams p(ParameterArrays::zeros(c));
    p.decoder_embeddings << 1.0, 2.0, -1.0, 0.0, 0.5, -2.0;
    p.decoder_bias << 0.1, 0.0, -0.3;
    p.local_embeddings << 0.3, -0.7, 1.2;
    p.local_bias << 0.1;
    Document doc;
    doc.ids = {2, 0, 1};
    const double z = 0.4;
    const double h[3] = {sig(0.1), sig(0.1 + 1.2), sig(0.1 + 1.2 + 0.3)};
    const double xz[3] = {1.0, -1.0, 0.5}, xh[3] = {2.0, 0.0, -2.0}, b[3] = {0.1, 0.0, -0.3};
    double expected = 0.0;
    for (int t = 0; t < 3; ++t) {
        double logits[3], norm = 0.0;
        for (int v = 0; v < 3; ++v) {
            logits[v] = xz[v] * z + xh[v] * h[t] + b[v];
            norm += std::exp(logits[v]);
        }
        expected += logits[doc.ids[static_cast<std::size_t>(t)]] - std::log(norm);
    }
    EXPECT_NEAR(doc_log_likelihood(doc, Vector::Constant(1, z), p, c), expected, 1e-14);
}

TEST(DocLogLikelihood, BlockedDecoderMatchesPerPositionSum)
{
    auto c = tiny_config(ModelMode::Savae, 25, 3, 5);
    std::mt19937_64 gen(9);
    const auto p = savae::testing::random_params(c, gen);
    const auto doc = savae::testing::random_document(gen, 25, 700);
    const Vector eps = Vector::Random(3);
    const auto q = encode(doc, p, c);
    auto grads = ParamGrads::zeros_like(c);
    const auto est = accumulate_elbo_gradients(doc, p, c, eps, grads);
    EXPECT_NEAR(est.total, savae::testing::naive_total(doc, p, c, eps), 1e-9);
    EXPECT_NEAR(doc_log_likelihood(doc, sample_reparameterized(q, eps), p, c), est.reconstruction, 1e-9);
}

TEST(DocLogLikelihood, NvdmIsOrderFreeSavaeIsNot)
{
    auto cn = tiny_config(ModelMode::Nvdm, 30, 3);
    std::mt19937_64 gen(10);
    const auto pn = savae::testing::random_params(cn, gen);
    auto doc = savae::testing::random_document(gen, 30, 50);
    const Vector z = Vector::Random(3);
    const double base = doc_log_likelihood(doc, z, pn, cn);
    for (int trial = 0; trial < 5; ++trial) {
        std::shuffle(doc.ids.begin(), doc.ids.end(), gen);
        EXPECT_EQ(doc_log_likelihood(doc, z, pn, cn), base);
    }

    // A local channel where word 2 predicts word 0.
    auto cs = tiny_config(ModelMode::Savae, 3, 1, 1);
    ModelParams ps(ParameterArrays::zeros(cs));
    ps.local_embeddings << -4.0, -4.0, 4.0;
    ps.decoder_embeddings << 0.0, 6.0, 0.0, 0.0, 0.0, 0.0;
    Document forward, backward;
    forward.ids = {2, 0, 1};
    backward.ids = {1, 0, 2};
    const Vector zs = Vector::Zero(1);
    EXPECT_GT(doc_log_likelihood(forward, zs, ps, cs), doc_log_likelihood(backward, zs, ps, cs) + 0.5);
}

TEST(Elbo, ZeroParamsGiveUniformBound)
{
    auto c = tiny_config(ModelMode::Savae, 13, 2);
    const ModelParams p(ParameterArrays::zeros(c));
    Document doc;
    doc.ids = {0, 1, 1, 5, 12};
    CounterRng rng(1);
    const auto e = elbo(doc, p, c, rng, 20);
    EXPECT_EQ(e.kl, 0.0);
    EXPECT_NEAR(e.total, -5.0 * std::log(13.0), 1e-12);
    EXPECT_EQ(e.samples, 20u);
}

TEST(Elbo, DecompositionHolds)
{
    auto c = tiny_config(ModelMode::Savae, 12, 2);
    std::mt19937_64 gen(11);
    const auto p = savae::testing::random_params(c, gen);
    const auto doc = savae::testing::random_document(gen, 12, 9);
    CounterRng rng(2);
    const auto e = elbo(doc, p, c, rng, 3);
    EXPECT_EQ(e.total, e.reconstruction - e.kl);
    EXPECT_GE(e.kl, 0.0);
}

// Repeated-run statistics: both estimators share an expectation and the
// 20-sample one has lower spread.
TEST(Elbo, MoreSamplesLowerVarianceSameMean)
{
    auto c = tiny_config(ModelMode::Savae, 10, 2);
    std::mt19937_64 gen(12);
    const auto p = savae::testing::random_params(c, gen, 0.8);
    const auto doc = savae::testing::random_document(gen, 10, 12);
    CounterRng rng(3);
    std::vector<double> one, twenty;
    for (int r = 0; r < 100; ++r) {
        one.push_back(elbo(doc, p, c, rng, 1).total);
        twenty.push_back(elbo(doc, p, c, rng, 20).total);
    }
    auto stats = [](const std::vector<double>& v) {
        double m = 0, s = 0;
        for (double x : v)
            m += x;
        m /= static_cast<double>(v.size());
        for (double x : v)
            s += (x - m) * (x - m);
        return std::pair{m, s / static_cast<double>(v.size() - 1)};
    };
    const auto [m1, v1] = stats(one);
    const auto [m20, v20] = stats(twenty);
    EXPECT_LT(v20, v1);
    EXPECT_LT(std::abs(m1 - m20), 4.0 * std::sqrt(v1 / 100 + v20 / 100));
}

TEST(Elbo, StaysBelowImportanceSampledLikelihood)
{
    auto c = tiny_config(ModelMode::Savae, 5, 2, 2);
    std::mt19937_64 gen(14);
    const auto p = savae::testing::random_params(c, gen, 0.7);
    CounterRng rng(4);
    int below = 0;
    for (int i = 0; i < 5; ++i) {
        const auto doc = savae::testing::random_document(gen, 5, 6);
        const double bound = elbo(doc, p, c, rng, 20).total;
        if (bound <= savae::testing::importance_sampled_log_likelihood(doc, p, c, rng, 10000))
            ++below;
    }
    EXPECT_GE(below, 4);
}

TEST(Perplexity, UniformModelEqualsVocabularySize)
{
    auto c = tiny_config(ModelMode::Nvdm, 17, 2);
    const ModelParams p(ParameterArrays::zeros(c));
    std::mt19937_64 gen(13);
    std::vector<Document> docs;
    for (int i = 0; i < 5; ++i)
        docs.push_back(savae::testing::random_document(gen, 17, 3 + static_cast<std::size_t>(i)));
    docs.push_back(Document{});
    CounterRng rng(1);
    EXPECT_NEAR(perplexity(docs, p, c, rng, 20), 17.0, 17.0 * 1e-12);
}

TEST(Perplexity, AllEmptyIsAnError)
{
    auto c = tiny_config(ModelMode::Nvdm, 5, 2);
    const ModelParams p(ParameterArrays::zeros(c));
    std::vector<Document> docs(3);
    CounterRng rng(1);
    try {
        perplexity(docs, p, c, rng, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::AllDocumentsEmpty);
    }
}

} // namespace
