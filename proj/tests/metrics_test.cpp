#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include <snapntell/metrics.hpp>

#include "fixtures.hpp"

using namespace snt;
using namespace snt::metrics;

namespace {

// Straight transcription of the kappa definition.
double fleiss_oracle(const std::vector<std::vector<std::uint32_t>>& m) {
    double N = m.size(), n = 0;
    for (auto c : m[0]) n += c;
    std::size_t q = m[0].size();
    double pbar = 0;
    for (const auto& row : m) {
        double agree = 0;
        for (auto c : row) agree += double(c) * (c - 1);
        pbar += agree / (n * (n - 1));
    }
    pbar /= N;
    double pe = 0;
    for (std::size_t j = 0; j < q; ++j) {
        double col = 0;
        for (const auto& row : m) col += row[j];
        pe += (col / (N * n)) * (col / (N * n));
    }
    return (pbar - pe) / (1 - pe);
}

} // namespace

TEST(RougeL, HandVectors) {
    EXPECT_NEAR(rouge_l_f1("a b c", "a c b d"), 4.0 / 7.0, 1e-9);
    EXPECT_DOUBLE_EQ(rouge_l_f1("The cat sat.", "the CAT sat"), 1.0);
    EXPECT_DOUBLE_EQ(rouge_l_f1("alpha beta", "gamma delta"), 0.0);
    EXPECT_DOUBLE_EQ(rouge_l_f1("", "gamma delta"), 0.0);
    EXPECT_DOUBLE_EQ(rouge_l_f1("!!!", "gamma"), 0.0);
}

TEST(Bleu, HandVectors) {
    EXPECT_NEAR(bleu("the cat", "the cat sat"), std::exp(-0.5), 1e-9);
    EXPECT_DOUBLE_EQ(bleu("the cat sat on the mat", "the cat sat on the mat"), 1.0);
    // Clipped unigram 1/3; bigram and trigram smoothed to 1/3 and 1/2; BP 1.
    EXPECT_NEAR(bleu("the the the", "the cat"), std::cbrt(1.0 / 18.0), 1e-9);
    EXPECT_DOUBLE_EQ(bleu("dog", "the cat"), 0.0);
    EXPECT_DOUBLE_EQ(bleu("", "the cat"), 0.0);
}

TEST(Bleu, ClosestReferenceLength) {
    std::vector<std::string> refs{"the cat sat on the mat today", "the cat"};
    EXPECT_DOUBLE_EQ(bleu("the cat", refs), 1.0);
}

TEST(Bleu, CorpusStatsAccumulate) {
    auto a = bleu_stats(text::tokenize("the cat"), std::vector<Tokens>{text::tokenize("the cat sat")}, 4);
    auto b = bleu_stats(text::tokenize("a dog ran"), std::vector<Tokens>{text::tokenize("a dog ran")}, 4);
    auto total = a;
    total += b;
    EXPECT_EQ(total.cand_len, 5u);
    EXPECT_EQ(total.ref_len, 6u);
    double v = bleu_from_stats(total);
    EXPECT_GT(v, 0.0);
    EXPECT_LE(v, 1.0);
}

TEST(Meteor, HandVectors) {
    EXPECT_NEAR(meteor_simplified("the cat sat", "the cat sat"), 1.0 - 1.0 / 54.0, 1e-9);
    EXPECT_NEAR(meteor_simplified("cat the", "the cat"), 0.5, 1e-9);
    EXPECT_DOUBLE_EQ(meteor_simplified("one two", "three four"), 0.0);
}

TEST(Meteor, AlignmentPrefersFewerChunks) {
    // "the" could align to either occurrence; the contiguous choice gives one chunk.
    auto c = text::tokenize("the cat");
    auto r = text::tokenize("the dog saw the cat");
    auto al = align_exact(c, r);
    EXPECT_EQ(al.matches, 2u);
    EXPECT_EQ(al.chunks, 1u);
}

TEST(TokenF1, Basic) {
    EXPECT_DOUBLE_EQ(token_f1("a b", "a b"), 1.0);
    EXPECT_NEAR(token_f1("abel tasman national park is near motueka",
                         "it is located in the nelson region near motueka beside bays"),
                1.0 / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(token_f1("", "x"), 0.0);
}

TEST(MetricProperty, RangeAndSelfScore) {
    std::mt19937_64 rng(99);
    std::vector<std::string> vocab{"a", "b", "c", "d", "e", "f"};
    std::uniform_int_distribution<std::size_t> w(0, vocab.size() - 1), len(1, 8);
    auto sentence = [&] {
        std::string s;
        auto n = len(rng);
        for (std::size_t i = 0; i < n; ++i) s += vocab[w(rng)] + " ";
        return s;
    };
    for (int t = 0; t < 300; ++t) {
        auto x = sentence(), y = sentence();
        for (double v : {rouge_l_f1(x, y), bleu(x, y), meteor_simplified(x, y), token_f1(x, y)}) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0 + 1e-12);
        }
        EXPECT_DOUBLE_EQ(rouge_l_f1(x, x), 1.0);
        EXPECT_NEAR(bleu(x, x), 1.0, 1e-12);
        double m = double(text::tokenize(x).size());
        EXPECT_NEAR(meteor_simplified(x, x), 1.0 - 0.5 / (m * m * m), 1e-12);
    }
}

TEST(AblationDelta, PaperRows) {
    EXPECT_DOUBLE_EQ(*ablation_delta(24.4, 27.1), 11.1);
    EXPECT_DOUBLE_EQ(*ablation_delta(19.1, 22.7), 18.8);
    EXPECT_DOUBLE_EQ(*ablation_delta(6.8, 12.6), 85.3);
    EXPECT_DOUBLE_EQ(*ablation_delta(75.6, 72.9), -3.6);
    EXPECT_DOUBLE_EQ(*ablation_delta(80.9, 77.3), -4.4);
    EXPECT_DOUBLE_EQ(*ablation_delta(93.2, 87.4), -6.2);
    EXPECT_DOUBLE_EQ(*ablation_delta(42.0, 42.0), 0.0);
    EXPECT_FALSE(ablation_delta(0.0, 5.0).has_value());
}

TEST(Kendall, HandVectors) {
    std::vector<double> a{1, 2, 3, 4}, b{1, 3, 2, 4}, r{4, 3, 2, 1};
    EXPECT_NEAR(kendall_tau_b(a, b).tau, 2.0 / 3.0, 1e-9);
    EXPECT_DOUBLE_EQ(kendall_tau_b(a, a).tau, 1.0);
    EXPECT_DOUBLE_EQ(kendall_tau_b(a, r).tau, -1.0);
    // Exact p for identical 4-rankings: 2 of 24 permutations reach |tau| = 1.
    EXPECT_NEAR(kendall_tau_b(a, a).p_value, 2.0 / 24.0, 1e-12);
}

TEST(Kendall, Errors) {
    std::vector<double> tied{2, 2, 2}, ok{1, 2, 3};
    EXPECT_ERROR_KIND(kendall_tau_b(tied, ok), ErrorKind::DegenerateRanking);
    EXPECT_ERROR_KIND(kendall_tau_b(ok, tied), ErrorKind::DegenerateRanking);
    std::vector<double> one{1};
    EXPECT_THROW(kendall_tau_b(one, one), Error);
}

TEST(Kendall, NormalApproximationForLargeN) {
    std::vector<double> a(20), b(20);
    std::iota(a.begin(), a.end(), 1.0);
    b = a;
    auto res = kendall_tau_b(a, b);
    EXPECT_FALSE(res.exact_p);
    EXPECT_DOUBLE_EQ(res.tau, 1.0);
    EXPECT_LT(res.p_value, 1e-6);
}

TEST(KendallProperty, MatchesAllPairsOracleWithTies) {
    std::mt19937_64 rng(31337);
    std::uniform_int_distribution<int> len(2, 8);
    int checked = 0;
    for (int t = 0; t < 500; ++t) {
        auto n = static_cast<std::size_t>(len(rng));
        std::uniform_int_distribution<int> rank(1, static_cast<int>(n));
        std::vector<double> a(n), b(n);
        for (auto& x : a) x = rank(rng);
        for (auto& x : b) x = rank(rng);
        auto all_tied = [](const std::vector<double>& v) {
            return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end();
        };
        if (all_tied(a) || all_tied(b)) continue;
        auto res = kendall_tau_b(a, b);
        EXPECT_NEAR(res.tau, snt::testing::tau_b_all_pairs(a, b), 1e-12);
        EXPECT_GE(res.p_value, 0.0);
        EXPECT_LE(res.p_value, 1.0);
        ++checked;
    }
    EXPECT_GT(checked, 400);
}

TEST(Fleiss, HandVectors) {
    EXPECT_NEAR(fleiss_kappa({{{3, 0}, {2, 1}}}), -0.2, 1e-9);
    EXPECT_NEAR(fleiss_kappa({{{3, 0}, {0, 3}}}), 1.0, 1e-12);
    // Mean observed agreement 1/2 equals the chance level 1/2.
    EXPECT_NEAR(fleiss_kappa({{{2, 0}, {0, 2}, {1, 1}, {1, 1}}}), 0.0, 1e-12);
}

TEST(Fleiss, Errors) {
    EXPECT_ERROR_KIND(fleiss_kappa({{{3, 0}, {3, 0}}}), ErrorKind::Undefined);
    EXPECT_ERROR_KIND(fleiss_kappa({{{3, 0}, {1, 1}}}), ErrorKind::InvalidArgument);
    EXPECT_ERROR_KIND(fleiss_kappa({{{1, 0}}}), ErrorKind::InvalidArgument);
    EXPECT_ERROR_KIND(fleiss_kappa({}), ErrorKind::InvalidArgument);
}

TEST(FleissProperty, MatchesDefinition) {
    std::mt19937_64 rng(4242);
    std::uniform_int_distribution<int> items(1, 10), cats(2, 4), raters(2, 5);
    int checked = 0;
    for (int t = 0; t < 500; ++t) {
        auto N = items(rng), q = cats(rng), n = raters(rng);
        std::uniform_int_distribution<int> pick(0, q - 1);
        std::vector<std::vector<std::uint32_t>> m(static_cast<std::size_t>(N), std::vector<std::uint32_t>(static_cast<std::size_t>(q), 0));
        for (auto& row : m)
            for (int r = 0; r < n; ++r) ++row[static_cast<std::size_t>(pick(rng))];
        double expected = fleiss_oracle(m);
        if (!std::isfinite(expected)) {
            EXPECT_ERROR_KIND(fleiss_kappa({m}), ErrorKind::Undefined);
            continue;
        }
        double k = fleiss_kappa({m});
        EXPECT_NEAR(k, expected, 1e-12);
        EXPECT_LE(k, 1.0 + 1e-12);
        ++checked;
    }
    EXPECT_GT(checked, 400);
}
