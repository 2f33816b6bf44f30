#include <cmath>

#include <gtest/gtest.h>

#include "ttransport/estimator.hpp"
#include "ttransport/synth_oracle.hpp"

using namespace ttransport;

namespace {

SyntheticSpace four_point(std::vector<double> y = {1, 2, 3, 4}) {
    return SyntheticSpace({"w", "x", "y", "z"}, {0.25, 0.25, 0.25, 0.25}, {0.1, 0.2, 0.3, 0.4}, std::move(y),
                          {1, 1, 0, 0});
}

} // namespace

TEST(ExactMean, TwoPoint) {
    const auto s = two_point_space();
    EXPECT_DOUBLE_EQ(exact_mean(s, Which::T), 3.0);
    EXPECT_DOUBLE_EQ(exact_mean(s, Which::R), 2.0);
}

TEST(ExactMean, UniformAndConstant) {
    const SyntheticSpace u({"a", "b", "c"}, {0.5, 0.25, 0.25}, {1.0 / 3, 1.0 / 3, 1.0 / 3 + 1e-17}, {1, 5, 9}, {0, 1, 1});
    EXPECT_NEAR(exact_mean(u, Which::T), 5.0, 1e-12);
    const SyntheticSpace c({"a", "b", "c"}, {0.5, 0.25, 0.25}, {0.2, 0.3, 0.5}, {7, 7, 7}, {0, 1, 1});
    EXPECT_NEAR(exact_mean(c, Which::R), 7.0, 1e-12);
    EXPECT_NEAR(exact_mean(c, Which::T), 7.0, 1e-12);
}

TEST(ExactEffect, GroupConstantResponses) {
    const auto s = four_point({5, 5, 2, 2});
    EXPECT_NEAR(exact_effect(s, Which::T), 3.0, 1e-12);
    EXPECT_NEAR(exact_effect(s, Which::R), 3.0, 1e-12);
}

TEST(ExactEffect, FourPointHandEnumeration) {
    // mu(P_1) = (0.1*1 + 0.2*2)/0.3 = 5/3; mu(P_0) = (0.3*3 + 0.4*4)/0.7 = 25/7.
    EXPECT_NEAR(exact_effect(four_point(), Which::T), -40.0 / 21.0, 1e-12);
    EXPECT_NEAR(exact_effect(four_point(), Which::R), 1.5 - 3.5, 1e-12);
}

TEST(ExactEffect, ZeroMassGroupRejected) {
    const SyntheticSpace s({"a", "b", "c"}, {0.4, 0.3, 0.3}, {0.0, 0.5, 0.5}, {1, 2, 3}, {1, 0, 0});
    EXPECT_THROW(exact_effect(s, Which::T), Error);
    EXPECT_NO_THROW(exact_effect(s, Which::R));
}

TEST(SampleCorpus, FrequenciesConcentrate) {
    const auto s = canonical_space();
    const std::size_t n = 10000;
    const auto c = sample_corpus(s, Which::R, n, 42);
    std::vector<double> count(s.size(), 0.0);
    for (const auto& d : c.docs) count[s.index_of(d.text)] += 1;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double p = s.p_R()[i];
        EXPECT_LE(std::abs(count[i] / n - p), 3 * std::sqrt(p * (1 - p) / n)) << s.texts()[i];
    }
}

TEST(SampleCorpus, DocumentsCarryOracleFields) {
    const auto s = canonical_space();
    const auto c = sample_corpus(s, Which::T, 50, 1);
    EXPECT_EQ(c.docs.front().id, "T00");
    EXPECT_EQ(c.role, Role::target);
    for (const auto& d : c.docs) {
        const auto i = s.index_of(d.text);
        EXPECT_EQ(*d.response, s.y()[i]);
        EXPECT_EQ(d.attributes.at("a"), s.a()[i]);
        ASSERT_TRUE(d.features);
        ASSERT_EQ(d.features->size(), s.size());
        for (std::size_t k = 0; k < s.size(); ++k) EXPECT_EQ((*d.features)[k], k == i ? 1.0 : 0.0);
    }
    EXPECT_NO_THROW(validate_corpus(c));
}

TEST(SampleCorpus, DeterministicAndPointMass) {
    const auto s = canonical_space();
    EXPECT_EQ(sample_corpus(s, Which::R, 300, 9).docs, sample_corpus(s, Which::R, 300, 9).docs);
    EXPECT_NE(sample_corpus(s, Which::R, 300, 9).docs, sample_corpus(s, Which::R, 300, 10).docs);
    const SyntheticSpace point({"a", "b"}, {0.0, 1.0}, {0.0, 1.0}, {1, 2}, {1, 0});
    for (const auto& d : sample_corpus(point, Which::R, 500, 3).docs) EXPECT_EQ(d.text, "b");
    EXPECT_THROW(sample_corpus(point, Which::R, 0, 3), Error);
}

TEST(TrueWeights, RatioArithmetic) {
    const SyntheticSpace s({"a", "b"}, {0.25, 0.75}, {0.75, 0.25}, {0, 1}, {1, 0});
    Corpus c{"c", {{"1", "a", 0.0, {}, {}}, {"2", "b", 1.0, {}, {}}}, Role::source};
    const auto ws = true_weights(s, c);
    EXPECT_DOUBLE_EQ(ws.raw[0], 3.0);
    EXPECT_DOUBLE_EQ(ws.raw[1], 1.0 / 3.0);
    EXPECT_EQ(ws.method, WeightMethod::exact);
    c.docs.push_back({"3", "nope", 0.0, {}, {}});
    EXPECT_THROW(true_weights(s, c), Error);
}

TEST(TrueWeights, IdenticalDistributionsGiveOnes) {
    const auto s = canonical_space(false);
    const auto c = sample_corpus(s, Which::R, 100, 1);
    for (double w : true_weights(s, c).raw) EXPECT_DOUBLE_EQ(w, 1.0);
}

TEST(Enumeration, ChangeOfMeasureIdentities) {
    for (const auto& s : {two_point_space(), canonical_space(), four_point(),
                          unigram_space({"p", "q", "r"}, {0.5, 0.3, 0.2}, {0.2, 0.3, 0.5}, 4)}) {
        const auto t = enumerate_truth(s);
        double mass = 0, is = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            mass += s.p_R()[i] * t.true_ratio[i];
            is += s.p_R()[i] * t.true_ratio[i] * s.y()[i];
        }
        EXPECT_NEAR(mass, 1.0, 1e-12);
        EXPECT_NEAR(is, t.mu_T, 1e-12);
    }
}

TEST(SyntheticSpace, ConstructorValidation) {
    EXPECT_THROW(SyntheticSpace({"a", "b"}, {1.0, 0.0}, {0.5, 0.5}, {0, 1}, {1, 0}), Error);  // absolute continuity
    EXPECT_THROW(SyntheticSpace({"a", "a"}, {0.5, 0.5}, {0.5, 0.5}, {0, 1}, {1, 0}), Error);
    EXPECT_THROW(SyntheticSpace({"a", "b"}, {0.5, 0.6}, {0.5, 0.5}, {0, 1}, {1, 0}), Error);
    EXPECT_THROW(SyntheticSpace({"a", "b"}, {0.5, 0.5}, {0.5, 0.5}, {0, 1}, {1, 1}), Error);
    EXPECT_THROW(SyntheticSpace({"a", "b"}, {0.5, 0.5}, {0.5, 0.5}, {0, 1}, {1, 2}), Error);
    EXPECT_THROW(SyntheticSpace({"a"}, {1.0}, {1.0}, {0, 1}, {1}), Error);
    std::vector<std::string> many;
    for (int i = 0; i < 1025; ++i) many.push_back(std::to_string(i));
    std::vector<double> p(1025, 1.0 / 1025);
    std::vector<int> a(1025, 0);
    a[0] = 1;
    EXPECT_THROW(SyntheticSpace(many, p, p, std::vector<double>(1025, 0.0), a), Error);
}

TEST(SyntheticSpace, JsonRoundTrip) {
    const auto s = canonical_space();
    const auto j = to_json(s);
    EXPECT_EQ(j.begin().key(), "texts");
    const auto back = space_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(back.texts(), s.texts());
    EXPECT_EQ(back.p_R(), s.p_R());
    EXPECT_EQ(back.p_T(), s.p_T());
    EXPECT_EQ(back.y(), s.y());
    EXPECT_EQ(back.a(), s.a());
    EXPECT_THROW(space_from_json(nlohmann::json{{"texts", {"a"}}}), Error);
}

TEST(CanonicalSpace, ShiftAndStructure) {
    const auto s = canonical_space();
    EXPECT_EQ(s.size(), 16u);
    const auto t = enumerate_truth(s);
    EXPECT_GT(t.mu_T - t.mu_R, 0.5);
    const auto flat = canonical_space(false);
    EXPECT_EQ(flat.p_R(), flat.p_T());
    EXPECT_EQ(flat.p_R(), s.p_R());
}

TEST(UnigramSpace, ProductProbabilities) {
    const auto s = unigram_space({"u", "v"}, {0.7, 0.3}, {0.4, 0.6}, 3);
    ASSERT_EQ(s.size(), 8u);
    const auto i = s.index_of("u v u");
    EXPECT_NEAR(s.p_R()[i], 0.7 * 0.3 * 0.7, 1e-15);
    EXPECT_NEAR(s.p_T()[i], 0.4 * 0.6 * 0.4, 1e-15);
    EXPECT_EQ(s.y()[i], 2.0);
    EXPECT_EQ(s.a()[s.index_of("v v v")], 0);
}

TEST(Unbiasedness, HtWithTrueWeights) {
    const auto s = canonical_space();
    const double truth = exact_mean(s, Which::T);
    const TextSampler sampler(s, Which::R);
    Rng rng(derive_seed(17, "synth-unbiased"));
    std::vector<double> est, var;
    for (int r = 0; r < 10000; ++r) {
        std::vector<double> w(200), y(200);
        for (int i = 0; i < 200; ++i) {
            const auto x = sampler(rng);
            w[i] = s.p_T()[x] / s.p_R()[x];
            y[i] = s.y()[x];
        }
        const auto m = ht_mean(w, y);
        est.push_back(m.estimate);
        if (r < 1000) var.push_back(m.variance);
    }
    EXPECT_LE(std::abs(mean(est) - truth), 3 * sample_sd(est) / 100.0);
    const std::vector<double> first(est.begin(), est.begin() + 1000);
    EXPECT_LE(std::abs(mean(var) / sample_variance(first) - 1.0), 0.10);
}
