#include <cmath>

#include <gtest/gtest.h>

#include "ttransport/ttransport.hpp"

using namespace ttransport;

namespace {

Corpus text_corpus(const std::string& name, const std::vector<std::pair<std::string, double>>& rows) {
    Corpus c{name, {}, Role::source};
    for (std::size_t i = 0; i < rows.size(); ++i)
        c.docs.push_back({name + std::to_string(i), rows[i].first, rows[i].second, {}, {}});
    return c;
}

EvalConfig bow_config(std::uint64_t seed) {
    EvalConfig cfg;
    cfg.features = {FeatureKind::bag_of_words, 100};
    cfg.seed = seed;
    return cfg;
}

std::vector<std::string> keys(const nlohmann::ordered_json& j) {
    std::vector<std::string> out;
    for (auto it = j.begin(); it != j.end(); ++it) out.push_back(it.key());
    return out;
}

} // namespace

TEST(NaiveEstimate, ConstantResponses) {
    const auto src = text_corpus("s", {{"red fox", 4.0}, {"blue fox", 4.0}, {"red hen", 4.0}, {"old dog", 4.0}});
    const auto tgt = text_corpus("t", {{"red red red", 0.0}, {"new words here", 0.0}});
    const auto s = naive_estimate(src, tgt, {FeatureKind::bag_of_words, 10}, nullptr, {});
    EXPECT_NEAR(s.estimate, 4.0, 1e-6);
    EXPECT_EQ(s.estimator, "naive");
    EXPECT_EQ(s.n, 2u);
}

TEST(NaiveEstimate, InDistributionMatchesSourceMean) {
    const auto s = canonical_space(false);
    const auto src = sample_corpus(s, Which::R, 2000, 1);
    const auto y = responses_of(src);
    const auto est = naive_estimate(src, src, {FeatureKind::bag_of_words, 100}, nullptr, {});
    // Least squares with an intercept reproduces the in-sample mean.
    const double boot_sd = sample_sd(est.replicates);
    EXPECT_LE(std::abs(est.estimate - mean(y)), 2 * boot_sd);
    EXPECT_NEAR(est.estimate, mean(y), 1e-6);
}

TEST(NaiveEstimate, UnderMovesOnShiftedInstance) {
    const auto s = canonical_space();
    const auto truth = enumerate_truth(s);
    const auto src = sample_corpus(s, Which::R, 20000, 11);
    const auto tgt = sample_corpus(s, Which::T, 20000, 12);
    const auto naive = naive_estimate(src, tgt, {FeatureKind::bag_of_words, 100}, nullptr, {});
    EXPECT_GT(naive.estimate, truth.mu_R);
    EXPECT_LT(naive.estimate, truth.mu_T);
    EXPECT_LT(naive.bootstrap_ci.hi, truth.mu_T);

    const auto clf = train_ratio_classifier(src, tgt, {FeatureKind::bag_of_words, 100});
    const auto ws = clf_weights(clf, src);
    const auto m = hajek_mean(ws, src);
    EXPECT_LT(std::abs(m.estimate - truth.mu_T), 3 * std::sqrt(m.variance));
}

TEST(NormalizedRmse, HandValues) {
    EXPECT_DOUBLE_EQ(normalized_rmse(std::vector<double>{1, 3}, 2.0, std::vector<double>{0, 1, 2}), 1.0);
    EXPECT_DOUBLE_EQ(normalized_rmse(std::vector<double>{2, 2, 2}, 2.0, std::vector<double>{0, 1, 2}), 0.0);
    EXPECT_THROW(normalized_rmse(std::vector<double>{1}, 2.0, std::vector<double>{5, 5, 5}), Error);
    EXPECT_THROW(normalized_rmse(std::vector<double>{}, 2.0, std::vector<double>{0, 1}), Error);
    EXPECT_THROW(normalized_rmse(std::vector<double>{1}, 2.0, std::vector<double>{0}), Error);
}

TEST(TopWeighted, OrderingAndTies) {
    const Corpus c = text_corpus("c", {{"first", 0}, {"second", 0}, {"third", 0}});
    const auto ws = make_weight_set({"c0", "c1", "c2"}, {0.5, 3.0, 1.0}, WeightMethod::exact);
    const auto top = top_weighted_texts(ws, c, 1);
    ASSERT_EQ(top.size(), 1u);
    EXPECT_EQ(top[0].doc_id, "c1");
    EXPECT_EQ(top[0].excerpt, "second");
    const auto all = top_weighted_texts(ws, c, 3);
    EXPECT_EQ(all[1].doc_id, "c2");
    EXPECT_EQ(all[2].doc_id, "c0");
    EXPECT_THROW(top_weighted_texts(ws, c, 4), Error);

    const auto tied = make_weight_set({"c2", "c0", "c1"}, {1.0, 1.0, 1.0}, WeightMethod::exact);
    const auto t = top_weighted_texts(tied, c, 3);
    EXPECT_EQ(t[0].doc_id, "c0");
    EXPECT_EQ(t[2].doc_id, "c2");

    const auto scaled = make_weight_set({"c0", "c1", "c2"}, {0.5e6, 3.0e6, 1.0e6}, WeightMethod::exact);
    const auto ts = top_weighted_texts(scaled, c, 3);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(ts[i].doc_id, all[i].doc_id);
}

TEST(TopWeighted, ExcerptTruncation) {
    const std::string longtext(500, 'x');
    EXPECT_EQ(excerpt(longtext).size(), 200u);
    EXPECT_EQ(excerpt(longtext).substr(197), "...");
    std::string utf;
    for (int i = 0; i < 150; ++i) utf += "\xc3\xa9";  // 2-byte sequences
    const auto e = excerpt(utf);
    EXPECT_LE(e.size(), 200u);
    EXPECT_EQ((e.size() - 3) % 2, 0u);
    EXPECT_EQ(excerpt("short"), "short");
}

TEST(EvaluateTransport, NoShiftWeightsNearOne) {
    const auto s = canonical_space(false);
    const auto pool = sample_corpus(s, Which::R, 40000, 5);
    auto [src, tgt] = split_corpus(pool, {0.5, 77});
    const auto r = evaluate_transport(src, tgt, bow_config(3));
    ASSERT_TRUE(r.mu_T);
    EXPECT_TRUE(r.weights_near_uniform);
    EXPECT_FALSE(r.absolute_continuity_warning);
    EXPECT_LT(r.top_weighted.front().weight / r.weights.diagnostics.min, 2.0);
    const double se = std::sqrt(r.mu_transported.variance);
    EXPECT_LE(std::abs(r.mu_transported.estimate - r.mu_T->estimate),
              std::abs(r.mu_R.estimate - r.mu_T->estimate) + 2 * se);
}

TEST(EvaluateTransport, ShiftedInstanceMovesTowardTarget) {
    const auto s = canonical_space();
    const auto truth = enumerate_truth(s);
    const auto src = sample_corpus(s, Which::R, 10000, 21);
    const auto tgt = sample_corpus(s, Which::T, 10000, 22);
    const auto r = evaluate_transport(src, tgt, bow_config(4));
    EXPECT_LT(std::abs(r.mu_transported.estimate - truth.mu_T), std::abs(r.mu_R.estimate - truth.mu_T));
    ASSERT_TRUE(r.nrmse_transport && r.nrmse_naive);
    EXPECT_LT(*r.nrmse_transport, *r.nrmse_naive);
    EXPECT_EQ(r.weights.size(), 9000u);
    EXPECT_EQ(r.mu_R.n, 9000u);
    EXPECT_EQ(r.mu_T->n, 10000u);
    for (std::size_t i = 1; i < r.top_weighted.size(); ++i)
        EXPECT_GE(r.top_weighted[i - 1].weight, r.top_weighted[i].weight);
}

TEST(EvaluateTransport, SchemaCompleteness) {
    const auto s = canonical_space();
    const auto r = evaluate_transport(sample_corpus(s, Which::R, 500, 1), sample_corpus(s, Which::T, 500, 2),
                                      bow_config(1));
    const auto j = to_json(r);
    EXPECT_EQ(keys(j), (std::vector<std::string>{"mu_R", "mu_T", "mu_transported", "naive", "nrmse", "weights",
                                                 "top_weighted", "config"}));
    for (const char* k : {"mu_R", "mu_T", "mu_transported", "naive"})
        for (const char* f : {"estimate", "variance", "normal_ci", "bootstrap_ci", "n"}) EXPECT_TRUE(j[k].contains(f)) << k << "." << f;
    EXPECT_GE(j["nrmse"]["transport"].get<double>(), 0.0);
    EXPECT_GE(j["nrmse"]["naive"].get<double>(), 0.0);
    EXPECT_EQ(j["nrmse"]["convention"], kNrmseConvention);
    EXPECT_EQ(j["top_weighted"].size(), 10u);
    EXPECT_TRUE(j["config"].contains("fingerprint"));
    EXPECT_EQ(j["mu_transported"]["estimator"], "hajek");
}

TEST(EvaluateTransport, TargetWithoutResponsesOmitsTruth) {
    const auto s = canonical_space();
    auto tgt = sample_corpus(s, Which::T, 300, 2);
    for (auto& d : tgt.docs) d.response.reset();
    const auto r = evaluate_transport(sample_corpus(s, Which::R, 300, 1), tgt, bow_config(1));
    EXPECT_FALSE(r.mu_T);
    EXPECT_FALSE(r.nrmse_transport);
    const auto j = to_json(r);
    EXPECT_FALSE(j.contains("mu_T"));
    EXPECT_FALSE(j.contains("nrmse"));
}

TEST(EvaluateTransport, ClfAndLmShareSchema) {
    const auto s = canonical_space();
    const auto src = sample_corpus(s, Which::R, 600, 1), tgt = sample_corpus(s, Which::T, 600, 2);
    auto cfg = bow_config(9);
    const auto jc = to_json(evaluate_transport(src, tgt, cfg));
    cfg.method = WeightMethod::lm;
    const auto jl = to_json(evaluate_transport(src, tgt, cfg));
    EXPECT_EQ(keys(jc), keys(jl));
    EXPECT_EQ(keys(jc["weights"]), keys(jl["weights"]));
    EXPECT_EQ(keys(jc["config"]), keys(jl["config"]));
    EXPECT_TRUE(jc["weights"]["prompt_targeting"].is_null());
    EXPECT_TRUE(jl["weights"]["prompt_targeting"].is_object());
    std::vector<std::string> differing;
    for (auto it = jc["config"].begin(); it != jc["config"].end(); ++it)
        if (*it != jl["config"][it.key()]) differing.push_back(it.key());
    EXPECT_EQ(differing, (std::vector<std::string>{"method", "fingerprint"}));
}

TEST(EvaluateTransport, ByteIdenticalAcrossRunsAndThreads) {
    const auto s = canonical_space();
    const auto src = sample_corpus(s, Which::R, 800, 1), tgt = sample_corpus(s, Which::T, 800, 2);
    auto cfg = bow_config(13);
    const auto a = to_json(evaluate_transport(src, tgt, cfg)).dump(2);
    EXPECT_EQ(a, to_json(evaluate_transport(src, tgt, cfg)).dump(2));
    cfg.threads = 3;
    EXPECT_EQ(a, to_json(evaluate_transport(src, tgt, cfg)).dump(2));
    cfg.full_bootstrap = true;
    cfg.bootstrap_B = 20;
    const auto f1 = to_json(evaluate_transport(src, tgt, cfg)).dump();
    cfg.threads = 1;
    EXPECT_EQ(f1, to_json(evaluate_transport(src, tgt, cfg)).dump());
    cfg.seed = 14;
    EXPECT_NE(f1, to_json(evaluate_transport(src, tgt, cfg)).dump());
}

TEST(EvaluateTransport, FlagsPoorOverlap) {
    const SyntheticSpace s({"rare text", "common one", "common two"}, {0.002, 0.499, 0.499}, {0.9, 0.05, 0.05},
                           {5, 1, 2}, {1, 0, 0});
    EvalConfig cfg;
    cfg.features = {FeatureKind::external, 0};
    const auto r = evaluate_transport(sample_corpus(s, Which::R, 20000, 1), sample_corpus(s, Which::T, 2000, 2), cfg);
    EXPECT_TRUE(r.absolute_continuity_warning);
    EXPECT_FALSE(r.weights_near_uniform);
    EXPECT_NE(summary_table(r).find("WARNING"), std::string::npos);
}

TEST(EvaluateTransport, InputValidation) {
    const auto s = canonical_space();
    auto src = sample_corpus(s, Which::R, 100, 1);
    const auto tgt = sample_corpus(s, Which::T, 100, 2);
    auto cfg = bow_config(1);
    cfg.method = WeightMethod::unit;
    EXPECT_THROW(evaluate_transport(src, tgt, cfg), Error);
    cfg.method = WeightMethod::clf;
    EXPECT_THROW(evaluate_transport(src, Corpus{"e", {}, Role::target}, cfg), Error);
    src.docs[3].response.reset();
    EXPECT_THROW(evaluate_transport(src, tgt, cfg), Error);
}
