#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <sstream>
#include <tuple>
#include <unordered_map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "attributes.hpp"
#include "corpus.hpp"
#include "density_ratio.hpp"
#include "error.hpp"
#include "estimator.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "stats.hpp"
#include "weights.hpp"

namespace ttransport {

// ---------------------------------------------------------------------------
// Naive baseline: regress responses on source features, average the
// predictions (pseudo-labels) over the target.

class NaiveModel {
public:
    static constexpr double kRidge = 1e-6;

    static NaiveModel fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
        if (x.rows() == 0 || x.rows() != y.size()) throw Error("naive model needs aligned, nonempty data");
        const Eigen::Index d = x.cols();
        Eigen::MatrixXd a(x.rows(), d + 1);
        a.col(0).setOnes();
        a.rightCols(d) = x;
        Eigen::MatrixXd gram = a.transpose() * a;
        gram.diagonal().tail(d).array() += kRidge;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
        if (ldlt.info() != Eigen::Success) throw Error("naive model: singular design matrix");
        Eigen::VectorXd beta = ldlt.solve(a.transpose() * y);
        if (!beta.allFinite() || (gram * beta - a.transpose() * y).norm() > 1e-6 * (1.0 + (a.transpose() * y).norm()))
            throw Error("naive model: singular design matrix beyond ridge rescue");
        NaiveModel m;
        m.intercept_ = beta(0);
        m.coef_ = beta.tail(d);
        return m;
    }

    Eigen::VectorXd predict(const Eigen::MatrixXd& x) const {
        if (x.cols() != coef_.size()) throw Error("naive model: feature mismatch");
        return (x * coef_).array() + intercept_;
    }

    const Eigen::VectorXd& coefficients() const noexcept { return coef_; }
    double intercept() const noexcept { return intercept_; }

private:
    Eigen::VectorXd coef_;
    double intercept_ = 0;
};

struct EstimateSummary {
    double estimate = 0;
    double variance = 0;
    Interval normal_ci;
    Interval bootstrap_ci;
    std::size_t n = 0;
    std::string estimator;
    std::vector<double> replicates;  // bootstrap replicate estimates (not serialized)
};

/// Pseudo-label mean over the target with a bootstrap CI over target resamples.
inline EstimateSummary naive_estimate(const Corpus& train_R, const Corpus& target_docs, const Featurizer& featurizer,
                                      const CiSpec& ci) {
    const auto y = responses_of(train_R);
    const Eigen::MatrixXd xs = featurizer.transform(train_R);
    const Eigen::MatrixXd xt = featurizer.transform(target_docs);
    if (xs.cols() != xt.cols()) throw Error("naive baseline: feature mismatch between source and target");
    const auto model = NaiveModel::fit(xs, Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())));
    const Eigen::VectorXd pl = model.predict(xt);
    std::vector<double> pseudo(pl.data(), pl.data() + pl.size());
    const std::vector<double> unit(pseudo.size(), 1.0);

    EstimateSummary s;
    s.estimator = "naive";
    s.n = pseudo.size();
    s.estimate = mean(pseudo);
    s.variance = pseudo.size() > 1 ? sample_variance(pseudo) / static_cast<double>(pseudo.size()) : 0.0;
    s.normal_ci = normal_interval(s.estimate, s.variance, ci.alpha);
    s.replicates = bootstrap_replicates(unit, pseudo, EstimatorKind::horvitz_thompson, ci);
    s.bootstrap_ci = percentile_interval(s.replicates, ci.alpha);
    return s;
}

inline EstimateSummary naive_estimate(const Corpus& train_R, const Corpus& target_docs, const FeatureSpec& spec,
                                      const Lexicon* lexicon, const CiSpec& ci) {
    return naive_estimate(train_R, target_docs, Featurizer::fit({&train_R}, spec, lexicon), ci);
}

/// sqrt(mean((r - reference)^2)) / sd(target responses).
inline double normalized_rmse(std::span<const double> replicates, double reference,
                              std::span<const double> target_responses) {
    if (replicates.empty()) throw Error("normalized RMSE needs at least one replicate");
    if (target_responses.size() < 2) throw Error("normalized RMSE needs at least two target responses");
    const double sd = sample_sd(target_responses);
    if (!(sd > 0)) throw Error("normalized RMSE undefined: target responses have zero standard deviation");
    double s = 0;
    for (double r : replicates) s += (r - reference) * (r - reference);
    return std::sqrt(s / static_cast<double>(replicates.size())) / sd;
}

// ---------------------------------------------------------------------------
// Top-weighted texts

struct WeightedText {
    std::string doc_id;
    std::string excerpt;
    double weight = 0;  // stabilized
};

inline constexpr std::size_t kExcerptLength = 200;

inline std::string excerpt(const std::string& text, std::size_t limit = kExcerptLength) {
    if (text.size() <= limit) return text;
    std::size_t cut = limit - 3;
    // Do not split a UTF-8 sequence.
    while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
    return text.substr(0, cut) + "...";
}

/// k entries sorted by descending stabilized weight, ties by doc id.
inline std::vector<WeightedText> top_weighted_texts(const WeightSet& weights, const Corpus& docs, std::size_t k) {
    if (k == 0) throw Error("k must be positive");
    if (k > weights.size())
        throw Error("k = " + std::to_string(k) + " exceeds the number of weighted documents (" +
                    std::to_string(weights.size()) + ")");
    std::unordered_map<std::string, const Document*> by_id;
    for (const auto& d : docs.docs) by_id.emplace(d.id, &d);
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (weights.stabilized[a] != weights.stabilized[b]) return weights.stabilized[a] > weights.stabilized[b];
        return weights.doc_ids[a] < weights.doc_ids[b];
    });
    std::vector<WeightedText> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = order[i];
        auto it = by_id.find(weights.doc_ids[j]);
        if (it == by_id.end()) throw Error("weight for unknown document id '" + weights.doc_ids[j] + "'");
        out.push_back({weights.doc_ids[j], excerpt(it->second->text), weights.stabilized[j]});
    }
    return out;
}

// ---------------------------------------------------------------------------
// End-to-end validation run

enum class LmBackend { ngram, http };

inline const char* to_string(LmBackend b) { return b == LmBackend::ngram ? "ngram" : "http"; }

struct EvalConfig {
    WeightMethod method = WeightMethod::clf;  // clf or lm
    FeatureSpec features;
    std::string lexicon_path;
    LmBackend lm_backend = LmBackend::ngram;
    int ngram_order = 1;
    double ngram_alpha = 1.0;
    std::string prompt_R;
    std::string prompt_T;
    std::string endpoint;
    double train_fraction = 0.1;
    double alpha = 0.05;
    std::size_t bootstrap_B = 100;
    bool full_bootstrap = false;  // re-estimate weights inside every bootstrap replicate
    std::optional<double> truncate_quantile;
    std::uint64_t seed = 0;
    std::size_t top_k = 10;
    std::string source_path;  // recorded in the fingerprint only
    std::string target_path;
    std::size_t threads = 1;  // does not affect results; excluded from the fingerprint
};

inline constexpr const char* kNrmseConvention =
    "sqrt(mean over bootstrap replicates of (replicate - mu_T)^2) / sample sd of target responses";

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Every result-affecting setting plus a hash of them.
inline nlohmann::ordered_json config_json(const EvalConfig& c) {
    nlohmann::ordered_json j;
    j["method"] = to_string(c.method);
    j["features"] = to_string(c.features.kind);
    j["vocab_size"] = c.features.vocab_size;
    j["lexicon"] = c.lexicon_path;
    j["lm_backend"] = to_string(c.lm_backend);
    j["ngram_order"] = c.ngram_order;
    j["ngram_alpha"] = c.ngram_alpha;
    j["prompt_r"] = c.prompt_R;
    j["prompt_t"] = c.prompt_T;
    j["endpoint"] = c.endpoint;
    j["train_frac"] = c.train_fraction;
    j["alpha"] = c.alpha;
    j["bootstrap"] = c.bootstrap_B;
    j["bootstrap_mode"] = c.full_bootstrap ? "full" : "fixed";
    j["truncate_quantile"] = c.truncate_quantile ? nlohmann::ordered_json(*c.truncate_quantile) : nlohmann::ordered_json();
    j["seed"] = c.seed;
    j["top_k"] = c.top_k;
    j["source"] = c.source_path;
    j["target"] = c.target_path;
    j["fingerprint"] = hex64(fnv1a64(j.dump()));
    return j;
}

struct EvalReport {
    EstimateSummary mu_R;
    std::optional<EstimateSummary> mu_T;
    EstimateSummary mu_transported;
    EstimateSummary naive;
    std::optional<double> nrmse_transport;
    std::optional<double> nrmse_naive;
    WeightSet weights;
    std::optional<PromptTargetingReport> prompt_targeting;
    bool absolute_continuity_warning = false;  // ESS < 5% of n
    bool weights_near_uniform = false;         // max/min raw weight < 2
    std::vector<WeightedText> top_weighted;
    nlohmann::ordered_json config;
};

struct ScorerPair {
    const LanguageScorer* source = nullptr;
    const LanguageScorer* target = nullptr;
};

namespace detail {

inline EstimateSummary summarize(const TransportedMean& m, std::vector<double> replicates, double alpha) {
    EstimateSummary s;
    s.estimate = m.estimate;
    s.variance = m.variance;
    s.n = m.n;
    s.estimator = to_string(m.kind);
    s.normal_ci = normal_interval(m.estimate, m.variance, alpha);
    s.bootstrap_ci = percentile_interval(replicates, alpha);
    s.replicates = std::move(replicates);
    return s;
}

inline EstimateSummary unweighted_summary(const Corpus& c, const CiSpec& ci) {
    const auto y = responses_of(c);
    const std::vector<double> w(y.size(), 1.0);
    return summarize(hajek_mean(w, y), bootstrap_replicates(w, y, EstimatorKind::hajek, ci), ci.alpha);
}

inline Corpus resample(const Corpus& c, Rng& rng) {
    Corpus out{c.name, {}, c.role};
    out.docs.reserve(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) out.docs.push_back(c.docs[rng.below(c.size())]);
    return out;
}

struct WeightModel {
    const EvalConfig& config;
    const Lexicon* lexicon;
    std::optional<ScorerPair> external;

    // Weights for `estimation` from training splits (ignored by the http backend).
    WeightSet operator()(const Corpus& train_R, const Corpus& train_T, const Corpus& estimation,
                         std::optional<PromptTargetingReport>* targeting = nullptr) const {
        if (config.method == WeightMethod::clf) {
            const auto clf = train_ratio_classifier(train_R, train_T, config.features, lexicon);
            return clf_weights(clf, estimation, config.truncate_quantile);
        }
        if (config.method != WeightMethod::lm) throw Error("evaluation method must be clf or lm");
        if (config.lm_backend == LmBackend::http) {
            if (!external || !external->source || !external->target)
                throw Error("http LM backend requires provider scorers");
            if (targeting)
                *targeting = validate_prompt_targeting(*external->source, *external->target, estimation, config.threads);
            return lm_weights(*external->source, *external->target, estimation, config.truncate_quantile,
                              config.threads);
        }
        const auto lm_R = fit_ngram_lm(train_R, config.ngram_order, config.ngram_alpha);
        const auto lm_T = fit_ngram_lm(train_T, config.ngram_order, config.ngram_alpha);
        if (targeting) *targeting = validate_prompt_targeting(lm_R, lm_T, estimation);
        return lm_weights(lm_R, lm_T, estimation, config.truncate_quantile);
    }
};

} // namespace detail

/// Splits both corpora, estimates weights on the source estimation split,
/// transports the mean response, fits the naive baseline and, when the target
/// carries responses, scores both against the target mean. Deterministic given
/// config.seed.
inline EvalReport evaluate_transport(const Corpus& source, const Corpus& target, const EvalConfig& config,
                                     const Lexicon* lexicon = nullptr, std::optional<ScorerPair> external = std::nullopt) {
    require_responses(source);
    if (target.empty()) throw Error("empty target corpus");
    if (config.method != WeightMethod::clf && config.method != WeightMethod::lm)
        throw Error("evaluation method must be clf or lm");

    auto ci_for = [&](std::string_view component) {
        CiSpec ci;
        ci.alpha = config.alpha;
        ci.bootstrap_B = config.bootstrap_B;
        ci.seed = derive_seed(config.seed, component);
        ci.threads = config.threads;
        ci.validate();
        return ci;
    };

    const bool needs_training = !(config.method == WeightMethod::lm && config.lm_backend == LmBackend::http);
    Corpus train_R, est_R, train_T;
    if (needs_training) {
        std::tie(train_R, est_R) = split_corpus(source, {config.train_fraction, derive_seed(config.seed, "split-source")});
        Corpus est_T;
        std::tie(train_T, est_T) = split_corpus(target, {config.train_fraction, derive_seed(config.seed, "split-target")});
    } else {
        est_R = source;
    }

    const detail::WeightModel weight_model{config, lexicon, external};
    EvalReport report;
    report.weights = weight_model(train_R, train_T, est_R, &report.prompt_targeting);

    const auto y = responses_of(est_R);
    const auto& w = report.weights.stabilized;

    report.mu_R = detail::unweighted_summary(est_R, ci_for("bootstrap-mu-R"));

    const bool target_has_responses =
        std::all_of(target.docs.begin(), target.docs.end(), [](const Document& d) { return d.response.has_value(); });
    if (target_has_responses) report.mu_T = detail::unweighted_summary(target, ci_for("bootstrap-mu-T"));

    const CiSpec transport_ci = ci_for("bootstrap-transport");
    std::vector<double> reps;
    if (config.full_bootstrap && needs_training) {
        reps.resize(transport_ci.bootstrap_B);
        EvalConfig inner = config;
        inner.threads = 1;
        const detail::WeightModel inner_model{inner, lexicon, external};
        parallel_for(transport_ci.bootstrap_B, config.threads, [&](std::size_t r) {
            Rng rng(replicate_seed(transport_ci.seed, r));
            const Corpus br = detail::resample(train_R, rng);
            const Corpus bt = detail::resample(train_T, rng);
            const Corpus be = detail::resample(est_R, rng);
            const WeightSet ws = inner_model(br, bt, be);
            reps[r] = hajek_mean(ws.stabilized, responses_of(be)).estimate;
        });
    } else {
        reps = bootstrap_replicates(w, y, EstimatorKind::hajek, transport_ci);
    }
    report.mu_transported = detail::summarize(hajek_mean(w, y), std::move(reps), config.alpha);

    const Featurizer featurizer = needs_training ? Featurizer::fit({&train_R, &train_T}, config.features, lexicon)
                                                 : Featurizer::fit({&source, &target}, config.features, lexicon);
    report.naive = naive_estimate(est_R, target, featurizer, ci_for("bootstrap-naive"));

    if (report.mu_T) {
        const auto yt = responses_of(target);
        report.nrmse_transport = normalized_rmse(report.mu_transported.replicates, report.mu_T->estimate, yt);
        report.nrmse_naive = normalized_rmse(report.naive.replicates, report.mu_T->estimate, yt);
    }

    const auto& diag = report.weights.diagnostics;
    report.absolute_continuity_warning =
        diag.effective_sample_size < 0.05 * static_cast<double>(report.weights.size());
    report.weights_near_uniform = diag.max / diag.min < 2.0;
    report.top_weighted = top_weighted_texts(report.weights, est_R, std::min(config.top_k, report.weights.size()));
    report.config = config_json(config);
    return report;
}

} // namespace ttransport
