#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "attributes.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "logistic.hpp"
#include "parallel.hpp"
#include "stats.hpp"
#include "text.hpp"
#include "weights.hpp"

namespace ttransport {

inline constexpr double kPosteriorClip = 1e-6;

// ---------------------------------------------------------------------------
// Classifier approach: dP^T/dP^R(x) = odds(C=T | x) * P(C=R) / P(C=T).

struct RatioClassifier {
    LogisticModel model;
    Featurizer featurizer;
    std::size_t n_R = 0;
    std::size_t n_T = 0;

    Eigen::VectorXd posterior_target(const Corpus& docs) const {
        return model.predict_proba(featurizer.transform(docs));
    }
};

/// Fits a source-vs-target logistic classifier (target is the positive class).
inline RatioClassifier train_ratio_classifier(const Corpus& train_R, const Corpus& train_T, const FeatureSpec& spec,
                                              const Lexicon* lexicon = nullptr, const LogisticOptions& opt = {}) {
    if (train_R.empty() || train_T.empty())
        throw Error("degenerate single-class input: ratio classifier needs nonempty source and target training sets");
    RatioClassifier clf;
    clf.featurizer = Featurizer::fit({&train_R, &train_T}, spec, lexicon);
    const Eigen::MatrixXd xr = clf.featurizer.transform(train_R);
    const Eigen::MatrixXd xt = clf.featurizer.transform(train_T);
    Eigen::MatrixXd x(xr.rows() + xt.rows(), xr.cols());
    x << xr, xt;
    Eigen::VectorXd y(x.rows());
    y.head(xr.rows()).setZero();
    y.tail(xt.rows()).setOnes();
    clf.model = fit_logistic(x, y, opt);
    clf.n_R = train_R.size();
    clf.n_T = train_T.size();
    return clf;
}

/// raw_i = [p_i / (1 - p_i)] * n_R / n_T with p_i clipped to [eps, 1 - eps].
inline WeightSet weights_from_posteriors(std::vector<std::string> ids, std::span<const double> p_target,
                                         std::size_t n_R, std::size_t n_T,
                                         std::optional<double> truncate_quantile = std::nullopt) {
    if (n_R == 0 || n_T == 0) throw Error("class counts must be positive");
    const double prior_ratio = static_cast<double>(n_R) / static_cast<double>(n_T);
    std::vector<double> raw(p_target.size());
    std::size_t clipped = 0;
    for (std::size_t i = 0; i < p_target.size(); ++i) {
        double p = p_target[i];
        if (std::isnan(p)) throw Error("classifier produced NaN posterior");
        if (p < kPosteriorClip || p > 1.0 - kPosteriorClip) {
            p = std::clamp(p, kPosteriorClip, 1.0 - kPosteriorClip);
            ++clipped;
        }
        raw[i] = p / (1.0 - p) * prior_ratio;
    }
    return make_weight_set(std::move(ids), std::move(raw), WeightMethod::clf, truncate_quantile, clipped);
}

inline WeightSet clf_weights(const RatioClassifier& clf, const Corpus& docs,
                             std::optional<double> truncate_quantile = std::nullopt) {
    if (!clf.model.trained()) throw Error("ratio classifier is not trained");
    const Eigen::VectorXd p = clf.posterior_target(docs);
    std::vector<std::string> ids;
    ids.reserve(docs.size());
    for (const auto& d : docs.docs) ids.push_back(d.id);
    return weights_from_posteriors(std::move(ids), std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
                                   clf.n_R, clf.n_T, truncate_quantile);
}

// ---------------------------------------------------------------------------
// Language-model approach: weight = P^T(x) / P^R(x) from two scorers.

// Anything that assigns a natural-log probability to a single sentence.
class LanguageScorer {
public:
    virtual ~LanguageScorer() = default;
    virtual double sentence_logprob(std::string_view sentence) const = 0;
};

// Additively smoothed n-gram model (order 1-3) over lowercase alphanumeric tokens.
// Contexts are padded with <s>; there is no end-of-sentence event, so a
// sentence's probability is the plain product of its token probabilities.
class NgramLM : public LanguageScorer {
public:
    static constexpr const char* kUnknown = "<unk>";
    static constexpr const char* kStart = "<s>";

    int order() const noexcept { return order_; }
    double alpha() const noexcept { return alpha_; }
    std::size_t vocabulary_size() const noexcept { return vocab_.size(); }
    const std::set<std::string>& vocabulary() const noexcept { return vocab_; }

    /// P(token | context); context holds the order-1 preceding tokens (may include <s>).
    double probability(const std::string& token, const std::vector<std::string>& context) const {
        const std::string& w = vocab_.count(token) ? token : unknown_;
        const std::string key = join(context);
        const double v = static_cast<double>(vocab_.size());
        auto it = counts_.find(key);
        if (it == counts_.end()) return 1.0 / v;
        const auto& [total, row] = it->second;
        auto jt = row.find(w);
        const double c = jt == row.end() ? 0.0 : static_cast<double>(jt->second);
        return (c + alpha_) / (static_cast<double>(total) + alpha_ * v);
    }

    /// Total probability mass over the vocabulary for one context.
    double context_mass(const std::vector<std::string>& context) const {
        double s = 0.0;
        for (const auto& w : vocab_) s += probability(w, context);
        return s;
    }

    /// Contexts observed in training.
    std::vector<std::vector<std::string>> observed_contexts() const {
        std::vector<std::vector<std::string>> out;
        for (const auto& [key, v] : counts_) out.push_back(split(key));
        return out;
    }

    double sentence_logprob(std::string_view sentence) const override {
        const auto tokens = tokenize(sentence);
        if (tokens.empty()) throw Error("sentence has no tokens");
        std::vector<std::string> ctx(static_cast<std::size_t>(order_ - 1), kStart);
        double lp = 0.0;
        for (const auto& t : tokens) {
            lp += std::log(probability(t, ctx));
            if (!ctx.empty()) {
                ctx.erase(ctx.begin());
                ctx.push_back(vocab_.count(t) ? t : unknown_);
            }
        }
        return lp;
    }

    friend NgramLM fit_ngram_lm(const Corpus&, int, double);

private:
    static std::string join(const std::vector<std::string>& ctx) {
        std::string key;
        for (std::size_t i = 0; i < ctx.size(); ++i) {
            if (i) key.push_back('\x1f');
            key += ctx[i];
        }
        return key;
    }

    std::vector<std::string> split(const std::string& key) const {
        std::vector<std::string> out;
        if (order_ == 1) return out;
        std::size_t start = 0;
        for (;;) {
            const auto pos = key.find('\x1f', start);
            out.push_back(key.substr(start, pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        return out;
    }

    int order_ = 1;
    double alpha_ = 1.0;
    std::string unknown_ = kUnknown;
    std::set<std::string> vocab_;
    // context key -> (total count, token -> count)
    std::map<std::string, std::pair<std::size_t, std::unordered_map<std::string, std::size_t>>> counts_;
};

inline NgramLM fit_ngram_lm(const Corpus& corpus, int order, double smoothing_alpha) {
    if (order < 1 || order > 3) throw Error("n-gram order must be 1, 2 or 3");
    if (!(smoothing_alpha > 0.0) || !std::isfinite(smoothing_alpha)) throw Error("smoothing alpha must be positive");
    if (corpus.empty()) throw Error("cannot fit a language model on an empty corpus");

    std::vector<std::vector<std::string>> sentences;
    for (const auto& d : corpus.docs)
        for (const auto& s : split_sentences(d.text)) {
            auto toks = tokenize(s);
            if (!toks.empty()) sentences.push_back(std::move(toks));
        }

    NgramLM lm;
    lm.order_ = order;
    lm.alpha_ = smoothing_alpha;
    for (const auto& s : sentences) lm.vocab_.insert(s.begin(), s.end());
    if (lm.vocab_.empty()) throw Error("empty vocabulary: corpus '" + corpus.name + "' has no tokens");
    lm.vocab_.insert(NgramLM::kUnknown);

    for (const auto& s : sentences) {
        std::vector<std::string> ctx(static_cast<std::size_t>(order - 1), NgramLM::kStart);
        for (const auto& t : s) {
            auto& [total, row] = lm.counts_[NgramLM::join(ctx)];
            ++total;
            ++row[t];
            if (!ctx.empty()) {
                ctx.erase(ctx.begin());
                ctx.push_back(t);
            }
        }
    }
    return lm;
}

/// Log probability of a text: each sentence scores the sum of its token
/// log-probabilities; a multi-sentence text gets the arithmetic mean of its
/// sentence probabilities, computed as logsumexp(l_k) - log(k).
inline double text_logprob(const LanguageScorer& scorer, std::string_view text) {
    std::vector<double> lps;
    for (const auto& s : split_sentences(text)) {
        if (tokenize(s).empty()) continue;
        const double lp = scorer.sentence_logprob(s);
        if (std::isnan(lp) || lp == std::numeric_limits<double>::infinity())
            throw Error("non-finite sentence log-probability");
        lps.push_back(lp);
    }
    if (lps.empty()) throw Error("text has no tokens");
    const double mx = *std::max_element(lps.begin(), lps.end());
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double l : lps) s += std::exp(l - mx);
    return mx + std::log(s) - std::log(static_cast<double>(lps.size()));
}

struct LogprobPair {
    std::vector<double> source;  // log P^R(x)
    std::vector<double> target;  // log P^T(x)
};

/// Scores every document under both scorers. Up to `max_parallel` documents are
/// scored concurrently; results are stored by document index.
inline LogprobPair score_documents(const LanguageScorer& scorer_R, const LanguageScorer& scorer_T,
                                   const Corpus& docs, std::size_t max_parallel = 1) {
    LogprobPair out{std::vector<double>(docs.size()), std::vector<double>(docs.size())};
    parallel_for(docs.size(), max_parallel, [&](std::size_t i) {
        const Document& d = docs.docs[i];
        try {
            out.source[i] = text_logprob(scorer_R, d.text);
            out.target[i] = text_logprob(scorer_T, d.text);
        } catch (const std::exception& e) {
            throw Error("document '" + d.id + "': " + e.what());
        }
        if (!std::isfinite(out.source[i]) || !std::isfinite(out.target[i]))
            throw Error("document '" + d.id + "': non-finite log-probability");
    });
    return out;
}

/// raw_i = exp(log P^T(x_i) - log P^R(x_i)).
inline WeightSet lm_weights(const LanguageScorer& scorer_R, const LanguageScorer& scorer_T, const Corpus& docs,
                            std::optional<double> truncate_quantile = std::nullopt, std::size_t max_parallel = 1) {
    const auto lp = score_documents(scorer_R, scorer_T, docs, max_parallel);
    std::vector<std::string> ids;
    std::vector<double> raw(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
        ids.push_back(docs.docs[i].id);
        raw[i] = std::exp(lp.target[i] - lp.source[i]);
    }
    return make_weight_set(std::move(ids), std::move(raw), WeightMethod::lm, truncate_quantile);
}

struct PromptTargetingReport {
    double median_ratio = 0;
    double q25 = 0;
    double q75 = 0;
    std::size_t n = 0;
    bool passed = false;  // median_ratio > 1
};

/// On texts drawn from the source distribution, a source-targeted model should
/// assign higher probability than a target-targeted one: the median of
/// P_R(x) / P_T(x) must exceed 1.
inline PromptTargetingReport validate_prompt_targeting(const LanguageScorer& scorer_R, const LanguageScorer& scorer_T,
                                                       const Corpus& source_docs, std::size_t max_parallel = 1) {
    if (source_docs.empty()) throw Error("prompt-targeting validation needs source documents");
    const auto lp = score_documents(scorer_R, scorer_T, source_docs, max_parallel);
    std::vector<double> ratio(source_docs.size());
    for (std::size_t i = 0; i < ratio.size(); ++i) ratio[i] = std::exp(lp.source[i] - lp.target[i]);
    PromptTargetingReport r;
    r.n = ratio.size();
    r.median_ratio = quantile(ratio, 0.5);
    r.q25 = quantile(ratio, 0.25);
    r.q75 = quantile(ratio, 0.75);
    r.passed = r.median_ratio > 1.0;
    return r;
}

} // namespace ttransport
