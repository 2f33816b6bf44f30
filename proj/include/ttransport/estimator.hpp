#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "corpus.hpp"
#include "error.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "stats.hpp"
#include "weights.hpp"

namespace ttransport {

enum class EstimatorKind { horvitz_thompson, hajek };

inline const char* to_string(EstimatorKind k) {
    return k == EstimatorKind::hajek ? "hajek" : "horvitz-thompson";
}

struct Interval {
    double lo = 0;
    double hi = 0;

    bool contains(double x) const noexcept { return lo <= x && x <= hi; }
    bool operator==(const Interval&) const = default;
};

struct CiSpec {
    double alpha = 0.05;
    std::size_t bootstrap_B = 100;
    std::uint64_t seed = 0;
    std::size_t threads = 1;  // bootstrap workers; results do not depend on it

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0, 1)");
        if (bootstrap_B == 0) throw Error("bootstrap iterations must be positive");
    }
};

struct TransportedMean {
    double estimate = 0;
    double variance = 0;
    std::size_t n = 0;
    EstimatorKind kind = EstimatorKind::hajek;
};

struct EffectEstimate {
    std::string attribute;
    double tau = 0;
    double variance = 0;  // sum of the two group variances
    TransportedMean mu1;
    TransportedMean mu0;
    Interval normal_ci;
    std::optional<Interval> bootstrap_ci;
    std::size_t n1 = 0;
    std::size_t n0 = 0;
};

namespace detail {

inline void check_aligned(std::span<const double> w, std::span<const double> y) {
    if (w.size() != y.size()) throw Error("weights and responses are misaligned (" + std::to_string(w.size()) +
                                          " vs " + std::to_string(y.size()) + ")");
    if (w.empty()) throw Error("no observations");
    for (double v : y)
        if (!std::isfinite(v)) throw Error("non-finite response");
    for (double v : w)
        if (!std::isfinite(v) || v < 0) throw Error("weights must be finite and nonnegative");
}

inline double hajek_point(std::span<const double> w, std::span<const double> y) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        num += w[i] * y[i];
        den += w[i];
    }
    if (!(den > 0)) throw Error("Hajek estimate needs a positive weight total");
    return num / den;
}

inline double ht_point(std::span<const double> w, std::span<const double> y) {
    double num = 0;
    for (std::size_t i = 0; i < w.size(); ++i) num += w[i] * y[i];
    return num / static_cast<double>(w.size());
}

} // namespace detail

/// (1/n^2) * sum_i (w_i y_i - mu)^2, with the pooled estimate mu standing in for
/// the per-observation mean.
inline double variance_estimate(std::span<const double> w, std::span<const double> y, double mu) {
    detail::check_aligned(w, y);
    double s = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double r = w[i] * y[i] - mu;
        s += r * r;
    }
    const auto n = static_cast<double>(w.size());
    return s / (n * n);
}

/// Horvitz-Thompson: (1/n) sum w_i y_i with raw density-ratio weights.
inline TransportedMean ht_mean(std::span<const double> w, std::span<const double> y) {
    detail::check_aligned(w, y);
    TransportedMean m;
    m.kind = EstimatorKind::horvitz_thompson;
    m.n = w.size();
    m.estimate = detail::ht_point(w, y);
    m.variance = variance_estimate(w, y, m.estimate);
    return m;
}

/// Hajek: sum w_i y_i / sum w_i. The variance applies the same closed form to
/// the linearized terms gamma_i (y_i - mu), gamma = w / mean(w).
inline TransportedMean hajek_mean(std::span<const double> w, std::span<const double> y) {
    detail::check_aligned(w, y);
    TransportedMean m;
    m.kind = EstimatorKind::hajek;
    m.n = w.size();
    m.estimate = detail::hajek_point(w, y);
    const auto gamma = stabilize(w);
    std::vector<double> resid(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) resid[i] = y[i] - m.estimate;
    m.variance = variance_estimate(gamma, resid, 0.0);
    return m;
}

inline TransportedMean ht_mean(const WeightSet& ws, const Corpus& corpus) {
    return ht_mean(ws.raw, aligned_responses(ws, corpus));
}

inline TransportedMean hajek_mean(const WeightSet& ws, const Corpus& corpus) {
    return hajek_mean(ws.stabilized, aligned_responses(ws, corpus));
}

inline TransportedMean estimate_mean(EstimatorKind kind, std::span<const double> w, std::span<const double> y) {
    return kind == EstimatorKind::hajek ? hajek_mean(w, y) : ht_mean(w, y);
}

inline Interval normal_interval(double estimate, double variance, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0, 1)");
    if (variance < 0) throw Error("negative variance");
    const double half = normal_quantile(1.0 - alpha / 2.0) * std::sqrt(variance);
    return {estimate - half, estimate + half};
}

inline Interval normal_ci(const TransportedMean& m, const CiSpec& spec) {
    return normal_interval(m.estimate, m.variance, spec.alpha);
}

/// Percentile interval: the alpha/2 and 1-alpha/2 empirical quantiles.
inline Interval percentile_interval(const std::vector<double>& replicates, double alpha) {
    return {quantile(replicates, alpha / 2.0), quantile(replicates, 1.0 - alpha / 2.0)};
}

/// B resamples of (weight, response) pairs with replacement; weights stay fixed.
/// Replicate r draws from an RNG seeded by (seed, r).
inline std::vector<double> bootstrap_replicates(std::span<const double> w, std::span<const double> y,
                                                EstimatorKind kind, const CiSpec& spec) {
    detail::check_aligned(w, y);
    spec.validate();
    const std::size_t n = w.size();
    std::vector<double> reps(spec.bootstrap_B);
    parallel_for(spec.bootstrap_B, spec.threads, [&](std::size_t r) {
        Rng rng(replicate_seed(spec.seed, r));
        std::vector<double> bw(n), by(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto j = rng.below(n);
            bw[i] = w[j];
            by[i] = y[j];
        }
        reps[r] = kind == EstimatorKind::hajek ? detail::hajek_point(bw, by) : detail::ht_point(bw, by);
    });
    return reps;
}

inline Interval bootstrap_ci(std::span<const double> w, std::span<const double> y, EstimatorKind kind,
                             const CiSpec& spec) {
    if (w.size() < 2) throw Error("bootstrap needs at least 2 observations");
    return percentile_interval(bootstrap_replicates(w, y, kind, spec), spec.alpha);
}

/// Natural effect of a binary attribute under the target distribution:
/// difference of within-group Hajek means, each group's weights renormalized
/// within the group. Variance is the sum of group variances. Bootstrap CIs
/// resample each group independently.
inline EffectEstimate natural_effect(const Corpus& corpus, const WeightSet& weights, const std::string& attribute,
                                     const CiSpec& spec) {
    spec.validate();
    std::unordered_map<std::string, const Document*> by_id;
    for (const auto& d : corpus.docs) by_id.emplace(d.id, &d);

    std::vector<double> w1, y1, w0, y0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        auto it = by_id.find(weights.doc_ids[i]);
        if (it == by_id.end()) throw Error("weight for unknown document id '" + weights.doc_ids[i] + "'");
        const Document& d = *it->second;
        auto a = d.attributes.find(attribute);
        if (a == d.attributes.end())
            throw Error("attribute '" + attribute + "' is not coded on document '" + d.id + "'");
        if (!d.response) throw Error("document '" + d.id + "' has no response");
        (a->second == 1 ? w1 : w0).push_back(weights.stabilized[i]);
        (a->second == 1 ? y1 : y0).push_back(*d.response);
    }
    if (w1.empty()) throw Error("attribute '" + attribute + "': group a(X)=1 is empty");
    if (w0.empty()) throw Error("attribute '" + attribute + "': group a(X)=0 is empty");

    EffectEstimate e;
    e.attribute = attribute;
    e.mu1 = hajek_mean(w1, y1);
    e.mu0 = hajek_mean(w0, y0);
    e.n1 = w1.size();
    e.n0 = w0.size();
    e.tau = e.mu1.estimate - e.mu0.estimate;
    e.variance = e.mu1.variance + e.mu0.variance;
    e.normal_ci = normal_interval(e.tau, e.variance, spec.alpha);

    if (e.n1 + e.n0 >= 2) {
        std::vector<double> reps(spec.bootstrap_B);
        parallel_for(spec.bootstrap_B, spec.threads, [&](std::size_t r) {
            Rng rng(replicate_seed(spec.seed, r));
            auto resample = [&rng](const std::vector<double>& w, const std::vector<double>& y) {
                std::vector<double> bw(w.size()), by(w.size());
                for (std::size_t i = 0; i < w.size(); ++i) {
                    const auto j = rng.below(w.size());
                    bw[i] = w[j];
                    by[i] = y[j];
                }
                return detail::hajek_point(bw, by);
            };
            const double m1 = resample(w1, y1);
            const double m0 = resample(w0, y0);
            reps[r] = m1 - m0;
        });
        e.bootstrap_ci = percentile_interval(reps, spec.alpha);
    }
    return e;
}

} // namespace ttransport
