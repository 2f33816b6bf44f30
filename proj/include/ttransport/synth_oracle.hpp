#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "error.hpp"
#include "random.hpp"
#include "weights.hpp"

namespace ttransport {

enum class Which { R, T };

inline constexpr std::size_t kMaxSyntheticTexts = 1024;

// A finite text universe with known source/target distributions, a
// deterministic response per text and a binary attribute per text.
// Every population quantity is computable by enumeration.
class SyntheticSpace {
public:
    SyntheticSpace(std::vector<std::string> texts, std::vector<double> p_R, std::vector<double> p_T,
                   std::vector<double> y, std::vector<int> a)
        : texts_(std::move(texts)), p_R_(std::move(p_R)), p_T_(std::move(p_T)), y_(std::move(y)), a_(std::move(a)) {
        const std::size_t k = texts_.size();
        if (k == 0) throw Error("synthetic space needs at least one text");
        if (k > kMaxSyntheticTexts) throw Error("synthetic space is limited to 1024 texts");
        if (p_R_.size() != k || p_T_.size() != k || y_.size() != k || a_.size() != k)
            throw Error("synthetic space fields differ in length");
        std::unordered_map<std::string, std::size_t> seen;
        for (std::size_t i = 0; i < k; ++i)
            if (!seen.emplace(texts_[i], i).second) throw Error("duplicate synthetic text '" + texts_[i] + "'");
        index_ = std::move(seen);
        auto check_dist = [](const std::vector<double>& p, const char* name) {
            double s = 0;
            for (double v : p) {
                if (!(v >= 0) || !std::isfinite(v)) throw Error(std::string(name) + " has a negative or non-finite entry");
                s += v;
            }
            if (std::abs(s - 1.0) > 1e-12) throw Error(std::string(name) + " does not sum to 1");
        };
        check_dist(p_R_, "p_R");
        check_dist(p_T_, "p_T");
        bool has0 = false, has1 = false;
        for (std::size_t i = 0; i < k; ++i) {
            if (p_T_[i] > 0 && p_R_[i] == 0)
                throw Error("absolute continuity violated: text '" + texts_[i] + "' has target mass but no source mass");
            if (!std::isfinite(y_[i])) throw Error("non-finite response for text '" + texts_[i] + "'");
            if (a_[i] != 0 && a_[i] != 1) throw Error("attribute values must be 0 or 1");
            (a_[i] ? has1 : has0) = true;
        }
        if (!has0 || !has1) throw Error("both attribute groups must be nonempty");
    }

    std::size_t size() const noexcept { return texts_.size(); }
    const std::vector<std::string>& texts() const noexcept { return texts_; }
    const std::vector<double>& p(Which w) const noexcept { return w == Which::R ? p_R_ : p_T_; }
    const std::vector<double>& p_R() const noexcept { return p_R_; }
    const std::vector<double>& p_T() const noexcept { return p_T_; }
    const std::vector<double>& y() const noexcept { return y_; }
    const std::vector<int>& a() const noexcept { return a_; }

    std::size_t index_of(const std::string& text) const {
        auto it = index_.find(text);
        if (it == index_.end()) throw Error("text '" + text + "' is not in the synthetic space");
        return it->second;
    }

private:
    std::vector<std::string> texts_;
    std::vector<double> p_R_, p_T_, y_;
    std::vector<int> a_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// sum_x y(x) p(x).
inline double exact_mean(const SyntheticSpace& s, Which which) {
    const auto& p = s.p(which);
    double m = 0;
    for (std::size_t i = 0; i < s.size(); ++i) m += s.y()[i] * p[i];
    return m;
}

/// mu(P_1) - mu(P_0) where P_g is p conditioned on a(x) = g.
inline double exact_effect(const SyntheticSpace& s, Which which) {
    const auto& p = s.p(which);
    double num[2] = {0, 0}, mass[2] = {0, 0};
    for (std::size_t i = 0; i < s.size(); ++i) {
        num[s.a()[i]] += s.y()[i] * p[i];
        mass[s.a()[i]] += p[i];
    }
    for (int g = 0; g < 2; ++g)
        if (!(mass[g] > 0))
            throw Error("attribute group a=" + std::to_string(g) + " has zero mass under " +
                        (which == Which::R ? "P^R" : "P^T"));
    return num[1] / mass[1] - num[0] / mass[0];
}

struct SyntheticTruth {
    double mu_R = 0;
    double mu_T = 0;
    double tau_R = 0;
    double tau_T = 0;
    std::vector<double> true_ratio;  // p_T / p_R per text
};

inline SyntheticTruth enumerate_truth(const SyntheticSpace& s) {
    SyntheticTruth t;
    t.mu_R = exact_mean(s, Which::R);
    t.mu_T = exact_mean(s, Which::T);
    t.tau_R = exact_effect(s, Which::R);
    t.tau_T = exact_effect(s, Which::T);
    t.true_ratio.resize(s.size());
    for (std::size_t i = 0; i < s.size(); ++i)
        t.true_ratio[i] = s.p_R()[i] > 0 ? s.p_T()[i] / s.p_R()[i] : 0.0;
    return t;
}

/// Index draws by inverse CDF; used directly by Monte Carlo loops that do not
/// need full documents.
class TextSampler {
public:
    TextSampler(const SyntheticSpace& s, Which which) : cdf_(s.size()) {
        std::partial_sum(s.p(which).begin(), s.p(which).end(), cdf_.begin());
    }

    std::size_t operator()(Rng& rng) const {
        const double u = rng.uniform() * cdf_.back();
        // upper_bound never lands on a zero-mass entry.
        const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        return std::min(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
    }

private:
    std::vector<double> cdf_;
};

/// n i.i.d. documents with text, response y(x), attribute "a" = a(x) and a
/// one-hot feature vector identifying the text.
inline Corpus sample_corpus(const SyntheticSpace& s, Which which, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw Error("sample size must be positive");
    const char* tag = which == Which::R ? "R" : "T";
    Corpus c{std::string("synthetic-") + tag, {}, which == Which::R ? Role::source : Role::target};
    c.docs.reserve(n);
    TextSampler draw(s, which);
    Rng rng(seed);
    const int width = static_cast<int>(std::to_string(n - 1).size());
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t x = draw(rng);
        Document d;
        std::string num = std::to_string(i);
        d.id = std::string(tag) + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num;
        d.text = s.texts()[x];
        d.response = s.y()[x];
        d.attributes["a"] = s.a()[x];
        std::vector<double> onehot(s.size(), 0.0);
        onehot[x] = 1.0;
        d.features = std::move(onehot);
        c.docs.push_back(std::move(d));
    }
    return c;
}

/// Exact importance weights p_T(x_i) / p_R(x_i) for documents of the space.
inline WeightSet true_weights(const SyntheticSpace& s, const Corpus& docs) {
    std::vector<std::string> ids;
    std::vector<double> raw;
    for (const auto& d : docs.docs) {
        const std::size_t x = s.index_of(d.text);
        if (!(s.p_R()[x] > 0)) throw Error("text '" + d.text + "' has no source mass");
        ids.push_back(d.id);
        raw.push_back(s.p_T()[x] / s.p_R()[x]);
    }
    return make_weight_set(std::move(ids), std::move(raw), WeightMethod::exact);
}

// ---------------------------------------------------------------------------
// Fixtures

namespace detail {

inline std::vector<double> softmax(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] = std::exp(logits[i] - mx));
    for (auto& v : p) v /= s;
    return p;
}

} // namespace detail

/// Two texts; p_R = (0.5, 0.5), p_T = (0.25, 0.75), y = (0, 4). mu(P^T) = 3.
inline SyntheticSpace two_point_space() {
    return SyntheticSpace({"alpha", "beta"}, {0.5, 0.5}, {0.25, 0.75}, {0.0, 4.0}, {1, 0});
}

inline constexpr const char* kCanonicalTokens[4][2] = {
    {"cold", "warm"}, {"short", "long"}, {"casual", "formal"}, {"statement", "question"}};

/// Canonical shifted instance: 16 texts, one per subset of four binary traits
/// (f1..f4), each text spelling out its traits as words. Both distributions are
/// log-linear in the traits, so the log density ratio is linear in bag-of-words
/// features. The response has an f1*f3 interaction that a linear predictor
/// cannot represent; the attribute is f1 ("warm").
inline SyntheticSpace canonical_space(bool shifted = true) {
    const double theta_R[4] = {-0.5, 0.2, -0.5, 0.0};
    const double theta_T[4] = {0.5, -0.2, 0.5, 0.0};
    std::vector<std::string> texts;
    std::vector<double> lr, lt, y;
    std::vector<int> a;
    for (int mask = 0; mask < 16; ++mask) {
        int f[4];
        for (int j = 0; j < 4; ++j) f[j] = (mask >> (3 - j)) & 1;
        std::string t;
        double zr = 0, zt = 0;
        for (int j = 0; j < 4; ++j) {
            if (j) t.push_back(' ');
            t += kCanonicalTokens[j][f[j]];
            zr += theta_R[j] * f[j];
            zt += theta_T[j] * f[j];
        }
        texts.push_back(std::move(t));
        lr.push_back(zr);
        lt.push_back(zt);
        y.push_back(1.0 + 5.0 * f[0] * f[2] + f[1] - f[3]);
        a.push_back(f[0]);
    }
    auto p_R = detail::softmax(lr);
    auto p_T = shifted ? detail::softmax(lt) : p_R;
    return SyntheticSpace(std::move(texts), std::move(p_R), std::move(p_T), std::move(y), std::move(a));
}

/// All length-L sequences over a small vocabulary, with P(x) the product of
/// per-token unigram probabilities under q_R / q_T. Response: number of
/// occurrences of vocab[0]; attribute: vocab[0] occurs at least once.
inline SyntheticSpace unigram_space(const std::vector<std::string>& vocab, const std::vector<double>& q_R,
                                    const std::vector<double>& q_T, std::size_t length) {
    const std::size_t v = vocab.size();
    if (v < 2 || q_R.size() != v || q_T.size() != v || length == 0)
        throw Error("unigram space needs a vocabulary of at least 2 tokens with matching distributions");
    std::size_t k = 1;
    for (std::size_t i = 0; i < length; ++i) {
        k *= v;
        if (k > kMaxSyntheticTexts) throw Error("unigram space exceeds 1024 texts");
    }
    std::vector<std::string> texts(k);
    std::vector<double> p_R(k), p_T(k), y(k);
    std::vector<int> a(k);
    for (std::size_t idx = 0; idx < k; ++idx) {
        std::size_t rest = idx;
        double pr = 1, pt = 1;
        int hits = 0;
        std::string t;
        for (std::size_t pos = 0; pos < length; ++pos) {
            const std::size_t tok = rest % v;
            rest /= v;
            if (pos) t.push_back(' ');
            t += vocab[tok];
            pr *= q_R[tok];
            pt *= q_T[tok];
            hits += tok == 0;
        }
        texts[idx] = std::move(t);
        p_R[idx] = pr;
        p_T[idx] = pt;
        y[idx] = hits;
        a[idx] = hits > 0;
    }
    // Renormalize away rounding so the sums pass the 1e-12 check.
    const double sr = std::accumulate(p_R.begin(), p_R.end(), 0.0);
    const double st = std::accumulate(p_T.begin(), p_T.end(), 0.0);
    for (auto& x : p_R) x /= sr;
    for (auto& x : p_T) x /= st;
    return SyntheticSpace(std::move(texts), std::move(p_R), std::move(p_T), std::move(y), std::move(a));
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json to_json(const SyntheticSpace& s) {
    nlohmann::ordered_json j;
    j["texts"] = s.texts();
    j["p_R"] = s.p_R();
    j["p_T"] = s.p_T();
    j["y"] = s.y();
    j["a"] = s.a();
    return j;
}

inline SyntheticSpace space_from_json(const nlohmann::json& j) {
    try {
        return SyntheticSpace(j.at("texts").get<std::vector<std::string>>(), j.at("p_R").get<std::vector<double>>(),
                              j.at("p_T").get<std::vector<double>>(), j.at("y").get<std::vector<double>>(),
                              j.at("a").get<std::vector<int>>());
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("invalid synthetic space JSON: ") + e.what());
    }
}

inline nlohmann::ordered_json to_json(const SyntheticTruth& t) {
    nlohmann::ordered_json j;
    j["mu_R"] = t.mu_R;
    j["mu_T"] = t.mu_T;
    j["tau_R"] = t.tau_R;
    j["tau_T"] = t.tau_T;
    j["true_ratio"] = t.true_ratio;
    return j;
}

} // namespace ttransport
