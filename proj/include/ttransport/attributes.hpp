#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "corpus.hpp"
#include "error.hpp"
#include "text.hpp"

namespace ttransport {

// A lexicon maps category names to word patterns. A pattern is either a literal
// token or a prefix ending in a single trailing '*'. Patterns are stored lowercased.
struct Lexicon {
    std::map<std::string, std::vector<std::string>> categories;

    std::size_t size() const noexcept { return categories.size(); }

    std::vector<std::string> category_names() const {
        std::vector<std::string> names;
        names.reserve(categories.size());
        for (const auto& [k, v] : categories) names.push_back(k);
        return names;
    }
};

struct AttributeVector {
    std::map<std::string, int> values;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string lowercase(std::string s) {
    for (auto& c : s) c = to_lower_ascii(c);
    return s;
}

} // namespace detail

/// Format: one category per line, "name: pattern, pattern*, ...". '#' starts a comment line.
inline Lexicon parse_lexicon(std::istream& in) {
    Lexicon lex;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string trimmed = detail::trim(line);
        if (trimmed.empty() || trimmed.front() == '#') continue;
        const auto colon = trimmed.find(':');
        if (colon == std::string::npos) throw ParseError("expected 'category: patterns'", lineno);
        std::string name = detail::trim(std::string_view(trimmed).substr(0, colon));
        if (name.empty()) throw ParseError("empty category name", lineno);
        if (lex.categories.count(name)) throw ParseError("duplicate category '" + name + "'", lineno);

        std::vector<std::string> patterns;
        std::stringstream rest(trimmed.substr(colon + 1));
        std::string item;
        while (std::getline(rest, item, ',')) {
            std::string p = detail::lowercase(detail::trim(item));
            if (p.empty()) throw ParseError("empty pattern in category '" + name + "'", lineno);
            const auto star = p.find('*');
            if (star != std::string::npos && star != p.size() - 1)
                throw ParseError("malformed pattern '" + p + "': '*' is only allowed as the final character", lineno);
            if (p == "*") throw ParseError("pattern '*' has an empty prefix", lineno);
            patterns.push_back(std::move(p));
        }
        if (patterns.empty()) throw ParseError("category '" + name + "' has no patterns", lineno);
        lex.categories.emplace(std::move(name), std::move(patterns));
    }
    if (lex.categories.empty()) throw Error("empty lexicon");
    return lex;
}

inline Lexicon load_lexicon(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open lexicon file '" + path.string() + "'");
    try {
        return parse_lexicon(in);
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

inline bool matches_any_token(const std::set<std::string>& tokens, const std::string& pattern) {
    if (pattern.back() != '*') return tokens.count(pattern) > 0;
    const std::string_view prefix(pattern.data(), pattern.size() - 1);
    auto it = tokens.lower_bound(std::string(prefix));
    return it != tokens.end() && std::string_view(*it).substr(0, prefix.size()) == prefix;
}

inline AttributeVector code_text(std::string_view text, const Lexicon& lexicon) {
    const auto toks = tokenize(text);
    const std::set<std::string> tokens(toks.begin(), toks.end());
    AttributeVector out;
    for (const auto& [name, patterns] : lexicon.categories) {
        const bool hit = std::any_of(patterns.begin(), patterns.end(),
                                     [&](const std::string& p) { return matches_any_token(tokens, p); });
        out.values[name] = hit ? 1 : 0;
    }
    return out;
}

/// values[c] = 1 iff some token of the document matches some pattern of category c.
inline AttributeVector code_attributes(const Document& doc, const Lexicon& lexicon) {
    return code_text(doc.text, lexicon);
}

/// Returns a copy of the corpus with every lexicon category coded on every document.
/// Existing attributes with other names are kept.
inline Corpus code_corpus(const Corpus& corpus, const Lexicon& lexicon) {
    Corpus out = corpus;
    for (auto& d : out.docs)
        for (const auto& [k, v] : code_attributes(d, lexicon).values) d.attributes[k] = v;
    return out;
}

enum class FeatureKind { lexicon_binary, bag_of_words, external };

inline const char* to_string(FeatureKind k) {
    switch (k) {
    case FeatureKind::lexicon_binary: return "lexicon";
    case FeatureKind::bag_of_words: return "bow";
    case FeatureKind::external: return "external";
    }
    return "?";
}

struct FeatureSpec {
    FeatureKind kind = FeatureKind::bag_of_words;
    std::size_t vocab_size = 1000;  // bag-of-words only
};

using FeatureMatrix = Eigen::MatrixXd;

// Feature extractor whose data-dependent state (bag-of-words vocabulary,
// external dimensionality) is fixed at fit time, so training and estimation
// documents land in the same feature space.
class Featurizer {
public:
    Featurizer() = default;

    static Featurizer fit(const std::vector<const Corpus*>& corpora, const FeatureSpec& spec,
                          const Lexicon* lexicon = nullptr) {
        Featurizer f;
        f.spec_ = spec;
        switch (spec.kind) {
        case FeatureKind::lexicon_binary:
            if (!lexicon) throw Error("lexicon-binary features need a lexicon");
            f.lexicon_ = *lexicon;
            f.width_ = lexicon->size();
            break;
        case FeatureKind::bag_of_words: {
            if (spec.vocab_size == 0) throw Error("bag-of-words vocab_size must be positive");
            std::unordered_map<std::string, std::size_t> freq;
            for (const Corpus* c : corpora)
                for (const auto& d : c->docs)
                    for (auto& t : tokenize(d.text)) ++freq[t];
            std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
            std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
                return a.second != b.second ? a.second > b.second : a.first < b.first;
            });
            if (ranked.size() > spec.vocab_size) ranked.resize(spec.vocab_size);
            for (std::size_t i = 0; i < ranked.size(); ++i) {
                f.vocab_.push_back(ranked[i].first);
                f.vocab_index_.emplace(ranked[i].first, i);
            }
            f.width_ = f.vocab_.size();
            if (f.width_ == 0) throw Error("bag-of-words vocabulary is empty");
            break;
        }
        case FeatureKind::external: {
            std::optional<std::size_t> dim;
            for (const Corpus* c : corpora)
                for (const auto& d : c->docs) {
                    if (!d.features) throw Error("document '" + d.id + "' has no precomputed features");
                    if (!dim) dim = d.features->size();
                    else if (*dim != d.features->size())
                        throw Error("document '" + d.id + "': feature dimensionality mismatch");
                }
            if (!dim) throw Error("no documents to infer external feature width from");
            f.width_ = *dim;
            break;
        }
        }
        return f;
    }

    const FeatureSpec& spec() const noexcept { return spec_; }
    std::size_t width() const noexcept { return width_; }
    const std::vector<std::string>& vocabulary() const noexcept { return vocab_; }

    FeatureMatrix transform(const Corpus& corpus) const {
        FeatureMatrix m = FeatureMatrix::Zero(static_cast<Eigen::Index>(corpus.size()),
                                              static_cast<Eigen::Index>(width_));
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            const Document& d = corpus.docs[i];
            const auto row = static_cast<Eigen::Index>(i);
            switch (spec_.kind) {
            case FeatureKind::lexicon_binary: {
                Eigen::Index j = 0;
                for (const auto& [name, v] : code_attributes(d, lexicon_).values) m(row, j++) = v;
                break;
            }
            case FeatureKind::bag_of_words: {
                std::vector<double> counts(width_, 0.0);
                for (const auto& t : tokenize(d.text))
                    if (auto it = vocab_index_.find(t); it != vocab_index_.end()) counts[it->second] += 1.0;
                for (std::size_t j = 0; j < width_; ++j)
                    m(row, static_cast<Eigen::Index>(j)) = std::log1p(counts[j]);
                break;
            }
            case FeatureKind::external:
                if (!d.features) throw Error("document '" + d.id + "' has no precomputed features");
                if (d.features->size() != width_)
                    throw Error("document '" + d.id + "': expected " + std::to_string(width_) + " features, got " +
                                std::to_string(d.features->size()));
                for (std::size_t j = 0; j < width_; ++j)
                    m(row, static_cast<Eigen::Index>(j)) = (*d.features)[j];
                break;
            }
        }
        return m;
    }

private:
    FeatureSpec spec_;
    Lexicon lexicon_;
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, std::size_t> vocab_index_;
    std::size_t width_ = 0;
};

/// One row per document. Lexicon-binary columns follow sorted category names.
inline FeatureMatrix featurize(const Corpus& corpus, const FeatureSpec& spec, const Lexicon* lexicon = nullptr) {
    return Featurizer::fit({&corpus}, spec, lexicon).transform(corpus);
}

} // namespace ttransport
