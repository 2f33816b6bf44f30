#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "random.hpp"

namespace ttransport {

enum class Role { source, target };

inline const char* to_string(Role r) { return r == Role::source ? "source" : "target"; }

enum class CorpusFormat { jsonl, csv };

struct Document {
    std::string id;
    std::string text;
    std::optional<double> response;
    std::map<std::string, int> attributes;  // values are 0 or 1
    std::optional<std::vector<double>> features;

    bool operator==(const Document&) const = default;
};

struct Corpus {
    std::string name;
    std::vector<Document> docs;
    Role role = Role::source;

    std::size_t size() const noexcept { return docs.size(); }
    bool empty() const noexcept { return docs.empty(); }

    bool operator==(const Corpus&) const = default;
};

struct SplitSpec {
    double train_fraction = 0.1;
    std::uint64_t seed = 0;
};

/// Checks the per-corpus invariants: unique nonempty ids, binary attributes,
/// one feature dimensionality. Throws Error naming the offending document.
inline void validate_corpus(const Corpus& corpus) {
    std::unordered_set<std::string> seen;
    std::optional<std::size_t> dim;
    for (const auto& d : corpus.docs) {
        if (d.id.empty()) throw Error("document with empty id in corpus '" + corpus.name + "'");
        if (!seen.insert(d.id).second) throw Error("duplicate document id '" + d.id + "'");
        for (const auto& [name, v] : d.attributes) {
            if (v != 0 && v != 1)
                throw Error("document '" + d.id + "': attribute '" + name + "' is not 0 or 1");
        }
        if (d.response && !std::isfinite(*d.response))
            throw Error("document '" + d.id + "': non-finite response");
        if (d.features) {
            if (!dim) dim = d.features->size();
            else if (*dim != d.features->size())
                throw Error("document '" + d.id + "': ragged feature vector (expected " +
                            std::to_string(*dim) + " values, got " + std::to_string(d.features->size()) + ")");
        }
    }
}

inline void require_responses(const Corpus& corpus) {
    if (corpus.empty()) throw Error("empty corpus '" + corpus.name + "'");
    for (const auto& d : corpus.docs)
        if (!d.response) throw Error("document '" + d.id + "' has no response");
}

inline std::vector<double> responses_of(const Corpus& corpus) {
    require_responses(corpus);
    std::vector<double> y;
    y.reserve(corpus.size());
    for (const auto& d : corpus.docs) y.push_back(*d.response);
    return y;
}

namespace detail {

inline Document document_from_json(const nlohmann::json& j, std::size_t line) {
    if (!j.is_object()) throw ParseError("expected a JSON object", line);
    Document d;
    auto id = j.find("id");
    if (id == j.end() || !id->is_string()) throw ParseError("missing string field 'id'", line);
    d.id = id->get<std::string>();
    auto text = j.find("text");
    if (text == j.end() || !text->is_string()) throw ParseError("document '" + d.id + "': missing string field 'text'", line);
    d.text = text->get<std::string>();
    if (auto r = j.find("response"); r != j.end() && !r->is_null()) {
        if (!r->is_number()) throw ParseError("document '" + d.id + "': response is not a number", line);
        d.response = r->get<double>();
    }
    if (auto a = j.find("attributes"); a != j.end() && !a->is_null()) {
        if (!a->is_object()) throw ParseError("document '" + d.id + "': attributes must be an object", line);
        for (const auto& [name, v] : a->items()) {
            const double x = v.is_number() ? v.get<double>() : -1.0;
            if (!v.is_number() || (x != 0.0 && x != 1.0))
                throw ParseError("document '" + d.id + "': attribute '" + name + "' is not 0 or 1", line);
            d.attributes[name] = static_cast<int>(x);
        }
    }
    if (auto f = j.find("features"); f != j.end() && !f->is_null()) {
        if (!f->is_array()) throw ParseError("document '" + d.id + "': features must be an array", line);
        std::vector<double> values;
        values.reserve(f->size());
        for (const auto& v : *f) {
            if (!v.is_number()) throw ParseError("document '" + d.id + "': non-numeric feature", line);
            values.push_back(v.get<double>());
        }
        d.features = std::move(values);
    }
    return d;
}

// Minimal RFC 4180 reader: quoted fields may contain commas, quotes ("") and newlines.
// Each record carries the line on which it started.
inline std::vector<std::pair<std::size_t, std::vector<std::string>>> read_csv_records(std::istream& in) {
    std::vector<std::pair<std::size_t, std::vector<std::string>>> records;
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false, field_started = false, any = false;
    std::size_t line = 1, record_line = 1;
    auto end_field = [&] {
        fields.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        const bool blank = fields.size() == 1 && fields[0].empty();
        if (!blank) records.emplace_back(record_line, std::move(fields));
        fields.clear();
        any = false;
    };
    char c;
    while (in.get(c)) {
        if (!any) { record_line = line; any = true; }
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') { in.get(c); field.push_back('"'); }
                else quoted = false;
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && !field_started) { quoted = true; field_started = true; }
        else if (c == ',') end_field();
        else if (c == '\r') {}
        else if (c == '\n') { end_record(); ++line; }
        else { field.push_back(c); field_started = true; }
    }
    if (quoted) throw ParseError("unterminated quoted field", record_line);
    if (any) end_record();
    return records;
}

} // namespace detail

inline Corpus read_corpus_jsonl(std::istream& in, std::string name, Role role) {
    Corpus corpus{std::move(name), {}, role};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), lineno);
        }
        corpus.docs.push_back(detail::document_from_json(j, lineno));
    }
    if (corpus.empty()) throw Error("empty corpus");
    validate_corpus(corpus);
    return corpus;
}

/// CSV corpora need a header row naming at least `id` and the text column.
/// An optional `response` column is read as a number; empty cells mean absent.
inline Corpus read_corpus_csv(std::istream& in, std::string name, Role role,
                              const std::string& text_column = "text") {
    auto records = detail::read_csv_records(in);
    if (records.empty()) throw Error("empty corpus");
    const auto& header = records.front().second;
    auto column = [&](const std::string& col) -> std::optional<std::size_t> {
        auto it = std::find(header.begin(), header.end(), col);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    };
    const auto id_col = column("id");
    const auto text_col = column(text_column);
    const auto resp_col = column("response");
    if (!id_col) throw ParseError("CSV header lacks an 'id' column", records.front().first);
    if (!text_col) throw ParseError("CSV header lacks a '" + text_column + "' column", records.front().first);

    Corpus corpus{std::move(name), {}, role};
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& [lineno, fields] = records[r];
        if (fields.size() != header.size())
            throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()), lineno);
        Document d;
        d.id = fields[*id_col];
        d.text = fields[*text_col];
        if (resp_col && !fields[*resp_col].empty()) {
            const std::string& cell = fields[*resp_col];
            std::size_t used = 0;
            double v = 0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != cell.size()) throw ParseError("document '" + d.id + "': response is not a number", lineno);
            d.response = v;
        }
        corpus.docs.push_back(std::move(d));
    }
    if (corpus.empty()) throw Error("empty corpus");
    validate_corpus(corpus);
    return corpus;
}

inline Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format, Role role) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open corpus file '" + path.string() + "'");
    std::string name = path.stem().string();
    try {
        return format == CorpusFormat::jsonl ? read_corpus_jsonl(in, std::move(name), role)
                                             : read_corpus_csv(in, std::move(name), role);
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

inline nlohmann::ordered_json document_to_json(const Document& d) {
    nlohmann::ordered_json j;
    j["id"] = d.id;
    j["text"] = d.text;
    if (d.response) j["response"] = *d.response;
    if (!d.attributes.empty()) {
        nlohmann::ordered_json a = nlohmann::ordered_json::object();
        for (const auto& [k, v] : d.attributes) a[k] = v;
        j["attributes"] = std::move(a);
    }
    if (d.features) j["features"] = *d.features;
    return j;
}

inline void write_corpus_jsonl(const Corpus& corpus, std::ostream& out) {
    for (const auto& d : corpus.docs) out << document_to_json(d).dump() << '\n';
}

inline void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write corpus file '" + path.string() + "'");
    write_corpus_jsonl(corpus, out);
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

/// Seeded partition without replacement. |train| = round(fraction * n), clamped to [1, n-1].
/// Both parts keep the input's relative order.
inline std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw Error("train fraction must lie in (0, 1)");
    const std::size_t n = corpus.size();
    if (n < 2) throw Error("corpus '" + corpus.name + "' too small to split (need at least 2 documents)");
    auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(spec.seed);
    rng.shuffle(order);
    std::vector<char> in_train(n, 0);
    for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = 1;

    Corpus train{corpus.name + ".train", {}, corpus.role};
    Corpus estimation{corpus.name + ".estimation", {}, corpus.role};
    train.docs.reserve(n_train);
    estimation.docs.reserve(n - n_train);
    for (std::size_t i = 0; i < n; ++i)
        (in_train[i] ? train : estimation).docs.push_back(corpus.docs[i]);
    return {std::move(train), std::move(estimation)};
}

} // namespace ttransport
