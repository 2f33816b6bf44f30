#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "corpus.hpp"
#include "error.hpp"
#include "stats.hpp"

namespace ttransport {

enum class WeightMethod { clf, lm, exact, unit };

inline const char* to_string(WeightMethod m) {
    switch (m) {
    case WeightMethod::clf: return "clf";
    case WeightMethod::lm: return "lm";
    case WeightMethod::exact: return "exact";
    case WeightMethod::unit: return "unit";
    }
    return "?";
}

struct WeightDiagnostics {
    double min = 0, max = 0, median = 0;
    double effective_sample_size = 0;    // (sum w)^2 / sum w^2
    std::size_t clipped = 0;             // classifier posteriors clipped to [eps, 1-eps]
    std::optional<double> truncation_quantile;
    double truncation_cap = 0;
    std::size_t truncated = 0;
};

// Importance weights dP^T/dP^R for an ordered list of documents.
// `stabilized` is raw / mean(raw), the self-normalized form used by the Hajek estimator.
struct WeightSet {
    std::vector<std::string> doc_ids;
    std::vector<double> raw;
    std::vector<double> stabilized;
    WeightMethod method = WeightMethod::exact;
    WeightDiagnostics diagnostics;

    std::size_t size() const noexcept { return raw.size(); }
};

inline double effective_sample_size(std::span<const double> w) {
    double s = 0, s2 = 0;
    for (double v : w) {
        s += v;
        s2 += v * v;
    }
    return s * s / s2;
}

inline std::vector<double> stabilize(std::span<const double> raw) {
    const double m = mean(raw);
    std::vector<double> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = raw[i] / m;
    return out;
}

/// Validates raw weights (finite, > 0), optionally caps them at their
/// `truncate_quantile` quantile, then stabilizes and records diagnostics.
inline WeightSet make_weight_set(std::vector<std::string> ids, std::vector<double> raw, WeightMethod method,
                                 std::optional<double> truncate_quantile = std::nullopt, std::size_t clipped = 0) {
    if (ids.size() != raw.size()) throw Error("weight ids and values differ in length");
    if (raw.empty()) throw Error("empty weight set");
    for (std::size_t i = 0; i < raw.size(); ++i)
        if (!std::isfinite(raw[i]) || !(raw[i] > 0.0))
            throw Error("document '" + ids[i] + "': importance weight " + format_double(raw[i]) +
                        " is not finite and positive");

    WeightSet ws;
    ws.method = method;
    ws.diagnostics.clipped = clipped;
    if (truncate_quantile) {
        if (!(*truncate_quantile > 0.0 && *truncate_quantile <= 1.0))
            throw Error("truncation quantile must lie in (0, 1]");
        const double cap = quantile(raw, *truncate_quantile);
        for (auto& w : raw)
            if (w > cap) {
                w = cap;
                ++ws.diagnostics.truncated;
            }
        ws.diagnostics.truncation_quantile = truncate_quantile;
        ws.diagnostics.truncation_cap = cap;
    }
    ws.stabilized = stabilize(raw);
    ws.diagnostics.min = *std::min_element(raw.begin(), raw.end());
    ws.diagnostics.max = *std::max_element(raw.begin(), raw.end());
    ws.diagnostics.median = median(raw);
    ws.diagnostics.effective_sample_size = effective_sample_size(raw);
    ws.doc_ids = std::move(ids);
    ws.raw = std::move(raw);
    return ws;
}

inline WeightSet unit_weights(const Corpus& corpus) {
    std::vector<std::string> ids;
    for (const auto& d : corpus.docs) ids.push_back(d.id);
    return make_weight_set(std::move(ids), std::vector<double>(corpus.size(), 1.0), WeightMethod::unit);
}

/// Responses of `corpus` ordered like `weights.doc_ids`. Throws on any id the
/// corpus lacks or on a document without a response.
inline std::vector<double> aligned_responses(const WeightSet& weights, const Corpus& corpus) {
    std::unordered_map<std::string, const Document*> by_id;
    for (const auto& d : corpus.docs) by_id.emplace(d.id, &d);
    std::vector<double> y;
    y.reserve(weights.size());
    for (const auto& id : weights.doc_ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw Error("weight for unknown document id '" + id + "'");
        if (!it->second->response) throw Error("document '" + id + "' has no response");
        y.push_back(*it->second->response);
    }
    return y;
}

inline void write_weights_csv(const WeightSet& ws, std::ostream& out) {
    out << "doc_id,raw,stabilized\n";
    for (std::size_t i = 0; i < ws.size(); ++i) {
        const std::string& id = ws.doc_ids[i];
        if (id.find_first_of(",\"\n\r") != std::string::npos) {
            std::string q = "\"";
            for (char c : id) q += (c == '"') ? std::string("\"\"") : std::string(1, c);
            out << q << '"';
        } else {
            out << id;
        }
        out << ',' << format_double(ws.raw[i]) << ',' << format_double(ws.stabilized[i]) << '\n';
    }
}

/// Reads a doc_id,raw[,stabilized] CSV; stabilized values are recomputed from raw.
inline WeightSet read_weights_csv(std::istream& in, WeightMethod method = WeightMethod::exact) {
    auto records = detail::read_csv_records(in);
    if (records.empty()) throw Error("empty weights file");
    const auto& header = records.front().second;
    if (header.size() < 2 || header[0] != "doc_id" || header[1] != "raw")
        throw ParseError("weights CSV header must start with doc_id,raw", records.front().first);
    std::vector<std::string> ids;
    std::vector<double> raw;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& [line, f] = records[r];
        if (f.size() != header.size()) throw ParseError("wrong number of fields", line);
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(f[1], &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != f[1].size() || f[1].empty()) throw ParseError("raw weight is not a number", line);
        ids.push_back(f[0]);
        raw.push_back(v);
    }
    return make_weight_set(std::move(ids), std::move(raw), method);
}

inline WeightSet load_weights_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open weights file '" + path.string() + "'");
    try {
        return read_weights_csv(in);
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

} // namespace ttransport
