#pragma once

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "estimator.hpp"
#include "evaluation.hpp"
#include "weights.hpp"

namespace ttransport {

using ojson = nlohmann::ordered_json;

inline ojson to_json(const Interval& i) { return ojson::array({i.lo, i.hi}); }

inline ojson to_json(const EstimateSummary& s) {
    ojson j;
    j["estimate"] = s.estimate;
    j["variance"] = s.variance;
    j["normal_ci"] = to_json(s.normal_ci);
    j["bootstrap_ci"] = to_json(s.bootstrap_ci);
    j["n"] = s.n;
    j["estimator"] = s.estimator;
    return j;
}

inline ojson to_json(const TransportedMean& m) {
    ojson j;
    j["estimate"] = m.estimate;
    j["variance"] = m.variance;
    j["n"] = m.n;
    j["estimator"] = to_string(m.kind);
    return j;
}

inline ojson to_json(const EffectEstimate& e) {
    ojson j;
    j["attribute"] = e.attribute;
    j["tau"] = e.tau;
    j["variance"] = e.variance;
    j["normal_ci"] = to_json(e.normal_ci);
    j["bootstrap_ci"] = e.bootstrap_ci ? to_json(*e.bootstrap_ci) : ojson();
    j["n1"] = e.n1;
    j["n0"] = e.n0;
    j["mu1"] = to_json(e.mu1);
    j["mu0"] = to_json(e.mu0);
    return j;
}

inline ojson to_json(const WeightDiagnostics& d) {
    ojson j;
    j["min"] = d.min;
    j["max"] = d.max;
    j["median"] = d.median;
    j["effective_sample_size"] = d.effective_sample_size;
    j["clipped"] = d.clipped;
    ojson t;
    t["applied"] = d.truncation_quantile.has_value();
    t["quantile"] = d.truncation_quantile ? ojson(*d.truncation_quantile) : ojson();
    t["cap"] = d.truncation_quantile ? ojson(d.truncation_cap) : ojson();
    t["truncated"] = d.truncated;
    j["truncation"] = std::move(t);
    return j;
}

inline ojson to_json(const PromptTargetingReport& p) {
    ojson j;
    j["median_ratio"] = p.median_ratio;
    j["q25"] = p.q25;
    j["q75"] = p.q75;
    j["n"] = p.n;
    j["passed"] = p.passed;
    return j;
}

inline ojson to_json(const EvalReport& r) {
    ojson j;
    j["mu_R"] = to_json(r.mu_R);
    if (r.mu_T) j["mu_T"] = to_json(*r.mu_T);
    j["mu_transported"] = to_json(r.mu_transported);
    j["naive"] = to_json(r.naive);
    if (r.nrmse_transport) {
        ojson n;
        n["transport"] = *r.nrmse_transport;
        n["naive"] = *r.nrmse_naive;
        n["convention"] = kNrmseConvention;
        j["nrmse"] = std::move(n);
    }
    ojson w;
    w["method"] = to_string(r.weights.method);
    w["n"] = r.weights.size();
    w["diagnostics"] = to_json(r.weights.diagnostics);
    w["absolute_continuity_warning"] = r.absolute_continuity_warning;
    w["near_uniform"] = r.weights_near_uniform;
    w["prompt_targeting"] = r.prompt_targeting ? to_json(*r.prompt_targeting) : ojson();
    j["weights"] = std::move(w);
    ojson top = ojson::array();
    for (const auto& t : r.top_weighted) top.push_back({{"doc_id", t.doc_id}, {"excerpt", t.excerpt}, {"weight", t.weight}});
    j["top_weighted"] = std::move(top);
    j["config"] = r.config;
    return j;
}

/// Fixed-width plain-text table of the main estimates.
inline std::string summary_table(const EvalReport& r) {
    std::ostringstream out;
    char line[160];
    auto row = [&](const char* name, const EstimateSummary& s) {
        std::snprintf(line, sizeof line, "%-16s %10.4f  [%9.4f, %9.4f]  [%9.4f, %9.4f]  %6zu\n", name, s.estimate,
                      s.normal_ci.lo, s.normal_ci.hi, s.bootstrap_ci.lo, s.bootstrap_ci.hi, s.n);
        out << line;
    };
    std::snprintf(line, sizeof line, "%-16s %10s  %-22s  %-22s  %6s\n", "quantity", "estimate", "normal CI",
                  "bootstrap CI", "n");
    out << line;
    row("mu_R", r.mu_R);
    if (r.mu_T) row("mu_T", *r.mu_T);
    row("mu_transported", r.mu_transported);
    row("naive", r.naive);
    if (r.nrmse_transport) {
        std::snprintf(line, sizeof line, "nRMSE transport %.4f  naive %.4f\n", *r.nrmse_transport, *r.nrmse_naive);
        out << line;
    }
    const auto& d = r.weights.diagnostics;
    std::snprintf(line, sizeof line, "weights (%s): min %.4g  median %.4g  max %.4g  ESS %.1f / %zu\n",
                  to_string(r.weights.method), d.min, d.median, d.max, d.effective_sample_size, r.weights.size());
    out << line;
    if (r.absolute_continuity_warning)
        out << "WARNING: effective sample size below 5% of n; the target may not be absolutely continuous "
               "with respect to the source\n";
    if (r.weights_near_uniform) out << "note: weights are nearly uniform (max/min < 2)\n";
    return out.str();
}

} // namespace ttransport
