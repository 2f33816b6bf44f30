// ttransport: command-line pipeline for transporting text causal effects.
//
//   code      attach lexicon attribute codings to a corpus
//   weights   estimate importance weights for source documents
//   estimate  per-attribute natural effects under the target distribution
//   eval      validation run comparing transported, source, target and naive means
//   synth     write a synthetic fixture with its enumerated ground truth

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ttransport/ttransport.hpp"
#include "ttransport/http_scorer.hpp"

namespace fs = std::filesystem;
using namespace ttransport;

namespace {

// Collects outputs as temporaries and renames them into place only when every
// one was written; otherwise all of them are removed.
class OutputSet {
public:
    ~OutputSet() {
        if (committed_) return;
        std::error_code ec;
        for (const auto& [final_path, tmp] : files_) fs::remove(tmp, ec);
    }

    void write(const fs::path& path, const std::string& contents) {
        if (path.empty()) throw Error("output path is empty");
        fs::path tmp = path;
        tmp += ".tmp";
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot write '" + path.string() + "'");
        files_.emplace_back(path, tmp);
        out << contents;
        out.close();
        if (!out) throw Error("write failed for '" + path.string() + "'");
    }

    void commit() {
        std::vector<fs::path> done;
        for (const auto& [final_path, tmp] : files_) {
            std::error_code ec;
            fs::rename(tmp, final_path, ec);
            if (ec) {
                for (const auto& p : done) fs::remove(p, ec);
                throw Error("cannot move output into place: " + final_path.string());
            }
            done.push_back(final_path);
        }
        committed_ = true;
    }

private:
    std::vector<std::pair<fs::path, fs::path>> files_;
    bool committed_ = false;
};

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

struct CommonOptions {
    std::string source, target, format = "jsonl", out;
    std::string method = "clf", features = "bow", lexicon, lm_backend = "ngram", endpoint, prompt_r, prompt_t;
    std::size_t vocab_size = 1000;
    int ngram_order = 1;
    double ngram_alpha = 1.0;
    std::size_t max_parallel = 4;
    double train_frac = 0.1, alpha = 0.05;
    std::size_t bootstrap = 100;
    std::string bootstrap_mode = "fixed";
    std::optional<double> truncate_quantile;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::size_t top_k = 10;
};

const std::map<std::string, CorpusFormat> kFormats{{"jsonl", CorpusFormat::jsonl}, {"csv", CorpusFormat::csv}};
const std::map<std::string, FeatureKind> kFeatureKinds{
    {"lexicon", FeatureKind::lexicon_binary}, {"bow", FeatureKind::bag_of_words}, {"external", FeatureKind::external}};

Corpus read(const std::string& path, const std::string& format, Role role) {
    return load_corpus(path, kFormats.at(format), role);
}

std::optional<Lexicon> maybe_lexicon(const CommonOptions& o) {
    if (o.lexicon.empty()) {
        if (o.features == "lexicon") throw Error("--features lexicon requires --lexicon PATH");
        return std::nullopt;
    }
    return load_lexicon(o.lexicon);
}

EvalConfig eval_config(const CommonOptions& o) {
    EvalConfig c;
    c.method = o.method == "lm" ? WeightMethod::lm : WeightMethod::clf;
    c.features.kind = kFeatureKinds.at(o.features);
    c.features.vocab_size = o.vocab_size;
    c.lexicon_path = o.lexicon;
    c.lm_backend = o.lm_backend == "http" ? LmBackend::http : LmBackend::ngram;
    c.ngram_order = o.ngram_order;
    c.ngram_alpha = o.ngram_alpha;
    c.prompt_R = o.prompt_r;
    c.prompt_T = o.prompt_t;
    c.endpoint = o.endpoint;
    c.train_fraction = o.train_frac;
    c.alpha = o.alpha;
    c.bootstrap_B = o.bootstrap;
    c.full_bootstrap = o.bootstrap_mode == "full";
    c.truncate_quantile = o.truncate_quantile;
    c.seed = o.seed;
    c.top_k = o.top_k;
    c.source_path = o.source;
    c.target_path = o.target;
    c.threads = o.threads;
    return c;
}

// HTTP scorers, built only when the lm method uses the http backend.
struct HttpScorers {
    std::optional<HttpScorer> source, target;

    static HttpScorers make(CommonOptions& o) {
        HttpScorers s;
        if (o.method != "lm" || o.lm_backend != "http") return s;
        if (o.endpoint.empty()) o.endpoint = env_value(kEndpointEnv).value_or("");
        LmProviderConfig cfg;
        cfg.endpoint = o.endpoint;
        cfg.prompt_R = o.prompt_r;
        cfg.prompt_T = o.prompt_t;
        cfg.max_parallel = o.max_parallel;
        cfg.api_key = env_value(kApiKeyEnv);
        cfg.validate();
        s.source.emplace(cfg, cfg.prompt_R);
        s.target.emplace(cfg, cfg.prompt_T);
        return s;
    }

    std::optional<ScorerPair> pair() const {
        if (!source) return std::nullopt;
        return ScorerPair{&*source, &*target};
    }
};

void add_weight_options(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--method", o.method, "weight estimator")->check(CLI::IsMember({"clf", "lm"}));
    cmd->add_option("--features", o.features, "classifier/naive feature space")
        ->check(CLI::IsMember({"lexicon", "bow", "external"}));
    cmd->add_option("--vocab-size", o.vocab_size, "bag-of-words vocabulary size")->check(CLI::PositiveNumber);
    cmd->add_option("--lexicon", o.lexicon, "lexicon file for --features lexicon");
    cmd->add_option("--lm-backend", o.lm_backend, "language model backend for --method lm")
        ->check(CLI::IsMember({"ngram", "http"}));
    cmd->add_option("--ngram-order", o.ngram_order, "n-gram order (1-3)")->check(CLI::Range(1, 3));
    cmd->add_option("--ngram-alpha", o.ngram_alpha, "additive smoothing")->check(CLI::PositiveNumber);
    cmd->add_option("--endpoint", o.endpoint, std::string("LM provider URL (default: $") + kEndpointEnv + ")");
    cmd->add_option("--prompt-r", o.prompt_r, "prompt describing the source distribution");
    cmd->add_option("--prompt-t", o.prompt_t, "prompt describing the target distribution");
    cmd->add_option("--max-parallel", o.max_parallel, "concurrent provider requests")->check(CLI::PositiveNumber);
    cmd->add_option("--train-frac", o.train_frac, "fraction of each corpus used for training")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--truncate-quantile", o.truncate_quantile, "cap raw weights at this quantile")
        ->check(CLI::Range(0.0, 1.0));
}

void add_ci_options(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--alpha", o.alpha, "CI level is 1 - alpha")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--bootstrap", o.bootstrap, "bootstrap iterations")->check(CLI::PositiveNumber);
}

int cmd_code(const CommonOptions& o) {
    const Lexicon lex = load_lexicon(o.lexicon);
    const Corpus coded = code_corpus(read(o.source, o.format, Role::source), lex);
    std::ostringstream s;
    write_corpus_jsonl(coded, s);
    OutputSet out;
    out.write(o.out, s.str());
    out.commit();
    return 0;
}

int cmd_weights(CommonOptions& o) {
    const Corpus source = read(o.source, o.format, Role::source);
    const Corpus target = read(o.target, o.format, Role::target);
    const auto lexicon = maybe_lexicon(o);
    const auto http = HttpScorers::make(o);
    const EvalConfig cfg = eval_config(o);

    Corpus train_R, train_T, est_R;
    const bool needs_training = !(cfg.method == WeightMethod::lm && cfg.lm_backend == LmBackend::http);
    if (needs_training) {
        std::tie(train_R, est_R) = split_corpus(source, {cfg.train_fraction, derive_seed(cfg.seed, "split-source")});
        Corpus est_T;
        std::tie(train_T, est_T) = split_corpus(target, {cfg.train_fraction, derive_seed(cfg.seed, "split-target")});
    } else {
        est_R = source;
    }
    std::optional<PromptTargetingReport> targeting;
    const detail::WeightModel model{cfg, lexicon ? &*lexicon : nullptr, http.pair()};
    const WeightSet ws = model(train_R, train_T, est_R, &targeting);

    std::ostringstream csv;
    write_weights_csv(ws, csv);
    nlohmann::ordered_json diag;
    diag["method"] = to_string(ws.method);
    diag["n"] = ws.size();
    diag["train_source"] = train_R.size();
    diag["train_target"] = train_T.size();
    diag["diagnostics"] = to_json(ws.diagnostics);
    diag["absolute_continuity_warning"] = ws.diagnostics.effective_sample_size < 0.05 * static_cast<double>(ws.size());
    diag["prompt_targeting"] = targeting ? to_json(*targeting) : nlohmann::ordered_json();
    diag["config"] = config_json(cfg);
    if (targeting && !targeting->passed)
        std::cerr << "warning: prompt-targeting check failed (median P_R/P_T ratio " << targeting->median_ratio
                  << " <= 1)\n";

    OutputSet out;
    out.write(o.out, csv.str());
    out.write(o.out + ".diagnostics.json", dump(diag));
    out.commit();
    return 0;
}

int cmd_estimate(const CommonOptions& o, const std::vector<std::string>& attributes, const std::string& weights_path) {
    const Corpus source = read(o.source, o.format, Role::source);
    const WeightSet transported = weights_path.empty() ? unit_weights(source) : load_weights_csv(weights_path);
    const WeightSet plain = unit_weights(source);
    for (const auto& attr : attributes) {
        const bool coded = std::any_of(source.docs.begin(), source.docs.end(),
                                       [&](const Document& d) { return d.attributes.count(attr) > 0; });
        if (!coded) throw Error("attribute '" + attr + "' is not coded in '" + o.source + "'");
    }

    nlohmann::ordered_json report;
    nlohmann::ordered_json cfg;
    cfg["source"] = o.source;
    cfg["weights"] = weights_path;
    cfg["attributes"] = attributes;
    cfg["alpha"] = o.alpha;
    cfg["bootstrap"] = o.bootstrap;
    cfg["seed"] = o.seed;
    cfg["fingerprint"] = hex64(fnv1a64(cfg.dump()));
    report["config"] = cfg;
    nlohmann::ordered_json effects = nlohmann::ordered_json::array();
    for (const auto& attr : attributes) {
        CiSpec ci{o.alpha, o.bootstrap, derive_seed(o.seed, "effect:" + attr), o.threads};
        nlohmann::ordered_json e;
        e["attribute"] = attr;
        ci.seed = derive_seed(o.seed, "effect-source:" + attr);
        e["source"] = to_json(natural_effect(source, plain, attr, ci));
        ci.seed = derive_seed(o.seed, "effect:" + attr);
        e["transported"] = to_json(natural_effect(source, transported, attr, ci));
        effects.push_back(std::move(e));
    }
    report["effects"] = std::move(effects);
    OutputSet out;
    out.write(o.out, dump(report));
    out.commit();
    return 0;
}

int cmd_eval(CommonOptions& o, bool quiet) {
    const Corpus source = read(o.source, o.format, Role::source);
    const Corpus target = read(o.target, o.format, Role::target);
    const auto lexicon = maybe_lexicon(o);
    const auto http = HttpScorers::make(o);
    const EvalReport r = evaluate_transport(source, target, eval_config(o), lexicon ? &*lexicon : nullptr, http.pair());
    OutputSet out;
    out.write(o.out, dump(to_json(r)));
    out.commit();
    if (!quiet) std::cout << summary_table(r);
    return 0;
}

int cmd_synth(const std::string& space_path, const std::string& instance, std::size_t n_source,
              std::size_t n_target, std::uint64_t seed, const std::string& prefix) {
    std::optional<SyntheticSpace> space;
    if (!space_path.empty()) {
        std::ifstream in(space_path);
        if (!in) throw Error("cannot open synthetic space file '" + space_path + "'");
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(space_path + ": " + e.what());
        }
        space.emplace(space_from_json(j));
    } else if (instance == "canonical") {
        space.emplace(canonical_space(true));
    } else if (instance == "no-shift") {
        space.emplace(canonical_space(false));
    } else {
        space.emplace(two_point_space());
    }
    const Corpus src = sample_corpus(*space, Which::R, n_source, derive_seed(seed, "synth-source"));
    const Corpus tgt = sample_corpus(*space, Which::T, n_target, derive_seed(seed, "synth-target"));
    std::ostringstream s, t;
    write_corpus_jsonl(src, s);
    write_corpus_jsonl(tgt, t);
    OutputSet out;
    out.write(prefix + ".space.json", dump(to_json(*space)));
    out.write(prefix + ".truth.json", dump(to_json(enumerate_truth(*space))));
    out.write(prefix + ".source.jsonl", s.str());
    out.write(prefix + ".target.jsonl", t.str());
    out.commit();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transport causal effects of text attributes from a source to a target distribution"};
    app.require_subcommand(1);
    CommonOptions o;

    auto* code = app.add_subcommand("code", "code lexicon attributes onto a corpus");
    code->add_option("--source", o.source, "input corpus")->required();
    code->add_option("--format", o.format)->check(CLI::IsMember({"jsonl", "csv"}));
    code->add_option("--lexicon", o.lexicon, "lexicon file")->required();
    code->add_option("--out", o.out, "output JSONL")->required();

    auto* weights = app.add_subcommand("weights", "estimate importance weights");
    weights->add_option("--source", o.source)->required();
    weights->add_option("--target", o.target)->required();
    weights->add_option("--format", o.format)->check(CLI::IsMember({"jsonl", "csv"}));
    add_weight_options(weights, o);
    weights->add_option("--seed", o.seed);
    weights->add_option("--threads", o.threads)->check(CLI::PositiveNumber);
    weights->add_option("--out", o.out, "weights CSV (diagnostics go to OUT.diagnostics.json)")->required();

    std::vector<std::string> attributes;
    std::string weights_path;
    auto* estimate = app.add_subcommand("estimate", "natural effects of coded attributes");
    estimate->add_option("--source", o.source, "source corpus with responses and attributes")->required();
    estimate->add_option("--format", o.format)->check(CLI::IsMember({"jsonl", "csv"}));
    estimate->add_option("--weights", weights_path, "weights CSV (omit for unit weights)");
    estimate->add_option("--attributes", attributes, "attribute names")->required()->delimiter(',');
    add_ci_options(estimate, o);
    estimate->add_option("--seed", o.seed);
    estimate->add_option("--threads", o.threads)->check(CLI::PositiveNumber);
    estimate->add_option("--out", o.out, "report JSON")->required();

    bool quiet = false;
    auto* eval = app.add_subcommand("eval", "validate transport against a target with known responses");
    eval->add_option("--source", o.source)->required();
    eval->add_option("--target", o.target)->required();
    eval->add_option("--format", o.format)->check(CLI::IsMember({"jsonl", "csv"}));
    add_weight_options(eval, o);
    add_ci_options(eval, o);
    eval->add_option("--bootstrap-mode", o.bootstrap_mode, "fixed weights or re-estimated per replicate")
        ->check(CLI::IsMember({"fixed", "full"}));
    eval->add_option("--top-k", o.top_k, "number of top-weighted texts to report")->check(CLI::PositiveNumber);
    eval->add_option("--seed", o.seed);
    eval->add_option("--threads", o.threads)->check(CLI::PositiveNumber);
    eval->add_option("--out", o.out, "report JSON")->required();
    eval->add_flag("--quiet", quiet, "do not print the summary table");

    std::string space_path, instance = "canonical";
    std::size_t n_source = 2000, n_target = 2000;
    auto* synth = app.add_subcommand("synth", "write a synthetic fixture and its ground truth");
    synth->add_option("--space", space_path, "synthetic space JSON");
    synth->add_option("--instance", instance, "builtin instance")
        ->check(CLI::IsMember({"canonical", "no-shift", "two-point"}));
    synth->add_option("--n-source", n_source)->check(CLI::PositiveNumber);
    synth->add_option("--n-target", n_target)->check(CLI::PositiveNumber);
    synth->add_option("--seed", o.seed);
    synth->add_option("--out", o.out, "output prefix")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (code->parsed()) return cmd_code(o);
        if (weights->parsed()) return cmd_weights(o);
        if (estimate->parsed()) return cmd_estimate(o, attributes, weights_path);
        if (eval->parsed()) return cmd_eval(o, quiet);
        if (synth->parsed()) return cmd_synth(space_path, instance, n_source, n_target, o.seed, o.out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
