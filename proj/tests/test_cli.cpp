#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string output;
};

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("ttransport-cli-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    Result run(const std::string& args, const std::string& env = "") const {
        const std::string log = path("log.txt");
        const std::string cmd = env + " " + TTRANSPORT_CLI + " " + args + " > " + log + " 2>&1";
        const int status = std::system(cmd.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
    }

    static std::string slurp(const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream s;
        s << in.rdbuf();
        return s.str();
    }

    void write(const std::string& name, const std::string& contents) const {
        std::ofstream(path(name), std::ios::binary) << contents;
    }

    // Canonical synthetic fixture at PREFIX.{source,target}.jsonl.
    void synth(const std::string& prefix, const std::string& instance = "canonical", int n = 600) const {
        const auto r = run("synth --instance " + instance + " --n-source " + std::to_string(n) + " --n-target " +
                           std::to_string(n) + " --seed 5 --out " + path(prefix));
        ASSERT_EQ(r.code, 0) << r.output;
    }

    void lexicon() const {
        write("lex.txt", "# trait words\nwarm: warm*\nlong: long\nformal: formal\nquestion: quest*\nchilly: cold, freez*\n");
    }

    fs::path dir_;
};

} // namespace

TEST_F(Cli, CodeAttachesEveryCategory) {
    synth("s");
    lexicon();
    const auto r = run("code --source " + path("s.source.jsonl") + " --lexicon " + path("lex.txt") + " --out " +
                       path("coded.jsonl"));
    ASSERT_EQ(r.code, 0) << r.output;
    std::ifstream in(path("coded.jsonl"));
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        for (const char* k : {"warm", "long", "formal", "question", "chilly", "a"}) EXPECT_TRUE(j["attributes"].contains(k));
        const std::string text = j["text"];
        EXPECT_EQ(j["attributes"]["warm"], text.find("warm") != std::string::npos ? 1 : 0);
        ++n;
    }
    EXPECT_EQ(n, 600);
    const auto first = slurp(path("coded.jsonl"));
    ASSERT_EQ(run("code --source " + path("s.source.jsonl") + " --lexicon " + path("lex.txt") + " --out " +
                  path("coded.jsonl")).code, 0);
    EXPECT_EQ(first, slurp(path("coded.jsonl")));
}

TEST_F(Cli, MissingLexiconNamesPath) {
    synth("s");
    const auto r = run("code --source " + path("s.source.jsonl") + " --lexicon " + path("nope.txt") + " --out " +
                       path("coded.jsonl"));
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.output.find(path("nope.txt")), std::string::npos) << r.output;
    EXPECT_FALSE(fs::exists(path("coded.jsonl")));
}

TEST_F(Cli, WeightsClfWritesEstimationSplit) {
    synth("s");
    const auto args = "weights --source " + path("s.source.jsonl") + " --target " + path("s.target.jsonl") +
                      " --seed 3 --out " + path("w.csv");
    const auto r = run(args);
    ASSERT_EQ(r.code, 0) << r.output;
    std::ifstream in(path("w.csv"));
    std::string line;
    int rows = -1;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 540);
    const auto diag = nlohmann::json::parse(slurp(path("w.csv.diagnostics.json")));
    EXPECT_EQ(diag["method"], "clf");
    EXPECT_EQ(diag["n"], 540);
    EXPECT_TRUE(diag["config"].contains("fingerprint"));
    const auto csv = slurp(path("w.csv"));
    ASSERT_EQ(run(args + " --threads 4").code, 0);
    EXPECT_EQ(csv, slurp(path("w.csv")));
}

TEST_F(Cli, WeightsLmNgramRunsOffline) {
    synth("s");
    const auto r = run("weights --method lm --ngram-order 2 --source " + path("s.source.jsonl") + " --target " +
                           path("s.target.jsonl") + " --out " + path("w.csv"),
                       "env -u TTRANSPORT_LM_ENDPOINT");
    ASSERT_EQ(r.code, 0) << r.output;
    const auto diag = nlohmann::json::parse(slurp(path("w.csv.diagnostics.json")));
    EXPECT_EQ(diag["method"], "lm");
    EXPECT_TRUE(diag["prompt_targeting"]["passed"].get<bool>());
}

TEST_F(Cli, HttpBackendWithoutEndpointExplains) {
    synth("s");
    const auto r = run("weights --method lm --lm-backend http --prompt-r a --prompt-t b --source " +
                           path("s.source.jsonl") + " --target " + path("s.target.jsonl") + " --out " + path("w.csv"),
                       "env -u TTRANSPORT_LM_ENDPOINT");
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.output.find("TTRANSPORT_LM_ENDPOINT"), std::string::npos) << r.output;
    EXPECT_FALSE(fs::exists(path("w.csv")));
    EXPECT_FALSE(fs::exists(path("w.csv.diagnostics.json")));
}

TEST_F(Cli, EstimateReportsEveryAttribute) {
    synth("s");
    lexicon();
    ASSERT_EQ(run("code --source " + path("s.source.jsonl") + " --lexicon " + path("lex.txt") + " --out " +
                  path("coded.jsonl")).code, 0);
    ASSERT_EQ(run("weights --source " + path("coded.jsonl") + " --target " + path("s.target.jsonl") + " --out " +
                  path("w.csv")).code, 0);
    const auto args = "estimate --source " + path("coded.jsonl") + " --weights " + path("w.csv") +
                      " --attributes warm,long,formal,question,chilly --seed 2 --out " + path("effects.json");
    const auto r = run(args);
    ASSERT_EQ(r.code, 0) << r.output;
    const auto first = slurp(path("effects.json"));
    const auto j = nlohmann::json::parse(first);
    ASSERT_EQ(j["effects"].size(), 5u);
    EXPECT_EQ(j["effects"][0]["attribute"], "warm");
    for (const auto& e : j["effects"]) {
        EXPECT_TRUE(e["source"].contains("tau"));
        EXPECT_TRUE(e["transported"].contains("tau"));
    }
    ASSERT_EQ(run(args + " --threads 3").code, 0);
    EXPECT_EQ(first, slurp(path("effects.json")));
}

TEST_F(Cli, EstimateUnknownAttributeFails) {
    synth("s");
    const auto r = run("estimate --source " + path("s.source.jsonl") + " --attributes a,sarcasm --out " +
                       path("effects.json"));
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.output.find("sarcasm"), std::string::npos) << r.output;
    EXPECT_FALSE(fs::exists(path("effects.json")));
}

TEST_F(Cli, SynthTwoPointTruth) {
    synth("tp", "two-point", 50);
    const auto truth = nlohmann::json::parse(slurp(path("tp.truth.json")));
    EXPECT_DOUBLE_EQ(truth["mu_T"].get<double>(), 3.0);
    EXPECT_DOUBLE_EQ(truth["mu_R"].get<double>(), 2.0);
    for (const char* f : {"tp.space.json", "tp.source.jsonl", "tp.target.jsonl"}) EXPECT_TRUE(fs::exists(path(f)));
    const auto src = slurp(path("tp.source.jsonl"));
    synth("tp", "two-point", 50);
    EXPECT_EQ(src, slurp(path("tp.source.jsonl")));
}

TEST_F(Cli, SynthFromSpaceFile) {
    write("space.json", R"({"texts":["a","b"],"p_R":[0.5,0.5],"p_T":[0.9,0.1],"y":[1,0],"a":[1,0]})");
    const auto r = run("synth --space " + path("space.json") + " --n-source 10 --n-target 10 --out " + path("f"));
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_DOUBLE_EQ(nlohmann::json::parse(slurp(path("f.truth.json")))["mu_T"].get<double>(), 0.9);
    write("bad.json", R"({"texts":["a","b"],"p_R":[1.0,0.0],"p_T":[0.5,0.5],"y":[1,0],"a":[1,0]})");
    const auto bad = run("synth --space " + path("bad.json") + " --out " + path("g"));
    EXPECT_NE(bad.code, 0);
    EXPECT_NE(bad.output.find("absolute continuity"), std::string::npos) << bad.output;
    EXPECT_FALSE(fs::exists(path("g.truth.json")));
}

TEST_F(Cli, EvalNoShiftFlagsUniformWeights) {
    synth("ns", "no-shift", 20000);
    const auto r = run("eval --source " + path("ns.source.jsonl") + " --target " + path("ns.target.jsonl") +
                       " --seed 1 --out " + path("report.json"));
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("nearly uniform"), std::string::npos) << r.output;
    const auto j = nlohmann::json::parse(slurp(path("report.json")));
    EXPECT_TRUE(j["weights"]["near_uniform"].get<bool>());
}

TEST_F(Cli, EvalShiftedMovesTowardTruth) {
    synth("c", "canonical", 2000);
    const auto args = "eval --quiet --source " + path("c.source.jsonl") + " --target " + path("c.target.jsonl") +
                      " --seed 8 --out " + path("report.json");
    const auto r = run(args);
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_TRUE(r.output.empty()) << r.output;
    const auto first = slurp(path("report.json"));
    const auto j = nlohmann::json::parse(first);
    const double mu_T = nlohmann::json::parse(slurp(path("c.truth.json")))["mu_T"];
    EXPECT_LT(std::abs(j["mu_transported"]["estimate"].get<double>() - mu_T),
              std::abs(j["mu_R"]["estimate"].get<double>() - mu_T));
    ASSERT_EQ(run(args + " --threads 4").code, 0);
    EXPECT_EQ(first, slurp(path("report.json")));
}

TEST_F(Cli, BadInputLeavesNoOutput) {
    write("broken.jsonl", "{\"id\": \"x\", \"text\": \"t\", \"response\": 1}\n{not json\n");
    synth("s");
    const auto r = run("eval --source " + path("broken.jsonl") + " --target " + path("s.target.jsonl") + " --out " +
                       path("report.json"));
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("error:"), std::string::npos);
    EXPECT_NE(r.output.find("broken.jsonl"), std::string::npos) << r.output;
    EXPECT_FALSE(fs::exists(path("report.json")));
    EXPECT_FALSE(fs::exists(path("report.json.tmp")));
}

TEST_F(Cli, UsageErrors) {
    EXPECT_NE(run("").code, 0);
    EXPECT_NE(run("frobnicate").code, 0);
    EXPECT_NE(run("eval --source x").code, 0);
    EXPECT_NE(run("weights --method svm --source a --target b --out c").code, 0);
}
