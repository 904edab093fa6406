#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <gtest/gtest.h>

#include <snapntell/snapntell.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kData = SNT_TEST_DATA_DIR;

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
    json err_json() const { return json::parse(err); }
    json out_json() const { return json::parse(out); }
};

std::string quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("snt_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    RunResult run(const std::vector<std::string>& args) {
        std::string cmd = quote(SNT_CLI_PATH);
        for (const auto& a : args) cmd += " " + quote(a);
        auto err_path = dir_ / "stderr.txt";
        cmd += " 2>" + quote(err_path.string());
        RunResult r;
        FILE* pipe = popen(cmd.c_str(), "r");
        if (!pipe) return r;
        char buf[4096];
        std::size_t n;
        while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
        int status = pclose(pipe);
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        std::ifstream in(err_path);
        std::stringstream ss;
        ss << in.rdbuf();
        r.err = ss.str();
        return r;
    }

    std::string built_index() {
        auto path = (dir_ / "entities.idx").string();
        auto r = run({"index", "build", "--input", (kData / "index_entries.jsonl").string(), "--out", path, "--force"});
        EXPECT_EQ(r.code, 0) << r.err;
        return path;
    }

    RunResult ask(const std::string& image_id, const std::string& question = "What is the name of this tower?") {
        return run({"--config", (kData / "ask.conf").string(), "ask", "--index", built_index(), "--image-id", image_id,
                    "-q", question});
    }

    std::string write(const std::string& name, const std::string& content) {
        auto path = dir_ / name;
        std::ofstream(path) << content;
        return path.string();
    }

    fs::path dir_;
};

} // namespace

TEST_F(Cli, IndexBuildThenQueryStoredVector) {
    auto idx = built_index();
    auto r = run({"index", "query", "--index", idx, "--vector", "0,0,1,0", "-k", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto hits = r.out_json();
    ASSERT_EQ(hits.size(), 2u);
    EXPECT_EQ(hits[0]["entity_id"], "Okapi");
    EXPECT_NEAR(hits[0]["score"].get<double>(), 1.0, 1e-6);

    auto b64 = snt::encode_vector_b64(snt::EmbeddingVector{0, 0, 1, 0});
    auto r2 = run({"index", "query", "--index", idx, "--vector-b64", b64, "-k", "2"});
    EXPECT_EQ(r2.out, r.out);
}

TEST_F(Cli, QueryMissingIndexIsIoFailure) {
    auto r = run({"index", "query", "--index", (dir_ / "absent.idx").string(), "--vector", "1,0,0,0"});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(r.err_json()["error"], "IoFailure");
}

TEST_F(Cli, BuildTwiceNeedsForce) {
    auto idx = built_index();
    auto again = run({"index", "build", "--input", (kData / "index_entries.jsonl").string(), "--out", idx});
    EXPECT_EQ(again.code, 2);
    EXPECT_EQ(again.err_json()["error"], "AlreadyExists");
    auto forced = run({"index", "build", "--input", (kData / "index_entries.jsonl").string(), "--out", idx, "--force"});
    EXPECT_EQ(forced.code, 0) << forced.err;
}

TEST_F(Cli, CorruptIndexFileIsReported) {
    auto path = write("bad.idx", "not an index at all");
    auto r = run({"index", "query", "--index", path, "--vector", "1,0,0,0"});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(r.err_json()["error"], "CorruptHeader");
}

TEST_F(Cli, AskAnswersWithEntityName) {
    auto r = ask("q-bigben");
    ASSERT_EQ(r.code, 0) << r.err;
    auto j = r.out_json();
    EXPECT_EQ(j["entity"], "Big Ben");
    EXPECT_NE(j["answer"].get<std::string>().find("Big Ben"), std::string::npos);
    EXPECT_FALSE(j["snippets_used"].empty());
    EXPECT_EQ(j["retrieval"].size(), 3u);
    const std::vector<std::string> stages{"detect", "select", "crop", "embed", "retrieve",
                                          "resolve", "aggregate", "assemble", "generate"};
    ASSERT_EQ(j["trace"].size(), stages.size());
    for (std::size_t i = 0; i < stages.size(); ++i) EXPECT_EQ(j["trace"][i]["stage"], stages[i]);
    EXPECT_EQ(j["trace"][1]["box"]["x"], 0.3);
}

TEST_F(Cli, AskTraceReplaysThroughIndexQuery) {
    auto j = ask("q-okapi", "Where does this animal live?").out_json();
    auto b64 = j["trace"][3]["vector_b64"].get<std::string>();
    auto k = std::to_string(j["trace"][4]["k"].get<int>());
    auto replay = run({"index", "query", "--index", (dir_ / "entities.idx").string(), "--vector-b64", b64, "-k", k});
    ASSERT_EQ(replay.code, 0) << replay.err;
    EXPECT_EQ(replay.out_json(), j["retrieval"]);
    EXPECT_EQ(j["trace"][4]["hits"], j["retrieval"]);
}

TEST_F(Cli, AskIsDeterministic) {
    auto a = ask("q-bigben");
    auto b = ask("q-bigben");
    ASSERT_EQ(a.code, 0);
    EXPECT_EQ(a.out, b.out);
}

TEST_F(Cli, AskBelowMinScoreIsUnknown) {
    auto r = ask("q-stranger", "What is this?");
    ASSERT_EQ(r.code, 0) << r.err;
    auto j = r.out_json();
    EXPECT_EQ(j["answer"], std::string(snt::kUnknownEntityAnswer));
    EXPECT_TRUE(j["entity"].is_null());
    EXPECT_EQ(j["trace"][5]["result"]["status"], "Unknown");
}

TEST_F(Cli, AskStageErrorNamesStage) {
    auto r = ask("q-missing", "What is this?");
    EXPECT_EQ(r.code, 65);
    auto e = r.err_json();
    EXPECT_EQ(e["error"], "NotFound");
    EXPECT_EQ(e["stage"], "embed");
}

TEST_F(Cli, AskFlagsOverrideConfig) {
    auto r = run({"--config", (kData / "ask.conf").string(), "ask", "--index", built_index(), "--image-id", "q-bigben",
                  "-q", "What is this?", "--min-score", "0.999"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out_json()["answer"], std::string(snt::kUnknownEntityAnswer));
}

TEST_F(Cli, EvalRunPerfectExample) {
    auto r = run({"--json", "eval", "run", "--pred", (kData / "eval_pred.jsonl").string(), "--gold",
                  (kData / "eval_gold.jsonl").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    auto j = r.out_json();
    EXPECT_DOUBLE_EQ(j["overall"]["accuracy"].get<double>(), 100.0);
    EXPECT_DOUBLE_EQ(j["overall"]["hallucination"].get<double>(), 0.0);
    EXPECT_TRUE(j["overall"]["bleurt"].is_null());

    auto table = run({"eval", "run", "--pred", (kData / "eval_pred.jsonl").string(), "--gold",
                      (kData / "eval_gold.jsonl").string()});
    EXPECT_NE(table.out.find("100.0"), std::string::npos);
}

TEST_F(Cli, EvalCompareSavedReports) {
    auto r = run({"eval", "compare", "--without", (kData / "table6_without.json").string(), "--with",
                  (kData / "table6_with.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* s : {"+11.1", "+18.8", "+85.3", "-3.6", "-4.4", "-6.2"})
        EXPECT_NE(r.out.find(s), std::string::npos) << s;
}

TEST_F(Cli, EvalRunCompareAgainstBaseline) {
    // 1000 Head examples of which 271 are answered correctly: accuracy 27.1.
    std::ostringstream gold, pred;
    for (int i = 0; i < 1000; ++i) {
        gold << json{{"id", std::to_string(i)}, {"gold_answer", "This is Big Ben in London."},
                     {"entity_name", "Big Ben"}, {"bucket", "Head"}}.dump() << "\n";
        pred << json{{"id", std::to_string(i)}, {"prediction", i < 271 ? "This is Big Ben in London." : "No idea."}}.dump()
             << "\n";
    }
    auto out = (dir_ / "report.json").string();
    auto r = run({"eval", "run", "--gold", write("gold.jsonl", gold.str()), "--pred", write("pred.jsonl", pred.str()),
                  "--compare", (kData / "table6_without.json").string(), "--out", out});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("+11.1"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("-3.6"), std::string::npos) << r.out;
    std::ifstream saved(out);
    EXPECT_DOUBLE_EQ(json::parse(saved)["per_bucket"]["Head"]["accuracy"].get<double>(), 27.1);
}

TEST_F(Cli, EvalDataErrors) {
    auto pred = write("pred.jsonl", R"({"id": "nope", "prediction": "x"})" "\n");
    auto r = run({"eval", "run", "--pred", pred, "--gold", (kData / "eval_gold.jsonl").string()});
    EXPECT_EQ(r.code, 65);
    EXPECT_EQ(r.err_json()["error"], "DanglingReference");

    auto gold = write("gold.jsonl", "{broken\n");
    auto r2 = run({"eval", "run", "--pred", (kData / "eval_pred.jsonl").string(), "--gold", gold});
    EXPECT_EQ(r2.code, 65);
    EXPECT_EQ(r2.err_json()["error"], "ParseError");

    auto empty = write("empty.jsonl", "");
    auto r3 = run({"eval", "run", "--pred", empty, "--gold", empty});
    EXPECT_EQ(r3.code, 65);
    EXPECT_EQ(r3.err_json()["error"], "EmptyEvalSet");
}

TEST_F(Cli, EvalPairwise) {
    auto r = run({"--json", "eval", "pairwise", "--input", (kData / "pairwise.jsonl").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    auto j = r.out_json();
    EXPECT_EQ(j["ours-vs-baseline-a"]["win"], 6);
    EXPECT_EQ(j["ours-vs-baseline-b"]["total"], 10);
}

TEST_F(Cli, UsageErrors) {
    EXPECT_EQ(run({}).code, 64);
    EXPECT_EQ(run({"index", "query", "--vector", "1"}).code, 64);
    EXPECT_EQ(run({"eval", "run", "--gold", "x"}).code, 64);
    EXPECT_EQ(run({"--config", (dir_ / "absent.conf").string(), "eval", "pairwise", "--input", "x"}).code, 64);
    auto r = run({"index", "query", "--index", "x"});
    EXPECT_EQ(r.code, 64);
    EXPECT_EQ(r.err_json()["error"], "InvalidArgument");
    EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(Cli, DatasetFilterRemovesPlants) {
    auto manifest = (kData / "manifest_planted.csv").string();
    auto r = run({"--json", "dataset", "filter", "--manifest", manifest, "--stage", "image-count"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto j = r.out_json();
    EXPECT_EQ(j["stages"][0]["removed"], 3);
    EXPECT_EQ(j["stages"][0]["removed_entities"], json({"Colosseum", "Water Lilies", "Okapi"}));

    auto out = (dir_ / "kept.csv").string();
    auto all = run({"--json", "dataset", "filter", "--manifest", manifest, "--out", out});
    ASSERT_EQ(all.code, 0) << all.err;
    auto ja = all.out_json();
    EXPECT_EQ(ja["stages"][0]["removed"], 2);
    EXPECT_EQ(ja["stages"][1]["removed"], 3);
    EXPECT_EQ(ja["stages"][2]["removed"], 1);
    EXPECT_EQ(ja["kept"], 8);

    auto again = run({"--json", "dataset", "filter", "--manifest", out});
    ASSERT_EQ(again.code, 0) << again.err;
    EXPECT_EQ(again.out_json()["kept"], 8);

    auto table = run({"dataset", "filter", "--manifest", manifest});
    EXPECT_NE(table.out.find("total"), std::string::npos);
}

TEST_F(Cli, DatasetFilterStageErrors) {
    auto manifest = (kData / "manifest_planted.csv").string();
    auto bad = run({"dataset", "filter", "--manifest", manifest, "--stage", "dedupe"});
    EXPECT_EQ(bad.code, 64);
    EXPECT_EQ(bad.err_json()["error"], "UnknownStage");
    auto order = run({"dataset", "filter", "--manifest", manifest, "--stage", "ambiguity", "--stage", "wiki-validity"});
    EXPECT_EQ(order.code, 64);
    auto broken = run({"dataset", "filter", "--manifest", write("m.csv", "entity_name,category\nx,car\n")});
    EXPECT_EQ(broken.code, 65);
    EXPECT_EQ(broken.err_json()["error"], "ParseError");
}

TEST_F(Cli, DatasetStats) {
    auto r = run({"--json", "dataset", "stats", "--manifest", (kData / "manifest_planted.csv").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    auto j = r.out_json();
    EXPECT_EQ(j["n_entities"], 14);
    EXPECT_EQ(j["n_categories"], 3);
    EXPECT_EQ(j["n_images"], 135);

    auto with_qa = run({"--json", "dataset", "stats", "--manifest", (kData / "manifest_planted.csv").string(), "--qa",
                        (kData / "qa_pairs.jsonl").string()});
    ASSERT_EQ(with_qa.code, 0) << with_qa.err;
    EXPECT_EQ(with_qa.out_json()["n_qa"], 4);

    auto ghost = write("qa.jsonl", R"({"entity_id": "Ghost", "question": "q", "answer": "a", "qtype": "static"})" "\n");
    auto dangling = run({"dataset", "stats", "--manifest", (kData / "manifest_planted.csv").string(), "--qa", ghost});
    EXPECT_EQ(dangling.code, 65);
    EXPECT_EQ(dangling.err_json()["error"], "DanglingReference");
}

TEST_F(Cli, DatasetBuckets) {
    auto r = run({"--json", "dataset", "buckets", "--manifest", (kData / "manifest_planted.csv").string(),
                  "--pageviews", (kData / "pageviews.jsonl").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    std::map<std::string, std::map<std::string, int>> sizes;
    for (const auto& row : r.out_json()) ++sizes[row["category"]][row["bucket"]];
    EXPECT_EQ(sizes["painting"], (std::map<std::string, int>{{"Head", 2}, {"Torso", 1}, {"Tail", 1}}));
    EXPECT_EQ(sizes["mammal"], (std::map<std::string, int>{{"Head", 2}, {"Torso", 2}, {"Tail", 1}}));

    auto partial = write("pv.jsonl", R"({"entity_id": "Big Ben", "daily": [1]})" "\n");
    auto bad = run({"dataset", "buckets", "--manifest", (kData / "manifest_planted.csv").string(), "--pageviews", partial});
    EXPECT_EQ(bad.code, 65);
}

TEST_F(Cli, DatasetLint) {
    auto r = run({"--json", "dataset", "lint", "--qa", (kData / "qa_pairs.jsonl").string(), "--knowledge",
                  (kData / "knowledge.jsonl").string()});
    EXPECT_EQ(r.code, 65);
    auto j = r.out_json();
    EXPECT_EQ(j["checked"], 4);
    ASSERT_EQ(j["issues"].size(), 2u);
    EXPECT_EQ(j["issues"][0]["line"], 3);
    EXPECT_EQ(j["issues"][1]["issue"], "question reveals entity: 'forest giraffe'");

    auto clean = write("qa.jsonl", R"({"entity_id": "Abel Tasman National Park", "question": "Where is the attraction located?", "answer": "Abel Tasman National Park is in New Zealand.", "qtype": "static"})" "\n");
    EXPECT_EQ(run({"dataset", "lint", "--qa", clean}).code, 0);
}

TEST_F(Cli, DatasetSampleSeeded) {
    auto manifest = (kData / "manifest_planted.csv").string();
    auto a = run({"--seed", "11", "dataset", "sample", "--manifest", manifest, "--fraction", "0.4"});
    auto b = run({"--seed", "11", "dataset", "sample", "--manifest", manifest, "--fraction", "0.4"});
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, b.out);
    std::istringstream is(a.out);
    auto sample = snt::dataset::read_manifest_csv(is);
    EXPECT_EQ(sample.size(), 6u); // ceil(0.4 * 5) + ceil(0.4 * 4) + ceil(0.4 * 5)
}
