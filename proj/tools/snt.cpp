// snt: command-line front end for the index, pipeline, evaluation and dataset tools.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <snapntell/snapntell.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 2;
constexpr int kExitUsage = 64;
constexpr int kExitData = 65;

struct Globals {
    std::string config_path;
    std::uint64_t seed = 0;
    bool json = false;
    snt::KeyValueConfig config;
    fs::path config_dir = ".";
};

int exit_code_for(snt::ErrorKind kind) {
    switch (kind) {
    case snt::ErrorKind::IoFailure:
    case snt::ErrorKind::AlreadyExists:
    case snt::ErrorKind::CorruptHeader:
    case snt::ErrorKind::TruncatedPayload: return kExitIo;
    case snt::ErrorKind::InvalidArgument:
    case snt::ErrorKind::UnknownStage: return kExitUsage;
    default: return kExitData;
    }
}

void print_error(std::string_view kind, const std::string& message, const std::string& stage = "") {
    json j = {{"error", kind}, {"message", message}};
    if (!stage.empty()) j["stage"] = stage;
    std::cerr << j.dump() << std::endl;
}

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

/// Paths in the config file are relative to the file itself.
fs::path config_path_value(const Globals& g, const std::string& key) {
    auto v = g.config.get(key);
    if (!v) return {};
    fs::path p(*v);
    return p.is_absolute() ? p : g.config_dir / p;
}

std::string pick(const std::string& flag, const Globals& g, const std::string& key, bool is_path) {
    if (!flag.empty()) return flag;
    if (is_path) return config_path_value(g, key).string();
    return g.config.get_or(key, std::string());
}

bool is_url(const std::string& s) { return s.rfind("http://", 0) == 0; }

std::string strip_fixture_prefix(const std::string& s) {
    constexpr std::string_view p = "fixture:";
    return s.rfind(p, 0) == 0 ? s.substr(p.size()) : s;
}

fs::path resolve_spec_path(const Globals& g, const std::string& flag, const std::string& key) {
    if (!flag.empty()) return strip_fixture_prefix(flag);
    auto v = g.config.get(key);
    if (!v) return {};
    fs::path p(strip_fixture_prefix(*v));
    return p.is_absolute() ? p : g.config_dir / p;
}

std::string spec_value(const Globals& g, const std::string& flag, const std::string& key) {
    return !flag.empty() ? flag : g.config.get_or(key, std::string());
}

// index ------------------------------------------------------------------

struct IndexBuildArgs {
    std::string input, out;
    bool force = false;
};

int cmd_index_build(const IndexBuildArgs& a, const Globals& g) {
    if (fs::exists(a.out) && !a.force)
        throw snt::Error(snt::ErrorKind::AlreadyExists, a.out + " exists; pass --force to overwrite");
    auto index = snt::build_index_from_jsonl(a.input);
    index.save(a.out);
    json j = {{"path", a.out}, {"entries", index.size()}, {"dim", index.dim()}};
    if (g.json) emit(j);
    else std::cout << "wrote " << index.size() << " entries (dim " << index.dim() << ") to " << a.out << "\n";
    return kExitOk;
}

struct IndexQueryArgs {
    std::string index;
    std::vector<float> vector;
    std::string vector_b64;
    std::size_t k = 5;
};

int cmd_index_query(const IndexQueryArgs& a, const Globals&) {
    if (a.vector.empty() == a.vector_b64.empty())
        throw snt::Error(snt::ErrorKind::InvalidArgument, "pass exactly one of --vector or --vector-b64");
    auto index = snt::EmbeddingIndex::load(a.index);
    auto q = a.vector.empty() ? snt::decode_vector_b64(a.vector_b64) : snt::EmbeddingVector(a.vector);
    emit(json(index.knn(q, a.k)));
    return kExitOk;
}

// ask --------------------------------------------------------------------

struct AskArgs {
    std::string image_id, image_uri, question, qtype = "static";
    int width = 1000, height = 1000;
    std::string index, knowledge, detector, embeddings, generator;
    std::optional<std::size_t> k;
    std::optional<double> min_score;
};

std::vector<std::shared_ptr<snt::Fetcher>> fetchers_from_config(const Globals& g) {
    // [fetchers] name = "<SourceKind> <url> [timeout_ms]"
    std::vector<std::shared_ptr<snt::Fetcher>> out;
    const std::string prefix = "fetchers.";
    for (const auto& [key, value] : g.config.values()) {
        if (key.rfind(prefix, 0) != 0) continue;
        std::istringstream is(value);
        std::string kind, url;
        long long timeout_ms = 3000;
        is >> kind >> url;
        if (!(is >> timeout_ms)) timeout_ms = 3000;
        if (url.empty())
            throw snt::Error(snt::ErrorKind::ParseError, "fetcher " + key + " needs '<kind> <url>'");
        out.push_back(std::make_shared<snt::HttpFetcher>(key.substr(prefix.size()), snt::parse_source_kind(kind),
                                                         url, std::chrono::milliseconds(timeout_ms)));
    }
    return out;
}

int cmd_ask(const AskArgs& a, const Globals& g) {
    auto index_path = pick(a.index, g, "index", true);
    if (index_path.empty()) throw snt::Error(snt::ErrorKind::InvalidArgument, "no index given (--index or config 'index')");
    auto index = std::make_shared<snt::EmbeddingIndex>(snt::EmbeddingIndex::load(index_path));

    std::shared_ptr<snt::KnowledgeStore> store;
    auto kb_path = pick(a.knowledge, g, "knowledge", true);
    if (!kb_path.empty()) store = std::make_shared<snt::KnowledgeStore>(snt::KnowledgeStore::from_jsonl(kb_path));

    std::shared_ptr<snt::DetectorBackend> detector;
    auto det = spec_value(g, a.detector, "detector");
    if (is_url(det)) detector = std::make_shared<snt::HttpDetector>(det);
    else if (det.empty() || det == "none") detector = std::make_shared<snt::FixtureDetector>();
    else detector = std::make_shared<snt::FixtureDetector>(
        snt::FixtureDetector::from_jsonl(resolve_spec_path(g, a.detector, "detector")));

    std::shared_ptr<snt::EmbeddingProvider> embedder;
    auto emb = spec_value(g, a.embeddings, "embeddings");
    if (emb.empty()) throw snt::Error(snt::ErrorKind::InvalidArgument, "no embedding source (--embeddings or config 'embeddings')");
    if (is_url(emb)) embedder = std::make_shared<snt::HttpEmbedder>(emb);
    else embedder = std::make_shared<snt::FixtureEmbeddings>(
        snt::FixtureEmbeddings::from_jsonl(resolve_spec_path(g, a.embeddings, "embeddings")));

    std::shared_ptr<snt::Generator> generator;
    auto gen = spec_value(g, a.generator, "generator");
    if (is_url(gen))
        generator = std::make_shared<snt::HttpGenerator>(
            gen, std::chrono::milliseconds(g.config.get_or("generator_timeout_ms", 60000LL)));
    else if (gen.empty() || gen == "template") generator = std::make_shared<snt::TemplateGenerator>();
    else throw snt::Error(snt::ErrorKind::InvalidArgument, "generator must be 'template' or an http:// URL");

    snt::PipelineConfig cfg;
    cfg.k = a.k ? *a.k : static_cast<std::size_t>(g.config.get_or("k", 5LL));
    cfg.min_confidence = g.config.get_or("min_confidence", cfg.min_confidence);
    cfg.resolution.min_score = a.min_score ? *a.min_score : g.config.get_or("min_score", cfg.resolution.min_score);
    cfg.resolution.min_margin = g.config.get_or("min_margin", cfg.resolution.min_margin);
    cfg.aggregate.budget = static_cast<std::size_t>(g.config.get_or("snippet_budget", 8LL));
    cfg.prompt_token_budget = static_cast<std::size_t>(g.config.get_or("prompt_token_budget", 512LL));

    snt::Pipeline pipeline(index, detector, embedder, store, fetchers_from_config(g), generator, cfg);
    snt::ImageRef image{a.image_id, a.image_uri.empty() ? "file://" + a.image_id : a.image_uri, a.width, a.height,
                        std::nullopt};
    auto result = pipeline.ask(image, a.question, snt::parse_question_type(a.qtype));
    emit(snt::ask_result_to_json(result));
    return kExitOk;
}

// eval -------------------------------------------------------------------

struct EvalRunArgs {
    std::string pred, gold, compare, out;
    double min_token_f1 = -1.0;
    unsigned threads = 1;
};

std::vector<snt::eval::EvalExample> join_examples(const std::string& gold_path, const std::string& pred_path) {
    std::vector<snt::eval::EvalExample> gold;
    std::map<std::string, std::size_t> by_id;
    snt::for_each_jsonl(gold_path, [&](const json& j, std::size_t lineno) {
        try {
            auto ex = snt::eval::example_from_json(j);
            if (ex.id.empty()) ex.id = std::to_string(lineno);
            if (!by_id.emplace(ex.id, gold.size()).second)
                throw snt::Error(snt::ErrorKind::ParseError, gold_path + ": duplicate id " + ex.id);
            gold.push_back(std::move(ex));
        } catch (const json::exception& e) {
            throw snt::Error(snt::ErrorKind::ParseError, gold_path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    });
    snt::for_each_jsonl(pred_path, [&](const json& j, std::size_t lineno) {
        std::string id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump())
                                          : std::to_string(lineno);
        auto it = by_id.find(id);
        if (it == by_id.end())
            throw snt::Error(snt::ErrorKind::DanglingReference, pred_path + ": prediction for unknown id " + id);
        if (!j.contains("prediction") || !j["prediction"].is_string())
            throw snt::Error(snt::ErrorKind::ParseError, pred_path + ":" + std::to_string(lineno) + ": no prediction");
        gold[it->second].prediction = j["prediction"].get<std::string>();
    });
    return gold;
}

snt::eval::MetricReport load_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw snt::Error(snt::ErrorKind::IoFailure, "cannot open " + path);
    try {
        return snt::eval::report_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw snt::Error(snt::ErrorKind::ParseError, path + ": " + e.what());
    }
}

void print_comparison(const std::vector<snt::eval::DeltaRow>& rows, const Globals& g) {
    if (g.json) emit(snt::eval::delta_rows_to_json(rows));
    else std::cout << snt::eval::format_deltas(rows);
}

int cmd_eval_run(const EvalRunArgs& a, const Globals& g) {
    auto examples = join_examples(a.gold, a.pred);
    snt::eval::EvalConfig cfg;
    cfg.judge.min_token_f1 = a.min_token_f1 >= 0 ? a.min_token_f1 : g.config.get_or("min_token_f1", cfg.judge.min_token_f1);
    cfg.threads = a.threads;
    auto report = snt::eval::evaluate(examples, cfg);
    auto report_json = snt::eval::report_to_json(report);
    if (!a.out.empty()) {
        std::ofstream out(a.out);
        if (!out) throw snt::Error(snt::ErrorKind::IoFailure, "cannot write " + a.out);
        out << report_json.dump(2) << "\n";
    }
    if (a.compare.empty()) {
        if (g.json) emit(report_json);
        else std::cout << snt::eval::format_report(report);
        return kExitOk;
    }
    auto rows = snt::eval::compare_reports(load_report(a.compare), report);
    if (g.json) emit({{"report", report_json}, {"comparison", snt::eval::delta_rows_to_json(rows)}});
    else std::cout << snt::eval::format_report(report) << "\n" << snt::eval::format_deltas(rows);
    return kExitOk;
}

int cmd_eval_compare(const std::string& without, const std::string& with_, const Globals& g) {
    print_comparison(snt::eval::compare_reports(load_report(without), load_report(with_)), g);
    return kExitOk;
}

int cmd_eval_pairwise(const std::string& input, const Globals& g) {
    auto tallies = snt::eval::tabulate_pairwise(input);
    json j = json::object();
    for (const auto& [name, t] : tallies)
        j[name] = {{"win", t.win}, {"tie", t.tie}, {"lose", t.lose}, {"total", t.total()}};
    if (g.json) {
        emit(j);
        return kExitOk;
    }
    std::cout << std::left << std::setw(24) << "comparison" << std::right << std::setw(8) << "win" << std::setw(8)
              << "tie" << std::setw(8) << "lose" << "\n";
    for (const auto& [name, t] : tallies)
        std::cout << std::left << std::setw(24) << name << std::right << std::setw(8) << t.win << std::setw(8)
                  << t.tie << std::setw(8) << t.lose << "\n";
    return kExitOk;
}

// dataset ----------------------------------------------------------------

struct FilterArgs {
    std::string manifest, out;
    std::vector<std::string> stages;
    long long min_images = -1;
};

int cmd_dataset_filter(const FilterArgs& a, const Globals& g) {
    auto manifest = snt::dataset::load_manifest(a.manifest);
    std::vector<snt::dataset::FilterStage> stages;
    if (a.stages.empty()) stages.assign(snt::dataset::kCanonicalStageOrder.begin(), snt::dataset::kCanonicalStageOrder.end());
    for (const auto& s : a.stages) stages.push_back(snt::dataset::parse_stage(s));
    snt::dataset::FilterParams params;
    params.min_images = static_cast<std::size_t>(
        a.min_images >= 0 ? a.min_images : g.config.get_or("min_images", static_cast<long long>(params.min_images)));
    auto reports = snt::dataset::run_filters(manifest, stages, params);
    const auto& kept = reports.empty() ? manifest : reports.back().kept;
    if (!a.out.empty()) {
        std::ofstream out(a.out);
        if (!out) throw snt::Error(snt::ErrorKind::IoFailure, "cannot write " + a.out);
        snt::dataset::write_manifest_csv(out, kept);
    }
    if (g.json) {
        json j = {{"input", manifest.size()}, {"kept", kept.size()}, {"stages", json::array()}};
        for (const auto& r : reports) j["stages"].push_back(snt::dataset::filter_report_to_json(r));
        emit(j);
    } else {
        std::cout << snt::dataset::format_filter_table(manifest, reports);
    }
    return kExitOk;
}

int cmd_dataset_stats(const std::string& manifest_path, const std::string& qa_path, const Globals& g) {
    auto manifest = snt::dataset::load_manifest(manifest_path);
    std::vector<snt::dataset::QAPair> qa;
    if (!qa_path.empty()) qa = snt::dataset::load_qa_pairs(qa_path);
    auto s = snt::dataset::dataset_stats(manifest, qa);
    if (g.json) {
        emit(snt::dataset::stats_to_json(s));
        return kExitOk;
    }
    std::cout << "categories          " << s.n_categories << "\n"
              << "entities            " << s.n_entities << "\n"
              << "images              " << s.n_images << "\n"
              << "qa pairs            " << s.n_qa << "\n"
              << "avg answer tokens   " << snt::eval::detail::fixed(s.avg_answer_tokens, 2) << "\n";
    return kExitOk;
}

int cmd_dataset_buckets(const std::string& manifest_path, const std::string& pageviews, const std::string& url,
                        const Globals& g) {
    if (pageviews.empty() == url.empty())
        throw snt::Error(snt::ErrorKind::InvalidArgument, "pass exactly one of --pageviews or --pageview-url");
    auto manifest = snt::dataset::load_manifest(manifest_path);
    std::unique_ptr<snt::dataset::PageviewClient> client;
    if (!url.empty()) {
        client = std::make_unique<snt::dataset::HttpPageviewClient>(url);
    } else {
        auto fixture = std::make_unique<snt::dataset::FixturePageviewClient>();
        snt::for_each_jsonl(pageviews, [&](const json& j, std::size_t lineno) {
            if (!j.contains("entity_id"))
                throw snt::Error(snt::ErrorKind::ParseError, pageviews + ":" + std::to_string(lineno) + ": no entity_id");
            fixture->set(j["entity_id"].get<std::string>(), j);
        });
        client = std::move(fixture);
    }
    std::vector<snt::dataset::PopularityInput> inputs;
    for (const auto& row : manifest) {
        auto stats = snt::dataset::fetch_pageviews(row.entity_name, *client);
        inputs.push_back({row.entity_name, row.entity_name, row.category, stats.mean_views});
    }
    auto buckets = snt::dataset::bucket_popularity(inputs);
    json j = json::array();
    for (const auto& in : inputs)
        j.push_back({{"entity", in.entity_name},
                     {"category", snt::to_string(in.category)},
                     {"mean_views", in.mean_views},
                     {"bucket", snt::to_string(buckets.at(in.entity_id))}});
    if (g.json) {
        emit(j);
        return kExitOk;
    }
    for (const auto& row : j)
        std::cout << std::left << std::setw(32) << row["entity"].get<std::string>() << std::setw(14)
                  << row["category"].get<std::string>() << std::right << std::setw(12)
                  << snt::eval::detail::fixed(row["mean_views"].get<double>(), 1) << "  "
                  << row["bucket"].get<std::string>() << "\n";
    return kExitOk;
}

/// Exit status 65 when any QA pair has issues.
int cmd_dataset_lint(const std::string& qa_path, const std::string& kb_path, const Globals& g) {
    auto qa = snt::dataset::load_qa_pairs(qa_path);
    std::map<std::string, snt::EntityRecord> records;
    if (!kb_path.empty()) {
        auto store = snt::KnowledgeStore::from_jsonl(kb_path);
        for (const auto& r : store.records()) records[r.entity_id] = r;
    }
    json issues = json::array();
    for (std::size_t i = 0; i < qa.size(); ++i) {
        std::string name = qa[i].entity_id;
        std::vector<std::string> aliases;
        if (auto it = records.find(qa[i].entity_id); it != records.end()) {
            name = it->second.name;
            aliases = it->second.aliases;
        }
        for (const auto& issue : snt::dataset::validate_qa(qa[i], name, aliases))
            issues.push_back({{"line", i + 1}, {"entity", name}, {"question", qa[i].question}, {"issue", issue}});
    }
    if (g.json) {
        emit({{"checked", qa.size()}, {"issues", issues}});
    } else {
        for (const auto& is : issues)
            std::cout << qa_path << ":" << is["line"].get<std::size_t>() << ": " << is["issue"].get<std::string>()
                      << " (" << is["question"].get<std::string>() << ")\n";
        std::cout << qa.size() << " checked, " << issues.size() << " issue(s)\n";
    }
    if (!issues.empty()) {
        print_error("ValidationFailed", std::to_string(issues.size()) + " QA issue(s) in " + qa_path);
        return kExitData;
    }
    return kExitOk;
}

int cmd_dataset_sample(const std::string& manifest_path, double fraction, const std::string& out_path,
                       const Globals& g) {
    auto sample = snt::dataset::sample_per_category(snt::dataset::load_manifest(manifest_path), fraction, g.seed);
    if (out_path.empty()) {
        snt::dataset::write_manifest_csv(std::cout, sample);
        return kExitOk;
    }
    std::ofstream out(out_path);
    if (!out) throw snt::Error(snt::ErrorKind::IoFailure, "cannot write " + out_path);
    snt::dataset::write_manifest_csv(out, sample);
    if (g.json) emit({{"path", out_path}, {"entities", sample.size()}});
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"snt: entity-aware visual question answering toolkit"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "key = value settings file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "seed for sampling");
    app.add_flag("--json", g.json, "machine-readable output");

    std::function<int()> action;

    auto* index = app.add_subcommand("index", "build or query an embedding index")->require_subcommand(1);
    index->fallthrough();
    IndexBuildArgs build;
    auto* build_cmd = index->add_subcommand("build", "ingest JSONL entries into a sealed index file");
    build_cmd->add_option("--input", build.input, "JSONL entries")->required();
    build_cmd->add_option("--out", build.out, "index file")->required();
    build_cmd->add_flag("--force", build.force, "overwrite an existing file");
    build_cmd->callback([&] { action = [&] { return cmd_index_build(build, g); }; });
    IndexQueryArgs query;
    auto* query_cmd = index->add_subcommand("query", "print the k nearest entries as JSON");
    query_cmd->add_option("--index", query.index, "index file")->required();
    query_cmd->add_option("--vector", query.vector, "query vector components")->delimiter(',');
    query_cmd->add_option("--vector-b64", query.vector_b64, "query vector as base64 little-endian f32");
    query_cmd->add_option("-k", query.k, "neighbours")->check(CLI::PositiveNumber);
    query_cmd->callback([&] { action = [&] { return cmd_index_query(query, g); }; });

    AskArgs ask;
    std::size_t ask_k = 0;
    double ask_min_score = -1.0;
    auto* ask_cmd = app.add_subcommand("ask", "answer a question about an image");
    ask_cmd->add_option("--image-id", ask.image_id, "image identifier")->required();
    ask_cmd->add_option("--image-uri", ask.image_uri, "image location");
    ask_cmd->add_option("--width", ask.width, "image width in pixels");
    ask_cmd->add_option("--height", ask.height, "image height in pixels");
    ask_cmd->add_option("--question,-q", ask.question, "question text")->required();
    ask_cmd->add_option("--qtype", ask.qtype, "static|narrative|dynamic|procedural|subjective");
    ask_cmd->add_option("--index", ask.index, "index file");
    ask_cmd->add_option("--knowledge", ask.knowledge, "knowledge base JSONL");
    ask_cmd->add_option("--detector", ask.detector, "detections JSONL, http:// URL or 'none'");
    ask_cmd->add_option("--embeddings", ask.embeddings, "embeddings JSONL or encoder http:// URL");
    ask_cmd->add_option("--generator", ask.generator, "'template' or generator http:// URL");
    ask_cmd->add_option("-k", ask_k, "neighbours to retrieve");
    ask_cmd->add_option("--min-score", ask_min_score, "minimum similarity for a vote");
    ask_cmd->callback([&] {
        if (ask_k > 0) ask.k = ask_k;
        if (ask_min_score >= -1.0 && ask_cmd->count("--min-score")) ask.min_score = ask_min_score;
        action = [&] { return cmd_ask(ask, g); };
    });

    auto* eval = app.add_subcommand("eval", "score predictions and compare runs")->require_subcommand(1);
    eval->fallthrough();
    EvalRunArgs run;
    auto* run_cmd = eval->add_subcommand("run", "score predictions against gold answers");
    run_cmd->add_option("--pred", run.pred, "predictions JSONL {id, prediction}")->required();
    run_cmd->add_option("--gold", run.gold, "gold JSONL examples")->required();
    run_cmd->add_option("--compare", run.compare, "baseline report JSON (the run without retrieval)");
    run_cmd->add_option("--out", run.out, "write the report JSON here");
    run_cmd->add_option("--min-token-f1", run.min_token_f1, "judge threshold");
    run_cmd->add_option("--threads", run.threads, "scoring threads")->check(CLI::PositiveNumber);
    run_cmd->callback([&] { action = [&] { return cmd_eval_run(run, g); }; });
    std::string without, with_;
    auto* cmp_cmd = eval->add_subcommand("compare", "delta table between two saved reports");
    cmp_cmd->add_option("--without", without, "report without retrieval")->required();
    cmp_cmd->add_option("--with", with_, "report with retrieval")->required();
    cmp_cmd->callback([&] { action = [&] { return cmd_eval_compare(without, with_, g); }; });
    std::string pairwise_input;
    auto* pw_cmd = eval->add_subcommand("pairwise", "tabulate win/tie/lose judgements");
    pw_cmd->add_option("--input", pairwise_input, "JSONL {comparison, outcome}")->required();
    pw_cmd->callback([&] { action = [&] { return cmd_eval_pairwise(pairwise_input, g); }; });

    auto* ds = app.add_subcommand("dataset", "manifest filtering and QA validation")->require_subcommand(1);
    ds->fallthrough();
    FilterArgs filter;
    auto* filter_cmd = ds->add_subcommand("filter", "run filtering stages over a manifest");
    filter_cmd->add_option("--manifest", filter.manifest, "manifest CSV or JSONL")->required();
    filter_cmd->add_option("--stage", filter.stages, "wiki-validity|image-count|ambiguity (repeatable)");
    filter_cmd->add_option("--min-images", filter.min_images, "image-count threshold");
    filter_cmd->add_option("--out", filter.out, "write the kept rows as CSV");
    filter_cmd->callback([&] { action = [&] { return cmd_dataset_filter(filter, g); }; });
    std::string stats_manifest, stats_qa;
    auto* stats_cmd = ds->add_subcommand("stats", "dataset statistics");
    stats_cmd->add_option("--manifest", stats_manifest, "manifest CSV or JSONL")->required();
    stats_cmd->add_option("--qa", stats_qa, "QA pairs JSONL");
    stats_cmd->callback([&] { action = [&] { return cmd_dataset_stats(stats_manifest, stats_qa, g); }; });
    std::string bk_manifest, bk_pageviews, bk_url;
    auto* bk_cmd = ds->add_subcommand("buckets", "head/torso/tail buckets from pageviews");
    bk_cmd->add_option("--manifest", bk_manifest, "manifest CSV or JSONL")->required();
    bk_cmd->add_option("--pageviews", bk_pageviews, "JSONL {entity_id, daily}");
    bk_cmd->add_option("--pageview-url", bk_url, "pageview service http:// URL");
    bk_cmd->callback([&] { action = [&] { return cmd_dataset_buckets(bk_manifest, bk_pageviews, bk_url, g); }; });
    std::string lint_qa, lint_kb;
    auto* lint_cmd = ds->add_subcommand("lint", "check QA pairs for anonymity and answer naming");
    lint_cmd->add_option("--qa", lint_qa, "QA pairs JSONL")->required();
    lint_cmd->add_option("--knowledge", lint_kb, "knowledge base JSONL for names and aliases");
    lint_cmd->callback([&] { action = [&] { return cmd_dataset_lint(lint_qa, lint_kb, g); }; });
    std::string sample_manifest, sample_out;
    double fraction = 0.1;
    auto* sample_cmd = ds->add_subcommand("sample", "seeded per-category sample of entities");
    sample_cmd->add_option("--manifest", sample_manifest, "manifest CSV or JSONL")->required();
    sample_cmd->add_option("--fraction", fraction, "fraction per category");
    sample_cmd->add_option("--out", sample_out, "output CSV (default stdout)");
    sample_cmd->callback([&] { action = [&] { return cmd_dataset_sample(sample_manifest, fraction, sample_out, g); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("UsageError", e.what());
        return kExitUsage;
    }

    try {
        if (!g.config_path.empty()) {
            g.config = snt::KeyValueConfig::load(g.config_path);
            g.config_dir = fs::path(g.config_path).parent_path();
            if (g.config_dir.empty()) g.config_dir = ".";
        }
        if (!app.count("--seed")) g.seed = static_cast<std::uint64_t>(g.config.get_or("seed", 0LL));
        return action ? action() : kExitUsage;
    } catch (const snt::StageError& e) {
        print_error(snt::kind_name(e.kind()), e.message(), e.stage());
        return exit_code_for(e.kind());
    } catch (const snt::Error& e) {
        print_error(snt::kind_name(e.kind()), e.message());
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        print_error("Internal", e.what());
        return kExitData;
    }
}
