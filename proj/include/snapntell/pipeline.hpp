#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "generation.hpp"
#include "http.hpp"
#include "index.hpp"
#include "knowledge.hpp"
#include "region.hpp"
#include "resolution.hpp"
#include "taxonomy.hpp"

namespace snt {

/// Image encoder contract: embedding of the (cropped) image region.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string name() const = 0;
    virtual EmbeddingVector embed(const ImageRef& region) = 0;
};

/// Precomputed embeddings keyed by image_id; JSONL rows
/// `{"image_id": ..., "vector": [...]}` or with `vector_b64`.
class FixtureEmbeddings final : public EmbeddingProvider {
public:
    static FixtureEmbeddings from_jsonl(const std::filesystem::path& path) {
        FixtureEmbeddings f;
        for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) {
            auto id = j.at("image_id").get<std::string>();
            f.table_[id] = j.contains("vector_b64")
                               ? decode_vector_b64(j.at("vector_b64").get<std::string>())
                               : j.at("vector").get<EmbeddingVector>();
        });
        return f;
    }

    void set(const std::string& image_id, EmbeddingVector v) { table_[image_id] = std::move(v); }

    std::string name() const override { return "fixture"; }
    EmbeddingVector embed(const ImageRef& region) override {
        auto it = table_.find(region.image_id);
        if (it == table_.end())
            throw Error(ErrorKind::NotFound, "no fixture embedding for image " + region.image_id);
        return it->second;
    }

private:
    std::map<std::string, EmbeddingVector> table_;
};

/// POST {base}/embed {image_uri, box} -> {vector: [...]}.
class HttpEmbedder final : public EmbeddingProvider {
public:
    explicit HttpEmbedder(const std::string& base_url,
                          std::chrono::milliseconds timeout = std::chrono::seconds(10))
        : endpoint_(http::parse_endpoint(base_url)), timeout_(timeout) {}

    std::string name() const override { return "http"; }
    EmbeddingVector embed(const ImageRef& region) override {
        nlohmann::json box = region.region ? nlohmann::json(*region.region)
                                           : nlohmann::json(BoundingBox::full());
        auto res = http::post_json(endpoint_, "/embed", {{"image_uri", region.uri}, {"box", box}},
                                   timeout_);
        if (res.failure != http::Failure::None)
            throw Error(ErrorKind::BackendUnavailable, "encoder: " + res.detail);
        try {
            return res.body.at("vector").get<EmbeddingVector>();
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorKind::BackendMalformedResponse, std::string("encoder: ") + ex.what());
        }
    }

private:
    http::Endpoint endpoint_;
    std::chrono::milliseconds timeout_;
};

/// Error raised inside a named pipeline stage.
class StageError : public Error {
public:
    StageError(std::string stage, const Error& cause)
        : Error(cause.kind(), stage + ": " + cause.message()), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

namespace detail {
/// Runs one pipeline stage, tagging any library error with the stage name.
template <typename Fn>
auto run_stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(name, e);
    }
}
} // namespace detail

struct PipelineConfig {
    std::size_t k = 5;
    double min_confidence = 0.3;
    ResolutionConfig resolution;
    AggregateOptions aggregate;
    std::size_t prompt_token_budget = 512;
};

struct AskResult {
    Answer answer;
    Resolution entity;
    std::optional<std::string> entity_name;
    std::vector<KnowledgeSnippet> snippets_used;
    RetrievalSet retrieval;
    nlohmann::json trace; // one entry per stage, in execution order
};

/// detect -> select -> crop -> embed -> knn -> resolve -> aggregate ->
/// assemble -> generate. Each stage's output is recorded in the trace.
class Pipeline {
public:
    Pipeline(std::shared_ptr<const EmbeddingIndex> index, std::shared_ptr<DetectorBackend> detector,
             std::shared_ptr<EmbeddingProvider> embedder, std::shared_ptr<const KnowledgeStore> store,
             std::vector<std::shared_ptr<Fetcher>> fetchers, std::shared_ptr<Generator> generator,
             PipelineConfig config = {})
        : index_(std::move(index)), detector_(std::move(detector)), embedder_(std::move(embedder)),
          store_(std::move(store)), fetchers_(std::move(fetchers)), generator_(std::move(generator)),
          config_(config) {
        if (!index_ || !detector_ || !embedder_ || !generator_)
            throw Error(ErrorKind::InvalidArgument, "pipeline needs an index, detector, embedder and generator");
        if (config_.k == 0) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
        config_.resolution.k = config_.k;
    }

    const PipelineConfig& config() const noexcept { return config_; }

    AskResult ask(const ImageRef& image, const std::string& question,
                  QuestionType qtype = QuestionType::Static) {
        if (question.empty()) throw Error(ErrorKind::InvalidArgument, "question is empty");
        AskResult out;
        nlohmann::json trace = nlohmann::json::array();
        auto record = [&](std::string_view stage, nlohmann::json payload) {
            payload["stage"] = stage;
            trace.push_back(std::move(payload));
        };

        auto query = detection_query(question);
        auto proposals = detail::run_stage("detect", [&] {
            if (detector_->concurrent_safe()) return detect_regions(image, query, *detector_);
            std::lock_guard lock(detector_mutex_);
            return detect_regions(image, query, *detector_);
        });
        record("detect", {{"query", query}, {"proposals", proposals}});

        auto box = select_primary_region(proposals, config_.min_confidence);
        record("select", {{"box", box}, {"min_confidence", config_.min_confidence},
                          {"fallback", box == BoundingBox::full() && proposals.empty()}});

        auto region = detail::run_stage("crop", [&] { return crop(image, box); });
        record("crop", {{"image_id", region.image_id}, {"width", region.width}, {"height", region.height}});

        auto embedding = detail::run_stage("embed", [&] { return embedder_->embed(region); });
        record("embed", {{"provider", embedder_->name()}, {"dim", embedding.size()},
                         {"vector_b64", encode_vector_b64(embedding)}});

        out.retrieval = detail::run_stage("retrieve", [&] { return index_->knn(embedding, config_.k); });
        record("retrieve", {{"k", config_.k}, {"hits", out.retrieval}});

        out.entity = resolve(out.retrieval, config_.resolution);
        record("resolve", {{"config", {{"k", config_.resolution.k},
                                       {"min_score", config_.resolution.min_score},
                                       {"min_margin", config_.resolution.min_margin}}},
                           {"result", to_json(out.entity)}});

        Aggregation agg;
        if (out.entity) {
            agg = detail::run_stage("aggregate", [&] {
                return aggregate(*out.entity, store_.get(), question, qtype, fetchers_, config_.aggregate);
            });
        }
        record("aggregate", {{"skipped", !out.entity}, {"qtype", to_string(qtype)},
                             {"snippets", agg.snippets}, {"sources", agg.sources}});

        auto bundle = detail::run_stage("assemble", [&] {
            return assemble_prompt(question, out.entity, store_.get(), agg.snippets, config_.aggregate.budget);
        });
        bundle.token_budget = config_.prompt_token_budget;
        out.entity_name = bundle.entity_name;
        out.snippets_used = bundle.snippets;
        record("assemble", {{"bundle", to_json(bundle)}, {"prompt", serialize_prompt(bundle)}});

        out.answer = detail::run_stage("generate", [&] { return generate(bundle, generator_); });
        record("generate", {{"generator", generator_->name()}, {"answer", out.answer.text},
                            {"provenance", out.answer.provenance}});

        out.trace = std::move(trace);
        return out;
    }

private:
    std::shared_ptr<const EmbeddingIndex> index_;
    std::shared_ptr<DetectorBackend> detector_;
    std::shared_ptr<EmbeddingProvider> embedder_;
    std::shared_ptr<const KnowledgeStore> store_;
    std::vector<std::shared_ptr<Fetcher>> fetchers_;
    std::shared_ptr<Generator> generator_;
    PipelineConfig config_;
    std::mutex detector_mutex_;
};

inline nlohmann::json ask_result_to_json(const AskResult& r) {
    return {{"answer", r.answer.text},
            {"entity", r.entity_name ? nlohmann::json(*r.entity_name) : nlohmann::json(nullptr)},
            {"resolution", to_json(r.entity)},
            {"snippets_used", r.snippets_used},
            {"retrieval", r.retrieval},
            {"trace", r.trace}};
}

} // namespace snt
