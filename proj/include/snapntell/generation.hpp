#pragma once

#include <chrono>
#include <future>
#include <memory>
#include <optional>
#include <semaphore>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "http.hpp"
#include "knowledge.hpp"
#include "resolution.hpp"
#include "text.hpp"

namespace snt {

/// Everything the generator sees: the question, the resolved entity (if
/// any) and the ranked evidence.
struct PromptBundle {
    std::string question;
    std::optional<std::string> entity_name;
    std::vector<KnowledgeSnippet> snippets;
    std::string template_id = "qa-v1";
    std::size_t token_budget = 512; // whitespace tokens of snippet text in the prompt
};

inline PromptBundle assemble_prompt(const std::string& question, const Resolution& hypothesis,
                                    const KnowledgeStore* store,
                                    std::vector<KnowledgeSnippet> snippets,
                                    std::size_t max_snippets = 8) {
    if (question.empty()) throw Error(ErrorKind::InvalidArgument, "question is empty");
    PromptBundle b;
    b.question = question;
    if (hypothesis) {
        const auto* record = store ? store->find(hypothesis->entity_id) : nullptr;
        b.entity_name = record ? record->name : hypothesis->entity_id;
    }
    if (snippets.size() > max_snippets) snippets.resize(max_snippets);
    b.snippets = std::move(snippets);
    return b;
}

/// Question, then the entity line, then numbered evidence. Evidence text is
/// cut once the whitespace-token budget is spent.
inline std::string serialize_prompt(const PromptBundle& b) {
    std::ostringstream os;
    os << "Question: " << b.question << "\n";
    os << "Entity: " << (b.entity_name ? *b.entity_name : std::string("(unknown)")) << "\n";
    std::size_t remaining = b.token_budget;
    std::size_t n = 0;
    for (const auto& s : b.snippets) {
        if (remaining == 0) break;
        auto toks = text::split_whitespace(s.text);
        if (toks.size() > remaining) toks.resize(remaining);
        remaining -= toks.size();
        os << "[" << ++n << "] (" << to_string(s.source_kind) << ") " << text::join(toks) << "\n";
    }
    os << "Answer:";
    return os.str();
}

struct Answer {
    std::string text;
    std::vector<std::size_t> provenance; // indices into PromptBundle::snippets
};

class Generator {
public:
    virtual ~Generator() = default;
    virtual std::string name() const = 0;
    virtual std::chrono::milliseconds timeout() const { return std::chrono::seconds(60); }
    virtual Answer generate(const PromptBundle& bundle) = 0;
};

inline constexpr std::string_view kUnknownEntityAnswer = "I could not identify the entity.";

/// Offline generator: "This is {name}. {top snippet}" or the unknown sentinel.
class TemplateGenerator final : public Generator {
public:
    std::string name() const override { return "template"; }
    Answer generate(const PromptBundle& b) override {
        if (!b.entity_name) return {std::string(kUnknownEntityAnswer), {}};
        Answer a;
        a.text = "This is " + *b.entity_name + ".";
        if (!b.snippets.empty()) {
            a.text += " " + b.snippets.front().text;
            a.provenance.push_back(0);
        }
        return a;
    }
};

/// POST {base}/generate {prompt} -> {answer}.
class HttpGenerator final : public Generator {
public:
    explicit HttpGenerator(const std::string& base_url,
                           std::chrono::milliseconds timeout = std::chrono::seconds(60))
        : endpoint_(http::parse_endpoint(base_url)), timeout_(timeout) {}

    std::string name() const override { return "http"; }
    std::chrono::milliseconds timeout() const override { return timeout_; }

    Answer generate(const PromptBundle& b) override {
        auto res = http::post_json(endpoint_, "/generate", {{"prompt", serialize_prompt(b)}}, timeout_);
        if (res.failure == http::Failure::Timeout)
            throw Error(ErrorKind::GeneratorTimeout, "generator: " + res.detail);
        if (res.failure != http::Failure::None)
            throw Error(ErrorKind::GeneratorUnavailable, "generator: " + res.detail);
        if (!res.body.contains("answer") || !res.body["answer"].is_string())
            throw Error(ErrorKind::GeneratorUnavailable, "generator response has no answer");
        Answer a;
        a.text = res.body["answer"].get<std::string>();
        for (std::size_t i = 0; i < b.snippets.size(); ++i) a.provenance.push_back(i);
        return a;
    }

private:
    http::Endpoint endpoint_;
    std::chrono::milliseconds timeout_;
};

/// Caps concurrent calls into a generator.
class InFlightLimiter {
public:
    explicit InFlightLimiter(std::ptrdiff_t limit) : slots_(limit) {}

    template <typename Fn>
    auto run(Fn&& fn) {
        slots_.acquire();
        struct Release {
            std::counting_semaphore<>& s;
            ~Release() { s.release(); }
        } release{slots_};
        return fn();
    }

private:
    std::counting_semaphore<> slots_;
};

/// Runs the generator under its declared timeout. A late answer is dropped,
/// never surfaced.
inline Answer generate(const PromptBundle& bundle, const std::shared_ptr<Generator>& generator) {
    if (bundle.question.empty()) throw Error(ErrorKind::InvalidArgument, "bundle has no question");
    if (!generator) throw Error(ErrorKind::GeneratorUnavailable, "no generator configured");

    auto promise = std::make_shared<std::promise<Answer>>();
    auto future = promise->get_future();
    auto shared_bundle = std::make_shared<PromptBundle>(bundle);
    std::thread([generator, promise, shared_bundle] {
        try {
            promise->set_value(generator->generate(*shared_bundle));
        } catch (...) {
            promise->set_exception(std::current_exception());
        }
    }).detach();

    if (future.wait_for(generator->timeout()) != std::future_status::ready)
        throw Error(ErrorKind::GeneratorTimeout,
                    generator->name() + " exceeded " + std::to_string(generator->timeout().count()) +
                        " ms");
    Answer answer;
    try {
        answer = future.get();
    } catch (const Error&) {
        throw;
    } catch (const std::exception& ex) {
        throw Error(ErrorKind::GeneratorUnavailable, ex.what());
    }
    if (answer.text.empty()) throw Error(ErrorKind::GeneratorUnavailable, "empty answer");
    std::erase_if(answer.provenance, [&](std::size_t i) { return i >= bundle.snippets.size(); });
    return answer;
}

inline nlohmann::json to_json(const PromptBundle& b) {
    return {{"question", b.question},
            {"entity_name", b.entity_name ? nlohmann::json(*b.entity_name) : nlohmann::json(nullptr)},
            {"snippets", b.snippets},
            {"template_id", b.template_id}};
}

} // namespace snt
