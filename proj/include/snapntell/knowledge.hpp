#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "http.hpp"
#include "index.hpp"
#include "resolution.hpp"
#include "taxonomy.hpp"
#include "text.hpp"

namespace snt {

using Timestamp = std::chrono::sys_seconds;

/// Accepts "YYYY-MM-DD" or "YYYY-MM-DDTHH:MM:SS[Z]" (UTC).
inline Timestamp parse_timestamp(const std::string& s) {
    int y = 0, mo = 0, d = 0, hh = 0, mm = 0, ss = 0;
    char tail = 0;
    int n = std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d%c", &y, &mo, &d, &hh, &mm, &ss, &tail);
    if (n != 3 && n != 6 && !(n == 7 && tail == 'Z'))
        throw Error(ErrorKind::ParseError, "bad timestamp '" + s + "'");
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{unsigned(mo)},
                                    std::chrono::day{unsigned(d)}};
    if (!ymd.ok() || hh < 0 || hh > 23 || mm < 0 || mm > 59 || ss < 0 || ss > 60)
        throw Error(ErrorKind::ParseError, "bad timestamp '" + s + "'");
    return std::chrono::sys_days{ymd} + std::chrono::hours{hh} + std::chrono::minutes{mm} +
           std::chrono::seconds{ss};
}

inline std::string format_timestamp(Timestamp t) {
    auto days = std::chrono::floor<std::chrono::days>(t);
    std::chrono::year_month_day ymd{days};
    std::chrono::hh_mm_ss hms{t - days};
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", int(ymd.year()),
                  unsigned(ymd.month()), unsigned(ymd.day()), long(hms.hours().count()),
                  long(hms.minutes().count()), long(hms.seconds().count()));
    return buf;
}

enum class SourceKind { LocalKB, KnowledgeGraph, WebSearch, PageviewApi };

constexpr std::string_view to_string(SourceKind k) noexcept {
    switch (k) {
    case SourceKind::LocalKB: return "LocalKB";
    case SourceKind::KnowledgeGraph: return "KnowledgeGraph";
    case SourceKind::WebSearch: return "WebSearch";
    case SourceKind::PageviewApi: return "PageviewApi";
    }
    return "?";
}

inline SourceKind parse_source_kind(std::string_view s) {
    for (auto k : {SourceKind::LocalKB, SourceKind::KnowledgeGraph, SourceKind::WebSearch,
                   SourceKind::PageviewApi})
        if (to_string(k) == s) return k;
    throw Error(ErrorKind::ParseError, "unknown source kind '" + std::string(s) + "'");
}

struct Fact {
    std::string predicate;
    std::string object;
    std::string source_uri;
    std::optional<Timestamp> retrieved_at;
};

struct EntityRecord {
    std::string entity_id;
    std::string name;
    Category category = Category::Landmark;
    std::string summary;
    std::vector<std::string> aliases;
    std::vector<Fact> facts;
};

struct KnowledgeSnippet {
    std::string text;
    SourceKind source_kind = SourceKind::LocalKB;
    double score = 0.0;
    std::optional<Timestamp> timestamp;
    std::string uri;
};

inline void to_json(nlohmann::json& j, const KnowledgeSnippet& s) {
    j = {{"text", s.text},
         {"source", to_string(s.source_kind)},
         {"score", s.score},
         {"timestamp", s.timestamp ? nlohmann::json(format_timestamp(*s.timestamp))
                                   : nlohmann::json(nullptr)},
         {"uri", s.uri}};
}

inline void from_json(const nlohmann::json& j, KnowledgeSnippet& s) {
    s.text = j.at("text").get<std::string>();
    s.source_kind = parse_source_kind(j.value("source", "LocalKB"));
    s.score = j.value("score", 0.0);
    s.timestamp.reset();
    if (j.contains("timestamp") && j["timestamp"].is_string())
        s.timestamp = parse_timestamp(j["timestamp"].get<std::string>());
    s.uri = j.value("uri", "");
}

inline EntityRecord record_from_json(const nlohmann::json& j) {
    EntityRecord r;
    r.entity_id = j.at("entity_id").get<std::string>();
    r.name = j.at("name").get<std::string>();
    if (r.name.empty()) throw Error(ErrorKind::ParseError, "record " + r.entity_id + " has no name");
    r.category = parse_category(j.at("category").get<std::string>());
    r.summary = j.value("summary", "");
    r.aliases = j.value("aliases", std::vector<std::string>{});
    for (const auto& f : j.value("facts", nlohmann::json::array())) {
        Fact fact{f.at("predicate").get<std::string>(), f.at("object").get<std::string>(),
                  f.value("source_uri", ""), std::nullopt};
        if (f.contains("retrieved_at") && f["retrieved_at"].is_string())
            fact.retrieved_at = parse_timestamp(f["retrieved_at"].get<std::string>());
        r.facts.push_back(std::move(fact));
    }
    return r;
}

inline nlohmann::json record_to_json(const EntityRecord& r) {
    nlohmann::json facts = nlohmann::json::array();
    for (const auto& f : r.facts) {
        nlohmann::json jf = {{"predicate", f.predicate},
                             {"object", f.object},
                             {"source_uri", f.source_uri}};
        if (f.retrieved_at) jf["retrieved_at"] = format_timestamp(*f.retrieved_at);
        facts.push_back(std::move(jf));
    }
    return {{"entity_id", r.entity_id}, {"name", r.name},       {"category", to_string(r.category)},
            {"summary", r.summary},     {"aliases", r.aliases}, {"facts", facts}};
}

/// Local knowledge base of entity records. Immutable once loaded.
class KnowledgeStore {
public:
    static KnowledgeStore from_jsonl(const std::filesystem::path& path) {
        KnowledgeStore store;
        for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t lineno) {
            try {
                store.add(record_from_json(j));
            } catch (const nlohmann::json::exception& ex) {
                throw Error(ErrorKind::ParseError,
                            path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
            }
        });
        return store;
    }

    void add(EntityRecord record) {
        if (by_id_.contains(record.entity_id))
            throw Error(ErrorKind::DuplicateId, "entity " + record.entity_id + " already present");
        by_id_.emplace(record.entity_id, records_.size());
        records_.push_back(std::move(record));
    }

    const EntityRecord& lookup_local(const std::string& entity_id) const {
        if (auto* r = find(entity_id)) return *r;
        throw Error(ErrorKind::NotFound, "entity " + entity_id + " not in local knowledge base");
    }

    const EntityRecord* find(const std::string& entity_id) const {
        auto it = by_id_.find(entity_id);
        return it == by_id_.end() ? nullptr : &records_[it->second];
    }

    const std::vector<EntityRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }

private:
    std::vector<EntityRecord> records_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

/// External knowledge source. Implementations must stamp every snippet with
/// their own source_kind().
class Fetcher {
public:
    virtual ~Fetcher() = default;
    virtual std::string name() const = 0;
    virtual SourceKind source_kind() const = 0;
    virtual std::chrono::milliseconds timeout() const { return std::chrono::seconds(3); }
    virtual std::vector<KnowledgeSnippet> fetch(const std::string& entity_name,
                                                const std::string& question) = 0;
};

/// Canned snippets keyed by entity name; the offline stand-in for KG/web.
class StaticFetcher final : public Fetcher {
public:
    StaticFetcher(std::string name, SourceKind kind) : name_(std::move(name)), kind_(kind) {}

    void set(const std::string& entity_name, std::vector<KnowledgeSnippet> snippets) {
        for (auto& s : snippets) s.source_kind = kind_;
        table_[entity_name] = std::move(snippets);
    }

    std::string name() const override { return name_; }
    SourceKind source_kind() const override { return kind_; }
    std::vector<KnowledgeSnippet> fetch(const std::string& entity_name,
                                        const std::string&) override {
        auto it = table_.find(entity_name);
        return it == table_.end() ? std::vector<KnowledgeSnippet>{} : it->second;
    }

private:
    std::string name_;
    SourceKind kind_;
    std::map<std::string, std::vector<KnowledgeSnippet>> table_;
};

/// POST {base}/search {entity, question} -> {snippets: [{text, uri, timestamp}]}.
class HttpFetcher final : public Fetcher {
public:
    HttpFetcher(std::string name, SourceKind kind, const std::string& base_url,
                std::chrono::milliseconds timeout = std::chrono::seconds(3))
        : name_(std::move(name)), kind_(kind), endpoint_(http::parse_endpoint(base_url)),
          timeout_(timeout) {}

    std::string name() const override { return name_; }
    SourceKind source_kind() const override { return kind_; }
    std::chrono::milliseconds timeout() const override { return timeout_; }

    std::vector<KnowledgeSnippet> fetch(const std::string& entity_name,
                                        const std::string& question) override {
        auto res = http::post_json(endpoint_, "/search",
                                   {{"entity", entity_name}, {"question", question}}, timeout_);
        if (res.failure != http::Failure::None)
            throw Error(ErrorKind::BackendUnavailable, name_ + ": " + res.detail);
        std::vector<KnowledgeSnippet> out;
        try {
            for (const auto& js : res.body.at("snippets")) {
                KnowledgeSnippet s;
                s.text = js.at("text").get<std::string>();
                s.uri = js.value("uri", "");
                if (js.contains("timestamp") && js["timestamp"].is_string())
                    s.timestamp = parse_timestamp(js["timestamp"].get<std::string>());
                s.source_kind = kind_;
                out.push_back(std::move(s));
            }
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorKind::BackendMalformedResponse, name_ + ": " + ex.what());
        }
        return out;
    }

private:
    std::string name_;
    SourceKind kind_;
    http::Endpoint endpoint_;
    std::chrono::milliseconds timeout_;
};

struct ScoringConfig {
    double priority_local = 1.0;
    double priority_kg = 0.8;
    double priority_web = 0.6;
    double priority_pageview = 0.4;
    std::chrono::seconds recency_window = std::chrono::days(7);
    double recency_bonus = 0.5;
    Timestamp now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());

    double priority(SourceKind k) const noexcept {
        switch (k) {
        case SourceKind::LocalKB: return priority_local;
        case SourceKind::KnowledgeGraph: return priority_kg;
        case SourceKind::WebSearch: return priority_web;
        case SourceKind::PageviewApi: return priority_pageview;
        }
        return 0.0;
    }
};

/// Fraction of the question's distinct content tokens that also appear in `text`.
inline double token_overlap(std::string_view question, std::string_view text) {
    auto q = text::content_tokens(question);
    std::set<std::string> qset(q.begin(), q.end());
    if (qset.empty()) return 0.0;
    auto t = text::tokenize(text);
    std::set<std::string> tset(t.begin(), t.end());
    std::size_t shared = 0;
    for (const auto& tok : qset) shared += tset.contains(tok);
    return static_cast<double>(shared) / static_cast<double>(qset.size());
}

/// priority(kind) + overlap(question, text) + recency bonus. The bonus only
/// applies to Dynamic questions with a timestamp inside the recency window.
inline double score_snippet(const KnowledgeSnippet& snippet, std::string_view question,
                            QuestionType qtype, const ScoringConfig& cfg = {}) {
    double score = cfg.priority(snippet.source_kind) + token_overlap(question, snippet.text);
    if (qtype == QuestionType::Dynamic && snippet.timestamp) {
        auto age = cfg.now - *snippet.timestamp;
        if (age >= std::chrono::seconds::zero() && age <= cfg.recency_window)
            score += cfg.recency_bonus;
    }
    return score;
}

enum class FetchStatus { Ok, Failed, TimedOut, Rejected };

constexpr std::string_view to_string(FetchStatus s) noexcept {
    switch (s) {
    case FetchStatus::Ok: return "ok";
    case FetchStatus::Failed: return "failed";
    case FetchStatus::TimedOut: return "timeout";
    case FetchStatus::Rejected: return "rejected";
    }
    return "?";
}

struct SourceReport {
    std::string source;
    SourceKind kind = SourceKind::LocalKB;
    FetchStatus status = FetchStatus::Ok;
    std::size_t returned = 0;
    std::string detail;
};

struct Aggregation {
    std::vector<KnowledgeSnippet> snippets;
    std::vector<SourceReport> sources;
};

inline void to_json(nlohmann::json& j, const SourceReport& r) {
    j = {{"source", r.source},
         {"kind", to_string(r.kind)},
         {"status", to_string(r.status)},
         {"returned", r.returned},
         {"detail", r.detail}};
}

/// Snippets contributed by the local record: its summary and one line per fact.
inline std::vector<KnowledgeSnippet> local_snippets(const EntityRecord& record) {
    std::vector<KnowledgeSnippet> out;
    if (!record.summary.empty())
        out.push_back({record.summary, SourceKind::LocalKB, 0.0, std::nullopt, ""});
    for (const auto& f : record.facts)
        out.push_back({f.predicate + ": " + f.object, SourceKind::LocalKB, 0.0, f.retrieved_at,
                       f.source_uri});
    return out;
}

/// Deduplicates, scores and ranks a candidate pool. Candidates are visited in
/// source-priority order, so for an exact duplicate text the higher-priority
/// source wins. Final order: score desc, then priority desc, then text.
inline std::vector<KnowledgeSnippet> rank_snippets(std::vector<KnowledgeSnippet> pool,
                                                   std::string_view question, QuestionType qtype,
                                                   std::size_t budget,
                                                   const ScoringConfig& cfg = {}) {
    std::stable_sort(pool.begin(), pool.end(), [&](const auto& a, const auto& b) {
        return cfg.priority(a.source_kind) > cfg.priority(b.source_kind);
    });
    std::set<std::string, std::less<>> seen;
    std::vector<KnowledgeSnippet> kept;
    for (auto& s : pool) {
        if (s.text.empty() || !seen.insert(s.text).second) continue;
        s.score = score_snippet(s, question, qtype, cfg);
        if (!std::isfinite(s.score)) continue;
        kept.push_back(std::move(s));
    }
    std::stable_sort(kept.begin(), kept.end(), [&](const auto& a, const auto& b) {
        if (a.score != b.score) return a.score > b.score;
        double pa = cfg.priority(a.source_kind), pb = cfg.priority(b.source_kind);
        if (pa != pb) return pa > pb;
        return a.text < b.text;
    });
    if (kept.size() > budget) kept.resize(budget);
    return kept;
}

struct AggregateOptions {
    std::size_t budget = 8;
    ScoringConfig scoring;
    bool parallel = true;
};

/// Gathers snippets for a resolved entity from the local store and every
/// fetcher. Fetchers run concurrently, each bounded by its own timeout; a
/// failing or late fetcher is reported and skipped.
inline Aggregation aggregate(const EntityHypothesis& entity, const KnowledgeStore* store,
                             const std::string& question, QuestionType qtype,
                             std::span<const std::shared_ptr<Fetcher>> fetchers,
                             const AggregateOptions& opts = {}) {
    if (opts.budget == 0) throw Error(ErrorKind::InvalidArgument, "snippet budget must be >= 1");

    Aggregation out;
    std::vector<KnowledgeSnippet> pool;
    std::string entity_name = entity.entity_id;

    if (store) {
        if (const auto* record = store->find(entity.entity_id)) {
            entity_name = record->name;
            auto local = local_snippets(*record);
            out.sources.push_back({"local", SourceKind::LocalKB, FetchStatus::Ok, local.size(), ""});
            pool = std::move(local);
        } else {
            out.sources.push_back({"local", SourceKind::LocalKB, FetchStatus::Failed, 0,
                                   "entity not in local knowledge base"});
        }
    }

    using Batch = std::vector<KnowledgeSnippet>;
    std::vector<std::future<Batch>> pending;
    pending.reserve(fetchers.size());
    auto start = std::chrono::steady_clock::now();
    for (const auto& f : fetchers) {
        auto promise = std::make_shared<std::promise<Batch>>();
        pending.push_back(promise->get_future());
        auto job = [f, promise, entity_name, question] {
            try {
                promise->set_value(f->fetch(entity_name, question));
            } catch (...) {
                promise->set_exception(std::current_exception());
            }
        };
        if (opts.parallel)
            std::thread(std::move(job)).detach(); // a late fetcher may outlive this call
        else
            job();
    }

    for (std::size_t i = 0; i < fetchers.size(); ++i) {
        const auto& f = *fetchers[i];
        SourceReport rep{f.name(), f.source_kind(), FetchStatus::Ok, 0, ""};
        if (pending[i].wait_until(start + f.timeout()) != std::future_status::ready) {
            rep.status = FetchStatus::TimedOut;
            rep.detail = "no response within " + std::to_string(f.timeout().count()) + " ms";
            out.sources.push_back(std::move(rep));
            continue;
        }
        try {
            auto batch = pending[i].get();
            bool stamped = std::ranges::all_of(batch, [&](const KnowledgeSnippet& s) {
                return s.source_kind == f.source_kind() && !s.text.empty();
            });
            if (!stamped) {
                rep.status = FetchStatus::Rejected;
                rep.detail = "snippet with empty text or foreign source kind";
            } else {
                rep.returned = batch.size();
                pool.insert(pool.end(), std::make_move_iterator(batch.begin()),
                            std::make_move_iterator(batch.end()));
            }
        } catch (const std::exception& ex) {
            rep.status = FetchStatus::Failed;
            rep.detail = ex.what();
        }
        out.sources.push_back(std::move(rep));
    }

    out.snippets = rank_snippets(std::move(pool), question, qtype, opts.budget, opts.scoring);
    return out;
}

} // namespace snt
