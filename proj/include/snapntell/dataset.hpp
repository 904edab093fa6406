#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "csv.hpp"
#include "error.hpp"
#include "http.hpp"
#include "index.hpp"
#include "taxonomy.hpp"
#include "text.hpp"

namespace snt::dataset {

struct ImageRecord {
    std::string image_url;
    std::string source_page_url;
    std::string renamed_image_name;

    friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct EntityManifestRow {
    std::string entity_name;
    Category category = Category::Landmark;
    std::string wiki_url;
    int wiki_status = 0; // HTTP status of the wiki page when checked upstream; 0 = unchecked
    std::vector<ImageRecord> image_records;
    bool ambiguous_flag = false;

    friend bool operator==(const EntityManifestRow&, const EntityManifestRow&) = default;
};

using Manifest = std::vector<EntityManifestRow>;

// Manifest IO --------------------------------------------------------------

inline constexpr std::array<std::string_view, 6> kManifestColumns = {
    "entity_name", "category", "wiki_url", "image_url", "source_page_url", "renamed_image_name"};

namespace detail {
inline bool truthy(std::string_view s) {
    return s == "1" || s == "true" || s == "True" || s == "TRUE" || s == "yes";
}
} // namespace detail

/// One CSV row per image record, grouped by entity_name in first-seen order.
/// Optional extra columns: `ambiguous` (flag) and `wiki_status` (int).
inline Manifest read_manifest_csv(std::istream& in) {
    auto rows = csv::parse(in);
    if (rows.empty()) return {};
    const auto& header = rows.front();
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (auto name : kManifestColumns)
        if (!col.contains(std::string(name)))
            throw Error(ErrorKind::ParseError, "manifest CSV lacks column '" + std::string(name) + "'");
    auto get = [&](const std::vector<std::string>& r, const std::string& name) -> std::string {
        auto it = col.find(name);
        if (it == col.end() || it->second >= r.size()) return "";
        return r[it->second];
    };

    Manifest out;
    std::map<std::string, std::size_t> by_name;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        std::string name = get(r, "entity_name");
        if (name.empty())
            throw Error(ErrorKind::ParseError, "manifest row " + std::to_string(i + 1) + " has no entity_name");
        auto [it, fresh] = by_name.try_emplace(name, out.size());
        if (fresh) {
            EntityManifestRow row;
            row.entity_name = name;
            row.category = parse_category(get(r, "category"));
            row.wiki_url = get(r, "wiki_url");
            auto status = get(r, "wiki_status");
            row.wiki_status = status.empty() ? 0 : std::stoi(status);
            row.ambiguous_flag = detail::truthy(get(r, "ambiguous"));
            out.push_back(std::move(row));
        }
        auto& row = out[it->second];
        if (detail::truthy(get(r, "ambiguous"))) row.ambiguous_flag = true;
        if (auto url = get(r, "image_url"); !url.empty())
            row.image_records.push_back({url, get(r, "source_page_url"), get(r, "renamed_image_name")});
    }
    return out;
}

inline Manifest read_manifest_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
    return read_manifest_csv(in);
}

inline void write_manifest_csv(std::ostream& os, const Manifest& m) {
    std::vector<std::string> header(kManifestColumns.begin(), kManifestColumns.end());
    header.push_back("wiki_status");
    header.push_back("ambiguous");
    csv::write_row(os, header);
    for (const auto& row : m) {
        auto emit = [&](const ImageRecord* img) {
            csv::write_row(os, {row.entity_name, std::string(to_string(row.category)), row.wiki_url,
                                img ? img->image_url : "", img ? img->source_page_url : "",
                                img ? img->renamed_image_name : "", std::to_string(row.wiki_status),
                                row.ambiguous_flag ? "1" : "0"});
        };
        if (row.image_records.empty()) emit(nullptr);
        for (const auto& img : row.image_records) emit(&img);
    }
}

inline EntityManifestRow manifest_row_from_json(const nlohmann::json& j) {
    EntityManifestRow row;
    row.entity_name = j.at("entity_name").get<std::string>();
    if (row.entity_name.empty()) throw Error(ErrorKind::ParseError, "manifest row has no entity_name");
    row.category = parse_category(j.at("category").get<std::string>());
    row.wiki_url = j.value("wiki_url", "");
    row.wiki_status = j.value("wiki_status", 0);
    row.ambiguous_flag = j.value("ambiguous_flag", false);
    for (const auto& img : j.value("image_records", nlohmann::json::array()))
        row.image_records.push_back({img.value("image_url", ""), img.value("source_page_url", ""),
                                     img.value("renamed_image_name", "")});
    return row;
}

inline nlohmann::json manifest_row_to_json(const EntityManifestRow& row) {
    nlohmann::json imgs = nlohmann::json::array();
    for (const auto& i : row.image_records)
        imgs.push_back({{"image_url", i.image_url},
                        {"source_page_url", i.source_page_url},
                        {"renamed_image_name", i.renamed_image_name}});
    return {{"entity_name", row.entity_name}, {"category", to_string(row.category)},
            {"wiki_url", row.wiki_url},       {"wiki_status", row.wiki_status},
            {"ambiguous_flag", row.ambiguous_flag}, {"image_records", imgs}};
}

/// Reads either format, chosen by extension (.csv, otherwise JSONL).
inline Manifest load_manifest(const std::filesystem::path& path) {
    if (path.extension() == ".csv") return read_manifest_csv(path);
    Manifest m;
    for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t lineno) {
        try {
            m.push_back(manifest_row_from_json(j));
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
        }
    });
    return m;
}

// Filtering ----------------------------------------------------------------

enum class FilterStage { WikiValidity, ImageCount, Ambiguity };

inline constexpr std::array<FilterStage, 3> kCanonicalStageOrder = {
    FilterStage::WikiValidity, FilterStage::ImageCount, FilterStage::Ambiguity};

constexpr std::string_view to_string(FilterStage s) noexcept {
    switch (s) {
    case FilterStage::WikiValidity: return "wiki-validity";
    case FilterStage::ImageCount: return "image-count";
    case FilterStage::Ambiguity: return "ambiguity";
    }
    return "?";
}

inline FilterStage parse_stage(std::string_view s) {
    for (auto st : kCanonicalStageOrder)
        if (to_string(st) == s) return st;
    throw Error(ErrorKind::UnknownStage, "unknown filter stage '" + std::string(s) + "'");
}

struct FilterParams {
    std::size_t min_images = 10;
};

struct CategoryCounts {
    std::size_t before = 0;
    std::size_t kept = 0;
    std::size_t removed = 0;
};

struct FilterReport {
    FilterStage stage = FilterStage::WikiValidity;
    Manifest kept;
    Manifest removed;
    std::map<std::string, CategoryCounts> per_category;
};

inline bool passes(const EntityManifestRow& row, FilterStage stage, const FilterParams& p) {
    switch (stage) {
    case FilterStage::WikiValidity: return !row.wiki_url.empty() && row.wiki_status != 404;
    case FilterStage::ImageCount: return row.image_records.size() >= p.min_images;
    case FilterStage::Ambiguity: return !row.ambiguous_flag;
    }
    return false;
}

inline FilterReport filter_stage(const Manifest& manifest, FilterStage stage, const FilterParams& params = {}) {
    FilterReport rep;
    rep.stage = stage;
    for (const auto& row : manifest) {
        auto& counts = rep.per_category[std::string(to_string(row.category))];
        ++counts.before;
        if (passes(row, stage, params)) {
            ++counts.kept;
            rep.kept.push_back(row);
        } else {
            ++counts.removed;
            rep.removed.push_back(row);
        }
    }
    return rep;
}

/// Applies stages in sequence. They must appear in canonical order
/// (wiki-validity, image-count, ambiguity); skipping a stage is allowed.
inline std::vector<FilterReport> run_filters(const Manifest& manifest, std::span<const FilterStage> stages,
                                             const FilterParams& params = {}) {
    int last = -1;
    for (auto s : stages) {
        int pos = static_cast<int>(std::ranges::find(kCanonicalStageOrder, s) - kCanonicalStageOrder.begin());
        if (pos <= last)
            throw Error(ErrorKind::InvalidArgument,
                        "filter stages must run in order wiki-validity -> image-count -> ambiguity");
        last = pos;
    }
    std::vector<FilterReport> reports;
    const Manifest* current = &manifest;
    for (auto s : stages) {
        reports.push_back(filter_stage(*current, s, params));
        current = &reports.back().kept;
    }
    return reports;
}

// Question checks -----------------------------------------------------------

struct AnonymityResult {
    bool pass = true;
    std::string offending_span; // normalized tokens of the leaked name

    explicit operator bool() const noexcept { return pass; }
};

/// Fails when the normalized question contains the entity name or an alias
/// as a contiguous token run.
inline AnonymityResult check_anonymity(std::string_view question, std::string_view entity_name,
                                       std::span<const std::string> aliases = {}) {
    if (entity_name.empty()) throw Error(ErrorKind::InvalidArgument, "entity name is empty");
    auto q = text::tokenize(question);
    auto probe = [&](std::string_view name) -> std::optional<std::string> {
        auto needle = text::tokenize(name);
        if (text::find_subsequence(q, needle) == std::string::npos) return std::nullopt;
        return text::join(needle);
    };
    if (auto hit = probe(entity_name)) return {false, *hit};
    for (const auto& a : aliases)
        if (auto hit = probe(a)) return {false, *hit};
    return {};
}

struct QAPair {
    std::string entity_id;
    std::string question;
    std::string answer;
    QuestionType qtype = QuestionType::Static;
    std::string image_id;
};

inline QAPair qa_from_json(const nlohmann::json& j) {
    return {j.at("entity_id").get<std::string>(), j.at("question").get<std::string>(),
            j.at("answer").get<std::string>(), parse_question_type(j.at("qtype").get<std::string>()),
            j.value("image_id", "")};
}

inline nlohmann::json qa_to_json(const QAPair& qa) {
    return {{"entity_id", qa.entity_id}, {"question", qa.question}, {"answer", qa.answer},
            {"qtype", to_string(qa.qtype)}, {"image_id", qa.image_id}};
}

inline std::vector<QAPair> load_qa_pairs(const std::filesystem::path& path) {
    std::vector<QAPair> out;
    for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t lineno) {
        try {
            out.push_back(qa_from_json(j));
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
        }
    });
    return out;
}

/// Violations of the QA-pair invariants; empty means valid.
inline std::vector<std::string> validate_qa(const QAPair& qa, std::string_view entity_name,
                                            std::span<const std::string> aliases = {}) {
    std::vector<std::string> issues;
    if (qa.question.empty()) issues.emplace_back("empty question");
    if (qa.answer.empty()) issues.emplace_back("empty answer");
    if (entity_name.empty()) {
        issues.emplace_back("unknown entity name");
        return issues;
    }
    if (!qa.answer.empty() && !text::contains_phrase(text::tokenize(qa.answer), entity_name))
        issues.emplace_back("answer does not name the entity");
    if (!qa.question.empty()) {
        auto anon = check_anonymity(qa.question, entity_name, aliases);
        if (!anon.pass) issues.push_back("question reveals entity: '" + anon.offending_span + "'");
    }
    return issues;
}

// Popularity ---------------------------------------------------------------

inline constexpr std::size_t kPageviewDays = 60;

struct PageviewStats {
    std::string entity_id;
    std::vector<std::uint64_t> daily_views;
    double mean_views = 0.0;
};

inline PageviewStats make_pageview_stats(std::string entity_id, std::vector<std::uint64_t> daily) {
    if (daily.size() != kPageviewDays)
        throw Error(ErrorKind::MalformedResponse,
                    "expected " + std::to_string(kPageviewDays) + " daily values, got " + std::to_string(daily.size()));
    auto sum = std::accumulate(daily.begin(), daily.end(), std::uint64_t{0});
    double mean = static_cast<double>(sum) / static_cast<double>(kPageviewDays);
    return {std::move(entity_id), std::move(daily), mean};
}

class PageviewClient {
public:
    virtual ~PageviewClient() = default;
    /// Raw JSON body `{"daily": [...]}` for one entity.
    virtual nlohmann::json daily(const std::string& entity_id) = 0;
};

class FixturePageviewClient final : public PageviewClient {
public:
    void set(const std::string& entity_id, nlohmann::json body) { table_[entity_id] = std::move(body); }
    nlohmann::json daily(const std::string& entity_id) override {
        auto it = table_.find(entity_id);
        if (it == table_.end()) throw Error(ErrorKind::ClientUnavailable, "no pageviews for " + entity_id);
        return it->second;
    }

private:
    std::map<std::string, nlohmann::json> table_;
};

/// GET {base}/pageviews/{entity_id} -> {daily: [60 integers]}.
class HttpPageviewClient final : public PageviewClient {
public:
    explicit HttpPageviewClient(const std::string& base_url,
                                std::chrono::milliseconds timeout = std::chrono::seconds(10))
        : endpoint_(http::parse_endpoint(base_url)), timeout_(timeout) {}

    nlohmann::json daily(const std::string& entity_id) override {
        auto res = http::get_json(endpoint_, "/pageviews/" + entity_id, timeout_);
        if (res.failure == http::Failure::BadBody) throw Error(ErrorKind::MalformedResponse, res.detail);
        if (res.failure != http::Failure::None) throw Error(ErrorKind::ClientUnavailable, res.detail);
        return res.body;
    }

private:
    http::Endpoint endpoint_;
    std::chrono::milliseconds timeout_;
};

inline PageviewStats fetch_pageviews(const std::string& entity_id, PageviewClient& client) {
    auto body = client.daily(entity_id);
    if (!body.is_object() || !body.contains("daily") || !body["daily"].is_array())
        throw Error(ErrorKind::MalformedResponse, "pageview response lacks a daily array");
    std::vector<std::uint64_t> daily;
    for (const auto& v : body["daily"]) {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
            throw Error(ErrorKind::MalformedResponse, "daily views must be non-negative integers");
        daily.push_back(v.get<std::uint64_t>());
    }
    return make_pageview_stats(entity_id, std::move(daily));
}

struct PopularityInput {
    std::string entity_id;
    std::string entity_name;
    Category category = Category::Landmark;
    double mean_views = 0.0;
};

/// Per-category tertiles of mean pageviews. Sorted by views descending (ties
/// by name); the remainder of a non-divisible count goes to Head, then Torso.
inline std::map<std::string, PopularityBucket> bucket_popularity(std::span<const PopularityInput> entities) {
    std::map<Category, std::vector<const PopularityInput*>> by_cat;
    for (const auto& e : entities) by_cat[e.category].push_back(&e);

    std::map<std::string, PopularityBucket> out;
    for (auto& [cat, group] : by_cat) {
        if (group.size() < 3)
            throw Error(ErrorKind::TooFewEntities,
                        "category " + std::string(to_string(cat)) + " has fewer than 3 entities");
        std::ranges::sort(group, [](const PopularityInput* a, const PopularityInput* b) {
            if (a->mean_views != b->mean_views) return a->mean_views > b->mean_views;
            if (a->entity_name != b->entity_name) return a->entity_name < b->entity_name;
            return a->entity_id < b->entity_id;
        });
        std::size_t base = group.size() / 3, rem = group.size() % 3;
        std::size_t head = base + (rem >= 1), torso = base + (rem >= 2);
        for (std::size_t i = 0; i < group.size(); ++i) {
            auto b = i < head ? PopularityBucket::Head
                              : (i < head + torso ? PopularityBucket::Torso : PopularityBucket::Tail);
            out[group[i]->entity_id] = b;
        }
    }
    return out;
}

/// Seeded sample of ceil(fraction * size) entities from every category,
/// returned in manifest order.
inline Manifest sample_per_category(const Manifest& manifest, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw Error(ErrorKind::InvalidArgument, "sample fraction must be in (0, 1]");
    std::map<Category, std::vector<std::size_t>> by_cat;
    for (std::size_t i = 0; i < manifest.size(); ++i) by_cat[manifest[i].category].push_back(i);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> chosen;
    for (auto& [_, idx] : by_cat) {
        // Fisher-Yates driven directly by the engine for cross-platform stability.
        for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
        auto take = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(idx.size())));
        chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::ranges::sort(chosen);
    Manifest out;
    for (auto i : chosen) out.push_back(manifest[i]);
    return out;
}

// Statistics ---------------------------------------------------------------

struct CategoryStats {
    std::size_t entities = 0;
    std::size_t images = 0;
    std::size_t qa_pairs = 0;
};

struct StatsReport {
    std::size_t n_categories = 0;
    std::size_t n_entities = 0;
    std::size_t n_qa = 0;
    std::size_t n_images = 0;
    double avg_answer_tokens = 0.0;
    std::map<std::string, CategoryStats> per_category;
};

/// QA pairs reference manifest entities by entity_name.
inline StatsReport dataset_stats(const Manifest& manifest, std::span<const QAPair> qapairs) {
    StatsReport s;
    std::map<std::string, const EntityManifestRow*> by_name;
    for (const auto& row : manifest) {
        by_name[row.entity_name] = &row;
        auto& c = s.per_category[std::string(to_string(row.category))];
        ++c.entities;
        c.images += row.image_records.size();
        s.n_images += row.image_records.size();
    }
    s.n_entities = manifest.size();
    s.n_categories = s.per_category.size();
    std::size_t tokens = 0;
    for (const auto& qa : qapairs) {
        auto it = by_name.find(qa.entity_id);
        if (it == by_name.end()) throw Error(ErrorKind::DanglingReference, qa.entity_id);
        ++s.per_category[std::string(to_string(it->second->category))].qa_pairs;
        tokens += text::split_whitespace(qa.answer).size();
    }
    s.n_qa = qapairs.size();
    s.avg_answer_tokens = qapairs.empty() ? 0.0 : static_cast<double>(tokens) / static_cast<double>(qapairs.size());
    return s;
}

inline nlohmann::json stats_to_json(const StatsReport& s) {
    nlohmann::json cats = nlohmann::json::object();
    for (const auto& [k, c] : s.per_category)
        cats[k] = {{"entities", c.entities}, {"images", c.images}, {"qa_pairs", c.qa_pairs}};
    return {{"n_categories", s.n_categories}, {"n_entities", s.n_entities}, {"n_qa", s.n_qa},
            {"n_images", s.n_images}, {"avg_answer_tokens", s.avg_answer_tokens}, {"per_category", cats}};
}

inline nlohmann::json filter_report_to_json(const FilterReport& r) {
    nlohmann::json cats = nlohmann::json::object();
    for (const auto& [k, c] : r.per_category)
        cats[k] = {{"before", c.before}, {"kept", c.kept}, {"removed", c.removed}};
    nlohmann::json removed = nlohmann::json::array();
    for (const auto& row : r.removed) removed.push_back(row.entity_name);
    return {{"stage", to_string(r.stage)}, {"kept", r.kept.size()}, {"removed", r.removed.size()},
            {"removed_entities", removed}, {"per_category", cats}};
}

/// Per-category entity counts before and after each stage, in the layout of
/// a filtering-statistics table.
inline std::string format_filter_table(const Manifest& input, const std::vector<FilterReport>& reports) {
    std::map<std::string, std::vector<std::size_t>> counts;
    for (const auto& row : input) {
        auto& v = counts[std::string(to_string(row.category))];
        v.resize(reports.size() + 1, 0);
        ++v[0];
    }
    for (std::size_t s = 0; s < reports.size(); ++s)
        for (const auto& row : reports[s].kept) ++counts[std::string(to_string(row.category))][s + 1];

    std::ostringstream os;
    os << std::left << std::setw(16) << "category" << std::right << std::setw(10) << "original";
    for (const auto& r : reports) os << std::setw(16) << to_string(r.stage);
    os << "\n";
    std::vector<std::size_t> total(reports.size() + 1, 0);
    for (const auto& [cat, v] : counts) {
        os << std::left << std::setw(16) << cat << std::right << std::setw(10) << v[0];
        for (std::size_t s = 1; s < v.size(); ++s) os << std::setw(16) << v[s];
        os << "\n";
        for (std::size_t s = 0; s < v.size(); ++s) total[s] += v[s];
    }
    os << std::left << std::setw(16) << "total" << std::right << std::setw(10) << total[0];
    for (std::size_t s = 1; s < total.size(); ++s) os << std::setw(16) << total[s];
    os << "\n";
    return os.str();
}

} // namespace snt::dataset
