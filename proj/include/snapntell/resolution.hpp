#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "index.hpp"

namespace snt {

struct ResolutionConfig {
    std::size_t k = 5;
    double min_score = 0.5;
    double min_margin = 0.05;
};

struct EntityHypothesis {
    std::string entity_id;
    double score = 0.0; // sum of supporting similarities
    std::size_t support_count = 0;
    double runner_up_score = 0.0;

    friend bool operator==(const EntityHypothesis&, const EntityHypothesis&) = default;
};

/// nullopt is the Unknown outcome.
using Resolution = std::optional<EntityHypothesis>;

/// Similarity-weighted vote over the top-k hits.
///
/// Hits below min_score are dropped; survivors are grouped by entity_id and
/// each group scores the sum of its similarities. Equal sums are broken by
/// the group's best single hit, then by entity_id. The result is Unknown when
/// nothing survives or when (winner - runner_up) < min_margin * winner.
inline Resolution resolve(const RetrievalSet& rs, const ResolutionConfig& cfg = {}) {
    struct Group {
        double sum = 0.0;
        double best = 0.0;
        std::size_t count = 0;
    };
    std::map<std::string, Group> groups;
    std::size_t limit = std::min(cfg.k, rs.hits.size());
    for (std::size_t i = 0; i < limit; ++i) {
        const auto& hit = rs.hits[i];
        if (hit.score < cfg.min_score) continue;
        auto& g = groups[hit.entity_id];
        if (g.count == 0 || hit.score > g.best) g.best = hit.score;
        g.sum += hit.score;
        ++g.count;
    }
    if (groups.empty()) return std::nullopt;

    std::vector<std::pair<const std::string*, const Group*>> ranked;
    for (const auto& [id, g] : groups) ranked.emplace_back(&id, &g);
    std::ranges::sort(ranked, [](const auto& a, const auto& b) {
        if (a.second->sum != b.second->sum) return a.second->sum > b.second->sum;
        if (a.second->best != b.second->best) return a.second->best > b.second->best;
        return *a.first < *b.first;
    });

    const auto& [winner_id, winner] = ranked.front();
    double runner_up = ranked.size() > 1 ? ranked[1].second->sum : 0.0;
    if (winner->sum - runner_up < cfg.min_margin * winner->sum) return std::nullopt;
    return EntityHypothesis{*winner_id, winner->sum, winner->count, runner_up};
}

inline std::vector<Resolution> resolve_batch(std::span<const RetrievalSet> sets,
                                             const ResolutionConfig& cfg = {}) {
    std::vector<Resolution> out;
    out.reserve(sets.size());
    for (const auto& rs : sets) out.push_back(resolve(rs, cfg));
    return out;
}

inline nlohmann::json to_json(const Resolution& r) {
    if (!r) return {{"status", "Unknown"}};
    return {{"status", "Resolved"},
            {"entity_id", r->entity_id},
            {"score", r->score},
            {"support_count", r->support_count},
            {"runner_up_score", r->runner_up_score}};
}

} // namespace snt
