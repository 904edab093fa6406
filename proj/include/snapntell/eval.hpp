#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <future>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "index.hpp"
#include "metrics.hpp"
#include "taxonomy.hpp"
#include "text.hpp"

namespace snt::eval {

struct EvalExample {
    std::string id;
    std::string question;
    std::string gold_answer;
    std::string entity_name;
    std::vector<std::string> entity_aliases;
    std::string prediction;
    std::string category;
    PopularityBucket bucket = PopularityBucket::Unassigned;
};

enum class Verdict { Correct, Hallucinated };

struct JudgeConfig {
    double min_token_f1 = 0.2;
};

/// Correct iff the prediction names the entity (or an alias) as a token run
/// and overlaps the gold answer with token-F1 >= the threshold.
inline Verdict judge_answer(const EvalExample& ex, const JudgeConfig& cfg = {}) {
    auto pred = text::tokenize(ex.prediction);
    if (pred.empty()) return Verdict::Hallucinated;
    bool named = text::contains_phrase(pred, ex.entity_name);
    for (const auto& alias : ex.entity_aliases) named = named || text::contains_phrase(pred, alias);
    if (!named) return Verdict::Hallucinated;
    return metrics::token_f1(ex.prediction, ex.gold_answer) >= cfg.min_token_f1
               ? Verdict::Correct
               : Verdict::Hallucinated;
}

/// Scores for one group of examples. Text metrics live in [0, 1];
/// accuracy and hallucination are percentages summing to 100.
struct MetricSummary {
    std::size_t n = 0;
    std::size_t correct = 0;
    double rouge_l = 0.0;
    double bleu = 0.0;
    double meteor = 0.0;
    double accuracy = 0.0;
    double hallucination = 0.0;
};

struct MetricReport {
    MetricSummary overall;
    std::map<std::string, MetricSummary> per_bucket;
    std::map<std::string, MetricSummary> per_category;
};

struct EvalConfig {
    JudgeConfig judge;
    std::size_t bleu_max_n = 4;
    unsigned threads = 1;
};

namespace detail {

struct Scored {
    double rouge_l = 0.0;
    double meteor = 0.0;
    metrics::BleuStats bleu{4};
    bool correct = false;
};

inline Scored score_one(const EvalExample& ex, const EvalConfig& cfg) {
    Scored s;
    s.rouge_l = metrics::rouge_l_f1(ex.prediction, ex.gold_answer);
    s.meteor = metrics::meteor_simplified(ex.prediction, ex.gold_answer);
    std::vector<metrics::Tokens> refs{text::tokenize(ex.gold_answer)};
    s.bleu = metrics::bleu_stats(text::tokenize(ex.prediction), refs, cfg.bleu_max_n);
    s.correct = judge_answer(ex, cfg.judge) == Verdict::Correct;
    return s;
}

/// Sums after sorting so the result does not depend on example order.
inline double ordered_mean(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += x;
    return sum / static_cast<double>(v.size());
}

inline MetricSummary summarize(const std::vector<const Scored*>& group, std::size_t max_n) {
    MetricSummary m;
    m.n = group.size();
    if (group.empty()) return m;
    std::vector<double> rouge, meteor;
    metrics::BleuStats corpus(max_n);
    for (const auto* s : group) {
        rouge.push_back(s->rouge_l);
        meteor.push_back(s->meteor);
        corpus += s->bleu;
        m.correct += s->correct;
    }
    m.rouge_l = ordered_mean(std::move(rouge));
    m.meteor = ordered_mean(std::move(meteor));
    m.bleu = metrics::bleu_from_stats(corpus);
    m.accuracy = 100.0 * static_cast<double>(m.correct) / static_cast<double>(m.n);
    m.hallucination = 100.0 - m.accuracy;
    return m;
}

} // namespace detail

/// Corpus evaluation. Sentence metrics are averaged, BLEU is corpus-level.
/// Scoring may run on several threads; reduction follows input order.
inline MetricReport evaluate(std::span<const EvalExample> examples, const EvalConfig& cfg = {}) {
    if (examples.empty()) throw Error(ErrorKind::EmptyEvalSet, "no examples to evaluate");

    std::vector<detail::Scored> scored(examples.size());
    unsigned threads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(examples.size())));
    if (threads == 1) {
        for (std::size_t i = 0; i < examples.size(); ++i) scored[i] = detail::score_one(examples[i], cfg);
    } else {
        std::vector<std::future<void>> jobs;
        for (unsigned t = 0; t < threads; ++t)
            jobs.push_back(std::async(std::launch::async, [&, t] {
                for (std::size_t i = t; i < examples.size(); i += threads)
                    scored[i] = detail::score_one(examples[i], cfg);
            }));
        for (auto& j : jobs) j.get();
    }

    std::vector<const detail::Scored*> all;
    std::map<std::string, std::vector<const detail::Scored*>> buckets, categories;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        all.push_back(&scored[i]);
        if (examples[i].bucket != PopularityBucket::Unassigned)
            buckets[std::string(to_string(examples[i].bucket))].push_back(&scored[i]);
        if (!examples[i].category.empty()) categories[examples[i].category].push_back(&scored[i]);
    }

    MetricReport r;
    r.overall = detail::summarize(all, cfg.bleu_max_n);
    for (const auto& [k, g] : buckets) r.per_bucket[k] = detail::summarize(g, cfg.bleu_max_n);
    for (const auto& [k, g] : categories) r.per_category[k] = detail::summarize(g, cfg.bleu_max_n);
    return r;
}

/// One row of the with/without retrieval comparison.
struct DeltaRow {
    std::string group;
    double accuracy_without = 0.0, accuracy_with = 0.0;
    double hallucination_without = 0.0, hallucination_with = 0.0;
    std::optional<double> accuracy_delta;      // rounded to 0.1
    std::optional<double> hallucination_delta; // rounded to 0.1
};

inline DeltaRow delta_row(std::string group, const MetricSummary& without, const MetricSummary& with_) {
    return {std::move(group),
            without.accuracy,
            with_.accuracy,
            without.hallucination,
            with_.hallucination,
            metrics::ablation_delta(without.accuracy, with_.accuracy),
            metrics::ablation_delta(without.hallucination, with_.hallucination)};
}

/// Delta table over the buckets present in both runs, then the overall row
/// when both runs carry one (n > 0).
inline std::vector<DeltaRow> compare_reports(const MetricReport& without, const MetricReport& with_) {
    std::vector<DeltaRow> rows;
    for (auto b : {PopularityBucket::Head, PopularityBucket::Torso, PopularityBucket::Tail}) {
        std::string key(to_string(b));
        auto a = without.per_bucket.find(key);
        auto c = with_.per_bucket.find(key);
        if (a != without.per_bucket.end() && c != with_.per_bucket.end())
            rows.push_back(delta_row(key, a->second, c->second));
    }
    if (without.overall.n > 0 && with_.overall.n > 0)
        rows.push_back(delta_row("Overall", without.overall, with_.overall));
    return rows;
}

// JSON -------------------------------------------------------------------

inline EvalExample example_from_json(const nlohmann::json& j) {
    EvalExample ex;
    ex.id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump()) : "";
    ex.question = j.value("question", "");
    ex.gold_answer = j.at("gold_answer").get<std::string>();
    ex.entity_name = j.value("entity_name", "");
    ex.entity_aliases = j.value("entity_aliases", std::vector<std::string>{});
    ex.prediction = j.value("prediction", "");
    ex.category = j.value("category", "");
    ex.bucket = parse_bucket(j.value("bucket", "Unassigned"));
    return ex;
}

inline nlohmann::json summary_to_json(const MetricSummary& m) {
    return {{"n", m.n},
            {"correct", m.correct},
            {"rouge_l", m.rouge_l},
            {"bleu", m.bleu},
            {"meteor", m.meteor},
            {"bleurt", nullptr},
            {"accuracy", m.accuracy},
            {"hallucination", m.hallucination}};
}

inline MetricSummary summary_from_json(const nlohmann::json& j) {
    MetricSummary m;
    m.n = j.value("n", std::size_t{0});
    m.correct = j.value("correct", std::size_t{0});
    m.rouge_l = j.value("rouge_l", 0.0);
    m.bleu = j.value("bleu", 0.0);
    m.meteor = j.value("meteor", 0.0);
    m.accuracy = j.at("accuracy").get<double>();
    m.hallucination = j.contains("hallucination") ? j["hallucination"].get<double>() : 100.0 - m.accuracy;
    return m;
}

inline nlohmann::json report_to_json(const MetricReport& r) {
    nlohmann::json j = {{"overall", summary_to_json(r.overall)},
                        {"per_bucket", nlohmann::json::object()},
                        {"per_category", nlohmann::json::object()}};
    for (const auto& [k, m] : r.per_bucket) j["per_bucket"][k] = summary_to_json(m);
    for (const auto& [k, m] : r.per_category) j["per_category"][k] = summary_to_json(m);
    return j;
}

inline MetricReport report_from_json(const nlohmann::json& j) {
    MetricReport r;
    if (j.contains("overall")) r.overall = summary_from_json(j["overall"]);
    const auto buckets = j.value("per_bucket", nlohmann::json::object());
    for (const auto& [k, v] : buckets.items()) r.per_bucket[k] = summary_from_json(v);
    const auto categories = j.value("per_category", nlohmann::json::object());
    for (const auto& [k, v] : categories.items()) r.per_category[k] = summary_from_json(v);
    return r;
}

inline nlohmann::json delta_rows_to_json(const std::vector<DeltaRow>& rows) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows)
        out.push_back({{"group", r.group},
                       {"accuracy_without", r.accuracy_without},
                       {"accuracy_with", r.accuracy_with},
                       {"accuracy_delta", opt(r.accuracy_delta)},
                       {"hallucination_without", r.hallucination_without},
                       {"hallucination_with", r.hallucination_with},
                       {"hallucination_delta", opt(r.hallucination_delta)}});
    return out;
}

// Plain-text tables --------------------------------------------------------

namespace detail {
inline std::string fixed(double v, int prec) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << v;
    return os.str();
}

inline std::string signed_delta(const std::optional<double>& v) {
    if (!v) return "undefined";
    std::string s = fixed(*v, 1);
    return (*v > 0 ? "+" : "") + s;
}

inline std::string render(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& r : rows)
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (width.size() <= c) width.push_back(0);
            width[c] = std::max(width[c], r[c].size());
        }
    std::ostringstream os;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t c = 0; c < rows[i].size(); ++c) {
            if (c) os << "  ";
            if (c == 0)
                os << std::left << std::setw(static_cast<int>(width[c])) << rows[i][c];
            else
                os << std::right << std::setw(static_cast<int>(width[c])) << rows[i][c];
        }
        os << "\n";
        if (i == 0) {
            std::size_t total = 0;
            for (auto w : width) total += w;
            os << std::string(total + 2 * (width.size() - 1), '-') << "\n";
        }
    }
    return os.str();
}
} // namespace detail

/// Main results table: text metrics x100, BLEURT column left absent.
inline std::string format_report(const MetricReport& r, const std::string& run_name = "run") {
    std::vector<std::vector<std::string>> rows = {
        {"Method", "N", "ROUGE-L", "BLEU", "METEOR", "BLEURT", "Accuracy", "Hallucination"}};
    auto add = [&](const std::string& name, const MetricSummary& m) {
        rows.push_back({name, std::to_string(m.n), detail::fixed(100 * m.rouge_l, 2),
                        detail::fixed(100 * m.bleu, 2), detail::fixed(100 * m.meteor, 2), "n/a",
                        detail::fixed(m.accuracy, 1), detail::fixed(m.hallucination, 1)});
    };
    add(run_name, r.overall);
    for (const auto& [k, m] : r.per_bucket) add("  " + k, m);
    for (const auto& [k, m] : r.per_category) add("  " + k, m);
    return detail::render(rows);
}

/// Head/torso/tail ablation layout: w/o, w/, delta rows per group.
inline std::string format_deltas(const std::vector<DeltaRow>& rows) {
    std::vector<std::vector<std::string>> out = {{"Group", "", "Accuracy", "Hallucination"}};
    for (const auto& r : rows) {
        out.push_back({r.group, "w/o RA", detail::fixed(r.accuracy_without, 1),
                       detail::fixed(r.hallucination_without, 1)});
        out.push_back({"", "w/ RA", detail::fixed(r.accuracy_with, 1),
                       detail::fixed(r.hallucination_with, 1)});
        out.push_back({"", "delta (%)", detail::signed_delta(r.accuracy_delta),
                       detail::signed_delta(r.hallucination_delta)});
    }
    return detail::render(out);
}

// Pairwise human judgements ------------------------------------------------

/// Precomputed win/tie/lose judgements, tabulated per comparison.
struct PairwiseTally {
    std::size_t win = 0, tie = 0, lose = 0;
    std::size_t total() const noexcept { return win + tie + lose; }
};

/// Rows `{"comparison": "...", "outcome": "win"|"tie"|"lose"}`.
inline std::map<std::string, PairwiseTally> tabulate_pairwise(const std::filesystem::path& path) {
    std::map<std::string, PairwiseTally> out;
    for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t lineno) {
        auto& t = out[j.value("comparison", "default")];
        auto o = j.at("outcome").get<std::string>();
        if (o == "win") ++t.win;
        else if (o == "tie") ++t.tie;
        else if (o == "lose") ++t.lose;
        else
            throw Error(ErrorKind::ParseError,
                        path.string() + ":" + std::to_string(lineno) + ": bad outcome '" + o + "'");
    });
    return out;
}

} // namespace snt::eval
