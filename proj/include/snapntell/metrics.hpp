#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "text.hpp"

namespace snt::metrics {

using Tokens = std::vector<std::string>;

inline std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// ROUGE-L F1 over LCS.
inline double rouge_l_f1(std::string_view candidate, std::string_view reference) {
    auto c = text::tokenize(candidate);
    auto r = text::tokenize(reference);
    if (c.empty() || r.empty()) return 0.0;
    auto lcs = static_cast<double>(lcs_length(c, r));
    if (lcs == 0.0) return 0.0;
    double p = lcs / static_cast<double>(c.size());
    double rec = lcs / static_cast<double>(r.size());
    return 2.0 * p * rec / (p + rec);
}

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

inline NgramCounts ngram_counts(std::span<const std::string> toks, std::size_t n) {
    NgramCounts counts;
    if (toks.size() < n) return counts;
    for (std::size_t i = 0; i + n <= toks.size(); ++i)
        ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                          toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
    return counts;
}

/// Sufficient statistics of BLEU for one or more segments.
struct BleuStats {
    std::vector<std::size_t> matches; // clipped, per order
    std::vector<std::size_t> totals;  // candidate n-grams, per order
    std::size_t cand_len = 0;
    std::size_t ref_len = 0;          // closest reference length, summed
    std::size_t max_cand_len = 0;

    explicit BleuStats(std::size_t max_n = 4) : matches(max_n, 0), totals(max_n, 0) {}

    BleuStats& operator+=(const BleuStats& o) {
        for (std::size_t n = 0; n < matches.size(); ++n) {
            matches[n] += o.matches[n];
            totals[n] += o.totals[n];
        }
        cand_len += o.cand_len;
        ref_len += o.ref_len;
        max_cand_len = std::max(max_cand_len, o.max_cand_len);
        return *this;
    }
};

inline BleuStats bleu_stats(std::span<const std::string> cand, std::span<const Tokens> refs,
                            std::size_t max_n = 4) {
    BleuStats st(max_n);
    st.cand_len = cand.size();
    st.max_cand_len = cand.size();

    // Closest reference length; equal distances favour the shorter reference.
    std::size_t best = 0;
    bool have = false;
    for (const auto& r : refs) {
        auto dist = [&](std::size_t len) {
            return len > cand.size() ? len - cand.size() : cand.size() - len;
        };
        if (!have || dist(r.size()) < dist(best) || (dist(r.size()) == dist(best) && r.size() < best))
            best = r.size();
        have = true;
    }
    st.ref_len = best;

    for (std::size_t n = 1; n <= max_n; ++n) {
        auto cc = ngram_counts(cand, n);
        NgramCounts max_ref;
        for (const auto& r : refs)
            for (const auto& [g, k] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], k);
        std::size_t total = 0, matched = 0;
        for (const auto& [g, k] : cc) {
            total += k;
            auto it = max_ref.find(g);
            if (it != max_ref.end()) matched += std::min(k, it->second);
        }
        st.matches[n - 1] = matched;
        st.totals[n - 1] = total;
    }
    return st;
}

/// BLEU from accumulated statistics: geometric mean over orders
/// 1..min(max_n, longest candidate), add-one smoothing for zero-match orders
/// n >= 2, times exp(min(0, 1 - r/c)).
inline double bleu_from_stats(const BleuStats& st) {
    if (st.cand_len == 0) return 0.0;
    std::size_t orders = std::min(st.matches.size(), st.max_cand_len);
    if (st.matches[0] == 0) return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 0; n < orders; ++n) {
        double m = static_cast<double>(st.matches[n]);
        double t = static_cast<double>(st.totals[n]);
        if (st.matches[n] == 0) {
            m += 1.0;
            t += 1.0;
        }
        log_sum += std::log(m / t);
    }
    double c = static_cast<double>(st.cand_len);
    double r = static_cast<double>(st.ref_len);
    double bp = std::exp(std::min(0.0, 1.0 - r / c));
    return bp * std::exp(log_sum / static_cast<double>(orders));
}

inline double bleu(std::string_view candidate, std::span<const std::string> references,
                   std::size_t max_n = 4) {
    std::vector<Tokens> refs;
    for (const auto& r : references) refs.push_back(text::tokenize(r));
    return bleu_from_stats(bleu_stats(text::tokenize(candidate), refs, max_n));
}

inline double bleu(std::string_view candidate, std::string_view reference, std::size_t max_n = 4) {
    std::string ref(reference);
    return bleu(candidate, std::span<const std::string>(&ref, 1), max_n);
}

struct Alignment {
    std::size_t matches = 0;
    std::size_t chunks = 0;
};

/// Exact-match unigram alignment with the most matches and, among those, the
/// fewest chunks. Branch and bound; past `node_budget` the best alignment
/// found so far is returned (the first path explored is the greedy one).
inline Alignment align_exact(std::span<const std::string> cand, std::span<const std::string> ref,
                             std::size_t node_budget = 2'000'000) {
    std::map<std::string, int> type_of;
    for (const auto& t : cand) type_of.try_emplace(t, static_cast<int>(type_of.size()));
    std::vector<int> ctype(cand.size()), rtype(ref.size(), -1);
    for (std::size_t i = 0; i < cand.size(); ++i) ctype[i] = type_of[cand[i]];
    for (std::size_t j = 0; j < ref.size(); ++j)
        if (auto it = type_of.find(ref[j]); it != type_of.end()) rtype[j] = it->second;

    const std::size_t types = type_of.size();
    std::vector<int> cand_left(types, 0), ref_left(types, 0);
    for (int t : ctype) ++cand_left[static_cast<std::size_t>(t)];
    for (int t : rtype)
        if (t >= 0) ++ref_left[static_cast<std::size_t>(t)];
    std::size_t target = 0;
    for (std::size_t t = 0; t < types; ++t)
        target += static_cast<std::size_t>(std::min(cand_left[t], ref_left[t]));
    if (target == 0) return {};

    std::vector<std::vector<std::size_t>> positions(types);
    for (std::size_t j = 0; j < ref.size(); ++j)
        if (rtype[j] >= 0) positions[static_cast<std::size_t>(rtype[j])].push_back(j);

    std::vector<bool> used(ref.size(), false);
    std::size_t best_chunks = std::numeric_limits<std::size_t>::max();
    std::size_t nodes = 0;
    // Upper bound on matches still achievable from position i onward.
    auto bound = [&]() {
        std::size_t b = 0;
        for (std::size_t t = 0; t < types; ++t)
            b += static_cast<std::size_t>(std::min(cand_left[t], ref_left[t]));
        return b;
    };

    auto dfs = [&](auto&& self, std::size_t i, std::size_t matched, long prev_ref,
                   std::size_t chunks) -> void {
        if (++nodes > node_budget && best_chunks != std::numeric_limits<std::size_t>::max()) return;
        if (chunks >= best_chunks) return;
        if (matched + bound() < target) return;
        if (i == cand.size()) {
            if (matched == target) best_chunks = chunks;
            return;
        }
        auto t = static_cast<std::size_t>(ctype[i]);
        --cand_left[t];
        // Continuing the current chunk first makes the first leaf greedy.
        std::vector<std::size_t> order;
        if (prev_ref >= 0 && static_cast<std::size_t>(prev_ref + 1) < ref.size() &&
            rtype[static_cast<std::size_t>(prev_ref + 1)] == ctype[i] &&
            !used[static_cast<std::size_t>(prev_ref + 1)])
            order.push_back(static_cast<std::size_t>(prev_ref + 1));
        for (std::size_t j : positions[t])
            if (!used[j] && (order.empty() || j != order.front())) order.push_back(j);
        for (std::size_t j : order) {
            used[j] = true;
            --ref_left[t];
            bool extends = prev_ref >= 0 && static_cast<std::size_t>(prev_ref) + 1 == j;
            self(self, i + 1, matched + 1, static_cast<long>(j), chunks + (extends ? 0 : 1));
            ++ref_left[t];
            used[j] = false;
        }
        self(self, i + 1, matched, -1, chunks);
        ++cand_left[t];
    };
    dfs(dfs, 0, 0, -1, 0);
    return {target, best_chunks};
}

/// METEOR restricted to exact matches: F_mean = 10PR / (R + 9P), penalty
/// 0.5 (chunks / matches)^3, score F_mean (1 - penalty).
inline double meteor_simplified(std::string_view candidate, std::string_view reference) {
    auto c = text::tokenize(candidate);
    auto r = text::tokenize(reference);
    if (c.empty() || r.empty()) return 0.0;
    auto al = align_exact(c, r);
    if (al.matches == 0) return 0.0;
    double m = static_cast<double>(al.matches);
    double p = m / static_cast<double>(c.size());
    double rec = m / static_cast<double>(r.size());
    double fmean = 10.0 * p * rec / (rec + 9.0 * p);
    double frag = static_cast<double>(al.chunks) / m;
    double penalty = 0.5 * frag * frag * frag;
    return fmean * (1.0 - penalty);
}

/// Multiset token F1.
inline double token_f1(std::string_view prediction, std::string_view gold) {
    auto p = text::tokenize(prediction);
    auto g = text::tokenize(gold);
    if (p.empty() || g.empty()) return 0.0;
    std::map<std::string, int> gc;
    for (const auto& t : g) ++gc[t];
    std::size_t common = 0;
    for (const auto& t : p)
        if (auto it = gc.find(t); it != gc.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    if (common == 0) return 0.0;
    double prec = static_cast<double>(common) / static_cast<double>(p.size());
    double rec = static_cast<double>(common) / static_cast<double>(g.size());
    return 2.0 * prec * rec / (prec + rec);
}

/// Relative change 100 (with - without) / without, unrounded. nullopt when
/// the baseline is not positive.
inline std::optional<double> ablation_delta_raw(double without, double with_) {
    if (!(without > 0.0)) return std::nullopt;
    return 100.0 * (with_ - without) / without;
}

/// As ablation_delta_raw, rounded to one decimal.
inline std::optional<double> ablation_delta(double without, double with_) {
    auto raw = ablation_delta_raw(without, with_);
    if (!raw) return std::nullopt;
    return std::round(*raw * 10.0) / 10.0;
}

struct KendallResult {
    double tau = 0.0;
    double p_value = 1.0;
    bool exact_p = false;
};

namespace detail {

struct PairCounts {
    long long concordant = 0;
    long long discordant = 0;
};

inline PairCounts count_pairs(std::span<const double> a, std::span<const double> b) {
    PairCounts pc;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            double s = (a[i] - a[j]) * (b[i] - b[j]);
            if (s > 0) ++pc.concordant;
            else if (s < 0) ++pc.discordant;
        }
    return pc;
}

inline std::vector<long long> tie_groups(std::span<const double> v) {
    std::map<double, long long> counts;
    for (double x : v) ++counts[x];
    std::vector<long long> out;
    for (const auto& [_, c] : counts)
        if (c > 1) out.push_back(c);
    return out;
}

inline double tau_b(std::span<const double> a, std::span<const double> b, long long n1,
                    long long n2) {
    auto n = static_cast<long long>(a.size());
    long long n0 = n * (n - 1) / 2;
    auto pc = count_pairs(a, b);
    return static_cast<double>(pc.concordant - pc.discordant) /
           std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2));
}

} // namespace detail

/// Kendall tau-b with tie correction. Two-sided p-value: exact permutation
/// distribution for n <= 8, normal approximation of S above that.
inline KendallResult kendall_tau_b(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error(ErrorKind::InvalidArgument, "rankings differ in length");
    if (a.size() < 2) throw Error(ErrorKind::InvalidArgument, "need at least two items");
    auto n = static_cast<long long>(a.size());
    long long n0 = n * (n - 1) / 2;
    auto ta = detail::tie_groups(a);
    auto tb = detail::tie_groups(b);
    long long n1 = 0, n2 = 0;
    for (auto t : ta) n1 += t * (t - 1) / 2;
    for (auto t : tb) n2 += t * (t - 1) / 2;
    if (n1 == n0 || n2 == n0)
        throw Error(ErrorKind::DegenerateRanking, "a ranking has all items tied");

    KendallResult res;
    res.tau = detail::tau_b(a, b, n1, n2);

    if (n <= 8) {
        std::vector<double> perm(b.begin(), b.end());
        std::sort(perm.begin(), perm.end());
        std::size_t extreme = 0, total = 0;
        const double observed = std::abs(res.tau) - 1e-12;
        do {
            ++total;
            if (std::abs(detail::tau_b(a, perm, n1, n2)) >= observed) ++extreme;
        } while (std::next_permutation(perm.begin(), perm.end()));
        res.p_value = static_cast<double>(extreme) / static_cast<double>(total);
        res.exact_p = true;
    } else {
        auto pc = detail::count_pairs(a, b);
        double s = static_cast<double>(pc.concordant - pc.discordant);
        double nd = static_cast<double>(n);
        double v0 = nd * (nd - 1) * (2 * nd + 5);
        double vt = 0, vu = 0, t1 = 0, u1 = 0, t2 = 0, u2 = 0;
        for (auto t : ta) {
            double x = static_cast<double>(t);
            vt += x * (x - 1) * (2 * x + 5);
            t1 += x * (x - 1);
            t2 += x * (x - 1) * (x - 2);
        }
        for (auto u : tb) {
            double x = static_cast<double>(u);
            vu += x * (x - 1) * (2 * x + 5);
            u1 += x * (x - 1);
            u2 += x * (x - 1) * (x - 2);
        }
        double var = (v0 - vt - vu) / 18.0 + t1 * u1 / (2.0 * nd * (nd - 1)) +
                     t2 * u2 / (9.0 * nd * (nd - 1) * (nd - 2));
        double z = var > 0 ? s / std::sqrt(var) : 0.0;
        res.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
    }
    return res;
}

/// Items x categories rater counts; every row sums to the same n >= 2.
struct RaterMatrix {
    std::vector<std::vector<std::uint32_t>> counts;
};

/// Fleiss' kappa (P_bar - P_e) / (1 - P_e).
inline double fleiss_kappa(const RaterMatrix& m) {
    if (m.counts.empty()) throw Error(ErrorKind::InvalidArgument, "rater matrix has no items");
    const std::size_t q = m.counts.front().size();
    if (q == 0) throw Error(ErrorKind::InvalidArgument, "rater matrix has no categories");
    std::uint64_t n = 0;
    for (auto c : m.counts.front()) n += c;
    if (n < 2) throw Error(ErrorKind::InvalidArgument, "need at least two raters per item");

    const auto items = static_cast<double>(m.counts.size());
    const auto nd = static_cast<double>(n);
    std::vector<double> col(q, 0.0);
    double p_bar = 0.0;
    for (const auto& row : m.counts) {
        if (row.size() != q) throw Error(ErrorKind::InvalidArgument, "ragged rater matrix");
        std::uint64_t sum = 0, sq = 0;
        for (std::size_t j = 0; j < q; ++j) {
            sum += row[j];
            sq += std::uint64_t(row[j]) * row[j];
            col[j] += row[j];
        }
        if (sum != n) throw Error(ErrorKind::InvalidArgument, "rows must share one rater count");
        p_bar += (static_cast<double>(sq) - nd) / (nd * (nd - 1.0));
    }
    p_bar /= items;
    double p_e = 0.0;
    for (double c : col) {
        double pj = c / (items * nd);
        p_e += pj * pj;
    }
    if (std::abs(1.0 - p_e) < 1e-15)
        throw Error(ErrorKind::Undefined, "expected agreement is 1; kappa undefined");
    return (p_bar - p_e) / (1.0 - p_e);
}

} // namespace snt::metrics
