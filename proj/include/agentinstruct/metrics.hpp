#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "agentinstruct/text.hpp"

namespace agentinstruct {

enum class MetricId { EM, QEM, QPEM, F1, ROUGE2, RR10, NDCG10 };

inline std::string metric_id_name(MetricId id) {
    switch (id) {
        case MetricId::EM: return "EM";
        case MetricId::QEM: return "QEM";
        case MetricId::QPEM: return "QPEM";
        case MetricId::F1: return "F1";
        case MetricId::ROUGE2: return "ROUGE2";
        case MetricId::RR10: return "RR10";
        case MetricId::NDCG10: return "NDCG10";
    }
    return "EM";
}

inline std::optional<MetricId> metric_id_from_name(std::string_view name) {
    if (name == "EM") return MetricId::EM;
    if (name == "QEM") return MetricId::QEM;
    if (name == "QPEM") return MetricId::QPEM;
    if (name == "F1") return MetricId::F1;
    if (name == "ROUGE2" || name == "ROUGE-2") return MetricId::ROUGE2;
    if (name == "RR10" || name == "RR@10") return MetricId::RR10;
    if (name == "NDCG10" || name == "NDCG@10") return MetricId::NDCG10;
    return std::nullopt;
}

inline double exact_match(std::string_view pred, const std::vector<std::string>& refs) {
    for (const auto& r : refs) {
        if (pred == r) return 1.0;
    }
    return 0.0;
}

inline double quasi_exact_match(std::string_view pred, const std::vector<std::string>& refs) {
    std::string p = normalize(pred);
    for (const auto& r : refs) {
        if (p == normalize(r)) return 1.0;
    }
    return 0.0;
}

inline double quasi_prefix_exact_match(std::string_view pred, const std::vector<std::string>& refs) {
    std::string p = normalize(pred);
    for (const auto& r : refs) {
        if (starts_with(p, normalize(r))) return 1.0;
    }
    return 0.0;
}

namespace detail {

inline size_t multiset_overlap(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::unordered_map<std::string, int> counts;
    for (const auto& t : a) ++counts[t];
    size_t overlap = 0;
    for (const auto& t : b) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    return overlap;
}

// Lowercased alphanumeric word tokens; ROUGE keeps articles, unlike normalize().
inline std::vector<std::string> rouge_tokens(std::string_view s) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

inline std::vector<std::string> bigrams(const std::vector<std::string>& tokens) {
    std::vector<std::string> out;
    for (size_t i = 0; i + 1 < tokens.size(); ++i) {
        out.push_back(tokens[i] + " " + tokens[i + 1]);
    }
    return out;
}

}  // namespace detail

// SQuAD token F1 over normalized whitespace tokens, max over references.
inline double token_f1(std::string_view pred, const std::vector<std::string>& refs) {
    std::vector<std::string> p = normalized_tokens(pred);
    double best = 0.0;
    for (const auto& ref : refs) {
        std::vector<std::string> r = normalized_tokens(ref);
        if (p.empty() && r.empty()) {
            best = std::max(best, 1.0);
            continue;
        }
        if (p.empty() || r.empty()) {
            continue;
        }
        size_t overlap = detail::multiset_overlap(p, r);
        if (overlap == 0) continue;
        double precision = static_cast<double>(overlap) / static_cast<double>(p.size());
        double recall = static_cast<double>(overlap) / static_cast<double>(r.size());
        best = std::max(best, 2.0 * precision * recall / (precision + recall));
    }
    return best;
}

// ROUGE-2 F-measure: bigram multiset overlap, no stemming, max over references.
inline double rouge2(std::string_view pred, const std::vector<std::string>& refs) {
    std::vector<std::string> p_tokens = detail::rouge_tokens(pred);
    std::vector<std::string> p_bi = detail::bigrams(p_tokens);
    double best = 0.0;
    for (const auto& ref : refs) {
        std::vector<std::string> r_tokens = detail::rouge_tokens(ref);
        std::vector<std::string> r_bi = detail::bigrams(r_tokens);
        if (p_bi.empty() && r_bi.empty()) {
            best = std::max(best, p_tokens == r_tokens ? 1.0 : 0.0);
            continue;
        }
        if (p_bi.empty() || r_bi.empty()) {
            continue;
        }
        size_t overlap = detail::multiset_overlap(p_bi, r_bi);
        if (overlap == 0) continue;
        double precision = static_cast<double>(overlap) / static_cast<double>(p_bi.size());
        double recall = static_cast<double>(overlap) / static_cast<double>(r_bi.size());
        best = std::max(best, 2.0 * precision * recall / (precision + recall));
    }
    return best;
}

// Reciprocal rank of the first relevant entry within the top 10.
inline double rr_at_10(const std::vector<bool>& relevance) {
    size_t limit = std::min<size_t>(relevance.size(), 10);
    for (size_t i = 0; i < limit; ++i) {
        if (relevance[i]) return 1.0 / static_cast<double>(i + 1);
    }
    return 0.0;
}

// NDCG@10 with a log2(rank+1) discount; an all-zero ideal scores 0.
inline double ndcg_at_10(const std::vector<double>& gains, std::vector<double> ideal) {
    std::sort(ideal.begin(), ideal.end(), std::greater<double>());
    auto dcg = [](const std::vector<double>& g) {
        double total = 0.0;
        size_t limit = std::min<size_t>(g.size(), 10);
        for (size_t i = 0; i < limit; ++i) {
            total += g[i] / std::log2(static_cast<double>(i + 2));
        }
        return total;
    };
    double ideal_dcg = dcg(ideal);
    if (ideal_dcg <= 0.0) return 0.0;
    return dcg(gains) / ideal_dcg;
}

inline double macro_average(const std::map<std::string, double>& scores) {
    if (scores.empty()) {
        throw std::invalid_argument("macro_average: empty score map");
    }
    double total = 0.0;
    for (const auto& [_, v] : scores) total += v;
    return total / static_cast<double>(scores.size());
}

// Scores one (prediction, references) pair; RR10/NDCG10 need rankings and are
// scored through rr_at_10/ndcg_at_10 by the caller instead.
inline double score_prediction(MetricId metric, std::string_view pred,
                               const std::vector<std::string>& refs) {
    switch (metric) {
        case MetricId::EM: return exact_match(pred, refs);
        case MetricId::QEM: return quasi_exact_match(pred, refs);
        case MetricId::QPEM: return quasi_prefix_exact_match(pred, refs);
        case MetricId::F1: return token_f1(pred, refs);
        case MetricId::ROUGE2: return rouge2(pred, refs);
        case MetricId::RR10:
        case MetricId::NDCG10:
            throw ConfigError("metric " + metric_id_name(metric) +
                              " scores rankings, not single predictions");
    }
    return 0.0;
}

}  // namespace agentinstruct
